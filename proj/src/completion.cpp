#include "fedval/completion.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

namespace fedval {

void CompletionConfig::validate(int rows, int columns) const {
  require(rank >= 1, "completion rank must be >= 1");
  require(rank <= std::min(rows, columns), "completion rank " + std::to_string(rank) + " exceeds min(T, #columns) = " +
                                               std::to_string(std::min(rows, columns)));
  require(lambda > 0.0 && std::isfinite(lambda), "completion lambda must be > 0");
  require(tolerance > 0.0, "completion tolerance must be > 0");
  require(max_iterations >= 1, "completion max_iterations must be >= 1");
  require(init_scale >= 0.0, "completion init_scale must be >= 0");
}

FactorPair::FactorPair(Matrix w, Matrix h, std::vector<CoalitionKey> keys)
    : W(std::move(w)), H(std::move(h)), column_keys(std::move(keys)) {
  require(W.cols() == H.cols(), "factor ranks disagree");
  require(static_cast<Eigen::Index>(column_keys.size()) == H.rows(), "H rows and column keys disagree");
  for (std::size_t k = 0; k < column_keys.size(); ++k) {
    const bool fresh = row_of_.emplace(column_keys[k], static_cast<Eigen::Index>(k)).second;
    require(fresh, "duplicate coalition " + column_keys[k].hex() + " in factor columns");
  }
}

std::optional<Eigen::Index> FactorPair::row_of(CoalitionKey key) const {
  auto it = row_of_.find(key);
  if (it == row_of_.end()) return std::nullopt;
  return it->second;
}

Vector FactorPair::h(CoalitionKey key) const {
  auto row = row_of(key);
  if (!row) throw ConfigError("factor H has no row for coalition " + key.hex());
  return H.row(*row).transpose();
}

CompletionProblem::CompletionProblem(const UtilityMatrix& matrix, double lambda)
    : rows_(matrix.rounds()), columns_(matrix.num_columns()), lambda_(lambda) {
  require(lambda > 0.0, "completion lambda must be > 0");
  by_row_.resize(static_cast<std::size_t>(rows_));
  by_column_.resize(static_cast<std::size_t>(columns_));
  // Deterministic traversal order regardless of insertion history.
  std::vector<UtilityEntry> entries = matrix.entries();
  std::sort(entries.begin(), entries.end(), [](const UtilityEntry& a, const UtilityEntry& b) {
    return a.round != b.round ? a.round < b.round : a.column < b.column;
  });
  for (const auto& e : entries) {
    if (!std::isfinite(e.value)) throw NumericError("non-finite observed utility");
    by_row_[static_cast<std::size_t>(e.round)].push_back({e.column, e.value});
    by_column_[static_cast<std::size_t>(e.column)].push_back({e.round, e.value});
  }
}

double CompletionProblem::objective(const Matrix& W, const Matrix& H) const {
  double fit = 0.0;
  for (int t = 0; t < rows_; ++t)
    for (const auto& obs : by_row_[static_cast<std::size_t>(t)]) {
      const double r = obs.value - W.row(t).dot(H.row(obs.other));
      fit += r * r;
    }
  return fit + lambda_ * (W.squaredNorm() + H.squaredNorm());
}

namespace {

// Ridge solve for one factor row against its observed partners.
template <typename Obs>
Eigen::RowVectorXd ridge_row(const std::vector<Obs>& observations, const Matrix& partner, double lambda) {
  const Eigen::Index r = partner.cols();
  if (observations.empty()) return Eigen::RowVectorXd::Zero(r);
  Matrix gram = lambda * Matrix::Identity(r, r);
  Vector rhs = Vector::Zero(r);
  for (const auto& obs : observations) {
    const auto p = partner.row(obs.other);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(p.transpose());
    rhs += obs.value * p.transpose();
  }
  Eigen::LLT<Matrix> llt(gram.selfadjointView<Eigen::Lower>());
  if (llt.info() != Eigen::Success) throw NumericError("ridge normal equations not positive definite");
  return llt.solve(rhs).transpose();
}

}  // namespace

void CompletionProblem::update_rows(Matrix& W, const Matrix& H) const {
  for (int t = 0; t < rows_; ++t) W.row(t) = ridge_row(by_row_[static_cast<std::size_t>(t)], H, lambda_);
}

void CompletionProblem::update_columns(const Matrix& W, Matrix& H) const {
  for (int c = 0; c < columns_; ++c) H.row(c) = ridge_row(by_column_[static_cast<std::size_t>(c)], W, lambda_);
}

FactorPair solve(const UtilityMatrix& matrix, const CompletionConfig& config) {
  require(matrix.num_observed() >= 1, "matrix completion needs at least one observed entry");
  config.validate(matrix.rounds(), matrix.num_columns());
  const CompletionProblem problem(matrix, config.lambda);
  const int r = config.rank;

  Rng rng = make_rng(config.seed, 0x414c53);
  std::normal_distribution<double> init(0.0, config.init_scale / std::pow(static_cast<double>(r), 0.25));
  Matrix W(matrix.rounds(), r);
  Matrix H(matrix.num_columns(), r);
  for (Eigen::Index k = 0; k < W.size(); ++k) W.data()[k] = init(rng);
  for (Eigen::Index k = 0; k < H.size(); ++k) H.data()[k] = init(rng);

  std::vector<double> trace{problem.objective(W, H)};
  int iterations = 0;
  bool converged = false;
  double previous = trace.back();
  while (iterations < config.max_iterations) {
    problem.update_rows(W, H);
    trace.push_back(problem.objective(W, H));
    problem.update_columns(W, H);
    const double current = problem.objective(W, H);
    trace.push_back(current);
    ++iterations;
    if (!std::isfinite(current)) throw NumericError("completion objective diverged");
    const double decrease = (previous - current) / std::max(previous, std::numeric_limits<double>::min());
    previous = current;
    if (decrease < config.tolerance) {
      converged = true;
      break;
    }
  }

  FactorPair out(std::move(W), std::move(H), matrix.columns());
  out.objective_trace = std::move(trace);
  out.iterations = iterations;
  out.converged = converged;
  return out;
}

Matrix reconstruct(const UtilityMatrix& matrix, const FactorPair& factors) {
  Matrix h_aligned(matrix.num_columns(), factors.W.cols());
  for (int c = 0; c < matrix.num_columns(); ++c)
    h_aligned.row(c) = factors.h(matrix.columns()[static_cast<std::size_t>(c)]).transpose();
  return factors.W * h_aligned.transpose();
}

double delta_completedness(const UtilityMatrix& full, const FactorPair& factors) {
  require(full.is_full(), "delta-completedness needs the fully observed utility matrix");
  require(factors.W.rows() == full.rounds(), "factor W rows disagree with matrix rounds");
  return max_abs_column_sum(full.dense() - reconstruct(full, factors));
}

int choose_rank(const UtilityMatrix& full, const std::vector<int>& candidate_ranks, const CompletionConfig& base) {
  require(!candidate_ranks.empty(), "choose_rank needs at least one candidate");
  const int limit = std::min(full.rounds(), full.num_columns());
  for (int r : candidate_ranks)
    require(r >= 1 && r <= limit, "candidate rank " + std::to_string(r) + " outside [1, " + std::to_string(limit) + "]");
  if (candidate_ranks.size() == 1) return candidate_ranks.front();

  std::vector<std::size_t> order(full.entries().size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(base.seed, 0x52414e4b);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = (order.size() * 4) / 5;

  UtilityMatrix train(full.rounds(), full.num_clients());
  for (CoalitionKey k : full.columns()) train.add_column(k);
  for (std::size_t k = 0; k < n_train; ++k) {
    const auto& e = full.entries()[order[k]];
    train.set_at(e.round, e.column, e.value);
  }

  std::vector<int> sorted = candidate_ranks;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> errors;
  for (int r : sorted) {
    CompletionConfig cfg = base;
    cfg.rank = r;
    const FactorPair f = solve(train, cfg);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = n_train; k < order.size(); ++k) {
      const auto& e = full.entries()[order[k]];
      const double pred = f.W.row(e.round).dot(f.H.row(e.column));
      num += (e.value - pred) * (e.value - pred);
      den += e.value * e.value;
    }
    errors.push_back(den > 0.0 ? std::sqrt(num / den) : std::sqrt(num));
  }
  const double best = *std::min_element(errors.begin(), errors.end());
  for (std::size_t k = 0; k < sorted.size(); ++k)
    if (errors[k] <= best * 1.01 + 1e-15) return sorted[k];
  return sorted.front();
}

void save_factors(const FactorPair& factors, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream w(fs::path(dir) / "W.csv");
  std::ofstream h(fs::path(dir) / "H.csv");
  if (!w || !h) throw ConfigError("cannot write factors in " + dir);
  w.precision(17);
  h.precision(17);
  const Eigen::Index r = factors.W.cols();
  w << "round";
  h << "coalition";
  for (Eigen::Index k = 0; k < r; ++k) {
    w << ",f" << k;
    h << ",f" << k;
  }
  w << '\n';
  h << '\n';
  for (Eigen::Index t = 0; t < factors.W.rows(); ++t) {
    w << t;
    for (Eigen::Index k = 0; k < r; ++k) w << ',' << factors.W(t, k);
    w << '\n';
  }
  for (Eigen::Index c = 0; c < factors.H.rows(); ++c) {
    h << factors.column_keys[static_cast<std::size_t>(c)].hex();
    for (Eigen::Index k = 0; k < r; ++k) h << ',' << factors.H(c, k);
    h << '\n';
  }
}

}  // namespace fedval
