#include "fedval/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace fedval {

void ClientDataset::validate() const {
  require(features.rows() == labels.size(), "client " + std::to_string(client_id) + ": " +
                                                std::to_string(features.rows()) + " feature rows but " +
                                                std::to_string(labels.size()) + " labels");
  require(noise_fraction >= 0.0 && noise_fraction <= 1.0,
          "client " + std::to_string(client_id) + ": noise_fraction outside [0,1]");
}

bool same_data(const ClientDataset& a, const ClientDataset& b) {
  return a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
         a.features == b.features && a.labels == b.labels;
}

std::vector<ClientDataset> generate_synthetic(const SyntheticSpec& spec) {
  require(spec.num_clients >= 1, "synthetic data needs at least one client");
  require(spec.samples_per_client >= 1, "samples_per_client must be positive");
  require(spec.n_features >= 1, "n_features must be positive");
  require(spec.n_classes >= 1, "n_classes must be positive");
  require(spec.alpha >= 0.0 && spec.beta >= 0.0, "alpha and beta are variances and must be >= 0");

  const int d = spec.n_features;
  const int c = spec.n_classes;
  Vector sigma_sqrt(d);
  for (int j = 0; j < d; ++j) sigma_sqrt[j] = std::sqrt(std::pow(static_cast<double>(j + 1), -1.2));

  std::normal_distribution<double> std_normal(0.0, 1.0);
  const bool shared = spec.alpha == 0.0 && spec.beta == 0.0;

  Matrix shared_w(c, d);
  Vector shared_b(c);
  {
    Rng rng = make_rng(spec.seed, 0);
    for (int k = 0; k < c; ++k)
      for (int j = 0; j < d; ++j) shared_w(k, j) = std_normal(rng);
    for (int k = 0; k < c; ++k) shared_b[k] = std_normal(rng);
  }

  std::vector<ClientDataset> out;
  out.reserve(spec.num_clients);
  for (int i = 0; i < spec.num_clients; ++i) {
    Rng rng = make_rng(spec.seed, static_cast<std::uint64_t>(i) + 1);
    Matrix w = shared_w;
    Vector b = shared_b;
    Vector v = Vector::Zero(d);
    if (!shared) {
      const double u = std::sqrt(spec.alpha) * std_normal(rng);
      const double feature_mean = std::sqrt(spec.beta) * std_normal(rng);
      for (int k = 0; k < c; ++k)
        for (int j = 0; j < d; ++j) w(k, j) = u + std_normal(rng);
      for (int k = 0; k < c; ++k) b[k] = u + std_normal(rng);
      for (int j = 0; j < d; ++j) v[j] = feature_mean + std_normal(rng);
    }

    ClientDataset data;
    data.client_id = i;
    data.num_classes = c;
    data.features.resize(spec.samples_per_client, d);
    data.labels.resize(spec.samples_per_client);
    for (int s = 0; s < spec.samples_per_client; ++s) {
      for (int j = 0; j < d; ++j) data.features(s, j) = v[j] + sigma_sqrt[j] * std_normal(rng);
      Vector logits = w * data.features.row(s).transpose() + b;
      Eigen::Index best = 0;
      logits.maxCoeff(&best);
      data.labels[s] = static_cast<double>(best);
    }
    out.push_back(std::move(data));
  }
  return out;
}

Partition parse_partition(const std::string& name) {
  if (name == "iid") return Partition::iid;
  if (name == "by_label") return Partition::by_label;
  throw ConfigError("unknown partition '" + name + "' (expected iid or by_label)");
}

namespace {

bool parse_double(const std::string& field, double& value) {
  std::size_t pos = 0;
  try {
    value = std::stod(field, &pos);
  } catch (const std::exception&) {
    return false;
  }
  while (pos < field.size() && std::isspace(static_cast<unsigned char>(field[pos]))) ++pos;
  return pos == field.size();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

ClientDataset gather(const Matrix& features, const Vector& labels, const std::vector<Eigen::Index>& rows,
                     ClientId id, int num_classes) {
  ClientDataset data;
  data.client_id = id;
  data.num_classes = num_classes;
  data.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  data.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    data.features.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);
    data.labels[static_cast<Eigen::Index>(r)] = labels[rows[r]];
  }
  return data;
}

}  // namespace

std::vector<ClientDataset> load_csv(const std::string& path, Partition partition, int num_clients,
                                    std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_fields(line);
    std::vector<double> values(fields.size());
    bool ok = fields.size() >= 2;
    for (std::size_t k = 0; ok && k < fields.size(); ++k) ok = parse_double(fields[k], values[k]);
    if (!ok) {
      if (rows.empty() && line_no == 1 && !fields.empty() && !parse_double(fields[0], values[0])) continue;
      throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed row '" + line + "'");
    }
    if (width == 0) width = values.size();
    if (values.size() != width)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                        " columns, found " + std::to_string(values.size()));
    rows.push_back(std::move(values));
  }
  require(!rows.empty(), path + ": no data rows");

  Matrix features(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  Vector labels(static_cast<Eigen::Index>(rows.size()));
  bool integral = true;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k + 1 < width; ++k)
      features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
    labels[static_cast<Eigen::Index>(r)] = rows[r].back();
    integral = integral && rows[r].back() >= 0 && std::floor(rows[r].back()) == rows[r].back();
  }
  const int num_classes = integral ? static_cast<int>(labels.maxCoeff()) + 1 : 0;
  return partition_rows(features, labels, num_classes, partition, num_clients, seed);
}

std::vector<ClientDataset> partition_rows(const Matrix& features, const Vector& labels, int num_classes,
                                          Partition partition, int num_clients, std::uint64_t seed) {
  require(num_clients >= 1, "num_clients must be positive");
  require(features.rows() == labels.size(), "feature rows and labels disagree");
  require(num_clients <= features.rows(), "num_clients (" + std::to_string(num_clients) + ") exceeds row count (" +
                                              std::to_string(features.rows()) + ")");
  Rng rng = make_rng(seed, 0x5041);
  std::vector<std::vector<Eigen::Index>> assignment(num_clients);

  if (partition == Partition::iid) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(features.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n = order.size();
    const std::size_t base = n / num_clients;
    const std::size_t extra = n % num_clients;
    std::size_t pos = 0;
    for (int i = 0; i < num_clients; ++i) {
      const std::size_t take = base + (static_cast<std::size_t>(i) < extra ? 1 : 0);
      assignment[i].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                           order.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
    }
  } else {
    require(num_classes >= 1, "by_label partition needs integer class labels");
    std::map<int, std::vector<Eigen::Index>> by_class;
    for (Eigen::Index r = 0; r < labels.size(); ++r) by_class[static_cast<int>(labels[r])].push_back(r);
    std::vector<int> classes;
    for (auto& [cls, rows] : by_class) {
      classes.push_back(cls);
      std::shuffle(rows.begin(), rows.end(), rng);
    }
    std::shuffle(classes.begin(), classes.end(), rng);
    const std::size_t num_present = classes.size();

    // Two class slots per client, cycling through the shuffled class order.
    std::map<int, std::vector<ClientId>> takers;
    for (int i = 0; i < num_clients; ++i) {
      const int slots = num_present >= 2 ? 2 : 1;
      for (int s = 0; s < slots; ++s) {
        const int cls = classes[(static_cast<std::size_t>(2 * i + s)) % num_present];
        takers[cls].push_back(i);
      }
    }
    // Classes nobody picked go round-robin so every row is assigned.
    int next = 0;
    for (int cls : classes)
      if (takers[cls].empty()) takers[cls].push_back(next++ % num_clients);

    for (auto& [cls, clients] : takers) {
      const auto& rows = by_class[cls];
      const std::size_t n = rows.size();
      const std::size_t k = clients.size();
      for (std::size_t s = 0; s < k; ++s) {
        const std::size_t lo = n * s / k;
        const std::size_t hi = n * (s + 1) / k;
        for (std::size_t r = lo; r < hi; ++r) assignment[clients[s]].push_back(rows[r]);
      }
    }
    for (auto& rows : assignment) std::sort(rows.begin(), rows.end());
  }

  std::vector<ClientDataset> out;
  out.reserve(num_clients);
  for (int i = 0; i < num_clients; ++i) {
    require(!assignment[i].empty(), "partition left client " + std::to_string(i) + " without data");
    out.push_back(gather(features, labels, assignment[i], i, num_classes));
  }
  return out;
}

void save_csv(const ClientDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out.precision(17);
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    for (Eigen::Index k = 0; k < data.dim(); ++k) out << data.features(r, k) << ',';
    out << data.labels[r] << '\n';
  }
}

std::pair<std::vector<ClientDataset>, ClientDataset> hold_out_test(const std::vector<ClientDataset>& datasets,
                                                                   double fraction) {
  require(!datasets.empty(), "no datasets to split");
  require(fraction > 0.0 && fraction < 1.0, "test fraction must lie in (0,1)");
  std::vector<ClientDataset> train;
  ClientDataset test;
  test.client_id = -1;
  test.num_classes = datasets.front().num_classes;
  std::vector<Eigen::Index> test_rows;
  Eigen::Index total = 0;
  for (const auto& d : datasets) {
    const auto n_test = static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(d.size())));
    require(n_test >= 1 && n_test < d.size(), "client " + std::to_string(d.client_id) + " too small to hold out a test split");
    total += n_test;
  }
  test.features.resize(total, datasets.front().dim());
  test.labels.resize(total);
  Eigen::Index pos = 0;
  for (const auto& d : datasets) {
    const auto n_test = static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(d.size())));
    const Eigen::Index n_train = d.size() - n_test;
    ClientDataset t = d;
    t.features = d.features.topRows(n_train);
    t.labels = d.labels.head(n_train);
    train.push_back(std::move(t));
    test.features.middleRows(pos, n_test) = d.features.bottomRows(n_test);
    test.labels.segment(pos, n_test) = d.labels.tail(n_test);
    pos += n_test;
  }
  return {std::move(train), std::move(test)};
}

void make_duplicate(std::vector<ClientDataset>& datasets, ClientId target, ClientId source) {
  const auto n = static_cast<ClientId>(datasets.size());
  require(target >= 0 && target < n && source >= 0 && source < n && target != source,
          "duplicate needs two distinct valid client ids");
  ClientDataset copy = datasets[source];
  copy.client_id = target;
  copy.duplicate_of = source;
  datasets[target] = std::move(copy);
}

std::vector<ClientDataset> inject_feature_noise(const std::vector<ClientDataset>& datasets,
                                                const std::vector<double>& fractions, double sigma,
                                                std::uint64_t seed) {
  require(fractions.size() == datasets.size(), "need one noise fraction per client");
  require(sigma >= 0.0, "noise sigma must be non-negative");
  std::vector<ClientDataset> out = datasets;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double f = fractions[i];
    require(f >= 0.0 && f <= 1.0, "noise fraction for client " + std::to_string(i) + " outside [0,1]");
    auto& d = out[i];
    const auto count = static_cast<Eigen::Index>(std::llround(f * static_cast<double>(d.size())));
    d.noise_fraction = f;
    if (count == 0 || sigma == 0.0) continue;
    Rng rng = make_rng(seed, 0x4e00 + i);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(d.size()));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index k = 0; k < count; ++k)
      for (Eigen::Index j = 0; j < d.dim(); ++j) d.features(rows[static_cast<std::size_t>(k)], j) += noise(rng);
  }
  return out;
}

std::vector<ClientDataset> inject_label_noise(const std::vector<ClientDataset>& datasets,
                                              const std::set<ClientId>& noisy_clients, double flip_fraction,
                                              std::uint64_t seed) {
  require(flip_fraction >= 0.0 && flip_fraction <= 1.0, "flip_fraction outside [0,1]");
  std::vector<ClientDataset> out = datasets;
  for (ClientId id : noisy_clients) {
    require(id >= 0 && id < static_cast<ClientId>(out.size()), "unknown client id " + std::to_string(id));
    auto& d = out[static_cast<std::size_t>(id)];
    require(d.num_classes >= 2, "label noise needs at least two classes");
    const auto count = static_cast<Eigen::Index>(std::llround(flip_fraction * static_cast<double>(d.size())));
    d.noise_fraction = flip_fraction;
    Rng rng = make_rng(seed, 0x4c00 + static_cast<std::uint64_t>(id));
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(d.size()));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    std::uniform_int_distribution<int> pick(0, d.num_classes - 2);
    for (Eigen::Index k = 0; k < count; ++k) {
      auto& label = d.labels[rows[static_cast<std::size_t>(k)]];
      const int old = static_cast<int>(label);
      int fresh = pick(rng);
      if (fresh >= old) ++fresh;
      label = static_cast<double>(fresh);
    }
  }
  return out;
}

}  // namespace fedval
