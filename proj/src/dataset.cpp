#include "scm/dataset.hpp"

#include "scm/error.hpp"
#include "scm/numfmt.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace scm {

namespace {

constexpr std::uint64_t kCenterStream = 0x51;
constexpr std::uint64_t kInstanceStream = 0x52;
constexpr std::uint64_t kShotStream = 0x53;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

FeatureVector draw_around(const FeatureVector &center, double sigma, std::mt19937_64 &rng) {
  std::normal_distribution<double> noise(0.0, sigma);
  FeatureVector out(center.size());
  for (std::size_t j = 0; j < center.size(); ++j)
    out[j] = center[j] + noise(rng);
  return out;
}

void check_instances(std::span<const LabeledInstance> rows, const FewShotDataset &data,
                     const char *split) {
  for (const auto &row : rows) {
    if (row.features.size() != data.d)
      throw ConfigError(std::string(split) + ": instance dimension " +
                        std::to_string(row.features.size()) + " != d " + std::to_string(data.d));
    if (row.class_id < 0 || static_cast<std::size_t>(row.class_id) >= data.num_classes())
      throw ConfigError(std::string(split) + ": unknown class id " + std::to_string(row.class_id));
    for (double v : row.features)
      if (!std::isfinite(v))
        throw ConfigError(std::string(split) + ": non-finite feature value");
  }
}

} // namespace

void FewShotDataset::validate() const {
  if (d == 0)
    throw ConfigError("d: must be positive");
  for (std::size_t i = 0; i < base_classes.size(); ++i)
    if (base_classes[i] != static_cast<ClassId>(i))
      throw ConfigError("base_classes: ids must be dense 0..|C_b|-1");
  for (std::size_t i = 0; i < novel_classes.size(); ++i)
    if (novel_classes[i] != static_cast<ClassId>(base_classes.size() + i))
      throw ConfigError("novel_classes: ids must follow base ids densely");
  check_instances(train_base, *this, "train_base");
  check_instances(finetune_set, *this, "finetune_set");
  check_instances(test_set, *this, "test_set");
  for (const auto &row : train_base)
    if (!is_base(row.class_id))
      throw ConfigError("train_base: contains novel class " + std::to_string(row.class_id));
  std::vector<std::size_t> counts(num_classes(), 0);
  for (const auto &row : finetune_set)
    ++counts[static_cast<std::size_t>(row.class_id)];
  for (ClassId c : novel_classes)
    if (counts[static_cast<std::size_t>(c)] != k_shot)
      throw ConfigError("finetune_set: novel class " + std::to_string(c) + " has " +
                        std::to_string(counts[static_cast<std::size_t>(c)]) +
                        " instances, expected k=" + std::to_string(k_shot));
}

void SyntheticSpec::validate() const {
  if (n_base == 0)
    throw ConfigError("n_base: must be positive");
  if (d == 0)
    throw ConfigError("d: must be positive");
  if (samples_per_base_class == 0)
    throw ConfigError("samples_per_base_class: must be positive");
  if (k_shot == 0)
    throw ConfigError("k_shot: must be positive");
  if (k_shot > samples_per_base_class)
    throw ConfigError("k_shot: exceeds samples_per_base_class");
  if (test_per_class == 0)
    throw ConfigError("test_per_class: must be positive");
  if (relatedness_degree == 0)
    throw ConfigError("relatedness_degree: must be positive");
  if (relatedness_degree > n_base)
    throw ConfigError("relatedness_degree: exceeds n_base");
  if (!(cluster_noise > 0.0) || !std::isfinite(cluster_noise))
    throw ConfigError("cluster_noise: must be positive and finite");
  if (!(center_noise >= 0.0) || !std::isfinite(center_noise))
    throw ConfigError("center_noise: must be non-negative and finite");
}

SyntheticTruth synthetic_truth(const SyntheticSpec &spec) {
  spec.validate();
  auto rng = make_rng(spec.seed, kCenterStream);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);

  SyntheticTruth truth;
  // Base centers share the radius sqrt(d). While d >= n_base they are also
  // mutually orthogonal, so |c - mu_b|^2 = |c|^2 + d (1 - 2 w_b) for a mix c
  // with weight w_b on mu_b, and the parents of a mix are its nearest centers.
  const double radius = std::sqrt(static_cast<double>(spec.d));
  truth.base_centers.resize(spec.n_base, FeatureVector(spec.d));
  for (std::size_t b = 0; b < spec.n_base; ++b) {
    auto &center = truth.base_centers[b];
    for (double &v : center)
      v = unit(rng);
    if (b < spec.d)
      for (std::size_t prev = 0; prev < b; ++prev) {
        const auto &q = truth.base_centers[prev];
        const double proj = std::inner_product(center.begin(), center.end(), q.begin(), 0.0) /
                            (radius * radius);
        for (std::size_t j = 0; j < spec.d; ++j)
          center[j] -= proj * q[j];
      }
    const double norm = std::sqrt(std::inner_product(center.begin(), center.end(), center.begin(), 0.0));
    for (double &v : center)
      v *= radius / norm;
  }

  std::vector<ClassId> base_ids(spec.n_base);
  std::iota(base_ids.begin(), base_ids.end(), 0);
  for (std::size_t n = 0; n < spec.n_novel; ++n) {
    std::vector<ClassId> chosen;
    std::sample(base_ids.begin(), base_ids.end(), std::back_inserter(chosen),
                static_cast<std::ptrdiff_t>(spec.relatedness_degree), rng);
    // Weights within a factor of two of each other keep every parent visible.
    std::vector<double> weights(chosen.size());
    for (double &w : weights)
      w = 1.0 + jitter(rng);
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    FeatureVector center(spec.d, 0.0);
    for (std::size_t m = 0; m < chosen.size(); ++m)
      for (std::size_t j = 0; j < spec.d; ++j)
        center[j] += weights[m] / total * truth.base_centers[static_cast<std::size_t>(chosen[m])][j];
    if (spec.center_noise > 0.0) {
      std::normal_distribution<double> offset(0.0, spec.center_noise);
      for (double &v : center)
        v += offset(rng);
    }
    truth.novel_centers.push_back(std::move(center));
    truth.novel_mixing.push_back(std::move(chosen));
  }
  return truth;
}

FewShotDataset generate_synthetic(const SyntheticSpec &spec) {
  const SyntheticTruth truth = synthetic_truth(spec);
  auto rng = make_rng(spec.seed, kInstanceStream);

  FewShotDataset data;
  data.d = spec.d;
  data.k_shot = spec.k_shot;
  data.base_classes.resize(spec.n_base);
  std::iota(data.base_classes.begin(), data.base_classes.end(), 0);
  data.novel_classes.resize(spec.n_novel);
  std::iota(data.novel_classes.begin(), data.novel_classes.end(),
            static_cast<ClassId>(spec.n_base));

  for (std::size_t b = 0; b < spec.n_base; ++b)
    for (std::size_t s = 0; s < spec.samples_per_base_class; ++s)
      data.train_base.push_back(
          {draw_around(truth.base_centers[b], spec.cluster_noise, rng), static_cast<ClassId>(b)});

  data.finetune_set = sample_k_shot(data.train_base, spec.k_shot, spec.seed ^ kShotStream);
  for (std::size_t n = 0; n < spec.n_novel; ++n)
    for (std::size_t s = 0; s < spec.k_shot; ++s)
      data.finetune_set.push_back({draw_around(truth.novel_centers[n], spec.cluster_noise, rng),
                                   static_cast<ClassId>(spec.n_base + n)});

  const std::size_t base_test =
      spec.base_test_per_class == 0 ? spec.test_per_class : spec.base_test_per_class;
  for (std::size_t b = 0; b < spec.n_base; ++b)
    for (std::size_t s = 0; s < base_test; ++s)
      data.test_set.push_back(
          {draw_around(truth.base_centers[b], spec.cluster_noise, rng), static_cast<ClassId>(b)});
  for (std::size_t n = 0; n < spec.n_novel; ++n)
    for (std::size_t s = 0; s < spec.test_per_class; ++s)
      data.test_set.push_back({draw_around(truth.novel_centers[n], spec.cluster_noise, rng),
                               static_cast<ClassId>(spec.n_base + n)});
  return data;
}

std::vector<LabeledInstance> instances_of(std::span<const LabeledInstance> pool, ClassId c) {
  std::vector<LabeledInstance> out;
  for (const auto &row : pool)
    if (row.class_id == c)
      out.push_back(row);
  return out;
}

std::vector<LabeledInstance> sample_k_shot(std::span<const LabeledInstance> pool, std::size_t k,
                                           std::uint64_t seed) {
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < pool.size(); ++i)
    by_class[pool[i].class_id].push_back(i);

  auto rng = make_rng(seed, kShotStream);
  std::vector<LabeledInstance> out;
  out.reserve(by_class.size() * k);
  for (const auto &[cls, indices] : by_class) {
    if (indices.size() < k)
      throw InsufficientDataError("class " + std::to_string(cls) + " has " +
                                  std::to_string(indices.size()) + " instances, need " +
                                  std::to_string(k));
    std::vector<std::size_t> picked(indices);
    std::shuffle(picked.begin(), picked.end(), rng);
    picked.resize(k);
    std::sort(picked.begin(), picked.end());
    for (std::size_t i : picked)
      out.push_back(pool[i]);
  }
  return out;
}

void write_feature_csv(const std::filesystem::path &file, std::span<const LabeledInstance> rows,
                       std::size_t d) {
  std::ofstream out(file, std::ios::binary);
  if (!out)
    throw IoError("cannot open " + file.string() + " for writing");
  out << "class_id";
  for (std::size_t j = 0; j < d; ++j)
    out << ",f" << j;
  out << '\n';
  for (const auto &row : rows) {
    out << row.class_id;
    for (double v : row.features)
      out << ',' << format_double(v);
    out << '\n';
  }
  if (!out)
    throw IoError("write failed for " + file.string());
}

std::vector<LabeledInstance> read_feature_csv(const std::filesystem::path &file,
                                              std::size_t expected_d, std::size_t num_classes) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + file.string());

  auto split = [](const std::string &line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
      cells.emplace_back();
    return cells;
  };

  std::string line;
  long line_no = 1;
  if (!std::getline(in, line))
    throw ParseError(file.string() + ": missing header", 1);
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  const auto header = split(line);
  if (header.empty() || header[0] != "class_id")
    throw ParseError(file.string() + ": header must start with class_id", 1);
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j + 1] != "f" + std::to_string(j))
      throw ParseError(file.string() + ": unexpected header column '" + header[j + 1] + "'", 1);
  if (d == 0)
    throw ParseError(file.string() + ": no feature columns", 1);
  if (expected_d != 0 && d != expected_d)
    throw ParseError(file.string() + ": header declares d=" + std::to_string(d) +
                         ", manifest says " + std::to_string(expected_d),
                     1);

  std::vector<LabeledInstance> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    const auto cells = split(line);
    if (cells.size() != d + 1)
      throw ParseError("expected " + std::to_string(d + 1) + " columns, found " +
                           std::to_string(cells.size()),
                       line_no);
    const auto id = parse_double(cells[0]);
    if (!id || *id != std::floor(*id) || *id < 0 ||
        (num_classes != 0 && *id >= static_cast<double>(num_classes)))
      throw ParseError("unknown class id '" + cells[0] + "'", line_no);
    LabeledInstance row;
    row.class_id = static_cast<ClassId>(*id);
    row.features.reserve(d);
    for (std::size_t j = 1; j <= d; ++j) {
      const auto v = parse_double(cells[j]);
      if (!v)
        throw ParseError("malformed value '" + cells[j] + "'", line_no);
      if (!std::isfinite(*v))
        throw ParseError("non-finite value '" + cells[j] + "'", line_no);
      row.features.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_features(const FewShotDataset &data, const std::filesystem::path &dir) {
  data.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::ordered_json manifest;
  manifest["d"] = data.d;
  manifest["k"] = data.k_shot;
  manifest["base_classes"] = data.base_classes;
  manifest["novel_classes"] = data.novel_classes;
  manifest["splits"] = {{"train_base", "train_base.csv"},
                        {"finetune", "finetune.csv"},
                        {"test", "test.csv"}};
  write_feature_csv(dir / "train_base.csv", data.train_base, data.d);
  write_feature_csv(dir / "finetune.csv", data.finetune_set, data.d);
  write_feature_csv(dir / "test.csv", data.test_set, data.d);
  std::ofstream out(dir / "dataset.json", std::ios::binary);
  if (!out)
    throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

FewShotDataset load_features(const std::filesystem::path &path) {
  const auto manifest_path =
      std::filesystem::is_directory(path) ? path / "dataset.json" : path;
  std::ifstream in(manifest_path);
  if (!in)
    throw IoError("cannot open manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(manifest_path.string() + ": " + e.what(), 0);
  }

  FewShotDataset data;
  try {
    data.base_classes = manifest.at("base_classes").get<std::vector<ClassId>>();
    data.novel_classes = manifest.at("novel_classes").get<std::vector<ClassId>>();
    data.d = manifest.value("d", std::size_t{0});
    data.k_shot = manifest.at("k").get<std::size_t>();
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(manifest_path.string() + ": " + e.what(), 0);
  }
  const auto dir = manifest_path.parent_path();
  const auto splits = manifest.value("splits", nlohmann::json::object());
  auto split_file = [&](const char *key, const char *fallback) {
    return dir / splits.value(key, std::string(fallback));
  };
  const std::size_t n = data.num_classes();
  data.train_base = read_feature_csv(split_file("train_base", "train_base.csv"), data.d, n);
  if (data.d == 0 && !data.train_base.empty())
    data.d = data.train_base.front().features.size();
  data.finetune_set = read_feature_csv(split_file("finetune", "finetune.csv"), data.d, n);
  data.test_set = read_feature_csv(split_file("test", "test.csv"), data.d, n);
  data.validate();
  return data;
}

} // namespace scm
