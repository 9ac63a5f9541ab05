#include "scm/dataset.hpp"
#include "scm/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace scm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name) {
  auto dir = fs::temp_directory_path() / ("scm_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path &file, const std::string &text) {
  std::ofstream(file, std::ios::binary) << text;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_base = 5;
  s.n_novel = 3;
  s.d = 6;
  s.samples_per_base_class = 30;
  s.k_shot = 4;
  s.test_per_class = 7;
  s.seed = 11;
  return s;
}

} // namespace

TEST(Synthetic, DeterministicForSameSeed) {
  const auto a = generate_synthetic(small_spec());
  const auto b = generate_synthetic(small_spec());
  EXPECT_EQ(a, b);
  auto other = small_spec();
  other.seed = 12;
  EXPECT_NE(a, generate_synthetic(other));
}

TEST(Synthetic, ShapesAndPartition) {
  const auto spec = small_spec();
  const auto data = generate_synthetic(spec);
  EXPECT_NO_THROW(data.validate());
  EXPECT_EQ(data.base_classes, (std::vector<ClassId>{0, 1, 2, 3, 4}));
  EXPECT_EQ(data.novel_classes, (std::vector<ClassId>{5, 6, 7}));
  EXPECT_EQ(data.train_base.size(), 5u * 30);
  EXPECT_EQ(data.finetune_set.size(), (5u + 3u) * 4);
  EXPECT_EQ(data.test_set.size(), (5u + 3u) * 7);
  std::size_t novel_shots = 0;
  for (const auto &row : data.finetune_set)
    novel_shots += data.is_novel(row.class_id);
  EXPECT_EQ(novel_shots, spec.k_shot * spec.n_novel);
  for (const auto &row : data.train_base)
    EXPECT_TRUE(data.is_base(row.class_id));
}

TEST(Synthetic, BaseFinetuneShotsComeFromTrainPool) {
  const auto data = generate_synthetic(small_spec());
  for (const auto &row : data.finetune_set)
    if (data.is_base(row.class_id))
      EXPECT_NE(std::find(data.train_base.begin(), data.train_base.end(), row),
                data.train_base.end());
}

TEST(Synthetic, TestSetDisjointFromTrainingData) {
  const auto data = generate_synthetic(small_spec());
  std::set<std::vector<double>> seen;
  for (const auto &row : data.train_base)
    seen.insert(row.features);
  for (const auto &row : data.finetune_set)
    seen.insert(row.features);
  for (const auto &row : data.test_set)
    EXPECT_EQ(seen.count(row.features), 0u);
}

TEST(Synthetic, BaseTestPrevalenceIsConfigurable) {
  auto spec = small_spec();
  spec.base_test_per_class = 2;
  const auto data = generate_synthetic(spec);
  std::size_t base = 0;
  for (const auto &row : data.test_set)
    base += data.is_base(row.class_id);
  EXPECT_EQ(base, 5u * 2);
  EXPECT_EQ(data.test_set.size() - base, 3u * 7);
}

TEST(Synthetic, NoNovelClasses) {
  auto spec = small_spec();
  spec.n_novel = 0;
  const auto data = generate_synthetic(spec);
  EXPECT_TRUE(data.novel_classes.empty());
  for (const auto &row : data.finetune_set)
    EXPECT_TRUE(data.is_base(row.class_id));
}

TEST(Synthetic, InvalidSpecNamesField) {
  auto expect_field = [](SyntheticSpec s, const std::string &field) {
    try {
      generate_synthetic(s);
      FAIL() << "expected ConfigError for " << field;
    } catch (const ConfigError &e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  auto s = small_spec();
  s.relatedness_degree = 6;
  expect_field(s, "relatedness_degree");
  s = small_spec();
  s.cluster_noise = 0;
  expect_field(s, "cluster_noise");
  s = small_spec();
  s.n_base = 0;
  expect_field(s, "n_base");
  s = small_spec();
  s.k_shot = 0;
  expect_field(s, "k_shot");
}

TEST(Synthetic, NoiselessNovelCentersNearestToTheirMixingSet) {
  // Brute force: rank every base center by distance to each novel center.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SyntheticSpec spec;
    spec.n_base = 4;
    spec.n_novel = 6;
    spec.d = 16;
    spec.relatedness_degree = 2;
    spec.center_noise = 0.0;
    spec.seed = seed;
    const auto truth = synthetic_truth(spec);
    for (std::size_t n = 0; n < spec.n_novel; ++n) {
      std::vector<std::pair<double, ClassId>> dist;
      for (std::size_t b = 0; b < spec.n_base; ++b) {
        double s = 0;
        for (std::size_t j = 0; j < spec.d; ++j) {
          const double diff = truth.novel_centers[n][j] - truth.base_centers[b][j];
          s += diff * diff;
        }
        dist.emplace_back(s, static_cast<ClassId>(b));
      }
      std::sort(dist.begin(), dist.end());
      std::vector<ClassId> nearest{dist[0].second, dist[1].second};
      std::sort(nearest.begin(), nearest.end());
      EXPECT_EQ(nearest, truth.novel_mixing[n]) << "seed " << seed << " novel " << n;
    }
  }
}

TEST(SampleKShot, OnePerClass) {
  std::vector<LabeledInstance> pool;
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < 4; ++i)
      pool.push_back({{double(c), double(i)}, c});
  const auto out = sample_k_shot(pool, 1, 3);
  ASSERT_EQ(out.size(), 5u);
  for (int c = 0; c < 5; ++c)
    EXPECT_EQ(out[c].class_id, c);
}

TEST(SampleKShot, FullPoolIsOrderNormalized) {
  std::vector<LabeledInstance> pool;
  for (int i = 0; i < 6; ++i)
    pool.push_back({{double(i)}, i % 2 ? 1 : 0});
  const auto out = sample_k_shot(pool, 3, 77);
  const std::vector<LabeledInstance> expected{
      {{0.0}, 0}, {{2.0}, 0}, {{4.0}, 0}, {{1.0}, 1}, {{3.0}, 1}, {{5.0}, 1}};
  EXPECT_EQ(out, expected);
}

TEST(SampleKShot, SeedsChangeTheSelection) {
  std::vector<LabeledInstance> pool;
  for (int i = 0; i < 20; ++i)
    pool.push_back({{double(i)}, 0});
  int differing = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const auto a = sample_k_shot(pool, 5, 2 * t);
    const auto b = sample_k_shot(pool, 5, 2 * t + 1);
    differing += a != b;
    EXPECT_EQ(a, sample_k_shot(pool, 5, 2 * t));
  }
  EXPECT_GE(differing, 1);
}

TEST(SampleKShot, NamesTheShortClass) {
  std::vector<LabeledInstance> pool{{{0.0}, 0}, {{1.0}, 0}, {{2.0}, 3}};
  try {
    sample_k_shot(pool, 2, 0);
    FAIL();
  } catch (const InsufficientDataError &e) {
    EXPECT_NE(std::string(e.what()).find("class 3"), std::string::npos);
  }
}

TEST(FeatureCsv, ParsesSmallFile) {
  const auto dir = scratch_dir("csv_small");
  write_text(dir / "a.csv", "class_id,f0,f1\n0,1.5,2\n1,-3,4e-2\n0,0,0\n");
  const auto rows = read_feature_csv(dir / "a.csv", 0, 2);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].class_id, 1);
  EXPECT_EQ(rows[1].features, (std::vector<double>{-3, 0.04}));
  fs::remove_all(dir);
}

TEST(FeatureCsv, ErrorsCarryLineNumbers) {
  const auto dir = scratch_dir("csv_errors");
  auto line_of = [&](const std::string &text, std::size_t classes) -> long {
    write_text(dir / "x.csv", text);
    try {
      read_feature_csv(dir / "x.csv", 0, classes);
    } catch (const ParseError &e) {
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of("class_id,f0,f1\n0,1,2\n1,NaN,2\n", 2), 3);
  EXPECT_EQ(line_of("class_id,f0,f1\n0,1,2\n0,1,inf\n", 2), 3);
  EXPECT_EQ(line_of("class_id,f0,f1\n0,1\n", 2), 2);
  EXPECT_EQ(line_of("class_id,f0,f1\n0,1,2\n0,1,2\n7,1,2\n", 2), 4);
  EXPECT_EQ(line_of("class_id,f0,f1\n0,1,abc\n", 2), 2);
  EXPECT_EQ(line_of("label,f0\n0,1\n", 2), 1);
  fs::remove_all(dir);
}

TEST(FeatureIo, SaveLoadRoundTrip) {
  const auto dir = scratch_dir("roundtrip");
  auto spec = small_spec();
  spec.d = 9;
  const auto data = generate_synthetic(spec);
  save_features(data, dir);
  EXPECT_EQ(load_features(dir), data);
  EXPECT_EQ(load_features(dir / "dataset.json"), data);
  fs::remove_all(dir);
}

TEST(FeatureIo, SaveIsByteReproducible) {
  const auto a = scratch_dir("bytes_a"), b = scratch_dir("bytes_b");
  const auto data = generate_synthetic(small_spec());
  save_features(data, a);
  save_features(data, b);
  for (const auto &entry : fs::directory_iterator(a)) {
    std::ifstream fa(entry.path(), std::ios::binary), fb(b / entry.path().filename(), std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(sa, sb) << entry.path().filename();
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(FeatureIo, LoadRejectsWrongShotCount) {
  const auto dir = scratch_dir("bad_k");
  auto data = generate_synthetic(small_spec());
  save_features(data, dir);
  // Drop one novel shot from the fine-tuning split on disk.
  std::vector<LabeledInstance> rows = data.finetune_set;
  rows.pop_back();
  write_feature_csv(dir / "finetune.csv", rows, data.d);
  EXPECT_THROW(load_features(dir), ConfigError);
  fs::remove_all(dir);
}

TEST(FeatureIo, MissingManifestIsIoError) {
  EXPECT_THROW(load_features("/nonexistent/scm/dir"), IoError);
}
