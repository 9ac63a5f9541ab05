#include "scm/error.hpp"
#include "scm/kernels.hpp"
#include "scm/model.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <omp.h>

using namespace scm;
using namespace scm::testing;

namespace {

std::vector<LabeledInstance> random_rows(std::size_t n, std::size_t d, std::size_t classes,
                                         std::mt19937_64 &rng) {
  std::vector<LabeledInstance> rows(n);
  for (auto &r : rows) {
    r.features = random_vector(d, rng);
    r.class_id = static_cast<ClassId>(rng() % classes);
  }
  return rows;
}

struct Shape {
  std::size_t rows, d, n_out;
};

class KernelShapes : public ::testing::TestWithParam<Shape> {};

} // namespace

TEST_P(KernelShapes, BatchLogitsSerialMatchesOracleAndOmpIsBitIdentical) {
  const auto [n, d, n_out] = GetParam();
  std::mt19937_64 rng(n * 131 + d * 7 + n_out);
  const auto head = random_head(n_out, d, rng);
  const auto block = kernels::pack(random_rows(n, d, 3, rng), d);

  std::vector<double> serial(n * n_out), parallel(n * n_out), dispatched(n * n_out);
  kernels::serial::batch_logits(head, block, serial);
  kernels::omp::batch_logits(head, block, parallel);
  kernels::batch_logits(head, block, dispatched);
  EXPECT_EQ(serial, parallel);
  EXPECT_EQ(serial, dispatched);

  for (std::size_t i = 0; i < n; ++i) {
    const auto ref = naive_logits(head, block.row(i));
    for (std::size_t j = 0; j < n_out; ++j)
      ASSERT_NEAR(serial[i * n_out + j], ref[j], 1e-12);
  }
}

TEST_P(KernelShapes, AccumulateGradientSerialMatchesOracleAndOmpIsBitIdentical) {
  const auto [n, d, n_out] = GetParam();
  std::mt19937_64 rng(n * 17 + d * 3 + n_out);
  const auto head = random_head(n_out, d, rng);
  const auto block = kernels::pack(random_rows(n, d, 3, rng), d);
  const auto dz = random_vector(n * n_out, rng);

  HeadGradient serial(head), parallel(head), dispatched(head);
  // Non-zero starting point: the kernels accumulate.
  serial.weights[0] = parallel.weights[0] = dispatched.weights[0] = 0.5;
  kernels::serial::accumulate_gradient(dz, block, serial, 0.25);
  kernels::omp::accumulate_gradient(dz, block, parallel, 0.25);
  kernels::accumulate_gradient(dz, block, dispatched, 0.25);
  EXPECT_EQ(serial.weights, parallel.weights);
  EXPECT_EQ(serial.bias, parallel.bias);
  EXPECT_EQ(serial.weights, dispatched.weights);

  HeadGradient ref(head);
  ref.weights[0] = 0.5;
  for (std::size_t i = 0; i < n; ++i)
    accumulate_outer(ref, std::span<const double>(dz).subspan(i * n_out, n_out), block.row(i),
                     0.25);
  for (std::size_t k = 0; k < ref.weights.size(); ++k)
    ASSERT_NEAR(serial.weights[k], ref.weights[k], 1e-10);
  for (std::size_t k = 0; k < ref.bias.size(); ++k)
    ASSERT_NEAR(serial.bias[k], ref.bias[k], 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Shapes, KernelShapes,
                         ::testing::Values(Shape{1, 1, 1}, Shape{7, 3, 5}, Shape{64, 32, 20},
                                           Shape{500, 64, 40}, Shape{2048, 128, 30}));

TEST(Kernels, ResultsIndependentOfThreadCount) {
  std::mt19937_64 rng(99);
  const auto head = random_head(25, 48, rng);
  const auto block = kernels::pack(random_rows(1000, 48, 3, rng), 48);
  const auto dz = random_vector(1000 * 25, rng);
  std::vector<double> ref(1000 * 25);
  kernels::serial::batch_logits(head, block, ref);
  HeadGradient gref(head);
  kernels::serial::accumulate_gradient(dz, block, gref, 1.0);
  const int saved = omp_get_max_threads();
  for (int threads : {1, 2, 3, 8}) {
    omp_set_num_threads(threads);
    std::vector<double> out(ref.size());
    kernels::omp::batch_logits(head, block, out);
    EXPECT_EQ(out, ref) << threads << " threads";
    HeadGradient g(head);
    kernels::omp::accumulate_gradient(dz, block, g, 1.0);
    EXPECT_EQ(g.weights, gref.weights) << threads << " threads";
    EXPECT_EQ(g.bias, gref.bias) << threads << " threads";
  }
  omp_set_num_threads(saved);
}

TEST(Kernels, PackRejectsWrongDimension) {
  std::vector<LabeledInstance> rows{{{1.0, 2.0}, 0}, {{1.0}, 0}};
  EXPECT_THROW(kernels::pack(rows, 2), ShapeError);
}

TEST(PredictAll, OmpMatchesSerialAndPointwisePredict) {
  std::mt19937_64 rng(5);
  for (Variant v : {Variant::HSS, Variant::SSS, Variant::SMS}) {
    const std::size_t gamma = v == Variant::SMS ? 3 : 1;
    const auto model = random_model(v, 12, 8, gamma, 10, rng);
    const auto rows = random_rows(777, 10, 20, rng);
    const auto a = serial::predict_all(model, rows);
    const auto b = omp::predict_all(model, rows);
    EXPECT_EQ(a, b);
    for (std::size_t i = 0; i < rows.size(); i += 37)
      EXPECT_EQ(a[i], predict(model, rows[i].features));
  }
}
