#pragma once

// Batched linear-head kernels. Every kernel has a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp`. The OpenMP
// versions partition work so that each output element is accumulated in the
// same order as the serial loop, so both produce bit-identical results.

#include "scm/dataset.hpp"
#include "scm/heads.hpp"

#include <span>
#include <vector>

namespace scm::kernels {

/// Row-major N x d feature block.
struct FeatureBlock {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

FeatureBlock pack(std::span<const LabeledInstance> instances, std::size_t d);

namespace serial {

/// out[n, j] = b_j + sum_k W[j, k] X[n, k]; `out` holds X.rows * head.n_out.
void batch_logits(const LinearHead &head, const FeatureBlock &x, std::span<double> out);

/// grad.W += scale * dZ^T X, grad.b += scale * colsum(dZ), where dZ is
/// X.rows x n_out row-major.
void accumulate_gradient(std::span<const double> dz, const FeatureBlock &x, HeadGradient &grad,
                         double scale);

} // namespace serial

namespace omp {

void batch_logits(const LinearHead &head, const FeatureBlock &x, std::span<double> out);
void accumulate_gradient(std::span<const double> dz, const FeatureBlock &x, HeadGradient &grad,
                         double scale);

} // namespace omp

/// Chooses the OpenMP kernel once the work is large enough to amortize the
/// parallel region. Results do not depend on the choice.
void batch_logits(const LinearHead &head, const FeatureBlock &x, std::span<double> out);
void accumulate_gradient(std::span<const double> dz, const FeatureBlock &x, HeadGradient &grad,
                         double scale);

} // namespace scm::kernels
