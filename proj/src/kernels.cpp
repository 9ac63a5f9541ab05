#include "scm/kernels.hpp"

#include "scm/error.hpp"

#include <string>

namespace scm::kernels {

namespace {

constexpr std::size_t kParallelWork = 1 << 16;

void check_logits(const LinearHead &head, const FeatureBlock &x, std::span<double> out) {
  if (x.cols != head.d)
    throw ShapeError("batch_logits: features have " + std::to_string(x.cols) +
                     " columns, head expects " + std::to_string(head.d));
  if (out.size() != x.rows * head.n_out)
    throw ShapeError("batch_logits: output buffer has wrong size");
}

void check_gradient(std::span<const double> dz, const FeatureBlock &x, const HeadGradient &grad) {
  const std::size_t n_out = grad.bias.size();
  if (dz.size() != x.rows * n_out || grad.weights.size() != n_out * x.cols)
    throw ShapeError("accumulate_gradient: inconsistent shapes");
}

inline void logits_row(const LinearHead &head, const FeatureBlock &x, std::size_t n,
                       std::span<double> out) {
  const auto xr = x.row(n);
  for (std::size_t j = 0; j < head.n_out; ++j) {
    const auto wr = head.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < head.d; ++k)
      acc += wr[k] * xr[k];
    out[n * head.n_out + j] = head.bias[j] + acc;
  }
}

inline void gradient_row(std::span<const double> dz, const FeatureBlock &x, HeadGradient &grad,
                         double scale, std::size_t j) {
  const std::size_t n_out = grad.bias.size();
  double *wr = grad.weights.data() + j * x.cols;
  double bsum = 0.0;
  for (std::size_t n = 0; n < x.rows; ++n) {
    const double s = scale * dz[n * n_out + j];
    const auto xr = x.row(n);
    for (std::size_t k = 0; k < x.cols; ++k)
      wr[k] += s * xr[k];
    bsum += s;
  }
  grad.bias[j] += bsum;
}

} // namespace

FeatureBlock pack(std::span<const LabeledInstance> instances, std::size_t d) {
  FeatureBlock block;
  block.rows = instances.size();
  block.cols = d;
  block.values.reserve(instances.size() * d);
  for (const auto &row : instances) {
    if (row.features.size() != d)
      throw ShapeError("pack: instance dimension mismatch");
    block.values.insert(block.values.end(), row.features.begin(), row.features.end());
  }
  return block;
}

namespace serial {

void batch_logits(const LinearHead &head, const FeatureBlock &x, std::span<double> out) {
  check_logits(head, x, out);
  for (std::size_t n = 0; n < x.rows; ++n)
    logits_row(head, x, n, out);
}

void accumulate_gradient(std::span<const double> dz, const FeatureBlock &x, HeadGradient &grad,
                         double scale) {
  check_gradient(dz, x, grad);
  for (std::size_t j = 0; j < grad.bias.size(); ++j)
    gradient_row(dz, x, grad, scale, j);
}

} // namespace serial

namespace omp {

void batch_logits(const LinearHead &head, const FeatureBlock &x, std::span<double> out) {
  check_logits(head, x, out);
  const auto rows = static_cast<long>(x.rows);
#pragma omp parallel for schedule(static)
  for (long n = 0; n < rows; ++n)
    logits_row(head, x, static_cast<std::size_t>(n), out);
}

void accumulate_gradient(std::span<const double> dz, const FeatureBlock &x, HeadGradient &grad,
                         double scale) {
  check_gradient(dz, x, grad);
  // Each thread owns whole output rows, so no reduction across threads.
  const auto n_out = static_cast<long>(grad.bias.size());
#pragma omp parallel for schedule(static)
  for (long j = 0; j < n_out; ++j)
    gradient_row(dz, x, grad, scale, static_cast<std::size_t>(j));
}

} // namespace omp

void batch_logits(const LinearHead &head, const FeatureBlock &x, std::span<double> out) {
  if (x.rows * head.n_out * head.d >= kParallelWork)
    omp::batch_logits(head, x, out);
  else
    serial::batch_logits(head, x, out);
}

void accumulate_gradient(std::span<const double> dz, const FeatureBlock &x, HeadGradient &grad,
                         double scale) {
  if (x.rows * grad.weights.size() >= kParallelWork)
    omp::accumulate_gradient(dz, x, grad, scale);
  else
    serial::accumulate_gradient(dz, x, grad, scale);
}

} // namespace scm::kernels
