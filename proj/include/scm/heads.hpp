#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace scm {

/// Probability floor applied inside every log term of the losses.
inline constexpr double kProbFloor = 1e-12;

/// Dense affine classifier `logits = W x + b`, W stored row-major.
struct LinearHead {
  std::size_t n_out = 0;
  std::size_t d = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  LinearHead() = default;
  LinearHead(std::size_t n_out, std::size_t d)
      : n_out(n_out), d(d), weights(n_out * d, 0.0), bias(n_out, 0.0) {}

  std::span<double> row(std::size_t j) { return {weights.data() + j * d, d}; }
  std::span<const double> row(std::size_t j) const { return {weights.data() + j * d, d}; }
  double &w(std::size_t j, std::size_t k) { return weights[j * d + k]; }
  double w(std::size_t j, std::size_t k) const { return weights[j * d + k]; }

  /// Throws ShapeError / ContractError on inconsistent sizes or non-finite
  /// entries.
  void validate() const;

  bool operator==(const LinearHead &) const = default;
};

/// Gradient of a scalar loss with respect to one head's parameters.
struct HeadGradient {
  std::vector<double> weights;
  std::vector<double> bias;

  HeadGradient() = default;
  explicit HeadGradient(const LinearHead &shape)
      : weights(shape.weights.size(), 0.0), bias(shape.bias.size(), 0.0) {}

  HeadGradient &operator+=(const HeadGradient &other);
  HeadGradient &operator*=(double s);
};

/// Seeded Gaussian weights (stddev 0.01), zero bias.
LinearHead init_head(std::size_t n_out, std::size_t d, std::uint64_t seed, double stddev = 0.01);

std::vector<double> forward(const LinearHead &head, std::span<const double> x);

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> z);

/// Element-wise logistic, evaluated without overflow for large |z|.
std::vector<double> sigmoid(std::span<const double> z);
double sigmoid(double z);

/// -sum target_i log(max(p_i, floor)). `target` must be a distribution.
double ce_loss(std::span<const double> probs, std::span<const double> target);

/// Multi-label binary cross-entropy. `target` entries must be 0 or 1.
double bce_loss(std::span<const double> probs, std::span<const double> target);

/// Gradients of ce_loss(softmax(W x + b), target).
HeadGradient grad_softmax_ce(const LinearHead &head, std::span<const double> x,
                             std::span<const double> target);

/// Gradients of bce_loss(sigmoid(W x + b), target).
HeadGradient grad_sigmoid_bce(const LinearHead &head, std::span<const double> x,
                              std::span<const double> target);

/// Adds `scale * outer(dz, x)` to `grad.weights` and `scale * dz` to
/// `grad.bias`.
void accumulate_outer(HeadGradient &grad, std::span<const double> dz, std::span<const double> x,
                      double scale = 1.0);

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Step counts at which the learning rate is multiplied by `decay`.
  std::vector<long> milestones;
  double decay = 0.1;

  void validate() const;
};

/// Momentum SGD state for one head.
struct OptimState {
  SgdConfig config;
  std::vector<double> velocity_w;
  std::vector<double> velocity_b;
  long steps = 0;

  OptimState() = default;
  OptimState(SgdConfig cfg, const LinearHead &shape);

  /// Learning rate in effect for the next step.
  double current_lr() const;
};

/// v <- mu v - lr (g + wd theta); theta <- theta + v. Throws DivergenceError
/// on a non-finite gradient, leaving head and state untouched.
void sgd_step(OptimState &state, LinearHead &head, const HeadGradient &grad);

void to_json(nlohmann::json &j, const LinearHead &head);
void from_json(const nlohmann::json &j, LinearHead &head);

} // namespace scm
