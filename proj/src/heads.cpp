#include "scm/heads.hpp"

#include "scm/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace scm {

namespace {

constexpr double kDistributionTol = 1e-9;

void require_same_size(std::size_t a, std::size_t b, const char *what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": size " + std::to_string(a) + " vs " +
                     std::to_string(b));
}

void check_distribution(std::span<const double> target) {
  double sum = 0.0;
  for (double t : target) {
    if (!(t >= 0.0) || !std::isfinite(t))
      throw ContractError("ce target has a negative or non-finite entry");
    sum += t;
  }
  if (std::abs(sum - 1.0) > kDistributionTol)
    throw ContractError("ce target sums to " + std::to_string(sum) + ", expected 1");
}

} // namespace

void LinearHead::validate() const {
  if (weights.size() != n_out * d)
    throw ShapeError("head weights hold " + std::to_string(weights.size()) + " values, expected " +
                     std::to_string(n_out) + "x" + std::to_string(d));
  if (bias.size() != n_out)
    throw ShapeError("head bias holds " + std::to_string(bias.size()) + " values, expected " +
                     std::to_string(n_out));
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights.begin(), weights.end(), finite) ||
      !std::all_of(bias.begin(), bias.end(), finite))
    throw ContractError("head has non-finite parameters");
}

HeadGradient &HeadGradient::operator+=(const HeadGradient &other) {
  require_same_size(weights.size(), other.weights.size(), "gradient weights");
  require_same_size(bias.size(), other.bias.size(), "gradient bias");
  for (std::size_t i = 0; i < weights.size(); ++i)
    weights[i] += other.weights[i];
  for (std::size_t i = 0; i < bias.size(); ++i)
    bias[i] += other.bias[i];
  return *this;
}

HeadGradient &HeadGradient::operator*=(double s) {
  for (double &v : weights)
    v *= s;
  for (double &v : bias)
    v *= s;
  return *this;
}

LinearHead init_head(std::size_t n_out, std::size_t d, std::uint64_t seed, double stddev) {
  LinearHead head(n_out, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double &v : head.weights)
    v = dist(rng);
  return head;
}

std::vector<double> forward(const LinearHead &head, std::span<const double> x) {
  require_same_size(x.size(), head.d, "forward input");
  std::vector<double> z(head.bias);
  for (std::size_t j = 0; j < head.n_out; ++j) {
    const auto row = head.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < head.d; ++k)
      acc += row[k] * x[k];
    z[j] += acc;
  }
  return z;
}

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.begin(), z.end());
  if (p.empty())
    return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double &v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double &v : p)
    v /= sum;
  return p;
}

double sigmoid(double z) {
  // exp of a non-positive argument never overflows.
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

std::vector<double> sigmoid(std::span<const double> z) {
  std::vector<double> p(z.size());
  std::transform(z.begin(), z.end(), p.begin(), [](double v) { return sigmoid(v); });
  return p;
}

double ce_loss(std::span<const double> probs, std::span<const double> target) {
  require_same_size(probs.size(), target.size(), "ce_loss");
  check_distribution(target);
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (target[i] != 0.0)
      loss -= target[i] * std::log(std::max(probs[i], kProbFloor));
  return loss;
}

double bce_loss(std::span<const double> probs, std::span<const double> target) {
  require_same_size(probs.size(), target.size(), "bce_loss");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (target[i] == 1.0)
      loss -= std::log(std::max(probs[i], kProbFloor));
    else if (target[i] == 0.0)
      loss -= std::log(std::max(1.0 - probs[i], kProbFloor));
    else
      throw ContractError("bce target entry " + std::to_string(i) + " is not 0 or 1");
  }
  return loss;
}

void accumulate_outer(HeadGradient &grad, std::span<const double> dz, std::span<const double> x,
                      double scale) {
  const std::size_t n_out = dz.size();
  const std::size_t d = x.size();
  require_same_size(grad.weights.size(), n_out * d, "gradient accumulation");
  for (std::size_t j = 0; j < n_out; ++j) {
    const double s = scale * dz[j];
    double *row = grad.weights.data() + j * d;
    for (std::size_t k = 0; k < d; ++k)
      row[k] += s * x[k];
    grad.bias[j] += s;
  }
}

HeadGradient grad_softmax_ce(const LinearHead &head, std::span<const double> x,
                             std::span<const double> target) {
  require_same_size(target.size(), head.n_out, "softmax-ce target");
  check_distribution(target);
  auto dz = softmax(forward(head, x));
  for (std::size_t j = 0; j < dz.size(); ++j)
    dz[j] -= target[j];
  HeadGradient g(head);
  accumulate_outer(g, dz, x);
  return g;
}

HeadGradient grad_sigmoid_bce(const LinearHead &head, std::span<const double> x,
                              std::span<const double> target) {
  require_same_size(target.size(), head.n_out, "sigmoid-bce target");
  auto dz = sigmoid(forward(head, x));
  for (std::size_t j = 0; j < dz.size(); ++j) {
    if (target[j] != 0.0 && target[j] != 1.0)
      throw ContractError("bce target entry " + std::to_string(j) + " is not 0 or 1");
    dz[j] -= target[j];
  }
  HeadGradient g(head);
  accumulate_outer(g, dz, x);
  return g;
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate: must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ConfigError("momentum: must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw ConfigError("weight_decay: must be non-negative");
  if (!(decay > 0.0 && decay <= 1.0))
    throw ConfigError("decay: must lie in (0, 1]");
  if (!std::is_sorted(milestones.begin(), milestones.end()))
    throw ConfigError("milestones: must be ascending");
}

OptimState::OptimState(SgdConfig cfg, const LinearHead &shape)
    : config(std::move(cfg)), velocity_w(shape.weights.size(), 0.0),
      velocity_b(shape.bias.size(), 0.0) {
  config.validate();
}

double OptimState::current_lr() const {
  const auto passed = std::upper_bound(config.milestones.begin(), config.milestones.end(), steps) -
                      config.milestones.begin();
  return config.learning_rate * std::pow(config.decay, static_cast<double>(passed));
}

void sgd_step(OptimState &state, LinearHead &head, const HeadGradient &grad) {
  require_same_size(grad.weights.size(), head.weights.size(), "sgd weights");
  require_same_size(grad.bias.size(), head.bias.size(), "sgd bias");
  require_same_size(state.velocity_w.size(), head.weights.size(), "sgd velocity");
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(grad.weights.begin(), grad.weights.end(), finite) ||
      !std::all_of(grad.bias.begin(), grad.bias.end(), finite))
    throw DivergenceError("non-finite gradient", state.steps);

  const double lr = state.current_lr();
  const double mu = state.config.momentum;
  const double wd = state.config.weight_decay;
  auto update = [&](std::vector<double> &theta, std::vector<double> &vel,
                    const std::vector<double> &g) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      vel[i] = mu * vel[i] - lr * (g[i] + wd * theta[i]);
      theta[i] += vel[i];
    }
  };
  update(head.weights, state.velocity_w, grad.weights);
  update(head.bias, state.velocity_b, grad.bias);
  ++state.steps;
}

void to_json(nlohmann::json &j, const LinearHead &head) {
  j = nlohmann::json{{"n_out", head.n_out}, {"d", head.d}, {"weights", head.weights},
                     {"bias", head.bias}};
}

void from_json(const nlohmann::json &j, LinearHead &head) {
  head.n_out = j.at("n_out").get<std::size_t>();
  head.d = j.at("d").get<std::size_t>();
  head.weights = j.at("weights").get<std::vector<double>>();
  head.bias = j.at("bias").get<std::vector<double>>();
  head.validate();
}

} // namespace scm
