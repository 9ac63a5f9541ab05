#pragma once
// Independent oracles shared by the unit tests and the acceptance binary.
// Nothing here calls into the library's math; it is all written as plain
// loops so it can check the library rather than echo it.

#include "scm/heads.hpp"
#include "scm/miner.hpp"
#include "scm/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace scm::testing {

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64 &rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto &x : v)
    x = g(rng);
  return v;
}

inline std::vector<double> random_distribution(std::size_t n, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> v(n);
  double sum = 0;
  for (auto &x : v)
    sum += x = u(rng);
  for (auto &x : v)
    x /= sum;
  return v;
}

inline LinearHead random_head(std::size_t n_out, std::size_t d, std::mt19937_64 &rng,
                              double scale = 1.0) {
  LinearHead h(n_out, d);
  h.weights = random_vector(n_out * d, rng, scale);
  h.bias = random_vector(n_out, rng, scale);
  return h;
}

inline std::vector<double> naive_logits(const LinearHead &h, std::span<const double> x) {
  std::vector<double> z(h.n_out);
  for (std::size_t j = 0; j < h.n_out; ++j) {
    long double acc = h.bias[j];
    for (std::size_t k = 0; k < h.d; ++k)
      acc += static_cast<long double>(h.weights[j * h.d + k]) * x[k];
    z[j] = static_cast<double>(acc);
  }
  return z;
}

inline std::vector<double> naive_softmax(std::span<const double> z) {
  std::vector<double> p(z.size());
  long double sum = 0;
  for (double v : z)
    sum += std::exp(static_cast<long double>(v));
  for (std::size_t i = 0; i < z.size(); ++i)
    p[i] = static_cast<double>(std::exp(static_cast<long double>(z[i])) / sum);
  return p;
}

inline double naive_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Central differences of `f` with respect to every entry of `params`.
inline std::vector<double> central_difference(const std::function<double()> &f,
                                              std::vector<double *> params, double h = 1e-6) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + h;
    const double up = f();
    *params[i] = saved - h;
    const double down = f();
    *params[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0 ? 0 : std::sqrt(diff) / denom;
}

inline std::vector<double *> parameters(LinearHead &h) {
  std::vector<double *> p;
  for (auto &w : h.weights)
    p.push_back(&w);
  for (auto &b : h.bias)
    p.push_back(&b);
  return p;
}

inline std::vector<double> flatten(const HeadGradient &g) {
  std::vector<double> v = g.weights;
  v.insert(v.end(), g.bias.begin(), g.bias.end());
  return v;
}

/// Random hierarchy: each novel class joins `gamma` distinct random anchors.
inline Hierarchy random_hierarchy(std::size_t n_base, std::size_t n_novel, std::size_t gamma,
                                  std::mt19937_64 &rng) {
  std::vector<Superclass> sc(n_base);
  for (std::size_t b = 0; b < n_base; ++b)
    sc[b] = {static_cast<ClassId>(b), {static_cast<ClassId>(b)}};
  std::vector<ClassId> bases(n_base);
  for (std::size_t b = 0; b < n_base; ++b)
    bases[b] = static_cast<ClassId>(b);
  for (std::size_t n = 0; n < n_novel; ++n) {
    std::vector<ClassId> pick;
    std::sample(bases.begin(), bases.end(), std::back_inserter(pick), gamma, rng);
    std::shuffle(pick.begin(), pick.end(), rng);
    for (ClassId b : pick)
      sc[b].members.push_back(static_cast<ClassId>(n_base + n));
  }
  return Hierarchy(gamma, std::move(sc), n_base + n_novel);
}

/// Model over a random hierarchy with unit-scale random weights.
inline SuperclassModel random_model(Variant variant, std::size_t n_base, std::size_t n_novel,
                                    std::size_t gamma, std::size_t d, std::mt19937_64 &rng,
                                    ModelOptions opts = {}) {
  opts.variant = variant;
  auto model = make_model(random_hierarchy(n_base, n_novel, gamma, rng), d, opts, rng());
  model.s_head = random_head(model.s_head.n_out, d, rng);
  for (auto &g : model.g_heads)
    if (g)
      *g = random_head(g->n_out, d, rng);
  return model;
}

/// p_c = sum_i Q_ic s_i by an explicit loop over every (superclass, class).
inline std::vector<double> fuse_oracle(const SuperclassModel &m, std::span<const double> x) {
  const auto z = naive_logits(m.s_head, x);
  const std::size_t ns = z.size();
  std::vector<double> s(ns);
  if (m.variant == Variant::HSS) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ns; ++i)
      if (z[i] > z[best])
        best = i;
    s[best] = 1.0;
  } else {
    for (std::size_t i = 0; i < ns; ++i)
      s[i] = naive_sigmoid(z[i]);
  }
  const std::size_t nc = m.num_classes();
  std::vector<double> p(nc, 0.0);
  for (std::size_t i = 0; i < ns; ++i) {
    const auto &members = m.hierarchy.superclass(i).members;
    std::vector<double> q(members.size(), 1.0);
    if (members.size() > 1)
      q = naive_softmax(naive_logits(*m.g_heads[i], x));
    for (std::size_t c = 0; c < nc; ++c) {
      double qic = 0;
      for (std::size_t j = 0; j < members.size(); ++j)
        if (members[j] == static_cast<ClassId>(c))
          qic = q[j];
      p[c] += qic * s[i];
    }
  }
  if (m.normalize_fusion) {
    double sum = 0;
    for (double v : p)
      sum += v;
    if (sum > 0)
      for (auto &v : p)
        v /= sum;
  }
  return p;
}

/// All trainable parameters of a model, S head first, then each G head.
inline std::vector<double *> parameters(SuperclassModel &m) {
  auto p = parameters(m.s_head);
  for (auto &g : m.g_heads)
    if (g) {
      auto q = parameters(*g);
      p.insert(p.end(), q.begin(), q.end());
    }
  return p;
}

inline std::vector<double> flatten(const ModelGradient &g) {
  auto v = flatten(g.s);
  for (const auto &gi : g.g)
    if (gi) {
      auto w = flatten(*gi);
      v.insert(v.end(), w.begin(), w.end());
    }
  return v;
}

} // namespace scm::testing
