#include "scm/model.hpp"

#include "scm/error.hpp"
#include "scm/kernels.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace scm {

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

bool is_one_hot(std::span<const double> s) {
  std::size_t ones = 0;
  for (double v : s) {
    if (v == 1.0)
      ++ones;
    else if (v != 0.0)
      return false;
  }
  return ones == 1;
}

bool single_superclass(Variant v) { return v == Variant::HSS || v == Variant::SSS; }

bool hard_term_active(const SuperclassModel &m) {
  return !(m.refinement && m.refine_replaces_hard);
}

} // namespace

std::string to_string(Variant v) {
  switch (v) {
  case Variant::HSS:
    return "hss";
  case Variant::SSS:
    return "sss";
  case Variant::SMS:
    return "sms";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "hss")
    return Variant::HSS;
  if (lower == "sss")
    return Variant::SSS;
  if (lower == "sms")
    return Variant::SMS;
  throw ConfigError("variant: unknown value '" + std::string(text) + "'");
}

void SuperclassModel::validate() const {
  const std::size_t n_s = hierarchy.num_superclasses();
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(lr_weight >= 0.0) || !std::isfinite(alpha) ||
      !std::isfinite(beta) || !std::isfinite(lr_weight))
    throw ConfigError("alpha/beta/lr_weight: must be finite and non-negative");
  if (single_superclass(variant) && hierarchy.gamma() != 1)
    throw ConfigError("gamma: " + to_string(variant) + " requires gamma = 1, hierarchy has " +
                      std::to_string(hierarchy.gamma()));
  if (refinement)
    refinement->validate();
  s_head.validate();
  if (s_head.n_out != n_s)
    throw ShapeError("superclass head has " + std::to_string(s_head.n_out) + " outputs, expected " +
                     std::to_string(n_s));
  if (g_heads.size() != n_s)
    throw ShapeError("expected one fine-grained slot per superclass");
  for (std::size_t i = 0; i < n_s; ++i) {
    const std::size_t members = hierarchy.superclass(i).size();
    if (members < 2) {
      if (g_heads[i])
        throw ShapeError("singleton superclass " + std::to_string(i) + " must not have a head");
      continue;
    }
    if (!g_heads[i])
      throw ShapeError("superclass " + std::to_string(i) + " is missing its fine-grained head");
    g_heads[i]->validate();
    if (g_heads[i]->n_out != members || g_heads[i]->d != s_head.d)
      throw ShapeError("fine-grained head " + std::to_string(i) + " has shape " +
                       std::to_string(g_heads[i]->n_out) + "x" + std::to_string(g_heads[i]->d));
  }
}

SuperclassModel make_model(const Hierarchy &hierarchy, std::size_t d, const ModelOptions &options,
                           std::uint64_t seed) {
  SuperclassModel m;
  m.hierarchy = hierarchy;
  m.variant = options.variant;
  m.alpha = options.alpha;
  m.beta = options.beta;
  m.lr_weight = options.lr_weight.value_or(options.beta);
  if (options.refine.value_or(options.variant == Variant::SMS))
    m.refinement = RefinementConfig{options.epsilon};
  m.refine_replaces_hard = options.refine_replaces_hard;
  m.normalize_fusion = options.normalize_fusion;
  const std::size_t n_s = hierarchy.num_superclasses();
  m.s_head = init_head(n_s, d, seed);
  m.g_heads.resize(n_s);
  for (std::size_t i = 0; i < n_s; ++i)
    if (hierarchy.superclass(i).size() >= 2)
      m.g_heads[i] = init_head(hierarchy.superclass(i).size(), d, seed + 1 + i);
  m.validate();
  return m;
}

double superclass_loss(const SuperclassModel &model, std::span<const double> x,
                       std::span<const double> s) {
  const auto z = forward(model.s_head, x);
  if (s.size() != z.size())
    throw ShapeError("superclass label has " + std::to_string(s.size()) + " entries, expected " +
                     std::to_string(z.size()));
  if (model.variant == Variant::SMS)
    return bce_loss(sigmoid(z), s);
  if (!is_one_hot(s))
    throw ContractError(to_string(model.variant) + " superclass label must be one-hot");
  return ce_loss(softmax(z), s);
}

double superclass_loss(const SuperclassModel &model, std::span<const double> x, ClassId c) {
  return superclass_loss(model, x, encode_superclass_label(model.hierarchy, c));
}

double finegrained_loss(const SuperclassModel &model, std::span<const double> x, ClassId c) {
  double loss = 0.0;
  for (const auto &m : model.hierarchy.memberships(c)) {
    const auto &head = model.g_heads[m.superclass];
    if (!head)
      continue;
    const auto probs = softmax(forward(*head, x));
    loss -= std::log(std::max(probs[m.position], kProbFloor));
  }
  return loss;
}

double refinement_loss(const SuperclassModel &model, std::span<const double> x, ClassId c) {
  const double eps = model.refinement ? model.refinement->epsilon : 0.0;
  double loss = 0.0;
  for (const auto &m : model.hierarchy.memberships(c)) {
    const auto &head = model.g_heads[m.superclass];
    if (!head)
      continue;
    loss += refined_ce_loss(softmax(forward(*head, x)),
                            refined_target(m.position, head->n_out, eps));
  }
  return loss;
}

double instance_loss(const SuperclassModel &model, std::span<const double> x, ClassId c) {
  double loss = model.alpha * superclass_loss(model, x, c);
  if (hard_term_active(model))
    loss += model.beta * finegrained_loss(model, x, c);
  if (model.refinement)
    loss += model.lr_weight * refinement_loss(model, x, c);
  return loss;
}

double total_loss(const SuperclassModel &model, std::span<const LabeledInstance> batch) {
  if (batch.empty())
    throw ContractError("total_loss: empty batch");
  double sum = 0.0;
  for (const auto &row : batch)
    sum += instance_loss(model, row.features, row.class_id);
  return sum / static_cast<double>(batch.size());
}

LossAndGradient total_loss_and_gradient(const SuperclassModel &model,
                                        std::span<const LabeledInstance> batch) {
  if (batch.empty())
    throw ContractError("total_loss: empty batch");
  const std::size_t n_s = model.hierarchy.num_superclasses();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool hard = hard_term_active(model);
  const double eps = model.refinement ? model.refinement->epsilon : 0.0;

  LossAndGradient out;
  out.grad.s = HeadGradient(model.s_head);
  out.grad.g.resize(n_s);
  for (std::size_t i = 0; i < n_s; ++i)
    if (model.g_heads[i])
      out.grad.g[i] = HeadGradient(*model.g_heads[i]);

  // Superclass head: one batched pass.
  const auto block = kernels::pack(batch, model.d());
  std::vector<double> logits(batch.size() * n_s);
  kernels::batch_logits(model.s_head, block, logits);
  std::vector<double> dz(logits.size());
  double loss = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const std::span<const double> z(logits.data() + n * n_s, n_s);
    const auto s = encode_superclass_label(model.hierarchy, batch[n].class_id);
    const auto p = model.variant == Variant::SMS ? sigmoid(z) : softmax(z);
    loss += model.alpha *
            (model.variant == Variant::SMS ? bce_loss(p, s) : ce_loss(p, s));
    for (std::size_t i = 0; i < n_s; ++i)
      dz[n * n_s + i] = model.alpha * (p[i] - s[i]);
  }
  kernels::accumulate_gradient(dz, block, out.grad.s, inv_b);

  // Fine-grained heads: only the superclasses holding each instance's class.
  for (const auto &row : batch) {
    for (const auto &m : model.hierarchy.memberships(row.class_id)) {
      const auto &head = model.g_heads[m.superclass];
      if (!head)
        continue;
      const auto q = softmax(forward(*head, row.features));
      std::vector<double> gz(q.size(), 0.0);
      if (hard) {
        loss -= model.beta * std::log(std::max(q[m.position], kProbFloor));
        for (std::size_t j = 0; j < q.size(); ++j)
          gz[j] += model.beta * (q[j] - (j == m.position ? 1.0 : 0.0));
      }
      if (model.refinement) {
        const auto t = refined_target(m.position, q.size(), eps);
        loss += model.lr_weight * ce_loss(q, t);
        for (std::size_t j = 0; j < q.size(); ++j)
          gz[j] += model.lr_weight * (q[j] - t[j]);
      }
      accumulate_outer(*out.grad.g[m.superclass], gz, row.features, inv_b);
    }
  }
  out.loss = loss * inv_b;
  return out;
}

FinetuneResult finetune(SuperclassModel &model, std::span<const LabeledInstance> train,
                        const TrainConfig &config) {
  config.validate();
  model.validate();
  FinetuneResult result;
  if (config.iterations == 0)
    return result;
  if (train.empty())
    throw ContractError("finetune: empty training set");

  const std::size_t n_s = model.hierarchy.num_superclasses();
  OptimState s_state(config.sgd, model.s_head);
  std::vector<std::optional<OptimState>> g_states(n_s);
  for (std::size_t i = 0; i < n_s; ++i)
    if (model.g_heads[i])
      g_states[i].emplace(config.sgd, *model.g_heads[i]);

  BatchSampler sampler(train.size(), config.batch_size, config.seed);
  std::vector<LabeledInstance> batch;
  result.loss_trace.reserve(static_cast<std::size_t>(config.iterations));
  for (long it = 0; it < config.iterations; ++it) {
    batch.clear();
    for (std::size_t idx : sampler.next())
      batch.push_back(train[idx]);
    auto lg = total_loss_and_gradient(model, batch);
    if (!std::isfinite(lg.loss))
      throw DivergenceError("non-finite fine-tuning loss", it);
    result.loss_trace.push_back(lg.loss);
    try {
      sgd_step(s_state, model.s_head, lg.grad.s);
      for (std::size_t i = 0; i < n_s; ++i)
        if (model.g_heads[i])
          sgd_step(*g_states[i], *model.g_heads[i], *lg.grad.g[i]);
    } catch (const DivergenceError &e) {
      throw DivergenceError(e.what(), it);
    }
  }
  return result;
}

std::vector<double> superclass_probabilities(const SuperclassModel &model,
                                             std::span<const double> x) {
  const auto z = forward(model.s_head, x);
  if (model.variant == Variant::HSS) {
    std::vector<double> s(z.size(), 0.0);
    s[argmax(z)] = 1.0;
    return s;
  }
  return sigmoid(z);
}

std::vector<double> fuse(const SuperclassModel &model, std::span<const double> x) {
  const auto s = superclass_probabilities(model, x);
  std::vector<double> p(model.num_classes(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto &sc = model.hierarchy.superclass(i);
    const auto &head = model.g_heads[i];
    if (!head) {
      p[static_cast<std::size_t>(sc.anchor)] += s[i];
      continue;
    }
    if (s[i] == 0.0)
      continue;
    const auto q = softmax(forward(*head, x));
    for (std::size_t j = 0; j < sc.members.size(); ++j)
      p[static_cast<std::size_t>(sc.members[j])] += q[j] * s[i];
  }
  if (model.normalize_fusion) {
    double total = 0.0;
    for (double v : p)
      total += v;
    if (total > 0.0)
      for (double &v : p)
        v /= total;
  }
  return p;
}

ClassId predict(const SuperclassModel &model, std::span<const double> x) {
  return static_cast<ClassId>(argmax(fuse(model, x)));
}

namespace serial {
std::vector<ClassId> predict_all(const SuperclassModel &model,
                                 std::span<const LabeledInstance> rows) {
  std::vector<ClassId> out(rows.size());
  for (std::size_t n = 0; n < rows.size(); ++n)
    out[n] = predict(model, rows[n].features);
  return out;
}
} // namespace serial

namespace omp {
std::vector<ClassId> predict_all(const SuperclassModel &model,
                                 std::span<const LabeledInstance> rows) {
  std::vector<ClassId> out(rows.size());
  const auto count = static_cast<long>(rows.size());
#pragma omp parallel for schedule(static)
  for (long n = 0; n < count; ++n)
    out[static_cast<std::size_t>(n)] = predict(model, rows[static_cast<std::size_t>(n)].features);
  return out;
}
} // namespace omp

void to_json(nlohmann::json &j, const SuperclassModel &model) {
  auto g = nlohmann::json::array();
  for (std::size_t i = 0; i < model.g_heads.size(); ++i)
    if (model.g_heads[i])
      g.push_back({{"superclass", i}, {"head", *model.g_heads[i]}});
  j = nlohmann::json{{"hierarchy", model.hierarchy},
                     {"variant", to_string(model.variant)},
                     {"alpha", model.alpha},
                     {"beta", model.beta},
                     {"lr_weight", model.lr_weight},
                     {"refine", model.refinement.has_value()},
                     {"epsilon", model.refinement ? model.refinement->epsilon : 0.0},
                     {"refine_replaces_hard", model.refine_replaces_hard},
                     {"normalize_fusion", model.normalize_fusion},
                     {"s_head", model.s_head},
                     {"g_heads", g}};
}

void from_json(const nlohmann::json &j, SuperclassModel &model) {
  SuperclassModel m;
  m.hierarchy = j.at("hierarchy").get<Hierarchy>();
  m.variant = parse_variant(j.at("variant").get<std::string>());
  m.alpha = j.at("alpha").get<double>();
  m.beta = j.at("beta").get<double>();
  m.lr_weight = j.at("lr_weight").get<double>();
  if (j.value("refine", false))
    m.refinement = RefinementConfig{j.at("epsilon").get<double>()};
  m.refine_replaces_hard = j.value("refine_replaces_hard", false);
  m.normalize_fusion = j.value("normalize_fusion", false);
  m.s_head = j.at("s_head").get<LinearHead>();
  m.g_heads.resize(m.hierarchy.num_superclasses());
  for (const auto &entry : j.at("g_heads")) {
    const auto i = entry.at("superclass").get<std::size_t>();
    if (i >= m.g_heads.size())
      throw ShapeError("fine-grained head for unknown superclass " + std::to_string(i));
    m.g_heads[i] = entry.at("head").get<LinearHead>();
  }
  m.validate();
  model = std::move(m);
}

void save_model(const SuperclassModel &model, const std::filesystem::path &file) {
  std::ofstream out(file, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + file.string());
  out << nlohmann::json(model).dump(2) << '\n';
}

SuperclassModel load_model(const std::filesystem::path &file) {
  std::ifstream in(file);
  if (!in)
    throw IoError("cannot open " + file.string());
  try {
    return nlohmann::json::parse(in).get<SuperclassModel>();
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(file.string() + ": " + e.what(), 0);
  }
}

} // namespace scm
