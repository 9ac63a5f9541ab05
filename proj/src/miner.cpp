#include "scm/miner.hpp"

#include "scm/error.hpp"
#include "scm/kernels.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace scm {

Hierarchy::Hierarchy(std::size_t gamma, std::vector<Superclass> superclasses,
                     std::size_t num_classes)
    : gamma_(gamma), superclasses_(std::move(superclasses)) {
  const std::size_t n_s = superclasses_.size();
  if (gamma_ == 0)
    throw ConfigError("gamma: must be at least 1");
  if (n_s == 0)
    throw ContractError("hierarchy has no superclasses");
  if (gamma_ > n_s)
    throw ConfigError("gamma: exceeds number of superclasses");

  ClassId max_id = -1;
  for (const auto &sc : superclasses_)
    for (ClassId c : sc.members)
      max_id = std::max(max_id, c);
  if (num_classes == 0)
    num_classes = static_cast<std::size_t>(max_id + 1);
  if (num_classes < n_s || static_cast<std::size_t>(max_id + 1) > num_classes)
    throw ContractError("hierarchy member ids exceed num_classes");

  std::vector<bool> anchor_seen(n_s, false);
  membership_.assign(num_classes, {});
  for (std::size_t i = 0; i < n_s; ++i) {
    const auto &sc = superclasses_[i];
    if (sc.members.empty() || sc.members.front() != sc.anchor)
      throw ContractError("superclass " + std::to_string(i) + ": anchor must be the first member");
    if (sc.anchor < 0 || static_cast<std::size_t>(sc.anchor) >= n_s)
      throw ContractError("superclass " + std::to_string(i) + ": anchor " +
                          std::to_string(sc.anchor) + " is not a base class");
    if (anchor_seen[static_cast<std::size_t>(sc.anchor)])
      throw ContractError("base class " + std::to_string(sc.anchor) + " anchors two superclasses");
    anchor_seen[static_cast<std::size_t>(sc.anchor)] = true;
    for (std::size_t p = 0; p < sc.members.size(); ++p) {
      const ClassId c = sc.members[p];
      if (c < 0)
        throw ContractError("negative class id in superclass " + std::to_string(i));
      if (p > 0 && static_cast<std::size_t>(c) < n_s)
        throw ContractError("superclass " + std::to_string(i) + " holds a second base class " +
                            std::to_string(c));
      auto &entries = membership_[static_cast<std::size_t>(c)];
      if (!entries.empty() && entries.back().superclass == i)
        throw ContractError("class " + std::to_string(c) + " repeated in superclass " +
                            std::to_string(i));
      entries.push_back({i, p});
    }
  }
  for (std::size_t c = n_s; c < num_classes; ++c)
    if (membership_[c].size() != gamma_)
      throw ContractError("novel class " + std::to_string(c) + " belongs to " +
                          std::to_string(membership_[c].size()) + " superclasses, expected " +
                          std::to_string(gamma_));
}

const std::vector<Membership> &Hierarchy::memberships(ClassId c) const {
  if (!contains(c))
    throw ContractError("class " + std::to_string(c) + " is not in the hierarchy");
  return membership_[static_cast<std::size_t>(c)];
}

ClassRepresentative class_representative(const LinearHead &base_head,
                                         std::span<const LabeledInstance> shots) {
  if (shots.empty())
    throw ContractError("class_representative: no shots");
  const ClassId cls = shots.front().class_id;
  for (const auto &s : shots)
    if (s.class_id != cls)
      throw ContractError("class_representative: shots mix classes " + std::to_string(cls) +
                          " and " + std::to_string(s.class_id));

  const auto block = kernels::pack(shots, base_head.d);
  std::vector<double> logits(block.rows * base_head.n_out);
  kernels::batch_logits(base_head, block, logits);

  ClassRepresentative rep{cls, std::vector<double>(base_head.n_out, 0.0)};
  for (std::size_t n = 0; n < block.rows; ++n)
    for (std::size_t j = 0; j < base_head.n_out; ++j)
      rep.u[j] += logits[n * base_head.n_out + j];
  for (double &v : rep.u)
    v /= static_cast<double>(block.rows);
  return rep;
}

std::vector<ClassId> top_gamma(std::span<const double> u, std::size_t gamma) {
  if (gamma < 1 || gamma > u.size())
    throw ConfigError("gamma: " + std::to_string(gamma) + " outside [1, " +
                      std::to_string(u.size()) + "]");
  for (double v : u)
    if (!std::isfinite(v))
      throw ContractError("top_gamma: non-finite representative");
  std::vector<ClassId> ids(u.size());
  std::iota(ids.begin(), ids.end(), 0);
  auto before = [&](ClassId a, ClassId b) {
    const double ua = u[static_cast<std::size_t>(a)];
    const double ub = u[static_cast<std::size_t>(b)];
    return ua > ub || (ua == ub && a < b);
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(gamma), ids.end(),
                    before);
  ids.resize(gamma);
  return ids;
}

Hierarchy build_hierarchy(const LinearHead &base_head,
                          const std::vector<std::vector<LabeledInstance>> &novel_shots,
                          std::size_t gamma) {
  const std::size_t n_base = base_head.n_out;
  std::vector<Superclass> supers(n_base);
  for (std::size_t b = 0; b < n_base; ++b)
    supers[b] = {static_cast<ClassId>(b), {static_cast<ClassId>(b)}};

  std::size_t num_classes = n_base;
  for (const auto &shots : novel_shots) {
    const auto rep = class_representative(base_head, shots);
    if (static_cast<std::size_t>(rep.class_id) < n_base)
      throw ContractError("build_hierarchy: class " + std::to_string(rep.class_id) +
                          " is a base class");
    for (ClassId anchor : top_gamma(rep, gamma))
      supers[static_cast<std::size_t>(anchor)].members.push_back(rep.class_id);
    num_classes = std::max(num_classes, static_cast<std::size_t>(rep.class_id) + 1);
  }
  return Hierarchy(gamma, std::move(supers), num_classes);
}

Hierarchy build_hierarchy(const LinearHead &base_head, const FewShotDataset &data,
                          std::size_t gamma) {
  if (base_head.n_out != data.num_base())
    throw ShapeError("base head has " + std::to_string(base_head.n_out) + " outputs, dataset has " +
                     std::to_string(data.num_base()) + " base classes");
  std::vector<std::vector<LabeledInstance>> shots;
  for (ClassId c : data.novel_classes) {
    shots.push_back(instances_of(data.finetune_set, c));
    if (shots.back().empty())
      throw InsufficientDataError("novel class " + std::to_string(c) + " has no shots");
  }
  std::vector<Superclass> supers;
  if (shots.empty()) {
    for (std::size_t b = 0; b < data.num_base(); ++b)
      supers.push_back({static_cast<ClassId>(b), {static_cast<ClassId>(b)}});
    return Hierarchy(gamma, std::move(supers), data.num_classes());
  }
  return build_hierarchy(base_head, shots, gamma);
}

std::vector<double> encode_superclass_label(const Hierarchy &h, ClassId c) {
  std::vector<double> s(h.num_superclasses(), 0.0);
  for (const auto &m : h.memberships(c))
    s[m.superclass] = 1.0;
  return s;
}

std::vector<double> encode_finegrained_label(const Hierarchy &h, std::size_t i, ClassId c) {
  const auto &sc = h.superclass(i);
  for (const auto &m : h.memberships(c))
    if (m.superclass == i) {
      std::vector<double> g(sc.size(), 0.0);
      g[m.position] = 1.0;
      return g;
    }
  throw ContractError("class " + std::to_string(c) + " is not a member of superclass " +
                      std::to_string(i));
}

void to_json(nlohmann::json &j, const Hierarchy &h) {
  auto supers = nlohmann::json::array();
  for (const auto &sc : h.superclasses())
    supers.push_back({{"anchor", sc.anchor}, {"members", sc.members}});
  j = nlohmann::json{{"gamma", h.gamma()}, {"num_classes", h.num_classes()}, {"superclasses", supers}};
}

void from_json(const nlohmann::json &j, Hierarchy &h) {
  std::vector<Superclass> supers;
  for (const auto &entry : j.at("superclasses"))
    supers.push_back({entry.at("anchor").get<ClassId>(),
                      entry.at("members").get<std::vector<ClassId>>()});
  h = Hierarchy(j.at("gamma").get<std::size_t>(), std::move(supers),
                j.value("num_classes", std::size_t{0}));
}

void save_hierarchy(const Hierarchy &h, const std::filesystem::path &file) {
  std::ofstream out(file, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + file.string());
  out << nlohmann::json(h).dump(2) << '\n';
}

Hierarchy load_hierarchy(const std::filesystem::path &file) {
  std::ifstream in(file);
  if (!in)
    throw IoError("cannot open " + file.string());
  try {
    return nlohmann::json::parse(in).get<Hierarchy>();
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(file.string() + ": " + e.what(), 0);
  }
}

} // namespace scm
