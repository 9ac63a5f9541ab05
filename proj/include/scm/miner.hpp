#pragma once

#include "scm/dataset.hpp"
#include "scm/heads.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <span>
#include <vector>

namespace scm {

/// Mean base-head logit vector over the shots of one novel class.
struct ClassRepresentative {
  ClassId class_id = 0;
  std::vector<double> u;
};

/// One base anchor plus the novel classes assigned to it. `members[0]` is
/// always the anchor.
struct Superclass {
  ClassId anchor = 0;
  std::vector<ClassId> members;

  std::size_t size() const { return members.size(); }
  bool operator==(const Superclass &) const = default;
};

struct Membership {
  std::size_t superclass = 0;
  std::size_t position = 0;
  bool operator==(const Membership &) const = default;
};

class Hierarchy {
public:
  Hierarchy() = default;

  /// Validates the structure and builds the membership map. Base ids are the
  /// anchors, which must be exactly 0..N_s-1 in some order; every other
  /// member is a novel class that must appear in exactly `gamma`
  /// superclasses. `num_classes` of 0 infers it from the largest id.
  Hierarchy(std::size_t gamma, std::vector<Superclass> superclasses, std::size_t num_classes = 0);

  std::size_t gamma() const { return gamma_; }
  std::size_t num_superclasses() const { return superclasses_.size(); }
  std::size_t num_base() const { return superclasses_.size(); }
  std::size_t num_classes() const { return membership_.size(); }
  const std::vector<Superclass> &superclasses() const { return superclasses_; }
  const Superclass &superclass(std::size_t i) const { return superclasses_.at(i); }

  /// Every (superclass, position) pair holding `c`. Throws ContractError for
  /// unknown classes.
  const std::vector<Membership> &memberships(ClassId c) const;
  bool contains(ClassId c) const {
    return c >= 0 && static_cast<std::size_t>(c) < membership_.size();
  }

  bool operator==(const Hierarchy &) const = default;

private:
  std::size_t gamma_ = 0;
  std::vector<Superclass> superclasses_;
  std::vector<std::vector<Membership>> membership_;
};

ClassRepresentative class_representative(const LinearHead &base_head,
                                         std::span<const LabeledInstance> shots);

/// The `gamma` largest components of `u`, descending; equal values are
/// ordered by smaller class id.
std::vector<ClassId> top_gamma(std::span<const double> u, std::size_t gamma);
inline std::vector<ClassId> top_gamma(const ClassRepresentative &rep, std::size_t gamma) {
  return top_gamma(rep.u, gamma);
}

/// `novel_shots[n]` holds the shots of one novel class. Novel classes are
/// assigned in the given order, which fixes member order within superclasses.
Hierarchy build_hierarchy(const LinearHead &base_head,
                          const std::vector<std::vector<LabeledInstance>> &novel_shots,
                          std::size_t gamma);

/// Mines from the novel shots of `data.finetune_set`.
Hierarchy build_hierarchy(const LinearHead &base_head, const FewShotDataset &data,
                          std::size_t gamma);

/// Multi-hot over superclasses: 1 where the class is a member.
std::vector<double> encode_superclass_label(const Hierarchy &h, ClassId c);

/// One-hot over the members of superclass `i`.
std::vector<double> encode_finegrained_label(const Hierarchy &h, std::size_t i, ClassId c);

void to_json(nlohmann::json &j, const Hierarchy &h);
void from_json(const nlohmann::json &j, Hierarchy &h);

void save_hierarchy(const Hierarchy &h, const std::filesystem::path &file);
Hierarchy load_hierarchy(const std::filesystem::path &file);

} // namespace scm
