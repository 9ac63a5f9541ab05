#pragma once

#include "scm/dataset.hpp"
#include "scm/heads.hpp"
#include "scm/miner.hpp"
#include "scm/refinement.hpp"
#include "scm/training.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scm {

/// Hard single / soft single / soft multiple superclass.
enum class Variant { HSS, SSS, SMS };

std::string to_string(Variant v);
Variant parse_variant(std::string_view text);

/// Construction-time knobs for a SuperclassModel. Unset optionals take the
/// variant-dependent defaults: lr_weight = beta, refinement on for SMS only.
struct ModelOptions {
  Variant variant = Variant::SMS;
  double alpha = 100.0;
  double beta = 30.0;
  std::optional<double> lr_weight;
  std::optional<bool> refine;
  double epsilon = 0.5;
  /// Drop the hard fine-grained term when refinement is on.
  bool refine_replaces_hard = false;
  /// Renormalize fused scores to sum to one. Off by default.
  bool normalize_fusion = false;
};

/// Superclass head S plus one fine-grained head per superclass with at least
/// two members. Singleton superclasses have no head (`g_heads[i]` empty).
struct SuperclassModel {
  Hierarchy hierarchy;
  Variant variant = Variant::SMS;
  double alpha = 100.0;
  double beta = 30.0;
  double lr_weight = 30.0;
  std::optional<RefinementConfig> refinement;
  bool refine_replaces_hard = false;
  bool normalize_fusion = false;
  LinearHead s_head;
  std::vector<std::optional<LinearHead>> g_heads;

  std::size_t d() const { return s_head.d; }
  std::size_t num_classes() const { return hierarchy.num_classes(); }

  void validate() const;
  bool operator==(const SuperclassModel &) const = default;
};

SuperclassModel make_model(const Hierarchy &hierarchy, std::size_t d, const ModelOptions &options,
                           std::uint64_t seed);

/// Gradient with respect to every trainable head; `g[i]` is empty for
/// singleton superclasses.
struct ModelGradient {
  HeadGradient s;
  std::vector<std::optional<HeadGradient>> g;
};

/// Superclass loss for an explicit label: sigmoid-BCE against a multi-hot
/// vector for SMS, softmax-CE against a one-hot vector for HSS/SSS.
double superclass_loss(const SuperclassModel &model, std::span<const double> x,
                       std::span<const double> s);
double superclass_loss(const SuperclassModel &model, std::span<const double> x, ClassId c);

/// Sum of hard softmax-CE terms over the superclasses holding `c`.
double finegrained_loss(const SuperclassModel &model, std::span<const double> x, ClassId c);

/// Sum of refined soft-target CE terms over the superclasses holding `c`.
double refinement_loss(const SuperclassModel &model, std::span<const double> x, ClassId c);

double instance_loss(const SuperclassModel &model, std::span<const double> x, ClassId c);

/// Mean instance loss over the batch.
double total_loss(const SuperclassModel &model, std::span<const LabeledInstance> batch);

struct LossAndGradient {
  double loss = 0.0;
  ModelGradient grad;
};

LossAndGradient total_loss_and_gradient(const SuperclassModel &model,
                                        std::span<const LabeledInstance> batch);

struct FinetuneResult {
  std::vector<double> loss_trace;
};

/// Mini-batch SGD on total_loss. Features are fixed; only S and G heads move.
FinetuneResult finetune(SuperclassModel &model, std::span<const LabeledInstance> train,
                        const TrainConfig &config);

std::vector<double> superclass_probabilities(const SuperclassModel &model,
                                             std::span<const double> x);

/// Fused per-class scores: p_c = sum_i Q_ic * s_i.
std::vector<double> fuse(const SuperclassModel &model, std::span<const double> x);

/// argmax of the fused scores, ties to the smaller class id.
ClassId predict(const SuperclassModel &model, std::span<const double> x);

namespace serial {
std::vector<ClassId> predict_all(const SuperclassModel &model,
                                 std::span<const LabeledInstance> rows);
}
namespace omp {
std::vector<ClassId> predict_all(const SuperclassModel &model,
                                 std::span<const LabeledInstance> rows);
}

void to_json(nlohmann::json &j, const SuperclassModel &model);
void from_json(const nlohmann::json &j, SuperclassModel &model);

void save_model(const SuperclassModel &model, const std::filesystem::path &file);
SuperclassModel load_model(const std::filesystem::path &file);

} // namespace scm
