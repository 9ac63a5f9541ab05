#pragma once

#include "scm/dataset.hpp"
#include "scm/heads.hpp"
#include "scm/miner.hpp"
#include "scm/model.hpp"
#include "scm/training.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace scm {

struct Metrics {
  double overall_accuracy = 0.0;
  /// 0 when the test set has no instances of that kind.
  double base_accuracy = 0.0;
  double novel_accuracy = 0.0;
  std::size_t n_test = 0;
  std::size_t n_base_test = 0;
  std::size_t n_novel_test = 0;
  /// Only classes present in the test set.
  std::map<ClassId, double> per_class_accuracy;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;

  bool operator==(const Metrics &) const = default;
};

/// Base-classifier training defaults: momentum SGD with the learning rate
/// divided by 10 at 8/11 and 10/11 of the run.
TrainConfig base_train_defaults(long iterations = 2000, std::uint64_t seed = 0);

/// Fine-tuning defaults: lr 0.01, batch 16, no decay.
TrainConfig finetune_defaults(long iterations = 4000, std::uint64_t seed = 0);

/// |C_b|-way softmax classifier trained on `data.train_base`.
LinearHead train_base(const FewShotDataset &data, const TrainConfig &config);

Metrics compute_metrics(std::span<const ClassId> predicted, std::span<const LabeledInstance> test,
                        std::size_t num_base, std::size_t num_classes);

Metrics evaluate(const SuperclassModel &model, std::span<const LabeledInstance> test);

void to_json(nlohmann::json &j, const Metrics &m);
void save_metrics(const Metrics &m, const std::filesystem::path &file);

enum class RefineMode {
  Default, ///< on for SMS, off for HSS/SSS
  On,
  Off,
  Both, ///< every variant with and without refinement
};

struct AblationSpec {
  std::vector<Variant> variants{Variant::HSS, Variant::SSS, Variant::SMS};
  std::vector<std::size_t> gammas{2};
  std::vector<double> epsilons{0.5};
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::size_t> shots{10};
  RefineMode refine = RefineMode::Default;

  void validate() const;
};

struct RunConfig {
  /// Synthetic source; when empty `data_path` names a saved dataset.
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path data_path;
  TrainConfig base_train = base_train_defaults();
  TrainConfig finetune_train = finetune_defaults();
  ModelOptions model;
  std::filesystem::path out_dir;
};

/// The benchmark the acceptance suite runs on. Changing it changes the
/// meaning of recorded results.
RunConfig reference_benchmark();

/// One point of the ablation grid.
struct AblationCell {
  Variant variant = Variant::SMS;
  bool refine = false;
  std::size_t gamma = 1;
  double epsilon = 0.0;
  std::size_t shots = 10;
  std::uint64_t seed = 0;

  /// "sms", "sms+lr", ...
  std::string label() const;
  bool operator==(const AblationCell &) const = default;
};

/// The deduplicated factorial grid. HSS/SSS collapse the gamma axis to 1 and
/// cells without refinement collapse the epsilon axis to 0.
std::vector<AblationCell> enumerate_cells(const AblationSpec &spec);

struct AblationRow {
  AblationCell cell;
  Metrics metrics;
  double final_loss = 0.0;
};

struct AblationFailure {
  AblationCell cell;
  std::string error;
};

struct AblationResults {
  std::vector<AblationRow> rows;
  std::vector<AblationFailure> failures;
};

/// Dataset for one (shots, seed) pair: regenerated for synthetic sources,
/// K-shot resampled from the saved fine-tuning pool otherwise.
FewShotDataset prepare_dataset(const RunConfig &run, std::size_t shots, std::uint64_t seed);

/// Fine-tunes and evaluates one cell from scratch.
AblationRow run_cell(const RunConfig &run, const AblationCell &cell);

/// Runs every cell of the grid. Cells sharing (shots, seed) share one dataset
/// and base head, and one mined hierarchy per gamma. When `run.out_dir` is
/// set, rows are appended to `ablation.csv` after each (shots, seed) group
/// and `ablation.json` is written at the end.
AblationResults run_ablation(const AblationSpec &spec, const RunConfig &run);

const std::vector<std::string> &ablation_columns();

std::string format_csv(std::span<const AblationRow> rows);
std::string format_csv_row(const AblationRow &row);
/// Inverse of format_csv for the key and metric columns; throws ParseError.
std::vector<AblationRow> parse_csv(const std::string &text);

void write_report(const AblationResults &results, const std::filesystem::path &dir);

} // namespace scm
