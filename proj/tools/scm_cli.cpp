// Command-line front end: gen-data, train-base, mine, finetune, eval, ablate.

#include "scm/dataset.hpp"
#include "scm/error.hpp"
#include "scm/harness.hpp"
#include "scm/miner.hpp"
#include "scm/model.hpp"
#include "scm/numfmt.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace {

struct Paths {
  fs::path out = ".";
  fs::path data;

  fs::path data_dir() const { return data.empty() ? out : data; }
};

void add_common(CLI::App *sub, Paths &paths) {
  sub->set_config("--config", "", "Flat key = value file; flags override it");
  sub->add_option("--out", paths.out, "Output directory")->capture_default_str();
  sub->add_option("--data", paths.data, "Dataset directory or manifest (default: --out)");
}

void add_train(CLI::App *sub, scm::TrainConfig &cfg) {
  sub->add_option("--iters", cfg.iterations, "SGD iterations")->capture_default_str();
  sub->add_option("--seed", cfg.seed, "Seed")->capture_default_str();
  sub->add_option("--lr", cfg.sgd.learning_rate, "Initial learning rate")->capture_default_str();
  sub->add_option("--batch", cfg.batch_size, "Mini-batch size")->capture_default_str();
  sub->add_option("--momentum", cfg.sgd.momentum)->capture_default_str();
  sub->add_option("--weight-decay", cfg.sgd.weight_decay)->capture_default_str();
}

void add_model(CLI::App *sub, scm::ModelOptions &opt, std::string &variant, bool &refine,
               double &lr_weight, CLI::Option *&refine_opt, CLI::Option *&lr_weight_opt) {
  sub->add_option("--variant", variant, "hss, sss or sms")
      ->check(CLI::IsMember({"hss", "sss", "sms"}, CLI::ignore_case))
      ->capture_default_str();
  sub->add_option("--alpha", opt.alpha, "Superclass loss weight")->capture_default_str();
  sub->add_option("--beta", opt.beta, "Fine-grained loss weight")->capture_default_str();
  lr_weight_opt = sub->add_option("--lr-weight", lr_weight, "Refined loss weight (default: beta)");
  refine_opt = sub->add_flag("--refine,!--no-refine", refine,
                             "Label refinement (default: on for sms only)");
  sub->add_flag("--replace-hard", opt.refine_replaces_hard,
                "Refined loss replaces the hard fine-grained loss");
  sub->add_flag("--normalize-fusion", opt.normalize_fusion, "Renormalize fused scores");
}

scm::ModelOptions resolve_model(scm::ModelOptions opt, const std::string &variant, bool refine,
                                double lr_weight, const CLI::Option *refine_opt,
                                const CLI::Option *lr_weight_opt) {
  opt.variant = scm::parse_variant(variant);
  if (refine_opt->count() > 0)
    opt.refine = refine;
  if (lr_weight_opt->count() > 0)
    opt.lr_weight = lr_weight;
  return opt;
}

void write_json(const nlohmann::json &j, const fs::path &file) {
  std::ofstream out(file, std::ios::binary);
  if (!out)
    throw scm::IoError("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Superclass hierarchy mining and hierarchical few-shot fine-tuning"};
  app.require_subcommand(1);

  const scm::RunConfig reference = scm::reference_benchmark();

  // gen-data
  Paths gen_paths;
  scm::SyntheticSpec spec = *reference.synthetic;
  auto *gen = app.add_subcommand("gen-data", "Generate a synthetic base/novel feature dataset");
  add_common(gen, gen_paths);
  gen->add_option("--seed", spec.seed)->capture_default_str();
  gen->add_option("--shots", spec.k_shot, "K shots per class in the fine-tuning split")
      ->capture_default_str();
  gen->add_option("--n-base", spec.n_base)->capture_default_str();
  gen->add_option("--n-novel", spec.n_novel)->capture_default_str();
  gen->add_option("--dim", spec.d)->capture_default_str();
  gen->add_option("--samples-per-base", spec.samples_per_base_class)->capture_default_str();
  gen->add_option("--test-per-class", spec.test_per_class)->capture_default_str();
  gen->add_option("--base-test-per-class", spec.base_test_per_class,
                  "Test instances per base class (0: same as --test-per-class)")
      ->capture_default_str();
  gen->add_option("--relatedness", spec.relatedness_degree, "Base centers mixed per novel center")
      ->capture_default_str();
  gen->add_option("--noise", spec.cluster_noise, "Instance noise stddev")->capture_default_str();
  gen->add_option("--center-noise", spec.center_noise, "Novel center offset stddev")
      ->capture_default_str();

  // train-base
  Paths base_paths;
  scm::TrainConfig base_cfg = reference.base_train;
  auto *base = app.add_subcommand("train-base", "Train the base classifier on base classes");
  add_common(base, base_paths);
  add_train(base, base_cfg);

  // mine
  Paths mine_paths;
  fs::path base_head_file;
  std::size_t gamma = 15;
  auto *mine = app.add_subcommand("mine", "Mine the superclass hierarchy from novel shots");
  add_common(mine, mine_paths);
  mine->add_option("--base-head", base_head_file, "Base head JSON (default: OUT/base_head.json)");
  mine->add_option("--gamma", gamma, "Base anchors per novel class")->capture_default_str();

  // finetune
  Paths ft_paths;
  fs::path hierarchy_file;
  scm::TrainConfig ft_cfg = reference.finetune_train;
  scm::ModelOptions ft_model = reference.model;
  std::string ft_variant = "sms";
  bool ft_refine = true;
  double ft_lr_weight = 30.0;
  CLI::Option *ft_refine_opt = nullptr, *ft_lrw_opt = nullptr;
  auto *ft = app.add_subcommand("finetune", "Fine-tune superclass and fine-grained heads");
  add_common(ft, ft_paths);
  ft->add_option("--hierarchy", hierarchy_file, "Hierarchy JSON (default: OUT/hierarchy.json)");
  ft->add_option("--epsilon", ft_model.epsilon, "Label refinement smoothing")->capture_default_str();
  add_model(ft, ft_model, ft_variant, ft_refine, ft_lr_weight, ft_refine_opt, ft_lrw_opt);
  add_train(ft, ft_cfg);

  // eval
  Paths eval_paths;
  fs::path model_file;
  auto *ev = app.add_subcommand("eval", "Evaluate a fine-tuned model on the test split");
  add_common(ev, eval_paths);
  ev->add_option("--model", model_file, "Model JSON (default: OUT/model.json)");

  // ablate
  Paths ab_paths;
  scm::AblationSpec ab_spec;
  std::vector<std::string> ab_variants{"hss", "sss", "sms"};
  bool ab_refine = false, ab_refine_both = false;
  scm::RunConfig ab_run = reference;
  auto *ab = app.add_subcommand("ablate", "Sweep variants, gamma, epsilon, shots and seeds");
  ab->set_config("--config", "", "Flat key = value file; flags override it");
  ab->add_option("--out", ab_paths.out, "Output directory")->capture_default_str();
  ab->add_option("--data", ab_paths.data, "Saved dataset (default: reference synthetic benchmark)");
  ab->add_option("--variant", ab_variants, "Variants to sweep")
      ->check(CLI::IsMember({"hss", "sss", "sms"}, CLI::ignore_case));
  ab->add_option("--gamma", ab_spec.gammas, "Gamma values (sms only)");
  ab->add_option("--epsilon", ab_spec.epsilons, "Epsilon values (refined cells only)");
  ab->add_option("--seed", ab_spec.seeds, "Seeds");
  ab->add_option("--shots", ab_spec.shots, "K values");
  auto *ab_refine_opt = ab->add_flag("--refine,!--no-refine", ab_refine,
                                     "Refinement on/off for every cell (default: sms only)");
  ab->add_flag("--refine-both", ab_refine_both, "Run every variant with and without refinement")
      ->excludes(ab_refine_opt);
  ab->add_option("--alpha", ab_run.model.alpha)->capture_default_str();
  ab->add_option("--beta", ab_run.model.beta)->capture_default_str();
  ab->add_option("--iters", ab_run.finetune_train.iterations, "Fine-tuning iterations")
      ->capture_default_str();
  ab->add_option("--lr", ab_run.finetune_train.sgd.learning_rate, "Fine-tuning learning rate")
      ->capture_default_str();
  ab->add_option("--base-iters", ab_run.base_train.iterations)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      scm::save_features(scm::generate_synthetic(spec), gen_paths.out);
      std::cout << "wrote " << (gen_paths.out / "dataset.json").string() << '\n';
    } else if (base->parsed()) {
      const auto data = scm::load_features(base_paths.data_dir());
      base_cfg.sgd.milestones = scm::base_train_defaults(base_cfg.iterations).sgd.milestones;
      const auto head = scm::train_base(data, base_cfg);
      fs::create_directories(base_paths.out);
      write_json(head, base_paths.out / "base_head.json");
      std::cout << "wrote " << (base_paths.out / "base_head.json").string() << '\n';
    } else if (mine->parsed()) {
      const auto data = scm::load_features(mine_paths.data_dir());
      if (base_head_file.empty())
        base_head_file = mine_paths.out / "base_head.json";
      std::ifstream in(base_head_file);
      if (!in)
        throw scm::IoError("cannot open " + base_head_file.string());
      const auto head = nlohmann::json::parse(in).get<scm::LinearHead>();
      const auto hierarchy = scm::build_hierarchy(head, data, gamma);
      fs::create_directories(mine_paths.out);
      scm::save_hierarchy(hierarchy, mine_paths.out / "hierarchy.json");
      std::cout << "wrote " << (mine_paths.out / "hierarchy.json").string() << '\n';
    } else if (ft->parsed()) {
      const auto data = scm::load_features(ft_paths.data_dir());
      if (hierarchy_file.empty())
        hierarchy_file = ft_paths.out / "hierarchy.json";
      const auto hierarchy = scm::load_hierarchy(hierarchy_file);
      const auto options =
          resolve_model(ft_model, ft_variant, ft_refine, ft_lr_weight, ft_refine_opt, ft_lrw_opt);
      auto model = scm::make_model(hierarchy, data.d, options, ft_cfg.seed);
      const auto trace = scm::finetune(model, data.finetune_set, ft_cfg);
      fs::create_directories(ft_paths.out);
      scm::save_model(model, ft_paths.out / "model.json");
      std::ofstream loss(ft_paths.out / "finetune_loss.csv", std::ios::binary);
      loss << "iteration,loss\n";
      for (std::size_t i = 0; i < trace.loss_trace.size(); ++i)
        loss << i << ',' << scm::format_double(trace.loss_trace[i]) << '\n';
      std::cout << "wrote " << (ft_paths.out / "model.json").string() << '\n';
    } else if (ev->parsed()) {
      const auto data = scm::load_features(eval_paths.data_dir());
      if (model_file.empty())
        model_file = eval_paths.out / "model.json";
      const auto model = scm::load_model(model_file);
      const auto metrics = scm::evaluate(model, data.test_set);
      fs::create_directories(eval_paths.out);
      scm::save_metrics(metrics, eval_paths.out / "metrics.json");
      std::cout << "overall " << metrics.overall_accuracy << " base " << metrics.base_accuracy
                << " novel " << metrics.novel_accuracy << '\n';
    } else if (ab->parsed()) {
      ab_spec.variants.clear();
      for (const auto &v : ab_variants)
        ab_spec.variants.push_back(scm::parse_variant(v));
      if (ab_refine_both)
        ab_spec.refine = scm::RefineMode::Both;
      else if (ab_refine_opt->count() > 0)
        ab_spec.refine = ab_refine ? scm::RefineMode::On : scm::RefineMode::Off;
      if (!ab_paths.data.empty()) {
        ab_run.synthetic.reset();
        ab_run.data_path = ab_paths.data;
      }
      ab_run.base_train.sgd.milestones =
          scm::base_train_defaults(ab_run.base_train.iterations).sgd.milestones;
      ab_run.out_dir = ab_paths.out;
      const auto results = scm::run_ablation(ab_spec, ab_run);
      std::cout << scm::format_csv(results.rows);
      for (const auto &f : results.failures)
        std::cerr << "failed: " << f.cell.label() << " gamma=" << f.cell.gamma
                  << " seed=" << f.cell.seed << ": " << f.error << '\n';
      return results.failures.empty() ? 0 : 2;
    }
  } catch (const scm::Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
