#include "ducat/harness/commands.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>

#include "CLI11.hpp"
#include "ducat/error.hpp"

namespace ducat::harness {

namespace fs = std::filesystem;

namespace {

std::string num(double v) { return format_double(v); }

std::string head_name(HeadMode m) { return m == HeadMode::standard ? "standard" : "ducat"; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

void log_epoch(MetricsLog& log, const std::string& id, const EpochMetrics& m) {
  log.append(id, m.epoch, "lr", m.lr);
  log.append(id, m.epoch, "loss", m.loss);
  log.append(id, m.epoch, "ducat_phase", m.ducat_phase ? 1.0 : 0.0);
  log.append(id, m.epoch, "clean", m.clean_accuracy);
  log.append(id, m.epoch, "robust", m.robust_accuracy);
  log.append(id, m.epoch, "benign_dummy_rate", m.benign_dummy_rate);
  log.append(id, m.epoch, "adversarial_dummy_rate", m.adversarial_dummy_rate);
  for (const auto& [name, acc] : m.eval_robust) log.append(id, m.epoch, "eval." + name, acc);
}

struct NamedModel {
  std::string name;
  MlpModel model;
  std::uint64_t data_seed;
};

std::vector<NamedModel> load_models(const std::vector<std::string>& paths, const std::vector<double>& seeds,
                                    const RunConfig& config) {
  if (paths.empty()) throw UsageError("at least one --checkpoint is required");
  if (!seeds.empty() && seeds.size() != paths.size()) {
    throw UsageError("--seeds must list one seed per --checkpoint");
  }
  for (const auto& p : paths) {
    if (!fs::is_regular_file(p)) throw UsageError("checkpoint not found: " + p);
  }
  std::vector<NamedModel> out;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto seed = seeds.empty() ? config.data_seed() : static_cast<std::uint64_t>(seeds[i]);
    out.push_back({paths[i], load_checkpoint(paths[i]), seed});
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : parse_number_list(text, "--seeds")) {
    if (v < 0.0 || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
      throw UsageError("--seeds: seeds are non-negative integers");
    }
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

/// Models analysed together must share one test set.
Dataset shared_test_set(const RunConfig& config) {
  return make_datasets(config.data, config.data_seed()).test;
}

std::vector<MlpModel> bare(const std::vector<NamedModel>& models) {
  std::vector<MlpModel> out;
  for (const auto& m : models) out.push_back(m.model);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_eval(const RunConfig& config, const std::vector<std::string>& checkpoints,
             const std::string& seeds_text, std::ostream& out) {
  std::vector<double> seeds;
  for (auto s : parse_seed_list(seeds_text)) seeds.push_back(static_cast<double>(s));
  const auto models = load_models(checkpoints, seeds, config);
  const auto specs = eval_specs(config);
  fs::create_directories(config.out);

  Table table = eval_table("", EvalReport{});
  std::vector<double> clean_sum(specs.size(), 0.0), robust_sum(specs.size(), 0.0), hit_sum(specs.size(), 0.0);
  for (const auto& m : models) {
    const Dataset test = make_datasets(config.data, m.data_seed).test;
    const auto report = evaluate(m.model, test, specs);
    for (auto& row : eval_table(m.name, report).rows) table.add_row(std::move(row));
    for (std::size_t k = 0; k < specs.size(); ++k) {
      clean_sum[k] += report.clean_accuracy;
      robust_sum[k] += report.robust[k].accuracy;
      hit_sum[k] += report.robust[k].dummy_hit_rate;
    }
  }
  if (models.size() > 1) {
    const double n = static_cast<double>(models.size());
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const double c = clean_sum[k] / n, r = robust_sum[k] / n;
      table.add_row({"mean", "-", specs[k].name, num(c), num(r), num(mean_score(c, r)), num(nrr(c, r)),
                     num(hit_sum[k] / n)});
    }
  }
  table.write(config.out / "eval.csv");
  out << "wrote " << (config.out / "eval.csv").string() << '\n';
  return 0;
}

int cmd_overlap(const RunConfig& config, const std::vector<NamedModel>& models, std::ostream& out) {
  const Dataset test = shared_test_set(config);
  const auto h = overlap_histogram(bare(models), test, eval_specs(config).front());
  Table buckets{{"defended_by", "count"}, {}};
  for (std::size_t k = 0; k < h.buckets.size(); ++k) buckets.add_row({std::to_string(k), std::to_string(h.buckets[k])});
  Table samples{{"sample", "label", "defended_by"}, {}};
  for (std::size_t i = 0; i < h.defended_by.size(); ++i) {
    samples.add_row({std::to_string(i), std::to_string(test.labels[i]), std::to_string(h.defended_by[i])});
  }
  buckets.write(config.out / "overlap.csv");
  samples.write(config.out / "overlap_samples.csv");
  out << "wrote " << (config.out / "overlap.csv").string() << '\n';
  return 0;
}

int cmd_transfer(const RunConfig& config, const std::vector<NamedModel>& models, std::ostream& out) {
  if (models.size() < 2) throw UsageError("transfer needs at least two --checkpoint models");
  const Dataset test = shared_test_set(config);
  const auto tm = transfer_matrix(bare(models), test, eval_specs(config).front());
  Table t{{"surrogate", "target", "success_subset", "success_subset_rate", "fail_subset", "fail_subset_rate"}, {}};
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  for (std::size_t s = 0; s < tm.num_models; ++s) {
    for (std::size_t g = 0; g < tm.num_models; ++g) {
      const auto& c = tm.at(s, g);
      t.add_row({std::to_string(s), std::to_string(g), std::to_string(c.success_subset), opt(c.success_subset_rate),
                 std::to_string(c.fail_subset), opt(c.fail_subset_rate)});
    }
  }
  t.write(config.out / "transfer.csv");
  out << "wrote " << (config.out / "transfer.csv").string() << '\n';
  return 0;
}

Table confusion_table(const std::vector<std::vector<std::size_t>>& counts) {
  Table t;
  t.header.push_back("true");
  for (std::size_t k = 0; k < counts.size(); ++k) t.header.push_back("pred_" + std::to_string(k));
  for (std::size_t y = 0; y < counts.size(); ++y) {
    std::vector<std::string> row{std::to_string(y)};
    for (auto c : counts[y]) row.push_back(std::to_string(c));
    t.add_row(std::move(row));
  }
  return t;
}

int cmd_confusion(const RunConfig& config, const std::vector<NamedModel>& models, std::ostream& out) {
  const Dataset test = shared_test_set(config);
  const AttackSpec spec = eval_specs(config).front();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string stem = "confusion_" + std::to_string(i);
    confusion_table(confusion_matrix(models[i].model, test)).write(config.out / (stem + "_clean.csv"));
    confusion_table(confusion_matrix(models[i].model, test, &spec)).write(config.out / (stem + "_attacked.csv"));
  }
  out << "wrote " << models.size() << " confusion matrix pairs to " << config.out.string() << '\n';
  return 0;
}

int cmd_toycase(const RunConfig& config, const std::vector<NamedModel>& models, std::ostream& out) {
  if (models.size() != 2) throw UsageError("toycase takes exactly two --checkpoint models: hard-label, then two-hot");
  if (config.train.eval_attacks.empty()) throw UsageError("toycase needs eval.0 as the held-out adversary");
  const Dataset test = shared_test_set(config);
  ToyCaseReport r;
  try {
    r = toy_case_gap(models[0].model, models[1].model, test, config.train.train_attack,
                     config.train.eval_attacks.front());
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  Table t{{"model", "adversary", "value"}, {}};
  t.add_row({"hard", "train", num(r.hard_train)});
  t.add_row({"hard", "strong", num(r.hard_strong)});
  t.add_row({"twohot", "train", num(r.twohot_train)});
  t.add_row({"twohot", "strong", num(r.twohot_strong)});
  t.add_row({"hard", "gap", num(r.hard_gap())});
  t.add_row({"twohot", "gap", num(r.twohot_gap())});
  t.write(config.out / "toycase.csv");
  out << "hard gap " << num(r.hard_gap()) << ", two-hot gap " << num(r.twohot_gap()) << '\n';
  return 0;
}

int cmd_ablate(const RunConfig& base, const std::string& dimension, const std::string& grid_text,
               const std::string& seeds_text, std::ostream& out) {
  if (dimension != "t" && dimension != "alpha" && dimension != "beta1" && dimension != "beta2") {
    throw UsageError("--dimension must be one of t, alpha, beta1, beta2");
  }
  const auto grid = parse_number_list(grid_text, "--grid");
  if (grid.empty()) throw UsageError("--grid is empty");
  const auto seeds = parse_seed_list(seeds_text);
  if (seeds.empty()) throw UsageError("--seeds is empty");

  std::vector<RunConfig> runs;
  std::vector<std::string> labels;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double v = grid[g];
    for (auto seed : seeds) {
      RunConfig c = base;
      c.set_seed(seed);
      std::string label = num(v);
      if (dimension == "t") {
        if (v != static_cast<double>(static_cast<int>(v))) throw UsageError("--grid values for t are integers");
        c.train.hyper.start_epoch = static_cast<int>(v);
        label = std::to_string(static_cast<int>(v));
      } else if (dimension == "alpha") {
        c.train.hyper.alpha = v;
      } else if (dimension == "beta1") {
        c.train.hyper.beta1 = v;
      } else {
        c.train.hyper.beta2 = v;
      }
      try {
        c.train.validate();
      } catch (const Error& e) {
        throw UsageError("grid value " + label + ": " + e.what());
      }
      c.out = base.out / (dimension + "_" + std::to_string(g)) / ("seed_" + std::to_string(seed));
      runs.push_back(std::move(c));
      labels.push_back(label);
    }
  }

  Table t{{"dimension", "value", "seed", "best_epoch", "adversary", "clean", "robust", "mean", "nrr"}, {}};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out << "ablate " << dimension << "=" << labels[i] << " seed " << runs[i].seed << '\n';
    const auto s = train_run(runs[i], runs[i].out);
    const auto& r = s.report.robust.front();
    t.add_row({dimension, labels[i], std::to_string(runs[i].seed), std::to_string(s.best_epoch), r.name,
               num(s.report.clean_accuracy), num(r.accuracy), num(r.mean), num(r.nrr)});
  }
  fs::create_directories(base.out);
  t.write(base.out / "ablate.csv");
  out << "wrote " << (base.out / "ablate.csv").string() << '\n';
  return 0;
}

int cmd_budget(const RunConfig& config, const std::vector<std::string>& checkpoints, const std::string& eps_text,
               const std::string& seeds_text, std::ostream& out) {
  std::vector<double> seeds;
  for (auto s : parse_seed_list(seeds_text)) seeds.push_back(static_cast<double>(s));
  const auto models = load_models(checkpoints, seeds, config);
  auto eps = parse_number_list(eps_text, "--epsilons");
  if (eps.empty()) throw UsageError("--epsilons is empty");
  for (double e : eps) {
    if (e < 0.0) throw UsageError("--epsilons must be non-negative");
  }
  std::sort(eps.begin(), eps.end());
  Table t = budget_table(config, {}, Dataset{}, {});
  for (const auto& m : models) {
    const Dataset test = make_datasets(config.data, m.data_seed).test;
    for (auto& row : budget_table(config, {{m.name, m.model}}, test, eps).rows) t.add_row(std::move(row));
  }
  fs::create_directories(config.out);
  t.write(config.out / "budget.csv");
  out << "wrote " << (config.out / "budget.csv").string() << '\n';
  return 0;
}

int cmd_gen_data(const RunConfig& config, std::ostream& out) {
  const auto d = make_datasets(config.data, config.data_seed());
  fs::create_directories(config.out);
  save_csv(d.train, config.out / "train.csv");
  save_csv(d.test, config.out / "test.csv");
  out << "wrote " << d.train.size() << " training and " << d.test.size() << " test rows to "
      << config.out.string() << '\n';
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<AttackSpec> eval_specs(const RunConfig& config) {
  if (!config.train.eval_attacks.empty()) return config.train.eval_attacks;
  AttackSpec s = config.train.train_attack;
  s.name = "train_adversary";
  return {s};
}

Table eval_table(const std::string& model, const EvalReport& report) {
  Table t{{"model", "head_mode", "adversary", "clean", "robust", "mean", "nrr", "dummy_hit_rate"}, {}};
  for (const auto& r : report.robust) {
    t.add_row({model, head_name(report.head_mode), r.name, num(report.clean_accuracy), num(r.accuracy), num(r.mean),
               num(r.nrr), num(r.dummy_hit_rate)});
  }
  return t;
}

Table samples_table(const EvalReport& report) {
  Table t{{"sample", "label", "clean_prediction"}, {}};
  for (const auto& r : report.robust) {
    t.header.push_back(r.name + ".prediction");
    t.header.push_back(r.name + ".defended");
  }
  for (std::size_t i = 0; i < report.samples.size(); ++i) {
    const auto& s = report.samples[i];
    std::vector<std::string> row{std::to_string(i), std::to_string(s.label), std::to_string(s.clean_prediction)};
    for (std::size_t k = 0; k < s.defended.size(); ++k) {
      row.push_back(std::to_string(s.adversarial_prediction[k]));
      row.push_back(s.defended[k] ? "1" : "0");
    }
    t.add_row(std::move(row));
  }
  return t;
}

Table budget_table(const RunConfig& config, const std::vector<std::pair<std::string, MlpModel>>& models,
                   const Dataset& data, const std::vector<double>& epsilons) {
  Table t{{"model", "epsilon", "clean", "robust", "mean", "nrr", "dummy_hit_rate"}, {}};
  for (const auto& [name, model] : models) {
    std::vector<AttackSpec> specs;
    for (double e : epsilons) {
      AttackSpec s = identity_attack();
      if (e > 0.0) {
        s = config.train.train_attack;
        s.epsilon = e;
        s.step_size = e * config.budget_step_ratio;
      }
      s.name = "eps_" + num(e);
      specs.push_back(s);
    }
    const auto report = evaluate(model, data, specs);
    for (std::size_t k = 0; k < epsilons.size(); ++k) {
      const auto& r = report.robust[k];
      t.add_row({name, num(epsilons[k]), num(report.clean_accuracy), num(r.accuracy), num(r.mean), num(r.nrr),
                 num(r.dummy_hit_rate)});
    }
  }
  return t;
}

TrainSummary train_run(const RunConfig& config, const fs::path& dir, std::ostream* progress) {
  fs::create_directories(dir);
  write_text(dir / "config.resolved", config.serialize());
  const auto data = make_datasets(config.data, config.data_seed());

  MetricsLog log(dir / "metrics.log");
  const auto on_epoch = [&](const EpochMetrics& m) {
    log_epoch(log, config.run_id, m);
    if (progress) {
      *progress << "epoch " << m.epoch << " loss " << num(m.loss) << " clean " << num(m.clean_accuracy)
                << " robust " << num(m.robust_accuracy) << '\n';
    }
  };
  TrainResult result =
      config.init_checkpoint.empty()
          ? train(config.train, data.train, &data.test, on_epoch)
          : resume(load_checkpoint(config.init_checkpoint), config.train, data.train, &data.test, on_epoch);
  save_checkpoint(result.best, dir / "best.ckpt");
  save_checkpoint(result.final_model, dir / "final.ckpt");

  TrainSummary summary;
  summary.best_epoch = result.record.best_epoch;
  summary.report = evaluate(result.best, data.test, eval_specs(config));
  eval_table("best", summary.report).write(dir / "eval.csv");
  samples_table(summary.report).write(dir / "samples.csv");

  const std::string eval_id = config.run_id + "/eval";
  const int at = std::max(summary.best_epoch, 0);
  log.append(eval_id, at, "clean", summary.report.clean_accuracy);
  for (const auto& r : summary.report.robust) {
    log.append(eval_id, at, r.name + ".robust", r.accuracy);
    log.append(eval_id, at, r.name + ".mean", r.mean);
    log.append(eval_id, at, r.name + ".nrr", r.nrr);
  }
  return summary;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"DUCAT adversarial-training lab", "ducat"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::vector<std::string> checkpoints;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--seed", seed, "master seed, overrides `seed`");
  app.add_option("--out", out_dir, "output directory, overrides run.out");
  app.add_option("--checkpoint", checkpoints, "model checkpoint (repeatable)");

  auto* train_cmd = app.add_subcommand("train", "train one model");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints on the configured test set");
  std::string seeds_text;
  eval_cmd->add_option("--seeds", seeds_text, "data seed per checkpoint, comma-separated");

  auto* analyze_cmd = app.add_subcommand("analyze", "failure analyses over checkpoints");
  analyze_cmd->require_subcommand(1);
  auto* overlap_cmd = analyze_cmd->add_subcommand("overlap", "defended-by histogram");
  auto* transfer_cmd = analyze_cmd->add_subcommand("transfer", "split transfer matrix");
  auto* confusion_cmd = analyze_cmd->add_subcommand("confusion", "clean and attacked confusion matrices");
  auto* toy_cmd = analyze_cmd->add_subcommand("toycase", "training vs held-out adversary gap");

  auto* ablate_cmd = app.add_subcommand("ablate", "sweep one DUCAT hyper-parameter");
  std::string dimension, grid_text, ablate_seeds = "0,1,2";
  ablate_cmd->add_option("--dimension", dimension, "t | alpha | beta1 | beta2")->required();
  ablate_cmd->add_option("--grid", grid_text, "comma-separated values, run in order")->required();
  ablate_cmd->add_option("--seeds", ablate_seeds, "comma-separated seeds")->capture_default_str();

  auto* budget_cmd = app.add_subcommand("budget-sweep", "robust accuracy across perturbation budgets");
  std::string eps_text = "0,2/255,4/255,8/255,16/255,32/255";
  std::string budget_seeds;
  budget_cmd->add_option("--epsilons", eps_text, "comma-separated budgets, fractions allowed")->capture_default_str();
  budget_cmd->add_option("--seeds", budget_seeds, "data seed per checkpoint, comma-separated");

  auto* gen_cmd = app.add_subcommand("gen-data", "write the configured datasets as CSV");

  auto* config_cmd = app.add_subcommand("config", "print the resolved configuration");
  bool list_keys = false;
  config_cmd->add_flag("--keys", list_keys, "list every accepted key instead");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ducat: " << e.what() << '\n';
    return 2;
  }

  try {
    RunConfig config = config_path.empty() ? default_config(env) : load_config(config_path, env);
    if (seed) config.set_seed(*seed);
    if (!out_dir.empty()) config.out = out_dir;

    if (*train_cmd) {
      const auto s = train_run(config, config.out, &out);
      out << "best epoch " << s.best_epoch << ", outputs in " << config.out.string() << '\n';
      return 0;
    }
    if (*eval_cmd) return cmd_eval(config, checkpoints, seeds_text, out);
    if (*analyze_cmd) {
      const auto models = load_models(checkpoints, {}, config);
      fs::create_directories(config.out);
      if (*overlap_cmd) return cmd_overlap(config, models, out);
      if (*transfer_cmd) return cmd_transfer(config, models, out);
      if (*confusion_cmd) return cmd_confusion(config, models, out);
      if (*toy_cmd) return cmd_toycase(config, models, out);
    }
    if (*ablate_cmd) return cmd_ablate(config, dimension, grid_text, ablate_seeds, out);
    if (*budget_cmd) return cmd_budget(config, checkpoints, eps_text, budget_seeds, out);
    if (*gen_cmd) return cmd_gen_data(config, out);
    if (*config_cmd) {
      if (!list_keys) {
        out << config.serialize();
        return 0;
      }
      for (const auto& k : documented_keys()) out << k.key << "  " << k.doc << '\n';
      return 0;
    }
  } catch (const UsageError& e) {
    err << "ducat: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "ducat: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace ducat::harness
