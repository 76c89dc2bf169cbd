#pragma once

/// @file commands.hpp
/// Subcommands of the `ducat` tool. Each writes its tables into an output
/// directory and returns an exit code: 0 success, 1 runtime failure,
/// 2 usage or configuration error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ducat/evalkit.hpp"
#include "ducat/harness/config.hpp"
#include "ducat/harness/records.hpp"

namespace ducat::harness {

struct TrainSummary {
  int best_epoch = -1;
  EvalReport report;
};

/// Trains per `config` into `dir`: config.resolved, metrics.log, best.ckpt,
/// final.ckpt, eval.csv and samples.csv.
TrainSummary train_run(const RunConfig& config, const std::filesystem::path& dir,
                       std::ostream* progress = nullptr);

/// Adversaries used for evaluation: the eval.N specs, or the training
/// adversary when none are configured.
std::vector<AttackSpec> eval_specs(const RunConfig& config);

Table eval_table(const std::string& model, const EvalReport& report);
Table samples_table(const EvalReport& report);

/// Budget-sweep rows for one model: ε = 0 uses the identity adversary;
/// otherwise the training adversary with step = ε × budget.step_ratio.
Table budget_table(const RunConfig& config, const std::vector<std::pair<std::string, MlpModel>>& models,
                   const Dataset& data, const std::vector<double>& epsilons);

/// Entry point used by main(): full argument vector without argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env());

}  // namespace ducat::harness
