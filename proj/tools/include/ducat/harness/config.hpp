#pragma once

/// @file config.hpp
/// Flat `key = value` run configuration.
///
/// One key per line, `#` starts a comment. Unknown keys and duplicate keys
/// are rejected. Every key can be overridden from the environment: the
/// variable name is `DUCAT_` followed by the key upper-cased with `.`
/// replaced by `_`, e.g. `DUCAT_TRAIN_EPOCHS=5` or `DUCAT_EVAL_0_STEPS=20`.
/// Real numbers accept a fraction form, so `attack.epsilon = 8/255` works.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ducat/dataset.hpp"
#include "ducat/error.hpp"
#include "ducat/trainer.hpp"

namespace ducat::harness {

/// Bad configuration or command line; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Returns the value of an environment variable, if set.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

EnvLookup process_env();
EnvLookup no_env();

struct DataConfig {
  std::string kind = "gaussians";  // gaussians | rings | csv
  std::optional<std::uint64_t> seed;
  GaussianSpec gaussians;
  /// Shares per_class, noise and rescale with `gaussians`.
  RingSpec rings{{1.0, 2.0}, 250, 0.05, true};
  std::size_t test_per_class = 100;
  std::filesystem::path train_csv;
  std::filesystem::path test_csv;
};

struct RunConfig {
  std::string run_id = "run";
  std::filesystem::path out = "runs/run";
  std::uint64_t seed = 0;
  DataConfig data;
  /// train.seed mirrors `seed`.
  TrainConfig train;
  /// When set, training resumes from this checkpoint at train.resume_epoch.
  std::filesystem::path init_checkpoint;
  /// Budget sweeps use step = ε × ratio.
  double budget_step_ratio = 0.25;

  std::uint64_t data_seed() const { return data.seed.value_or(seed); }
  void set_seed(std::uint64_t s);

  /// Resolved form: every key with its effective value, parseable by
  /// parse_config.
  std::string serialize() const;
};

struct KeyDoc {
  std::string key;
  std::string doc;
};

/// All accepted keys. `eval.N.<field>` stands for the indexed eval keys.
std::vector<KeyDoc> documented_keys();

/// Name of the environment variable overriding `key`.
std::string env_name(std::string_view key);

RunConfig parse_config(std::string_view text, const std::string& origin = "<config>",
                       const EnvLookup& env = no_env());
RunConfig load_config(const std::filesystem::path& path, const EnvLookup& env = no_env());
/// Defaults plus environment overrides only.
RunConfig default_config(const EnvLookup& env = no_env());

/// Parses a real number, accepting `a/b`.
std::optional<double> parse_number(std::string_view s);
/// Comma-separated list of parse_number values.
std::vector<double> parse_number_list(std::string_view s, const std::string& what);

struct DataSplits {
  Dataset train;
  Dataset test;
};

/// Generates (or loads) the configured datasets with the given data seed.
DataSplits make_datasets(const DataConfig& data, std::uint64_t seed);

}  // namespace ducat::harness
