#pragma once

/// @file evalkit.hpp
/// Accuracy/robustness reporting and the sample-level failure analyses:
/// cross-model overlap of defended samples, split transfer matrices,
/// confusion matrices and the training-vs-held-out adversary gap.
///
/// Every accuracy here judges the projected class, never a raw dummy index.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ducat/attack.hpp"
#include "ducat/dataset.hpp"
#include "ducat/mlp.hpp"

namespace ducat {

/// Arithmetic mean of clean and robust accuracy.
double mean_score(double clean, double robust);

/// Harmonic mean 2·c·r/(c + r); nrr(0, 0) = 0.
double nrr(double clean, double robust);

struct RobustResult {
  std::string name;
  double accuracy = 0.0;
  double mean = 0.0;
  double nrr = 0.0;
  double dummy_hit_rate = 0.0;
};

struct SampleOutcome {
  std::size_t label = 0;
  std::size_t clean_prediction = 0;
  /// One entry per adversary, in report order.
  std::vector<std::size_t> adversarial_prediction;
  std::vector<bool> defended;
};

struct EvalReport {
  HeadMode head_mode = HeadMode::standard;
  std::size_t num_samples = 0;
  double clean_accuracy = 0.0;
  double clean_dummy_hit_rate = 0.0;
  std::vector<RobustResult> robust;
  std::vector<SampleOutcome> samples;

  const RobustResult* find(const std::string& name) const;
};

EvalReport evaluate(const MlpModel& model, const Dataset& data, std::span<const AttackSpec> specs);

struct OverlapHistogram {
  std::size_t num_models = 0;
  /// Per sample: how many models defended it.
  std::vector<std::size_t> defended_by;
  /// buckets[k] = samples defended by exactly k models, k = 0..M.
  std::vector<std::size_t> buckets;
};

OverlapHistogram overlap_histogram(std::span<const MlpModel> models, const Dataset& data,
                                   const AttackSpec& spec);

struct TransferCell {
  std::size_t success_subset = 0;  // samples that beat the surrogate
  std::size_t fail_subset = 0;
  /// Attack success rate on the target within each subset (percent);
  /// empty when the subset is empty.
  std::optional<double> success_subset_rate;
  std::optional<double> fail_subset_rate;
};

struct TransferMatrix {
  std::size_t num_models = 0;
  std::vector<TransferCell> cells;  // row-major [surrogate][target]

  const TransferCell& at(std::size_t surrogate, std::size_t target) const {
    return cells[surrogate * num_models + target];
  }
};

TransferMatrix transfer_matrix(std::span<const MlpModel> models, const Dataset& data,
                               const AttackSpec& spec);

/// counts[true][predicted], C×C, projected predictions. With a spec the
/// predictions are taken on that adversary's outputs.
std::vector<std::vector<std::size_t>> confusion_matrix(const MlpModel& model, const Dataset& data,
                                                       const AttackSpec* spec = nullptr);

struct ToyCaseReport {
  double hard_train = 0.0;
  double hard_strong = 0.0;
  double twohot_train = 0.0;
  double twohot_strong = 0.0;
  double hard_gap() const { return hard_train - hard_strong; }
  double twohot_gap() const { return twohot_train - twohot_strong; }
};

/// Robust accuracy of both models under the training adversary and a
/// stronger held-out one. The strong spec needs strictly more steps and at
/// least 10 restarts (and no fewer than the training spec). Identical step
/// and restart counts are accepted and give a zero-gap baseline.
ToyCaseReport toy_case_gap(const MlpModel& model_hard, const MlpModel& model_twohot,
                           const Dataset& data, const AttackSpec& train_spec,
                           const AttackSpec& strong_spec);

/// Robust accuracy (percent) of one model under one adversary.
double robust_accuracy(const MlpModel& model, const Dataset& data, const AttackSpec& spec);

}  // namespace ducat
