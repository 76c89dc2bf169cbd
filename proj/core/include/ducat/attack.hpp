#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ducat/mlp.hpp"
#include "ducat/paradigm.hpp"
#include "ducat/tensor.hpp"

namespace ducat {

enum class Norm { linf, l2 };
enum class TargetMode { untargeted, targeted_original, targeted_dummy };
/// Which logits the adversary's cross entropy is taken over. `full` uses all
/// K outputs; `original` only the first C.
enum class LossHead { full, original };

struct AttackSpec {
  std::string name = "pgd";
  Norm norm = Norm::linf;
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int steps = 10;
  int restarts = 1;
  bool random_start = true;
  TargetMode target_mode = TargetMode::untargeted;
  LossHead loss_head = LossHead::full;
  std::uint64_t seed = 0;
  /// Clip to [0,1] after every step. The ε-ball constraint always applies.
  bool clip_to_unit = true;

  void validate() const;
  bool is_identity() const { return steps == 0 && !random_start; }
};

/// Convenience constructors for the usual L∞ adversaries.
AttackSpec make_pgd(double epsilon, double step_size, int steps, int restarts = 1,
                    std::uint64_t seed = 0);
AttackSpec identity_attack();

struct AdversarialBatch {
  Tensor x_adv;
  /// Projected prediction on x_adv differs from the true label.
  std::vector<bool> success;
  std::vector<double> perturbation_norms;
  /// Attack objective of the kept candidate (CE for untargeted, −CE toward
  /// the target for targeted).
  std::vector<double> objective;
  /// Objective of every restart's final candidate, [restart][sample].
  std::vector<std::vector<double>> restart_objectives;

  double success_rate() const;
};

/// Single signed-gradient step of size ε (normalised gradient for L2).
AdversarialBatch fgsm(const MlpModel& model, const Tensor& x, std::span<const std::size_t> y,
                      const AttackSpec& spec);

/// Untargeted projected gradient ascent with optional random starts and
/// restarts; per sample the highest-loss candidate is kept (first on ties).
AdversarialBatch pgd(const MlpModel& model, const Tensor& x, std::span<const std::size_t> y,
                     const AttackSpec& spec);

/// Projected gradient descent of the cross entropy toward `targets`, given
/// as raw output indices (an original class, or a dummy slot C+j).
AdversarialBatch targeted_pgd(const MlpModel& model, const Tensor& x,
                              std::span<const std::size_t> y,
                              std::span<const std::size_t> targets, const AttackSpec& spec);

/// Dispatches on spec.target_mode, sampling targets when needed.
AdversarialBatch run_attack(const MlpModel& model, const Tensor& x,
                            std::span<const std::size_t> y, const AttackSpec& spec);

/// Uniformly random admissible targets: another original class, or a dummy
/// slot other than the true class's own (returned as raw index C+j).
std::vector<std::size_t> sample_targets(std::span<const std::size_t> y, std::size_t num_classes,
                                        TargetMode mode, std::span<const std::size_t> pi,
                                        std::uint64_t seed);

/// ‖a − b‖ per row under the given norm.
std::vector<double> perturbation_norms(const Tensor& a, const Tensor& b, Norm norm);

}  // namespace ducat
