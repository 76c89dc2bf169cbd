#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ducat/attack.hpp"
#include "ducat/dataset.hpp"
#include "ducat/mlp.hpp"
#include "ducat/paradigm.hpp"

namespace ducat {

/// pgd_at: adversarial cross entropy with one-hot labels throughout.
/// ducat: adversarial CE until the start epoch, then the two-hot objective
/// on a doubled head. ducat_hard_toy: ducat with β1 = β2 = 1.
enum class Method { pgd_at, ducat, ducat_hard_toy };

std::string to_string(Method m);

struct LrSchedule {
  double initial = 0.1;
  /// (epoch, factor): the factor applies from that epoch onwards.
  std::vector<std::pair<int, double>> decays;
};

/// initial × Π factor over all decays with epoch ≤ `epoch`.
double lr_at(const LrSchedule& schedule, int epoch);

/// v ← µv + g + wd·θ ;  θ ← θ − lr·v
void sgd_update(std::span<Tensor> params, std::vector<std::vector<double>>& velocity, double lr,
                double momentum, double weight_decay);

class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::span<Tensor> params, double lr) {
    sgd_update(params, velocity_, lr, momentum_, weight_decay_);
  }
  /// Grows buffers after a parameter was widened; new entries start at zero.
  void resize_to(std::span<const Tensor> params);
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

struct TrainConfig {
  Method method = Method::ducat;
  int epochs = 60;
  /// Epoch the run starts from; > 0 when continuing a checkpoint.
  int resume_epoch = 0;
  DucatHyper hyper{0.5, 0.75, 1.0, 50};
  AttackSpec train_attack = make_pgd(8.0 / 255.0, 2.0 / 255.0, 10);
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LrSchedule schedule{0.1, {{40, 0.1}, {50, 0.1}}};
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{64, 64};
  DummyInit dummy_init = DummyInit::fresh;
  /// Held-out adversaries. Only reported; never used for model selection.
  std::vector<AttackSpec> eval_attacks;
  bool eval_each_epoch = false;

  void validate() const;
  /// The hyper-parameters actually optimised (β1 = β2 = 1 for the toy case).
  DucatHyper effective_hyper() const;
  bool uses_dummy_classes() const { return method != Method::pgd_at; }
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  bool ducat_phase = false;
  double clean_accuracy = 0.0;
  /// Under the training adversary; drives checkpoint selection.
  double robust_accuracy = 0.0;
  double benign_dummy_rate = 0.0;
  double adversarial_dummy_rate = 0.0;
  std::vector<std::pair<std::string, double>> eval_robust;
};

struct RunRecord {
  std::vector<EpochMetrics> epochs;
  /// Epoch maximising training-adversary robust accuracy (earliest on
  /// ties); -1 when no epoch ran.
  int best_epoch = -1;

  const EpochMetrics* best() const;
};

struct TrainResult {
  MlpModel best;
  MlpModel final_model;
  RunRecord record;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Per-epoch sample order.
std::vector<std::size_t> epoch_permutation(std::uint64_t seed, int epoch, std::size_t n);
/// Seed of the training adversary for a given epoch and batch.
std::uint64_t batch_attack_seed(const TrainConfig& config, int epoch, std::size_t batch);

/// Index of the best epoch: max robust accuracy, earliest on ties.
int select_best_epoch(std::span<const EpochMetrics> epochs);

/// Adversarial CE on first-C logits against one-hot labels, one SGD step.
/// Returns the loss before the step.
double pgd_at_step(MlpModel& model, SgdOptimizer& opt, const Tensor& x,
                   std::span<const std::size_t> y, const AttackSpec& spec, double lr);

/// The two-hot objective on a pre-computed adversarial batch, one SGD step.
double ducat_step(MlpModel& model, SgdOptimizer& opt, const Tensor& x, const Tensor& x_adv,
                  std::span<const std::size_t> y, const DucatHyper& hyper, double lr);

/// Trains from a fresh seeded initialisation. `monitor` (defaults to the
/// training set) is where per-epoch accuracies and checkpoint selection are
/// measured.
TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const Dataset* monitor = nullptr, const EpochCallback& on_epoch = {});

/// Continues `checkpoint` from config.resume_epoch. A standard head is doubled
/// at resume time when the dummy phase is already active; otherwise at the
/// start epoch.
TrainResult resume(const MlpModel& checkpoint, const TrainConfig& config, const Dataset& train_set,
                   const Dataset* monitor = nullptr, const EpochCallback& on_epoch = {});

}  // namespace ducat
