#include "ducat/trainer.hpp"

#include <cmath>
#include <optional>

#include "ducat/error.hpp"
#include "ducat/random.hpp"

namespace ducat {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5EED;
constexpr std::uint64_t kMonitorStream = 0x6D6F6E;

struct MonitorResult {
  double clean = 0.0;
  double robust = 0.0;
  double benign_dummy = 0.0;
  double adv_dummy = 0.0;
  std::vector<std::pair<std::string, double>> eval;
};

double percent(std::size_t hits, std::size_t total) {
  return total ? 100.0 * static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

MonitorResult measure(const MlpModel& model, const Dataset& data, const TrainConfig& config,
                      bool with_eval) {
  MonitorResult m;
  const Tensor x = data.all_features();
  const auto clean = predict(model, x);
  std::size_t correct = 0, dummy = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    correct += clean[i].projected_class == data.labels[i];
    dummy += clean[i].is_dummy;
  }
  m.clean = percent(correct, data.size());
  m.benign_dummy = percent(dummy, data.size());

  AttackSpec spec = config.train_attack;
  spec.seed = derive_seed(spec.seed, kMonitorStream);
  const auto adv = run_attack(model, x, data.labels, spec);
  const auto adv_pred = predict(model, adv.x_adv);
  std::size_t defended = 0, adv_dummy = 0;
  for (std::size_t i = 0; i < adv_pred.size(); ++i) {
    defended += !adv.success[i];
    adv_dummy += adv_pred[i].is_dummy;
  }
  m.robust = percent(defended, data.size());
  m.adv_dummy = percent(adv_dummy, data.size());

  if (with_eval) {
    for (const auto& e : config.eval_attacks) {
      const auto r = run_attack(model, x, data.labels, e);
      m.eval.emplace_back(e.name, 100.0 - r.success_rate());
    }
  }
  return m;
}

double checked(double loss, int epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                          std::to_string(batch));
  }
  return loss;
}

void apply_step(MlpModel& model, SgdOptimizer& opt, const Tensor& loss, double lr) {
  model.zero_grad();
  backward(loss);
  auto params = model.parameters();
  opt.step(params, lr);
}

Tensor adversarial_ce(const MlpModel& model, const Tensor& x_adv, std::span<const std::size_t> y) {
  Tensor logits = model.forward(x_adv);
  if (logits.cols() != model.num_classes()) logits = slice_columns(logits, 0, model.num_classes());
  return cross_entropy(logits, one_hot_batch(y, model.num_classes()));
}

TrainResult run(MlpModel model, const TrainConfig& config, const Dataset& train_set,
                const Dataset* monitor, const EpochCallback& on_epoch) {
  config.validate();
  train_set.validate();
  if (train_set.size() == 0) throw InvalidArgument("train: empty dataset");
  if (train_set.num_classes != model.num_classes() || train_set.dim != model.input_dim()) {
    throw InvalidArgument("train: dataset does not match the model's input width or class count");
  }
  const Dataset& mon = monitor ? *monitor : train_set;
  if (mon.num_classes != train_set.num_classes || mon.dim != train_set.dim) {
    throw InvalidArgument("train: monitor set does not match the training set");
  }
  const DucatHyper hyper = config.effective_hyper();
  const InitSpec dummy_init{config.seed, config.dummy_init, 1e-2};
  const bool dummy = config.uses_dummy_classes();

  if (dummy && model.head_mode() == HeadMode::ducat && config.resume_epoch < hyper.start_epoch) {
    throw InvalidArgument("resume: head already doubled but resume epoch precedes the start epoch");
  }
  if (dummy && model.head_mode() == HeadMode::standard && config.resume_epoch >= hyper.start_epoch) {
    model = double_last_layer(model, dummy_init);
  }

  SgdOptimizer opt(config.momentum, config.weight_decay);
  TrainResult result{model, model, {}};
  std::optional<double> best_robust;
  const std::size_t n = train_set.size();

  for (int epoch = config.resume_epoch; epoch < config.epochs; ++epoch) {
    const bool ducat_phase = dummy && epoch >= hyper.start_epoch;
    if (ducat_phase && model.head_mode() == HeadMode::standard) {
      model = double_last_layer(model, dummy_init);
      opt.resize_to(model.parameters());
    }
    const double lr = lr_at(config.schedule, epoch);
    const auto order = epoch_permutation(config.seed, epoch, n);

    double loss_sum = 0.0;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor x = train_set.batch_features(idx);
      const auto y = train_set.batch_labels(idx);

      AttackSpec spec = config.train_attack;
      spec.seed = batch_attack_seed(config, epoch, batch);
      const auto adv = run_attack(model, x, y, spec);

      const Tensor loss = ducat_phase ? ducat_loss(model, x, adv.x_adv, y, hyper)
                                      : adversarial_ce(model, adv.x_adv, y);
      loss_sum += checked(loss.item(), epoch, batch) * static_cast<double>(idx.size());
      apply_step(model, opt, loss, lr);
    }

    const auto m = measure(model, mon, config, config.eval_each_epoch);
    EpochMetrics em;
    em.epoch = epoch;
    em.lr = lr;
    em.loss = loss_sum / static_cast<double>(n);
    em.ducat_phase = ducat_phase;
    em.clean_accuracy = m.clean;
    em.robust_accuracy = m.robust;
    em.benign_dummy_rate = m.benign_dummy;
    em.adversarial_dummy_rate = m.adv_dummy;
    em.eval_robust = m.eval;
    result.record.epochs.push_back(em);
    if (!best_robust || m.robust > *best_robust) {
      best_robust = m.robust;
      result.record.best_epoch = epoch;
      result.best = model;
    }
    if (on_epoch) on_epoch(em);
  }
  if (!best_robust) result.best = model;
  result.final_model = std::move(model);
  return result;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::pgd_at: return "pgd_at";
    case Method::ducat: return "ducat";
    case Method::ducat_hard_toy: return "ducat_hard_toy";
  }
  return "?";
}

double lr_at(const LrSchedule& schedule, int epoch) {
  double lr = schedule.initial;
  for (const auto& [at, factor] : schedule.decays) {
    if (at <= epoch) lr *= factor;
  }
  return lr;
}

void sgd_update(std::span<Tensor> params, std::vector<std::vector<double>>& velocity, double lr,
                double momentum, double weight_decay) {
  if (velocity.empty()) {
    for (const auto& p : params) velocity.emplace_back(p.numel(), 0.0);
  }
  if (velocity.size() != params.size()) throw ShapeError("sgd_update: buffer count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].mutable_data();
    auto& v = velocity[i];
    if (v.size() != theta.size()) throw ShapeError("sgd_update: buffer shape mismatch");
    const bool has_grad = params[i].has_grad();
    const auto g = has_grad ? params[i].grad() : std::span<const double>{};
    for (std::size_t j = 0; j < theta.size(); ++j) {
      v[j] = momentum * v[j] + (has_grad ? g[j] : 0.0) + weight_decay * theta[j];
      theta[j] -= lr * v[j];
    }
  }
}

void SgdOptimizer::resize_to(std::span<const Tensor> params) {
  if (velocity_.empty()) return;
  if (velocity_.size() != params.size()) throw ShapeError("optimizer: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].numel() < velocity_[i].size()) throw ShapeError("optimizer: parameter shrank");
    velocity_[i].resize(params[i].numel(), 0.0);
  }
}

void TrainConfig::validate() const {
  if (epochs < 0 || resume_epoch < 0) throw InvalidArgument("epochs must be non-negative");
  if (resume_epoch > epochs) throw InvalidArgument("resume epoch exceeds total epochs");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (hidden.empty()) throw InvalidArgument("at least one hidden layer is required");
  if (momentum < 0.0 || weight_decay < 0.0 || !(schedule.initial > 0.0)) {
    throw InvalidArgument("optimizer settings must be non-negative with a positive learning rate");
  }
  hyper.validate();
  if (uses_dummy_classes() && hyper.start_epoch > epochs) {
    throw InvalidArgument("start epoch exceeds total epochs");
  }
  train_attack.validate();
  for (const auto& e : eval_attacks) e.validate();
}

DucatHyper TrainConfig::effective_hyper() const {
  DucatHyper h = hyper;
  if (method == Method::ducat_hard_toy) {
    h.beta1 = 1.0;
    h.beta2 = 1.0;
  }
  return h;
}

const EpochMetrics* RunRecord::best() const {
  for (const auto& e : epochs) {
    if (e.epoch == best_epoch) return &e;
  }
  return nullptr;
}

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, int epoch, std::size_t n) {
  Rng rng(derive_seed(seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
  return rng.permutation(n);
}

std::uint64_t batch_attack_seed(const TrainConfig& config, int epoch, std::size_t batch) {
  return derive_seed(config.seed ^ mix_seed(config.train_attack.seed),
                     static_cast<std::uint64_t>(epoch), batch);
}

int select_best_epoch(std::span<const EpochMetrics> epochs) {
  int best = -1;
  double best_robust = 0.0;
  for (const auto& e : epochs) {
    if (best < 0 || e.robust_accuracy > best_robust) {
      best = e.epoch;
      best_robust = e.robust_accuracy;
    }
  }
  return best;
}

double pgd_at_step(MlpModel& model, SgdOptimizer& opt, const Tensor& x,
                   std::span<const std::size_t> y, const AttackSpec& spec, double lr) {
  const auto adv = run_attack(model, x, y, spec);
  const Tensor loss = adversarial_ce(model, adv.x_adv, y);
  const double value = loss.item();
  if (!std::isfinite(value)) throw TrainingAborted("non-finite loss in pgd_at_step");
  apply_step(model, opt, loss, lr);
  return value;
}

double ducat_step(MlpModel& model, SgdOptimizer& opt, const Tensor& x, const Tensor& x_adv,
                  std::span<const std::size_t> y, const DucatHyper& hyper, double lr) {
  const Tensor loss = ducat_loss(model, x, x_adv, y, hyper);
  const double value = loss.item();
  if (!std::isfinite(value)) throw TrainingAborted("non-finite loss in ducat_step");
  apply_step(model, opt, loss, lr);
  return value;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset* monitor,
                  const EpochCallback& on_epoch) {
  if (config.resume_epoch != 0) {
    throw InvalidArgument("train starts from scratch; use resume() for a non-zero resume epoch");
  }
  config.validate();
  std::vector<std::size_t> widths{train_set.dim};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(train_set.num_classes);
  auto model = MlpModel::create(std::move(widths), InitSpec{config.seed, config.dummy_init, 1e-2});
  return run(std::move(model), config, train_set, monitor, on_epoch);
}

TrainResult resume(const MlpModel& checkpoint, const TrainConfig& config, const Dataset& train_set,
                   const Dataset* monitor, const EpochCallback& on_epoch) {
  return run(checkpoint, config, train_set, monitor, on_epoch);
}

}  // namespace ducat
