#include "ducat/attack.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ducat/error.hpp"
#include "ducat/random.hpp"

namespace ducat {

namespace {

struct Objective {
  Tensor target;        // one-hot rows over the attacked logits
  bool ascend = true;   // untargeted ascends CE, targeted descends it
  bool original_only = false;
};

Tensor attacked_logits(const MlpModel& model, const Tensor& x, const Objective& obj) {
  Tensor logits = model.forward(x, false);
  if (obj.original_only && logits.cols() != model.num_classes()) {
    logits = slice_columns(logits, 0, model.num_classes());
  }
  return logits;
}

std::vector<double> objective_values(const MlpModel& model, const Tensor& x, const Objective& obj) {
  auto v = cross_entropy_rows(attacked_logits(model, x, obj), obj.target);
  if (!obj.ascend) {
    for (double& d : v) d = -d;
  }
  return v;
}

std::vector<double> input_gradient(const MlpModel& model, const Tensor& x, const Objective& obj) {
  Tensor xin = x.detached(true);
  backward(cross_entropy(attacked_logits(model, xin, obj), obj.target));
  return {xin.grad().begin(), xin.grad().end()};
}

void take_step(std::vector<double>& cur, const std::vector<double>& grad, std::size_t rows,
               std::size_t d, double step, Norm norm, bool ascend) {
  const double dir = ascend ? 1.0 : -1.0;
  if (norm == Norm::linf) {
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
      cur[i] += dir * step * s;
    }
    return;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) n2 += grad[r * d + j] * grad[r * d + j];
    const double n = std::sqrt(n2);
    if (n == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) cur[r * d + j] += dir * step * grad[r * d + j] / n;
  }
}

/// Back into the ε-ball around `origin`, then into [0,1] when enabled. The
/// unit-box clip can only shrink the distance to an origin inside the box.
void project(std::vector<double>& cur, std::span<const double> origin, std::size_t rows,
             std::size_t d, double eps, Norm norm, bool clip) {
  if (norm == Norm::linf) {
    for (std::size_t i = 0; i < cur.size(); ++i) {
      cur[i] = std::clamp(cur[i], origin[i] - eps, origin[i] + eps);
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      double n2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double delta = cur[r * d + j] - origin[r * d + j];
        n2 += delta * delta;
      }
      const double n = std::sqrt(n2);
      if (n <= eps) continue;
      const double f = eps / n;
      for (std::size_t j = 0; j < d; ++j) {
        cur[r * d + j] = origin[r * d + j] + (cur[r * d + j] - origin[r * d + j]) * f;
      }
    }
  }
  if (clip) {
    for (double& v : cur) v = std::clamp(v, 0.0, 1.0);
  }
}

std::vector<double> random_start(std::span<const double> origin, std::size_t rows, std::size_t d,
                                 double eps, Norm norm, bool clip, Rng& rng) {
  std::vector<double> cur(origin.begin(), origin.end());
  if (norm == Norm::linf) {
    for (double& v : cur) v += rng.uniform(-eps, eps);
  } else {
    std::vector<double> dir(d);
    for (std::size_t r = 0; r < rows; ++r) {
      double n2 = 0.0;
      for (double& v : dir) {
        v = rng.normal();
        n2 += v * v;
      }
      const double radius = eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
      const double f = n2 > 0.0 ? radius / std::sqrt(n2) : 0.0;
      for (std::size_t j = 0; j < d; ++j) cur[r * d + j] += dir[j] * f;
    }
  }
  project(cur, origin, rows, d, eps, norm, clip);
  return cur;
}

void check_inputs(const MlpModel& model, const Tensor& x, std::span<const std::size_t> y) {
  if (x.shape().size() != 2 || x.cols() != model.input_dim()) {
    throw ShapeError("attack: input does not match the model's input dimension");
  }
  if (x.rows() != y.size()) throw ShapeError("attack: batch and label counts differ");
  for (auto v : y) {
    if (v >= model.num_classes()) throw InvalidArgument("attack: label out of range");
  }
}

AdversarialBatch finish(const MlpModel& model, const Tensor& x, std::span<const std::size_t> y,
                        Tensor x_adv, Norm norm) {
  AdversarialBatch out;
  const auto preds = predict(model, x_adv);
  out.success.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out.success[i] = preds[i].projected_class != y[i];
  out.perturbation_norms = perturbation_norms(x_adv, x, norm);
  out.x_adv = std::move(x_adv);
  return out;
}

/// Shared projected-gradient loop behind pgd and targeted_pgd.
AdversarialBatch run_pgd(const MlpModel& model, const Tensor& x, std::span<const std::size_t> y,
                         const Objective& obj, const AttackSpec& spec) {
  const std::size_t rows = x.rows(), d = x.cols();
  const auto origin = x.data();

  std::vector<double> best(origin.begin(), origin.end());
  std::vector<double> best_obj;
  std::vector<std::vector<double>> per_restart;
  for (int r = 0; r < spec.restarts; ++r) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(r)));
    std::vector<double> cur =
        spec.random_start ? random_start(origin, rows, d, spec.epsilon, spec.norm, spec.clip_to_unit, rng)
                          : std::vector<double>(origin.begin(), origin.end());
    for (int s = 0; s < spec.steps; ++s) {
      const Tensor xt = Tensor::from(x.shape(), cur);
      const auto g = input_gradient(model, xt, obj);
      take_step(cur, g, rows, d, spec.step_size, spec.norm, obj.ascend);
      project(cur, origin, rows, d, spec.epsilon, spec.norm, spec.clip_to_unit);
    }
    const auto values = objective_values(model, Tensor::from(x.shape(), cur), obj);
    if (r == 0) {
      best = cur;
      best_obj = values;
    } else {
      for (std::size_t i = 0; i < rows; ++i) {
        if (values[i] > best_obj[i]) {
          best_obj[i] = values[i];
          std::copy_n(cur.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                      best.begin() + static_cast<std::ptrdiff_t>(i * d));
        }
      }
    }
    per_restart.push_back(values);
  }
  auto out = finish(model, x, y, Tensor::from(x.shape(), std::move(best)), spec.norm);
  out.objective = std::move(best_obj);
  out.restart_objectives = std::move(per_restart);
  return out;
}

Objective untargeted_objective(const MlpModel& model, std::span<const std::size_t> y,
                               const AttackSpec& spec) {
  const bool original_only = spec.loss_head == LossHead::original;
  const std::size_t width = original_only ? model.num_classes() : model.output_dim();
  return {one_hot_batch(y, width), true, original_only};
}

}  // namespace

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("attack epsilon must be >= 0");
  if (steps < 0) throw InvalidArgument("attack steps must be >= 0");
  if (steps > 0 && !(step_size > 0.0)) throw InvalidArgument("attack step size must be > 0");
  if (restarts < 1) throw InvalidArgument("attack restarts must be >= 1");
}

AttackSpec make_pgd(double epsilon, double step_size, int steps, int restarts, std::uint64_t seed) {
  AttackSpec s;
  s.name = "pgd" + std::to_string(steps) + (restarts > 1 ? "x" + std::to_string(restarts) : "");
  s.epsilon = epsilon;
  s.step_size = step_size;
  s.steps = steps;
  s.restarts = restarts;
  s.seed = seed;
  return s;
}

AttackSpec identity_attack() {
  AttackSpec s;
  s.name = "none";
  s.epsilon = 0.0;
  s.steps = 0;
  s.random_start = false;
  return s;
}

double AdversarialBatch::success_rate() const {
  if (success.empty()) return 0.0;
  const auto n = std::count(success.begin(), success.end(), true);
  return 100.0 * static_cast<double>(n) / static_cast<double>(success.size());
}

std::vector<double> perturbation_norms(const Tensor& a, const Tensor& b, Norm norm) {
  if (a.shape() != b.shape() || a.shape().size() != 2) throw ShapeError("perturbation_norms: shape mismatch");
  const std::size_t rows = a.rows(), d = a.cols();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double delta = std::abs(a.data()[r * d + j] - b.data()[r * d + j]);
      if (norm == Norm::linf) {
        out[r] = std::max(out[r], delta);
      } else {
        out[r] += delta * delta;
      }
    }
    if (norm == Norm::l2) out[r] = std::sqrt(out[r]);
  }
  return out;
}

AdversarialBatch fgsm(const MlpModel& model, const Tensor& x, std::span<const std::size_t> y,
                      const AttackSpec& spec) {
  spec.validate();
  if (spec.steps != 1) throw InvalidArgument("fgsm requires steps == 1");
  check_inputs(model, x, y);
  const auto obj = untargeted_objective(model, y, spec);
  const auto origin = x.data();
  std::vector<double> cur(origin.begin(), origin.end());
  if (spec.epsilon > 0.0) {
    const auto g = input_gradient(model, x, obj);
    take_step(cur, g, x.rows(), x.cols(), spec.epsilon, spec.norm, true);
    project(cur, origin, x.rows(), x.cols(), spec.epsilon, spec.norm, spec.clip_to_unit);
  }
  Tensor adv = Tensor::from(x.shape(), std::move(cur));
  auto out = finish(model, x, y, adv, spec.norm);
  out.objective = objective_values(model, adv, obj);
  out.restart_objectives = {out.objective};
  return out;
}

AdversarialBatch pgd(const MlpModel& model, const Tensor& x, std::span<const std::size_t> y,
                     const AttackSpec& spec) {
  spec.validate();
  if (spec.steps < 1) throw InvalidArgument("pgd requires steps >= 1");
  check_inputs(model, x, y);
  return run_pgd(model, x, y, untargeted_objective(model, y, spec), spec);
}

AdversarialBatch targeted_pgd(const MlpModel& model, const Tensor& x,
                              std::span<const std::size_t> y,
                              std::span<const std::size_t> targets, const AttackSpec& spec) {
  spec.validate();
  if (spec.target_mode == TargetMode::untargeted) {
    throw InvalidArgument("targeted_pgd called with an untargeted spec");
  }
  check_inputs(model, x, y);
  if (targets.size() != y.size()) throw ShapeError("targeted_pgd: one target per sample required");
  const bool original_only = spec.loss_head == LossHead::original;
  const std::size_t c = model.num_classes();
  const std::size_t width = original_only ? c : model.output_dim();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (targets[i] == y[i]) throw InvalidArgument("targeted_pgd: target equals the true label");
    if (targets[i] >= width) throw InvalidArgument("targeted_pgd: target outside the attacked logits");
    if (spec.target_mode == TargetMode::targeted_dummy && targets[i] < c) {
      throw InvalidArgument("targeted_pgd: dummy mode requires dummy-slot targets");
    }
    if (spec.target_mode == TargetMode::targeted_original && targets[i] >= c) {
      throw InvalidArgument("targeted_pgd: original mode requires original-class targets");
    }
  }
  if (spec.steps == 0) {
    auto out = finish(model, x, y, x.detached(), spec.norm);
    return out;
  }
  return run_pgd(model, x, y, Objective{one_hot_batch(targets, width), false, original_only}, spec);
}

AdversarialBatch run_attack(const MlpModel& model, const Tensor& x, std::span<const std::size_t> y,
                            const AttackSpec& spec) {
  spec.validate();
  check_inputs(model, x, y);
  if (spec.target_mode != TargetMode::untargeted) {
    const auto targets = sample_targets(y, model.num_classes(), spec.target_mode,
                                        model.dummy_permutation(), derive_seed(spec.seed, 0x7A9));
    return targeted_pgd(model, x, y, targets, spec);
  }
  if (spec.steps == 0) {
    Tensor adv = x.detached();
    if (spec.random_start) {
      Rng rng(derive_seed(spec.seed, 0));
      adv = Tensor::from(x.shape(), random_start(x.data(), x.rows(), x.cols(), spec.epsilon,
                                                 spec.norm, spec.clip_to_unit, rng));
    }
    return finish(model, x, y, std::move(adv), spec.norm);
  }
  return pgd(model, x, y, spec);
}

std::vector<std::size_t> sample_targets(std::span<const std::size_t> y, std::size_t num_classes,
                                        TargetMode mode, std::span<const std::size_t> pi,
                                        std::uint64_t seed) {
  if (num_classes < 2) throw InvalidArgument("sample_targets requires C >= 2");
  if (mode == TargetMode::untargeted) throw InvalidArgument("sample_targets needs a targeted mode");
  if (mode == TargetMode::targeted_dummy && pi.size() != num_classes) {
    throw InvalidArgument("sample_targets: dummy permutation must have C entries");
  }
  Rng rng(seed);
  std::vector<std::size_t> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= num_classes) throw InvalidArgument("sample_targets: label out of range");
    const auto r = static_cast<std::size_t>(rng.below(num_classes - 1));
    if (mode == TargetMode::targeted_original) {
      out[i] = r < y[i] ? r : r + 1;
    } else {
      const std::size_t own = pi[y[i]];
      out[i] = num_classes + (r < own ? r : r + 1);
    }
  }
  return out;
}

}  // namespace ducat
