#include "ducat/evalkit.hpp"

#include "ducat/error.hpp"
#include "ducat/paradigm.hpp"

namespace ducat {

namespace {

double percent(std::size_t hits, std::size_t total) {
  return total ? 100.0 * static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

void check_models(std::span<const MlpModel> models, const Dataset& data, std::size_t min_models) {
  if (models.size() < min_models) {
    throw InvalidArgument("analysis needs at least " + std::to_string(min_models) + " models");
  }
  if (data.size() == 0) throw InvalidArgument("analysis on an empty dataset");
  for (const auto& m : models) {
    if (m.num_classes() != data.num_classes || m.input_dim() != data.dim) {
      throw InvalidArgument("model label space or input width differs from the dataset");
    }
  }
}

}  // namespace

double mean_score(double clean, double robust) { return 0.5 * (clean + robust); }

double nrr(double clean, double robust) {
  const double denom = clean + robust;
  if (denom == 0.0) return 0.0;
  return 2.0 * clean * robust / denom;
}

const RobustResult* EvalReport::find(const std::string& name) const {
  for (const auto& r : robust) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

EvalReport evaluate(const MlpModel& model, const Dataset& data, std::span<const AttackSpec> specs) {
  if (data.size() == 0) throw InvalidArgument("evaluate: empty dataset");
  if (model.num_classes() != data.num_classes || model.input_dim() != data.dim) {
    throw InvalidArgument("evaluate: model does not match the dataset");
  }
  EvalReport rep;
  rep.head_mode = model.head_mode();
  rep.num_samples = data.size();
  const Tensor x = data.all_features();
  const auto clean = predict(model, x);
  rep.samples.resize(data.size());
  std::size_t correct = 0, dummy = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    rep.samples[i].label = data.labels[i];
    rep.samples[i].clean_prediction = clean[i].projected_class;
    correct += clean[i].projected_class == data.labels[i];
    dummy += clean[i].is_dummy;
  }
  rep.clean_accuracy = percent(correct, data.size());
  rep.clean_dummy_hit_rate = percent(dummy, data.size());

  for (const auto& spec : specs) {
    const auto adv = run_attack(model, x, data.labels, spec);
    const auto preds = predict(model, adv.x_adv);
    std::size_t defended = 0, hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const bool ok = preds[i].projected_class == data.labels[i];
      defended += ok;
      hits += preds[i].is_dummy;
      rep.samples[i].adversarial_prediction.push_back(preds[i].projected_class);
      rep.samples[i].defended.push_back(ok);
    }
    RobustResult r;
    r.name = spec.name;
    r.accuracy = percent(defended, data.size());
    r.mean = mean_score(rep.clean_accuracy, r.accuracy);
    r.nrr = nrr(rep.clean_accuracy, r.accuracy);
    r.dummy_hit_rate = percent(hits, data.size());
    rep.robust.push_back(r);
  }
  return rep;
}

double robust_accuracy(const MlpModel& model, const Dataset& data, const AttackSpec& spec) {
  const auto adv = run_attack(model, data.all_features(), data.labels, spec);
  return 100.0 - adv.success_rate();
}

OverlapHistogram overlap_histogram(std::span<const MlpModel> models, const Dataset& data,
                                   const AttackSpec& spec) {
  check_models(models, data, 1);
  OverlapHistogram h;
  h.num_models = models.size();
  h.defended_by.assign(data.size(), 0);
  const Tensor x = data.all_features();
  for (const auto& m : models) {
    const auto adv = run_attack(m, x, data.labels, spec);
    for (std::size_t i = 0; i < data.size(); ++i) h.defended_by[i] += !adv.success[i];
  }
  h.buckets.assign(models.size() + 1, 0);
  for (auto k : h.defended_by) ++h.buckets[k];
  return h;
}

TransferMatrix transfer_matrix(std::span<const MlpModel> models, const Dataset& data,
                               const AttackSpec& spec) {
  check_models(models, data, 2);
  const std::size_t m = models.size();
  TransferMatrix tm;
  tm.num_models = m;
  tm.cells.resize(m * m);
  const Tensor x = data.all_features();
  for (std::size_t s = 0; s < m; ++s) {
    const auto adv = run_attack(models[s], x, data.labels, spec);
    for (std::size_t t = 0; t < m; ++t) {
      const auto preds = predict(models[t], adv.x_adv);
      std::size_t n_succ = 0, n_fail = 0, hit_succ = 0, hit_fail = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const bool fooled = preds[i].projected_class != data.labels[i];
        if (adv.success[i]) {
          ++n_succ;
          hit_succ += fooled;
        } else {
          ++n_fail;
          hit_fail += fooled;
        }
      }
      auto& cell = tm.cells[s * m + t];
      cell.success_subset = n_succ;
      cell.fail_subset = n_fail;
      if (n_succ) cell.success_subset_rate = percent(hit_succ, n_succ);
      if (n_fail) cell.fail_subset_rate = percent(hit_fail, n_fail);
    }
  }
  return tm;
}

std::vector<std::vector<std::size_t>> confusion_matrix(const MlpModel& model, const Dataset& data,
                                                       const AttackSpec* spec) {
  if (model.num_classes() != data.num_classes) {
    throw InvalidArgument("confusion_matrix: class count mismatch");
  }
  const std::size_t c = data.num_classes;
  std::vector<std::vector<std::size_t>> counts(c, std::vector<std::size_t>(c, 0));
  if (data.size() == 0) return counts;
  Tensor x = data.all_features();
  if (spec) x = run_attack(model, x, data.labels, *spec).x_adv;
  const auto preds = predict(model, x);
  for (std::size_t i = 0; i < data.size(); ++i) ++counts[data.labels[i]][preds[i].projected_class];
  return counts;
}

ToyCaseReport toy_case_gap(const MlpModel& model_hard, const MlpModel& model_twohot,
                           const Dataset& data, const AttackSpec& train_spec,
                           const AttackSpec& strong_spec) {
  const bool identical = strong_spec.steps == train_spec.steps && strong_spec.restarts == train_spec.restarts;
  if (!identical && (strong_spec.steps <= train_spec.steps || strong_spec.restarts < 10 ||
                     strong_spec.restarts < train_spec.restarts)) {
    throw InvalidArgument(
        "toy_case_gap: the held-out adversary needs more steps and at least 10 restarts");
  }
  ToyCaseReport r;
  r.hard_train = robust_accuracy(model_hard, data, train_spec);
  r.hard_strong = robust_accuracy(model_hard, data, strong_spec);
  r.twohot_train = robust_accuracy(model_twohot, data, train_spec);
  r.twohot_strong = robust_accuracy(model_twohot, data, strong_spec);
  return r;
}

}  // namespace ducat
