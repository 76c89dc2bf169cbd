#include <gtest/gtest.h>

#include <cmath>

#include "ducat/error.hpp"
#include "ducat/evalkit.hpp"
#include "ducat/trainer.hpp"
#include "oracles.hpp"

namespace ducat {
namespace {

Dataset blobs(std::uint64_t seed, std::size_t per_class = 40, Split split = Split::train) {
  GaussianSpec g;
  g.num_classes = 3;
  g.per_class = per_class;
  g.separation = 0.4;
  g.noise_sigma = 0.04;
  return gen_gaussians(g, seed, split);
}

TrainConfig small_config(Method method, int epochs, int start) {
  TrainConfig c;
  c.method = method;
  c.epochs = epochs;
  c.hyper.start_epoch = start;
  c.train_attack = make_pgd(0.03, 0.01, 3);
  c.schedule = {0.05, {{epochs - 1, 0.1}}};
  c.batch_size = 16;
  c.hidden = {16};
  return c;
}

TEST(Schedule, PiecewiseConstantDecay) {
  const LrSchedule s{0.1, {{100, 0.1}, {105, 0.1}}};
  EXPECT_DOUBLE_EQ(lr_at(s, 0), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(s, 99), 0.1);
  EXPECT_NEAR(lr_at(s, 100), 0.01, 1e-15);
  EXPECT_NEAR(lr_at(s, 105), 0.001, 1e-15);
  EXPECT_DOUBLE_EQ(lr_at({0.3, {}}, 1000), 0.3);
}

TEST(Sgd, PlainStepWithoutMomentum) {
  auto p = Tensor::from({2}, {1.0, -2.0}, true);
  backward(sum(scale(p, 3.0)));
  std::vector<Tensor> params{p};
  std::vector<std::vector<double>> v;
  sgd_update(params, v, 0.1, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(p.data()[0], 1.0 - 0.3);
  EXPECT_DOUBLE_EQ(p.data()[1], -2.0 - 0.3);
}

TEST(Sgd, MomentumAccumulatesDisplacement) {
  // Constant gradient g, µ = 0.9: after two steps the move is lr·g·(1 + 1.9).
  auto p = Tensor::from({1}, {0.0}, true);
  std::vector<Tensor> params{p};
  SgdOptimizer opt(0.9, 0.0);
  for (int i = 0; i < 2; ++i) {
    p.zero_grad();
    backward(sum(scale(p, 2.0)));
    opt.step(params, 0.5);
  }
  EXPECT_NEAR(p.data()[0], -0.5 * 2.0 * 2.9, 1e-12);
}

TEST(Sgd, WeightDecayShrinksGeometrically) {
  auto p = Tensor::from({1}, {4.0}, true);
  std::vector<Tensor> params{p};
  std::vector<std::vector<double>> v;
  for (int i = 0; i < 5; ++i) sgd_update(params, v, 0.1, 0.0, 0.5);
  EXPECT_NEAR(p.data()[0], 4.0 * std::pow(1 - 0.05, 5), 1e-12);
}

TEST(Sgd, BufferChecks) {
  auto a = Tensor::from({2}, {1.0, 2.0}, true);
  std::vector<Tensor> params{a};
  std::vector<std::vector<double>> v{{0.0}};
  EXPECT_THROW(sgd_update(params, v, 0.1, 0.9, 0.0), ShapeError);
  std::vector<std::vector<double>> two{{0, 0}, {0, 0}};
  EXPECT_THROW(sgd_update(params, two, 0.1, 0.9, 0.0), ShapeError);

  SgdOptimizer opt(0.9, 0.0);
  backward(sum(a));
  opt.step(params, 0.1);
  auto wider = Tensor::from({3}, {0, 0, 0}, true);
  std::vector<Tensor> grown{wider};
  opt.resize_to(grown);
  ASSERT_EQ(opt.velocity()[0].size(), 3u);
  EXPECT_EQ(opt.velocity()[0][2], 0.0);
  EXPECT_EQ(opt.velocity()[0][0], 1.0);
}

TEST(Selection, EarliestMaximumWins) {
  std::vector<EpochMetrics> e(4);
  const double robust[] = {10, 30, 30, 20};
  for (int i = 0; i < 4; ++i) {
    e[i].epoch = i + 5;
    e[i].robust_accuracy = robust[i];
  }
  EXPECT_EQ(select_best_epoch(e), 6);
  EXPECT_EQ(select_best_epoch({}), -1);
}

TEST(Trainer, TinyBudgetLearnsSeparableData) {
  auto data = blobs(1);
  auto c = small_config(Method::pgd_at, 30, 0);
  c.train_attack = make_pgd(1e-6, 1e-6, 1);
  c.schedule = {0.1, {}};
  const auto r = train(c, data);
  EXPECT_GT(r.record.epochs.back().clean_accuracy, 99.0);
}

TEST(Trainer, PreStartEpochsMatchBaseline) {
  auto data = blobs(2);
  const auto base = train(small_config(Method::pgd_at, 5, 0), data);
  const auto dc = train(small_config(Method::ducat, 5, 3), data);
  for (int e = 0; e < 3; ++e) {
    const auto& a = base.record.epochs[e];
    const auto& b = dc.record.epochs[e];
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.clean_accuracy, b.clean_accuracy);
    EXPECT_EQ(a.robust_accuracy, b.robust_accuracy);
    EXPECT_FALSE(b.ducat_phase);
  }
  EXPECT_TRUE(dc.record.epochs[3].ducat_phase);
  EXPECT_EQ(dc.final_model.head_mode(), HeadMode::ducat);
  EXPECT_EQ(base.final_model.head_mode(), HeadMode::standard);
}

TEST(Trainer, SameSeedIsBitIdentical) {
  auto data = blobs(3);
  auto c = small_config(Method::ducat, 4, 2);
  const auto a = train(c, data), b = train(c, data);
  EXPECT_TRUE(bitwise_equal(a.final_model, b.final_model));
  EXPECT_TRUE(bitwise_equal(a.best, b.best));
  for (std::size_t e = 0; e < a.record.epochs.size(); ++e) EXPECT_EQ(a.record.epochs[e].loss, b.record.epochs[e].loss);
  c.seed = 1;
  EXPECT_FALSE(bitwise_equal(a.final_model, train(c, data).final_model));
}

TEST(Trainer, BestEpochFollowsMonitor) {
  auto data = blobs(4);
  auto test = blobs(4, 20, Split::test);
  const auto r = train(small_config(Method::ducat, 5, 2), data, &test);
  EXPECT_EQ(r.record.best_epoch, select_best_epoch(r.record.epochs));
  ASSERT_NE(r.record.best(), nullptr);
  for (const auto& e : r.record.epochs) {
    EXPECT_LE(e.robust_accuracy, r.record.best()->robust_accuracy);
    if (e.epoch < r.record.best_epoch) EXPECT_LT(e.robust_accuracy, r.record.best()->robust_accuracy);
  }
  EXPECT_EQ(r.best.head_mode(), r.record.best_epoch >= 2 ? HeadMode::ducat : HeadMode::standard);
}

TEST(Trainer, CollapsedObjectiveMatchesHandWrittenLoop) {
  // β1 = 1, β2 = 0 from epoch 0: the objective is plain CE over 2C logits on
  // benign and adversarial inputs. Replay the loop with a separately
  // assembled loss.
  auto data = blobs(5, 20);
  auto c = small_config(Method::ducat, 3, 0);
  c.hyper = {0.5, 1.0, 0.0, 0};
  const auto r = train(c, data);

  std::vector<std::size_t> widths{data.dim, 16, data.num_classes};
  auto model = double_last_layer(MlpModel::create(widths, {c.seed}), {c.seed});
  SgdOptimizer opt(c.momentum, c.weight_decay);
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    const auto order = epoch_permutation(c.seed, epoch, data.size());
    double total = 0.0;
    std::size_t batch = 0;
    for (std::size_t s = 0; s < data.size(); s += c.batch_size, ++batch) {
      const std::span<const std::size_t> idx(order.data() + s, std::min(c.batch_size, data.size() - s));
      const auto x = data.batch_features(idx);
      const auto y = data.batch_labels(idx);
      auto spec = c.train_attack;
      spec.seed = batch_attack_seed(c, epoch, batch);
      const auto adv = run_attack(model, x, y, spec);
      const auto target = one_hot_batch(y, 2 * data.num_classes);
      const auto loss = add(scale(cross_entropy(model.forward(x), target), 0.5),
                            scale(cross_entropy(model.forward(adv.x_adv), target), 0.5));
      total += loss.item() * static_cast<double>(idx.size());
      model.zero_grad();
      backward(loss);
      auto params = model.parameters();
      opt.step(params, lr_at(c.schedule, epoch));
    }
    EXPECT_NEAR(total / static_cast<double>(data.size()), r.record.epochs[epoch].loss, 1e-9);
  }
  const auto& a = model.layers().back().weight.data();
  const auto& b = r.final_model.layers().back().weight.data();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
}

TEST(Trainer, ZeroEpochResumeOnlyDoublesTheHead) {
  auto data = blobs(6);
  auto base = train(small_config(Method::pgd_at, 3, 0), data).final_model;
  auto c = small_config(Method::ducat, 3, 3);
  c.resume_epoch = 3;
  const auto r = resume(base, c, data);
  EXPECT_TRUE(r.record.epochs.empty());
  EXPECT_EQ(r.record.best_epoch, -1);
  ASSERT_EQ(r.final_model.head_mode(), HeadMode::ducat);
  const auto expected = double_last_layer(base, {c.seed, c.dummy_init, 1e-2});
  EXPECT_TRUE(bitwise_equal(r.final_model, expected));
  const auto x = data.all_features();
  const auto before = base.forward(x, false), after = r.final_model.forward(x, false);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(before.at(i, k), after.at(i, k));
}

TEST(Trainer, ResumeRejectsInconsistentStarts) {
  auto data = blobs(7);
  auto doubled = double_last_layer(MlpModel::create({2, 16, 3}, {}), {});
  auto c = small_config(Method::ducat, 4, 3);
  c.resume_epoch = 1;
  EXPECT_THROW(resume(doubled, c, data), InvalidArgument);
  c.resume_epoch = 5;
  EXPECT_THROW(resume(doubled, c, data), InvalidArgument);
  c.resume_epoch = 2;
  EXPECT_THROW(train(c, data), InvalidArgument);
  EXPECT_THROW(resume(MlpModel::create({3, 16, 3}, {}), small_config(Method::ducat, 2, 1), data),
               InvalidArgument);
}

TEST(Trainer, ResumeContinuesCloseToUninterruptedRun) {
  // The optimizer state is not checkpointed, so the curves differ slightly
  // after the restart; averaged over seeds they should agree.
  double diff = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto data = blobs(10 + seed, 100);
    auto test = blobs(10 + seed, 100, Split::test);
    auto c = small_config(Method::ducat, 12, 4);
    c.schedule = {0.05, {{8, 0.1}}};
    c.seed = seed;
    const auto full = train(c, data, &test);
    auto first = c;
    first.epochs = 6;
    const auto part = train(first, data, &test);
    auto second = c;
    second.resume_epoch = 6;
    const auto rest = resume(part.final_model, second, data, &test);
    const double d = rest.record.epochs.back().robust_accuracy - full.record.epochs.back().robust_accuracy;
    RecordProperty("seed" + std::to_string(seed), std::to_string(d));
    diff += d;
  }
  EXPECT_LE(std::abs(diff / 3.0), 2.0);
}

TEST(Trainer, ExplodingLossAborts) {
  auto data = blobs(8);
  auto c = small_config(Method::pgd_at, 3, 0);
  c.schedule = {1e200, {}};
  try {
    train(c, data);
    FAIL() << "training did not abort";
  } catch (const TrainingAborted&) {
  } catch (const NonFiniteError&) {
  }
}

TEST(Trainer, RejectsBadInputs) {
  auto data = blobs(9);
  auto c = small_config(Method::ducat, 3, 1);
  c.batch_size = 0;
  EXPECT_THROW(train(c, data), InvalidArgument);
  c = small_config(Method::ducat, 3, 5);
  EXPECT_THROW(train(c, data), InvalidArgument);
  auto bad = data;
  bad.labels[0] = 7;
  EXPECT_THROW(train(small_config(Method::ducat, 1, 0), bad), Error);
}

TEST(Trainer, AdversarialStepLowersLoss) {
  auto data = blobs(11);
  auto m = MlpModel::create({2, 16, 3}, {1});
  SgdOptimizer opt(0.0, 0.0);
  const auto x = data.all_features();
  auto spec = make_pgd(0.02, 0.01, 2);
  spec.random_start = false;
  const double first = pgd_at_step(m, opt, x, data.labels, spec, 0.05);
  double last = first;
  for (int i = 0; i < 20; ++i) last = pgd_at_step(m, opt, x, data.labels, spec, 0.05);
  EXPECT_LT(last, first);
}

}  // namespace
}  // namespace ducat
