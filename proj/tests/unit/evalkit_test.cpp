#include <gtest/gtest.h>

#include <algorithm>

#include "ducat/error.hpp"
#include "ducat/evalkit.hpp"
#include "ducat/trainer.hpp"
#include "oracles.hpp"

namespace ducat {
namespace {

struct Row {
  double clean, robust, mean, nrr;
};

// CIFAR-10 rows of the headline table: clean, AutoAttack, Mean, NRR.
const Row kTableRows[] = {
    {82.92, 46.74, 64.830, 59.782},
    {79.67, 47.62, 63.645, 59.610},
    {77.93, 46.70, 62.315, 58.402},
    {83.42, 47.72, 65.570, 60.711},
};

TEST(Scores, ReproducePublishedDerivedColumns) {
  for (const auto& r : kTableRows) {
    EXPECT_NEAR(mean_score(r.clean, r.robust), r.mean, 1e-3);
    EXPECT_NEAR(nrr(r.clean, r.robust), r.nrr, 1e-3);
  }
}

TEST(Scores, EdgeCasesAndOrdering) {
  EXPECT_DOUBLE_EQ(nrr(70, 70), 70);
  EXPECT_DOUBLE_EQ(mean_score(70, 70), 70);
  EXPECT_DOUBLE_EQ(nrr(100, 0), 0);
  EXPECT_DOUBLE_EQ(nrr(0, 0), 0);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double c = rng.uniform(0, 100), r = rng.uniform(0, 100);
    EXPECT_LE(nrr(c, r), mean_score(c, r) + 1e-12);
  }
}

Dataset blobs(std::uint64_t seed, std::size_t per_class) {
  GaussianSpec g;
  g.num_classes = 3;
  g.per_class = per_class;
  g.separation = 0.35;
  g.noise_sigma = 0.06;
  return gen_gaussians(g, seed, Split::test);
}

std::vector<MlpModel> random_models(std::size_t m, std::uint64_t seed) {
  std::vector<MlpModel> out;
  for (std::size_t i = 0; i < m; ++i) {
    auto model = MlpModel::create({2, 12, 3}, {seed + i});
    if (i % 2) model = double_last_layer(model, {seed});
    out.push_back(model);
  }
  return out;
}

TEST(Overlap, MatchesPerModelAttacks) {
  const auto data = blobs(2, 30);
  const auto models = random_models(4, 5);
  const auto spec = make_pgd(0.05, 0.02, 3, 1, 9);
  const auto h = overlap_histogram(models, data, spec);
  ASSERT_EQ(h.buckets.size(), 5u);
  std::size_t total = 0;
  for (auto b : h.buckets) total += b;
  EXPECT_EQ(total, data.size());
  std::vector<std::size_t> expected(data.size(), 0);
  for (const auto& m : models) {
    const auto adv = run_attack(m, data.all_features(), data.labels, spec);
    for (std::size_t i = 0; i < data.size(); ++i) expected[i] += !adv.success[i];
  }
  EXPECT_EQ(h.defended_by, expected);
}

TEST(Overlap, IdenticalModelsFillOnlyTheExtremes) {
  const auto data = blobs(3, 30);
  const auto one = random_models(1, 7)[0];
  const std::vector<MlpModel> same(3, one);
  const auto h = overlap_histogram(same, data, make_pgd(0.05, 0.02, 3));
  EXPECT_EQ(h.buckets[1], 0u);
  EXPECT_EQ(h.buckets[2], 0u);
  EXPECT_EQ(h.buckets[0] + h.buckets[3], data.size());
  const auto single = overlap_histogram(std::span(&one, 1), data, make_pgd(0.05, 0.02, 3));
  EXPECT_EQ(single.buckets.size(), 2u);
}

TEST(Transfer, DiagonalIsExactAndSubsetsPartition) {
  const auto data = blobs(4, 30);
  const auto models = random_models(3, 11);
  const auto tm = transfer_matrix(models, data, make_pgd(0.1, 0.03, 5));
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t t = 0; t < 3; ++t) {
      const auto& cell = tm.at(s, t);
      EXPECT_EQ(cell.success_subset + cell.fail_subset, data.size());
      if (s != t) continue;
      if (cell.success_subset) EXPECT_EQ(*cell.success_subset_rate, 100.0);
      if (cell.fail_subset) EXPECT_EQ(*cell.fail_subset_rate, 0.0);
      EXPECT_EQ(cell.success_subset_rate.has_value(), cell.success_subset > 0);
    }
  }
  EXPECT_THROW(transfer_matrix(std::span(models.data(), 1), data, make_pgd(0.1, 0.03, 5)), InvalidArgument);
}

TEST(Confusion, RowsCountTheClassesAndMatchEvaluation) {
  const auto data = blobs(5, 25);
  const auto model = random_models(2, 13)[1];
  const auto spec = make_pgd(0.1, 0.03, 5, 1, 4);
  const auto clean = confusion_matrix(model, data);
  const auto attacked = confusion_matrix(model, data, &spec);
  const auto counts = data.class_counts();
  const auto report = evaluate(model, data, std::span(&spec, 1));
  std::vector<std::vector<std::size_t>> from_log(3, std::vector<std::size_t>(3, 0));
  for (const auto& s : report.samples) ++from_log[s.label][s.adversarial_prediction[0]];
  for (std::size_t k = 0; k < 3; ++k) {
    std::size_t a = 0, b = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      a += clean[k][j];
      b += attacked[k][j];
    }
    EXPECT_EQ(a, counts[k]);
    EXPECT_EQ(b, counts[k]);
  }
  EXPECT_EQ(attacked, from_log);
}

TEST(Evaluate, ReportIsConsistent) {
  const auto data = blobs(6, 25);
  const auto model = random_models(2, 17)[1];
  const std::vector<AttackSpec> specs{identity_attack(), make_pgd(0.1, 0.03, 5)};
  const auto rep = evaluate(model, data, specs);
  ASSERT_EQ(rep.robust.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.robust[0].accuracy, rep.clean_accuracy);
  for (const auto& r : rep.robust) {
    EXPECT_DOUBLE_EQ(r.mean, mean_score(rep.clean_accuracy, r.accuracy));
    EXPECT_DOUBLE_EQ(r.nrr, nrr(rep.clean_accuracy, r.accuracy));
  }
  std::size_t defended = 0;
  for (const auto& s : rep.samples) defended += s.defended[1];
  EXPECT_NEAR(rep.robust[1].accuracy, 100.0 * static_cast<double>(defended) / static_cast<double>(data.size()), 1e-12);
  EXPECT_NE(rep.find(specs[1].name), nullptr);
  EXPECT_EQ(rep.find("nope"), nullptr);
}

TEST(ToyCase, IdenticalAdversariesGiveNoGap) {
  const auto data = blobs(7, 20);
  const auto models = random_models(2, 19);
  const auto spec = make_pgd(0.1, 0.03, 5);
  const auto r = toy_case_gap(models[0], models[1], data, spec, spec);
  EXPECT_EQ(r.hard_gap(), 0.0);
  EXPECT_EQ(r.twohot_gap(), 0.0);
}

TEST(ToyCase, StrongAdversaryMustDominate) {
  const auto data = blobs(8, 10);
  const auto models = random_models(2, 23);
  const auto weak = make_pgd(0.1, 0.03, 10);
  EXPECT_THROW(toy_case_gap(models[0], models[1], data, weak, make_pgd(0.1, 0.01, 100, 5)), InvalidArgument);
  EXPECT_THROW(toy_case_gap(models[0], models[1], data, weak, make_pgd(0.1, 0.01, 10, 10)), InvalidArgument);
  EXPECT_NO_THROW(toy_case_gap(models[0], models[1], data, weak, make_pgd(0.1, 0.01, 20, 10)));
}

TEST(Evaluate, MoreStepsNeverHelpTheDefenderOnAverage) {
  GaussianSpec g;
  g.num_classes = 3;
  g.per_class = 200;
  g.separation = 0.35;
  g.noise_sigma = 0.06;
  std::vector<std::vector<double>> acc;  // [seed][steps]
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    TrainConfig c;
    c.method = Method::pgd_at;
    c.epochs = 4;
    c.hyper.start_epoch = 0;
    c.batch_size = 32;
    c.hidden = {32};
    c.schedule = {0.05, {}};
    c.train_attack = make_pgd(0.06, 0.015, 3);
    c.seed = seed;
    const auto model = train(c, gen_gaussians(g, seed, Split::train)).final_model;
    const auto test = gen_gaussians(g, seed, Split::test);
    ASSERT_GE(test.size(), 500u);
    std::vector<double> row;
    for (int steps : {1, 3, 10, 30}) row.push_back(robust_accuracy(model, test, make_pgd(0.1, 0.025, steps, 1, seed)));
    acc.push_back(row);
  }
  for (std::size_t k = 1; k < 4; ++k) {
    std::vector<double> diffs;
    for (const auto& row : acc) diffs.push_back(row[k] - row[k - 1]);
    std::sort(diffs.begin(), diffs.end());
    EXPECT_LE(diffs[1], 0.0) << "step level " << k;
  }
}

}  // namespace
}  // namespace ducat
