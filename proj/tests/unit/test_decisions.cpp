#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "posthoc/core/error.hpp"
#include "posthoc/decisions/decisions.hpp"

using namespace posthoc;
using ad::Tensor;
using decision::CostSpec;

namespace {

const CostSpec& asym() {
  static const CostSpec c = decision::preset("synthetic-asymmetric");
  return c;
}

CostSpec random_cost(std::mt19937_64& rng, std::size_t h, std::size_t c) {
  CostSpec s;
  for (std::size_t i = 0; i < h; ++i) s.decisions.push_back("d" + std::to_string(i));
  for (std::size_t i = 0; i < c; ++i) s.classes.push_back("c" + std::to_string(i));
  s.matrix = Tensor({h, c}, oracle::random_vec(rng, h * c, 0.0, 2.0));
  s.M = 2.0;
  return s;
}

}  // namespace

TEST(Utility, FromCost) {
  const auto u = decision::cost_to_utility(asym());
  EXPECT_EQ(u.matrix, Tensor::from_rows({{1.0, 0.0}, {0.9, 1.0}}));
  // M - (M - l) recovers l up to one rounding of the subtraction.
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(asym().M - u.matrix[i], asym().matrix[i], 1e-16);
  auto zero = decision::preset("zero-one");
  zero.matrix = Tensor::matrix(2, 2, 0.0);
  const auto uz = decision::cost_to_utility(zero);
  for (double v : uz.matrix.data()) EXPECT_EQ(v, 1.0);
  auto bad = asym();
  bad.M = 0.5;
  EXPECT_THROW(decision::cost_to_utility(bad), ContractViolation);
}

TEST(ExpectedCost, AsymmetricExample) {
  const std::vector<double> q{0.8, 0.2};
  EXPECT_NEAR(decision::expected_cost(q, asym(), 0), 0.2, 1e-15);
  EXPECT_NEAR(decision::expected_cost(q, asym(), 1), 0.08, 1e-15);
  EXPECT_EQ(decision::bayes_decision(q, asym()), 1u);
  EXPECT_THROW(decision::expected_cost(q, asym(), 2), ContractViolation);
}

TEST(ExpectedCost, OneHotAndUniform) {
  const auto zo = decision::preset("zero-one", 4);
  const std::vector<double> onehot{0, 0, 1, 0}, uniform(4, 0.25);
  for (std::size_t h = 0; h < 4; ++h) {
    EXPECT_EQ(decision::expected_cost(onehot, zo, h), zo.cost(h, 2));
    EXPECT_DOUBLE_EQ(decision::expected_cost(uniform, zo, h), 0.75);
  }
}

TEST(BayesDecision, PositiveThreshold) {
  // Positive is chosen iff q_pos > 1/11.
  for (double qp : {0.0, 0.05, 0.09, 0.0909, 0.0910, 0.1, 0.15, 0.5, 1.0}) {
    const std::vector<double> q{1.0 - qp, qp};
    EXPECT_EQ(decision::bayes_decision(q, asym()), qp > 1.0 / 11.0 ? 1u : 0u) << qp;
  }
}

TEST(BayesDecision, ZeroOneIsArgmax) {
  std::mt19937_64 rng(1);
  const auto zo = decision::preset("zero-one", 5);
  for (int i = 0; i < 200; ++i) {
    const auto q = oracle::random_simplex(rng, 5);
    EXPECT_EQ(decision::bayes_decision(q, zo),
              static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin()));
  }
}

TEST(BayesDecision, MatchesEnumerationAndUtilityArgmax) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 2 + trial % 4, c = 2 + trial % 3;
    const auto cost = random_cost(rng, h, c);
    const auto util = decision::cost_to_utility(cost);
    for (int i = 0; i < 40; ++i) {
      const auto q = oracle::random_simplex(rng, c);
      const auto d = decision::bayes_decision(q, cost);
      EXPECT_EQ(d, oracle::brute_bayes(q, cost.matrix));
      EXPECT_EQ(d, decision::bayes_decision_utility(q, util));
    }
  }
}

TEST(BayesDecision, ConstantShiftInvariant) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto cost = random_cost(rng, 4, 3);
    auto shifted = cost;
    for (double& v : shifted.matrix.data()) v += 0.75;
    shifted.M += 0.75;
    for (int i = 0; i < 30; ++i) {
      const auto q = oracle::random_simplex(rng, 3);
      EXPECT_EQ(decision::bayes_decision(q, cost), decision::bayes_decision(q, shifted));
    }
  }
}

TEST(BayesDecision, TiesPreferLowestIndex) {
  const std::vector<double> q{0.5, 0.5};
  EXPECT_EQ(decision::bayes_decision(q, decision::preset("zero-one")), 0u);
}

TEST(Selective, ReferOrClassify) {
  const auto s = decision::selective_extend(decision::preset("zero-one"), 0.3);
  ASSERT_EQ(s.num_decisions(), 3u);
  EXPECT_EQ(s.referral_index, std::optional<std::size_t>(2));
  EXPECT_EQ(decision::bayes_decision(std::vector<double>{0.6, 0.4}, s), 2u);
  EXPECT_EQ(decision::bayes_decision(std::vector<double>{0.8, 0.2}, s), 0u);
  const auto s0 = decision::selective_extend(decision::preset("zero-one"), 0.0);
  EXPECT_EQ(decision::bayes_decision(std::vector<double>{0.0, 1.0}, s0), 1u);
  EXPECT_EQ(decision::bayes_decision(std::vector<double>{0.5, 0.5}, s0), 2u);
  EXPECT_DOUBLE_EQ(decision::selective_extend(decision::preset("zero-one"), 3.0).M, 3.0);
  EXPECT_THROW(decision::selective_extend(decision::preset("zero-one"), -0.1), ContractViolation);
}

TEST(Selective, ReferralRateMonotoneInR) {
  std::mt19937_64 rng(4);
  const Tensor q = oracle::random_table(rng, 300, 3);
  std::vector<nn::Label> y(300);
  for (std::size_t i = 0; i < 300; ++i) y[i] = i % 3;
  double prev = 2.0;
  for (double r = 0.0; r <= 1.0; r += 0.05) {
    const auto m = decision::decision_metrics(q, y, decision::selective_extend(decision::preset("zero-one", 3), r));
    EXPECT_LE(m.referral_rate, prev);
    prev = m.referral_rate;
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(Gain, PlusCostIsOffset) {
  std::mt19937_64 rng(5);
  const auto cost = random_cost(rng, 3, 4);
  const auto util = decision::cost_to_utility(cost);
  for (int i = 0; i < 50; ++i) {
    const auto q = oracle::random_simplex(rng, 4);
    for (std::size_t h = 0; h < 3; ++h) {
      EXPECT_NEAR(decision::conditional_gain(q, util, h) + decision::expected_cost(q, cost, h), cost.M, 1e-14);
    }
  }
}

TEST(Metrics, PerfectDecisions) {
  const Tensor p = Tensor::from_rows({{0.9, 0.1}, {0.2, 0.8}, {1.0, 0.0}});
  const std::vector<nn::Label> y{0, 1, 0};
  const auto m = decision::decision_metrics(p, y, decision::preset("zero-one"));
  EXPECT_EQ(m.avg_cost, 0.0);
  EXPECT_EQ(m.accuracy, std::optional<double>(1.0));
  EXPECT_EQ(m.referral_rate, 0.0);
  EXPECT_NEAR(m.nll, -(std::log(0.9) + std::log(0.8) + std::log(1.0)) / 3.0, 1e-15);
}

TEST(Metrics, AllReferredGivesUndefinedAccuracy) {
  const Tensor p = Tensor::from_rows({{0.5, 0.5}, {0.5, 0.5}});
  const std::vector<nn::Label> y{0, 1};
  const auto m = decision::decision_metrics(p, y, decision::selective_extend(decision::preset("zero-one"), 0.1));
  EXPECT_FALSE(m.accuracy.has_value());
  EXPECT_EQ(m.referral_rate, 1.0);
  EXPECT_NEAR(m.avg_cost, 0.1, 1e-15);
}

TEST(Metrics, AsymmetricRealisedCost) {
  const Tensor p = Tensor::from_rows({{0.95, 0.05}, {0.8, 0.2}, {0.8, 0.2}});
  const std::vector<nn::Label> y{1, 0, 1};
  // Decisions: neg, pos, pos -> costs 1, 0.1, 0
  const auto m = decision::decision_metrics(p, y, asym());
  EXPECT_NEAR(m.avg_cost, 1.1 / 3.0, 1e-15);
  EXPECT_NEAR(*m.accuracy, 1.0 / 3.0, 1e-15);
}

TEST(Presets, AllValidAndNamed) {
  for (const auto& name : decision::preset_names()) {
    const auto c = decision::preset(name);
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_GE(c.M, c.max_entry()) << name;
  }
  const auto cifar = decision::preset("cifar-auto-truck");
  EXPECT_EQ(cifar.num_classes(), 10u);
  EXPECT_THROW(decision::preset("nope"), ContractViolation);
}

TEST(Offset, ResolveRules) {
  EXPECT_DOUBLE_EQ(decision::resolve_offset(asym(), std::nullopt), 1.25);
  EXPECT_DOUBLE_EQ(decision::resolve_offset(asym(), 3.0), 3.0);
  EXPECT_THROW(decision::resolve_offset(asym(), 1.0), ContractViolation);
}

TEST(CostJson, RoundTrip) {
  const auto s = decision::selective_extend(decision::preset("zero-one", 3), 0.25);
  const auto back = decision::cost_from_json(decision::to_json(s));
  EXPECT_EQ(back.matrix, s.matrix);
  EXPECT_EQ(back.decisions, s.decisions);
  EXPECT_EQ(back.classes, s.classes);
  EXPECT_EQ(back.M, s.M);
  EXPECT_EQ(back.referral_index, s.referral_index);
  EXPECT_THROW(decision::cost_from_json(Json{{"matrix", 3}}), ParseError);
}
