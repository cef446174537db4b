#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "posthoc/core/error.hpp"
#include "posthoc/predictive/predictive.hpp"

using namespace posthoc;
using ad::Tensor;
using predictive::StudentModel;

namespace {

// A 1 -> 2 network whose output at x = 0 is exactly softmax(bias).
std::vector<double> bias_only(double p0) { return {0.0, 0.0, std::log(p0), std::log(1.0 - p0)}; }

data::SyntheticSplits toy(std::uint64_t seed) {
  data::SyntheticSpec s;
  s.seed = seed;
  s.calib_n = 200;
  return data::gen_synthetic(s);
}

}  // namespace

TEST(McPredictive, AveragesSamples) {
  sampling::ChainStore chain;
  chain.samples = {bias_only(0.9), bias_only(0.7)};
  const auto t = predictive::mc_predictive(nn::MlpSpec{{1, 2}}, chain, Tensor::matrix(1, 1));
  EXPECT_NEAR(t.probs(0, 0), 0.8, 1e-15);
  EXPECT_NEAR(t.probs(0, 1), 0.2, 1e-15);
}

TEST(McPredictive, IdenticalCopiesAreExact) {
  std::mt19937_64 rng(1);
  const nn::MlpSpec spec{{2, 7, 3}};
  const auto theta = oracle::random_vec(rng, spec.param_count(), -2, 2);
  const Tensor x({9, 2}, oracle::random_vec(rng, 18, -3, 3));
  sampling::ChainStore chain;
  chain.samples.assign(37, theta);
  EXPECT_EQ(predictive::mc_predictive(spec, chain, x).probs, nn::forward_probs(spec, theta, x));
}

TEST(McPredictive, RowsNormalisedAndMatchDirectMean) {
  std::mt19937_64 rng(2);
  const nn::MlpSpec spec{{2, 5, 4}};
  const Tensor x({6, 2}, oracle::random_vec(rng, 12, -2, 2));
  sampling::ChainStore chain;
  for (int t = 0; t < 25; ++t) chain.samples.push_back(oracle::random_vec(rng, spec.param_count(), -3, 3));
  const auto table = predictive::mc_predictive(spec, chain, x);
  EXPECT_NO_THROW(table.validate());
  std::vector<long double> direct(24, 0.0L);
  for (const auto& th : chain.samples) {
    const auto p = nn::forward_probs(spec, th, x);
    for (std::size_t i = 0; i < 24; ++i) direct[i] += p[i] / 25.0L;
  }
  for (std::size_t i = 0; i < 24; ++i) EXPECT_NEAR(table.probs[i], static_cast<double>(direct[i]), 1e-15);
}

TEST(McPredictive, EmptyChainRejected) {
  EXPECT_THROW(predictive::mc_predictive(nn::MlpSpec{{1, 2}}, {}, Tensor::matrix(1, 1)), ContractViolation);
}

TEST(Kl, Examples) {
  const Tensor a = Tensor::from_rows({{0.3, 0.7}, {1.0, 0.0}});
  const Tensor b = Tensor::from_rows({{0.3, 0.7}, {0.5, 0.5}});
  const auto k = predictive::kl_rows(a, b);
  EXPECT_EQ(k[0], 0.0);
  EXPECT_NEAR(k[1], std::log(2.0), 1e-15);
}

TEST(Kl, MatchesHighPrecisionSum) {
  std::mt19937_64 rng(3);
  const Tensor p = oracle::random_table(rng, 50, 5, 0.01);
  const Tensor q = oracle::random_table(rng, 50, 5, 0.01);
  const auto k = predictive::kl_rows(p, q);
  for (std::size_t n = 0; n < 50; ++n) {
    EXPECT_NEAR(k[n], static_cast<double>(oracle::kl_ld(p.row(n).data(), q.row(n).data(), 5)), 1e-13);
    EXPECT_GE(k[n], 0.0);
  }
  EXPECT_THROW(predictive::kl_rows(p, Tensor::matrix(50, 4)), ContractViolation);
}

TEST(Kl, ZeroUnderMassIsInfiniteAndFlagged) {
  const Tensor p = Tensor::from_rows({{0.5, 0.5}, {0.5, 0.5}});
  const Tensor q = Tensor::from_rows({{0.5, 0.5}, {1.0, 0.0}});
  std::vector<std::size_t> bad;
  const auto k = predictive::kl_rows(p, q, &bad);
  EXPECT_TRUE(std::isinf(k[1]));
  EXPECT_EQ(bad, std::vector<std::size_t>{1});
}

TEST(Nll, Examples) {
  const std::vector<nn::Label> y{0, 1, 1};
  EXPECT_NEAR(predictive::predictive_nll(Tensor::matrix(3, 2, 0.5), y), std::log(2.0), 1e-15);
  const Tensor hot = Tensor::from_rows({{1, 0}, {0, 1}, {0, 1}});
  EXPECT_EQ(predictive::predictive_nll(hot, y), 0.0);
  std::vector<std::size_t> zero;
  EXPECT_TRUE(std::isinf(predictive::predictive_nll(hot, std::vector<nn::Label>{1, 1, 1}, &zero)));
  EXPECT_EQ(zero, std::vector<std::size_t>{0});
  std::mt19937_64 rng(4);
  const Tensor r = oracle::random_table(rng, 3, 2, 0.1);
  EXPECT_NEAR(predictive::predictive_nll(r, y), -(std::log(r(0, 0)) + std::log(r(1, 1)) + std::log(r(2, 1))) / 3.0,
              1e-15);
}

TEST(Distill, LossGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const nn::MlpSpec spec{{2, 4, 3}};
  const auto omega = oracle::random_vec(rng, spec.param_count());
  const Tensor x({5, 2}, oracle::random_vec(rng, 10, -2, 2));
  const Tensor teacher = oracle::random_table(rng, 5, 3, 0.05);
  const auto obj = predictive::distillation_loss(spec, omega, x, teacher);
  auto f = [&](const std::vector<double>& w) { return predictive::distillation_loss(spec, w, x, teacher).value; };
  EXPECT_LT(oracle::max_rel_err(obj.grad, oracle::fd_gradient(f, omega)), 1e-5);
  // Cross-entropy minus mean teacher entropy is the mean KL.
  double ent = 0.0;
  for (double v : teacher.data()) ent -= v * std::log(v) / 5.0;
  EXPECT_NEAR(obj.value - ent, predictive::mean_kl(teacher, nn::forward_probs(spec, omega, x)), 1e-13);
}

TEST(Distill, NoStepsKeepsInit) {
  const auto d = toy(1);
  const nn::MlpSpec spec{{2, 4, 2}};
  StudentModel init{spec, nn::init_params(spec, 3)};
  predictive::OnlineDistiller dist(spec, init, d.calib.x, {});
  EXPECT_EQ(dist.student().omega, init.omega);
  EXPECT_EQ(dist.steps(), 0u);
}

TEST(Distill, FrozenTeacherIsMatched) {
  const auto d = toy(2);
  const nn::MlpSpec spec{{2, 8, 2}};
  const auto teacher = nn::init_params(spec, 10);
  predictive::DistillConfig cfg;
  cfg.seed = 4;
  predictive::OnlineDistiller dist(spec, {spec, nn::init_params(spec, 11)}, d.calib.x, cfg);
  for (int k = 0; k < 3000; ++k) dist.observe(teacher);
  EXPECT_EQ(dist.steps(), 3000u);
  const double kl = predictive::mean_kl(nn::forward_probs(spec, teacher, d.calib.x), dist.student().predict(d.calib.x));
  EXPECT_LT(kl, 0.01);
}

TEST(Distill, OnlineRunImprovesOnInitAndIsDeterministic) {
  const auto d = toy(3);
  const nn::MlpSpec spec{{2, 10, 2}};
  sampling::SghmcConfig scfg = sampling::SghmcConfig::from_momentum(0.1, 0.5, d.train.size());
  scfg.burn_in = 200;
  scfg.thinning = 10;
  scfg.total_samples = 50;
  scfg.seed = 8;
  const auto init_theta = nn::init_params(spec, 12);
  auto run = [&](const sampling::SampleObserver& obs) {
    return sampling::run_chain(spec, {}, d.train, scfg, init_theta, obs);
  };
  StudentModel init{spec, nn::init_params(spec, 13)};
  predictive::DistillConfig cfg;
  cfg.seed = 8;
  const auto r = predictive::distill_online(spec, run, init, d.calib.x, cfg);
  EXPECT_EQ(r.loss_trace.size(), 500u);
  const auto mc = predictive::mc_predictive(spec, r.chain, d.calib.x);
  const double before = predictive::mean_kl(mc.probs, init.predict(d.calib.x));
  const double after = predictive::mean_kl(mc.probs, r.student.predict(d.calib.x));
  EXPECT_LT(after, before);
  EXPECT_EQ(predictive::distill_online(spec, run, init, d.calib.x, cfg).student.omega, r.student.omega);
}

TEST(Serialization, RoundTrips) {
  std::mt19937_64 rng(6);
  predictive::PredictiveTable t{oracle::random_table(rng, 4, 3), "chain:sghmc"};
  const auto tb = predictive::table_from_json(predictive::to_json(t));
  EXPECT_EQ(tb.probs, t.probs);
  EXPECT_EQ(tb.source, t.source);
  const nn::MlpSpec spec{{2, 3, 2}};
  StudentModel s{spec, oracle::random_vec(rng, spec.param_count())};
  const auto sb = predictive::student_from_json(predictive::to_json(s));
  EXPECT_EQ(sb.omega, s.omega);
  EXPECT_EQ(sb.spec.layer_sizes, spec.layer_sizes);
  EXPECT_THROW(predictive::student_from_json(predictive::to_json(t)), ParseError);
}
