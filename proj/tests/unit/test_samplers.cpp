#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "posthoc/core/error.hpp"
#include "posthoc/samplers/samplers.hpp"

using namespace posthoc;
using sampling::ParamVector;
using sampling::SghmcConfig;

namespace {

data::Dataset toy_data(std::size_t n, std::uint64_t seed) {
  data::SyntheticSpec s;
  s.n_neg = n - n / 4;
  s.n_pos = n / 4;
  s.calib_n = 1;
  s.seed = seed;
  return data::gen_synthetic(s).train;
}

SghmcConfig short_cfg(std::uint64_t seed) {
  SghmcConfig c;
  c.step_size = 1e-3;
  c.friction = 0.5;
  c.burn_in = 10;
  c.thinning = 5;
  c.total_samples = 8;
  c.batch_size = 8;
  c.seed = seed;
  return c;
}

const nn::MlpSpec kNet{{2, 2, 2}};

}  // namespace

TEST(Sghmc, HandComputedReduction) {
  SghmcConfig cfg;
  cfg.step_size = 0.1;
  cfg.friction = 1.0;
  cfg.inject_noise = false;
  auto grad = [](const ParamVector& t) { return ParamVector{t[0]}; };  // U = theta^2 / 2
  auto s = sampling::init_state({1.0}, 0);
  s = sampling::sghmc_step(std::move(s), grad, cfg);
  EXPECT_DOUBLE_EQ(s.theta[0], 1.0);
  EXPECT_DOUBLE_EQ(s.velocity[0], -0.1);
  s = sampling::sghmc_step(std::move(s), grad, cfg);
  EXPECT_DOUBLE_EQ(s.theta[0], 0.9);
}

TEST(Sghmc, ZeroStepDecaysVelocity) {
  SghmcConfig cfg;
  cfg.step_size = 0.0;
  cfg.friction = 0.25;
  cfg.inject_noise = false;
  auto grad = [](const ParamVector& t) { return ParamVector{5.0 * t[0]}; };
  auto s = sampling::init_state({0.0}, 0);
  s.velocity = {1.0};
  double theta = 0.0, v = 1.0;
  for (int k = 0; k < 10; ++k) {
    s = sampling::sghmc_step(std::move(s), grad, cfg);
    theta += v;
    v *= 0.75;
    EXPECT_DOUBLE_EQ(s.theta[0], theta);
    EXPECT_DOUBLE_EQ(s.velocity[0], v);
  }
}

TEST(Sghmc, NoiseOffSgldStepIsSgd) {
  SghmcConfig cfg;
  cfg.step_size = 0.03;
  cfg.friction = 1.0;
  cfg.inject_noise = false;
  auto grad = [](const ParamVector& t) { return ParamVector{std::sin(t[0]), t[1] * t[1]}; };
  auto s = sampling::init_state({0.4, -0.7}, 0);
  s = sampling::sghmc_step(std::move(s), grad, cfg);  // velocity now -a grad(theta_0)
  const ParamVector before = s.theta;
  s = sampling::sghmc_step(std::move(s), grad, cfg);
  // With eta = 1 the position moves by exactly one SGD increment.
  EXPECT_DOUBLE_EQ(s.theta[0], before[0] - 0.03 * std::sin(0.4));
  EXPECT_DOUBLE_EQ(s.theta[1], before[1] - 0.03 * 0.49);
  const auto g = grad(s.theta);
  for (int i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(s.velocity[i], -0.03 * g[i]);
}

TEST(Sghmc, NonFiniteGradientAborts) {
  SghmcConfig cfg;
  auto grad = [](const ParamVector&) { return ParamVector{std::nan("")}; };
  EXPECT_THROW(sampling::sghmc_step(sampling::init_state({0.0}, 0), grad, cfg), DivergenceError);
}

TEST(Sghmc, FromMomentumMapping) {
  const auto c = SghmcConfig::from_momentum(0.1, 0.5, 100);
  EXPECT_DOUBLE_EQ(c.step_size, 1e-3);
  EXPECT_DOUBLE_EQ(c.friction, 0.5);
  EXPECT_THROW(SghmcConfig::from_momentum(0.1, 1.0, 100).validate(), ContractViolation);
}

TEST(Chain, IterationCountsAndThinning) {
  const auto d = toy_data(40, 1);
  auto cfg = short_cfg(2);
  cfg.burn_in = 300;
  cfg.thinning = 50;
  cfg.total_samples = 100;
  std::size_t observed = 0, recorded = 0;
  const auto chain = sampling::run_chain(kNet, {}, d, cfg, nn::init_params(kNet, 3),
                                         [&](std::size_t k, const ParamVector&, bool rec) {
                                           EXPECT_GT(k, 300u);
                                           ++observed;
                                           recorded += rec;
                                         });
  EXPECT_EQ(chain.meta.iterations, 5300u);
  EXPECT_EQ(chain.size(), 100u);
  EXPECT_EQ(observed, 5000u);
  EXPECT_EQ(recorded, 100u);
}

TEST(Chain, NoSamplesStillBurnsIn) {
  auto cfg = short_cfg(2);
  cfg.total_samples = 0;
  const auto chain = sampling::run_chain(kNet, {}, toy_data(20, 1), cfg, nn::init_params(kNet, 3));
  EXPECT_TRUE(chain.empty());
  EXPECT_EQ(chain.meta.iterations, cfg.burn_in);
}

TEST(Chain, DeterministicUnderSeed) {
  const auto d = toy_data(30, 4);
  const auto a = sampling::run_chain(kNet, {}, d, short_cfg(5), nn::init_params(kNet, 1));
  const auto b = sampling::run_chain(kNet, {}, d, short_cfg(5), nn::init_params(kNet, 1));
  const auto c = sampling::run_chain(kNet, {}, d, short_cfg(6), nn::init_params(kNet, 1));
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
}

TEST(Chain, SgldIsSghmcWithUnitFriction) {
  const auto d = toy_data(30, 4);
  auto cfg = short_cfg(7);
  cfg.burn_in = 0;
  cfg.thinning = 1;
  cfg.total_samples = 50;
  const auto sgld = sampling::sgld_chain(kNet, {}, d, cfg, nn::init_params(kNet, 1));
  cfg.friction = 1.0;
  cfg.gamma_hat = 0.0;
  const auto sghmc = sampling::run_chain(kNet, {}, d, cfg, nn::init_params(kNet, 1));
  EXPECT_EQ(sgld.samples, sghmc.samples);
  EXPECT_EQ(sgld.meta.sampler, "sgld");
}

TEST(Chain, WrongInitLengthRejected) {
  EXPECT_THROW(sampling::run_chain(kNet, {}, toy_data(20, 1), short_cfg(1), ParamVector(3, 0.0)), ContractViolation);
}

TEST(Chain, JsonRoundTripIsBitwise) {
  const auto chain = sampling::run_chain(kNet, {}, toy_data(20, 1), short_cfg(9), nn::init_params(kNet, 2));
  const auto back = sampling::chain_from_json(sampling::to_json(chain));
  EXPECT_EQ(back.samples, chain.samples);
  EXPECT_EQ(back.meta.seed, chain.meta.seed);
  EXPECT_EQ(back.meta.iterations, chain.meta.iterations);
  EXPECT_EQ(back.meta.sampler, "sghmc");
  EXPECT_THROW(sampling::chain_from_json(Json{{"format_version", 1}, {"kind", "student"}}), ParseError);
}

// Mean inference for x_i ~ N(mu, 1) with prior mu ~ N(0, 1/tau): the posterior
// is N(sum x / (N + tau), 1 / (N + tau)).
TEST(Chain, ConjugateGaussianMoments) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(1.5, 1.0);
  double sx = 0.0;
  const std::size_t n = 20;
  for (std::size_t i = 0; i < n; ++i) sx += nd(rng);
  const double prec = n + 1.0, mean = sx / prec, var = 1.0 / prec;
  auto grad = [&](const ParamVector& t) { return ParamVector{prec * t[0] - sx}; };
  SghmcConfig cfg;
  cfg.step_size = 0.002;  // a * precision = 0.042; discretisation bias ~2% on the variance
  cfg.friction = 1.0;
  cfg.burn_in = 2000;
  cfg.thinning = 1;
  cfg.total_samples = 50000;
  cfg.seed = 3;
  const auto chain = sampling::run_dynamics(grad, cfg, {0.0}, "sgld");
  std::vector<double> xs;
  for (const auto& s : chain.samples) xs.push_back(s[0]);
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= xs.size() - 1;
  EXPECT_LT(std::abs(m - mean), 3.0 * oracle::batch_means_se(xs));
  EXPECT_LT(std::abs(v - var) / var, 0.15);
}

TEST(LcSghmc, ConstantUtilityMatchesSghmc) {
  const auto d = toy_data(30, 4);
  auto cost = decision::preset("zero-one");
  cost.matrix = ad::Tensor::matrix(2, 2, 0.0);
  cost.M = 1.0;
  const auto lc = sampling::lc_sghmc_chain(kNet, {}, d, cost, short_cfg(3), nn::init_params(kNet, 1));
  const auto plain = sampling::run_chain(kNet, {}, d, short_cfg(3), nn::init_params(kNet, 1));
  EXPECT_EQ(lc.samples, plain.samples);
}

TEST(LcSghmc, UtilityScaleInvariant) {
  const auto d = toy_data(30, 4);
  auto cost = decision::preset("synthetic-asymmetric");
  cost.M = 1.25;
  auto doubled = cost;
  for (double& v : doubled.matrix.data()) v *= 2.0;
  doubled.M *= 2.0;
  const auto a = sampling::lc_sghmc_chain(kNet, {}, d, cost, short_cfg(3), nn::init_params(kNet, 1));
  const auto b = sampling::lc_sghmc_chain(kNet, {}, d, doubled, short_cfg(3), nn::init_params(kNet, 1));
  EXPECT_EQ(a.samples, b.samples);
  const auto plain = sampling::run_chain(kNet, {}, d, short_cfg(3), nn::init_params(kNet, 1));
  EXPECT_NE(a.samples, plain.samples);
}

TEST(LcSghmc, RequiresPositiveUtility) {
  auto cost = decision::preset("synthetic-asymmetric");  // M equals the largest cost
  EXPECT_THROW(sampling::lc_sghmc_chain(kNet, {}, toy_data(20, 1), cost, short_cfg(1), nn::init_params(kNet, 1)),
               ContractViolation);
}

TEST(LcSghmc, GainTermGradient) {
  const auto d = toy_data(12, 8);
  auto cost = decision::preset("synthetic-asymmetric");
  cost.M = 1.25;
  const auto theta = nn::init_params(kNet, 5);
  // Full batch so the oracle is deterministic; decisions are locally constant.
  auto oracle = sampling::lc_energy_oracle(kNet, {}, d, cost, d.size(), 1);
  const auto g = oracle(theta);
  const auto decisions = decision::bayes_decisions(nn::forward_probs(kNet, theta, d.x), cost);
  const auto util = decision::cost_to_utility(cost);
  auto energy = [&](const ParamVector& t) {
    double u = nn::potential_energy(kNet, t, {}, d.x, d.labels(), d.size()).value;
    const auto p = nn::forward_probs(kNet, t, d.x);
    for (std::size_t b = 0; b < d.size(); ++b) {
      u -= std::log(decision::conditional_gain(p.row(b), util, decisions[b]));
    }
    return u;
  };
  EXPECT_LT(oracle::max_rel_err(g, oracle::fd_gradient(energy, theta)), 1e-5);
}

TEST(Map, ZeroEpochsReturnsInit) {
  sampling::MapConfig cfg;
  cfg.epochs = 0;
  const auto init = nn::init_params(kNet, 4);
  EXPECT_EQ(sampling::map_train(kNet, {}, toy_data(10, 1), cfg, init).theta, init);
}

TEST(Map, SeparablePairFitsExactly) {
  data::Dataset d;
  d.x = ad::Tensor::from_rows({{-1.0, -1.0}, {1.0, 1.0}});
  d.y = std::vector<nn::Label>{0, 1};
  sampling::MapConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 2;
  const auto r = sampling::map_train(nn::MlpSpec{{2, 2}}, {}, d, cfg);
  const auto dec = decision::bayes_decisions(nn::forward_probs(nn::MlpSpec{{2, 2}}, r.theta, d.x),
                                             decision::preset("zero-one"));
  EXPECT_EQ(dec, (std::vector<std::size_t>{0, 1}));
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Map, StrongPriorShrinksWeights) {
  const auto d = toy_data(40, 2);
  sampling::MapConfig cfg;
  cfg.epochs = 100;
  const auto norm = [](const ParamVector& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); };
  const auto weak = sampling::map_train(kNet, {1.0}, d, cfg).theta;
  cfg.lr = 1e-5;  // curvature of the prior term is tau / N = 25000
  const auto strong = sampling::map_train(kNet, {1e6}, d, cfg).theta;
  EXPECT_LT(norm(strong), norm(weak));
}

TEST(Vi, NoDataRecoversPrior) {
  data::Dataset empty;
  empty.x = ad::Tensor::matrix(0, 2);
  empty.y = std::vector<nn::Label>{};
  sampling::ViConfig cfg;
  cfg.iterations = 3000;
  cfg.lr = 0.02;
  const nn::MlpSpec spec{{2, 2}};
  const auto r = sampling::vi_fit(spec, {1.0}, empty, cfg);
  EXPECT_LT(sampling::kl_to_prior(r.posterior, {1.0}) / spec.param_count(), 1e-2);
}

TEST(Vi, ElboImproves) {
  sampling::ViConfig cfg;
  cfg.iterations = 2000;
  const auto r = sampling::vi_fit(kNet, {}, toy_data(60, 3), cfg);
  const auto& tr = r.elbo_trace;
  ASSERT_EQ(tr.size(), cfg.iterations);
  const double first = std::accumulate(tr.begin(), tr.begin() + 20, 0.0) / 20;
  const double last = std::accumulate(tr.end() - 20, tr.end(), 0.0) / 20;
  EXPECT_GT(last, first);
}

TEST(Vi, SamplesAreFiniteAndSeeded) {
  sampling::ViPosterior post{nn::init_params(kNet, 1), ParamVector(kNet.param_count(), -1.0)};
  const auto a = sampling::vi_sample(post, 100, 5);
  ASSERT_EQ(a.size(), 100u);
  for (const auto& s : a.samples) {
    for (double v : s) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_EQ(sampling::vi_sample(post, 100, 5).samples, a.samples);
}

TEST(Vi, ElboGradientMatchesFiniteDifferences) {
  const auto d = toy_data(6, 2);
  std::mt19937_64 rng(3);
  const nn::MlpSpec spec{{2, 3, 2}};
  const std::size_t p = spec.param_count();
  sampling::ViPosterior post{oracle::random_vec(rng, p), oracle::random_vec(rng, p, -1.5, -0.5)};
  const auto eps = oracle::random_vec(rng, p, -1.0, 1.0);
  const auto e = sampling::elbo_estimate(spec, {0.8}, d.x, d.labels(), 20, post, eps);
  auto f = [&](const std::vector<double>& ml) {
    sampling::ViPosterior q{{ml.begin(), ml.begin() + p}, {ml.begin() + p, ml.end()}};
    return sampling::elbo_estimate(spec, {0.8}, d.x, d.labels(), 20, q, eps).elbo;
  };
  std::vector<double> ml(post.mean);
  ml.insert(ml.end(), post.log_std.begin(), post.log_std.end());
  std::vector<double> g(e.grad_mean);
  g.insert(g.end(), e.grad_log_std.begin(), e.grad_log_std.end());
  EXPECT_LT(oracle::max_rel_err(g, oracle::fd_gradient(f, ml)), 1e-5);
}

TEST(Optim, CyclerVisitsEachIndexOncePerEpoch) {
  sampling::MinibatchCycler c(10, 4, 3);
  std::vector<int> seen(10, 0);
  // 10 indices in batches of 4: batch 3 rolls over into the next epoch.
  for (int b = 0; b < 2; ++b) {
    for (auto i : c.next()) ++seen[i];
  }
  const auto third = c.next();
  EXPECT_EQ(third.size(), 4u);
  for (std::size_t j = 0; j < 2; ++j) ++seen[third[j]];
  for (int s : seen) EXPECT_EQ(s, 1);
}
