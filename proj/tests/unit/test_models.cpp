#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "posthoc/core/error.hpp"
#include "posthoc/models/mlp.hpp"

using namespace posthoc;
using ad::Tensor;

namespace {

// Plain-loop forward pass in long double, independent of the tensor kernels.
std::vector<std::vector<long double>> ref_log_probs(const nn::MlpSpec& spec, const std::vector<double>& theta,
                                                    const Tensor& x) {
  std::vector<std::vector<long double>> out;
  for (std::size_t n = 0; n < x.rows(); ++n) {
    std::vector<long double> h(x.row(n).begin(), x.row(n).end());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
      const std::size_t in = spec.layer_sizes[l], o = spec.layer_sizes[l + 1];
      std::vector<long double> next(o, 0.0L);
      for (std::size_t j = 0; j < o; ++j) {
        long double s = theta[off + in * o + j];
        for (std::size_t i = 0; i < in; ++i) s += h[i] * theta[off + i * o + j];
        next[j] = (l + 2 < spec.layer_sizes.size()) ? std::max(0.0L, s) : s;
      }
      off += in * o + o;
      h = next;
    }
    long double mx = *std::max_element(h.begin(), h.end()), z = 0.0L;
    for (auto v : h) z += std::exp(v - mx);
    for (auto& v : h) v = v - mx - std::log(z);
    out.push_back(h);
  }
  return out;
}

}  // namespace

TEST(Mlp, ParamCountAndValidation) {
  EXPECT_EQ((nn::MlpSpec{{2, 50, 2}}.param_count()), 2u * 50 + 50 + 50 * 2 + 2);
  EXPECT_THROW((nn::MlpSpec{{3}}.validate()), ContractViolation);
  EXPECT_THROW((nn::MlpSpec{{3, 1}}.validate()), ContractViolation);
}

TEST(Mlp, ZeroParamsGiveUniformRows) {
  const nn::MlpSpec spec{{3, 4, 5}};
  const auto p = nn::forward_probs(spec, std::vector<double>(spec.param_count(), 0.0), Tensor::matrix(2, 3, 0.7));
  for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(Mlp, SingleLayerEqualLogits) {
  const nn::MlpSpec spec{{1, 2}};
  // W = [1, 0], b = [0, 0] maps x to logits [x, 0]
  const auto p = nn::forward_probs(spec, {1.0, 0.0, 0.0, 0.0}, Tensor::from_rows({{0.0}}));
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
}

TEST(Mlp, RowsSumToOneAndMatchReference) {
  std::mt19937_64 rng(7);
  const nn::MlpSpec spec{{3, 6, 4, 3}};
  const auto theta = oracle::random_vec(rng, spec.param_count(), -2, 2);
  const Tensor x({5, 3}, oracle::random_vec(rng, 15, -3, 3));
  const auto p = nn::forward_probs(spec, theta, x);
  const auto ref = ref_log_probs(spec, theta, x);
  for (std::size_t n = 0; n < 5; ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      s += p(n, k);
      EXPECT_NEAR(std::log(p(n, k)), static_cast<double>(ref[n][k]), 1e-12);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Mlp, TapeAndInferencePathsAgreeBitwise) {
  std::mt19937_64 rng(8);
  const nn::MlpSpec spec{{2, 5, 3}};
  const auto theta = oracle::random_vec(rng, spec.param_count());
  const Tensor x({4, 2}, oracle::random_vec(rng, 8));
  ad::Tape tape;
  const auto params = nn::bind_params(tape, spec, theta);
  EXPECT_EQ(nn::forward_probs(spec, params, tape.constant(x)).value(), nn::forward_probs(spec, theta, x));
  EXPECT_EQ(nn::forward_probs(spec, theta, x), nn::forward_probs(spec, theta, x));
}

TEST(Mlp, DimensionMismatchRejected) {
  const nn::MlpSpec spec{{2, 3, 2}};
  EXPECT_THROW(nn::forward_probs(spec, std::vector<double>(5, 0.0), Tensor::matrix(1, 2)), ContractViolation);
  EXPECT_THROW(nn::forward_probs(spec, std::vector<double>(spec.param_count(), 0.0), Tensor::matrix(1, 3)),
               ContractViolation);
}

TEST(Mlp, InitWithinFanInBound) {
  const nn::MlpSpec spec{{4, 9, 2}};
  const auto theta = nn::init_params(spec, 1);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const std::size_t in = spec.layer_sizes[l], o = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < in * o + o; ++i) EXPECT_LE(std::abs(theta[off + i]), bound);
    off += in * o + o;
  }
  EXPECT_EQ(nn::init_params(spec, 1), theta);
  EXPECT_NE(nn::init_params(spec, 2), theta);
}

TEST(PotentialEnergy, UniformSinglePoint) {
  const nn::MlpSpec spec{{2, 2}};
  const std::vector<double> zero(spec.param_count(), 0.0);
  const std::vector<nn::Label> y{1};
  const auto u = nn::potential_energy(spec, zero, nn::PriorConfig{1e-300}, Tensor::matrix(1, 2), y, 1);
  EXPECT_NEAR(u.value, std::log(2.0), 1e-15);
  const auto u2 = nn::potential_energy(spec, zero, nn::PriorConfig{2.0}, Tensor::matrix(1, 2), y, 1);
  EXPECT_DOUBLE_EQ(u2.value, std::log(2.0));
}

TEST(PotentialEnergy, MatchesDirectFormula) {
  std::mt19937_64 rng(9);
  const nn::MlpSpec spec{{2, 3, 2}};
  const auto theta = oracle::random_vec(rng, spec.param_count());
  const Tensor x({3, 2}, oracle::random_vec(rng, 6));
  const std::vector<nn::Label> y{0, 1, 1};
  const double tau = 0.7;
  const std::size_t n_total = 10;
  const auto ref = ref_log_probs(spec, theta, x);
  long double nll = 0.0L, sq = 0.0L;
  for (std::size_t b = 0; b < 3; ++b) nll -= ref[b][y[b]];
  for (double t : theta) sq += static_cast<long double>(t) * t;
  const long double expected = (10.0L / 3.0L) * nll + 0.5L * tau * sq;
  const auto u = nn::potential_energy(spec, theta, nn::PriorConfig{tau}, x, y, n_total);
  EXPECT_NEAR(u.value, static_cast<double>(expected), 1e-12);
}

TEST(PotentialEnergy, FullBatchNoPriorIsNll) {
  std::mt19937_64 rng(10);
  const nn::MlpSpec spec{{2, 4, 3}};
  const auto theta = oracle::random_vec(rng, spec.param_count());
  const Tensor x({4, 2}, oracle::random_vec(rng, 8));
  const std::vector<nn::Label> y{0, 2, 1, 2};
  const auto lp = nn::forward_log_probs(spec, theta, x);
  double nll = 0.0;
  for (std::size_t b = 0; b < 4; ++b) nll -= lp(b, y[b]);
  const auto u = nn::potential_energy(spec, theta, nn::PriorConfig{1e-300}, x, y, 4);
  EXPECT_NEAR(u.value, nll, 1e-12);
}

TEST(PotentialEnergy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  const nn::MlpSpec spec{{2, 2, 2}};
  const auto theta = oracle::random_vec(rng, spec.param_count());
  const Tensor x({3, 2}, oracle::random_vec(rng, 6, -2, 2));
  const std::vector<nn::Label> y{0, 1, 0};
  const nn::PriorConfig prior{1.3};
  auto f = [&](const std::vector<double>& t) { return nn::potential_energy(spec, t, prior, x, y, 7).value; };
  const auto g = nn::potential_energy(spec, theta, prior, x, y, 7).grad;
  EXPECT_LT(oracle::max_rel_err(g, oracle::fd_gradient(f, theta)), 1e-5);
}

TEST(PotentialEnergy, EmptyBatchRejected) {
  const nn::MlpSpec spec{{2, 2}};
  EXPECT_THROW(nn::potential_energy(spec, std::vector<double>(6, 0.0), {}, Tensor::matrix(0, 2), {}, 1),
               ContractViolation);
}

TEST(WeightedCe, UnitWeightsGiveMeanCe) {
  std::mt19937_64 rng(13);
  const nn::MlpSpec spec{{2, 3, 2}};
  const auto theta = oracle::random_vec(rng, spec.param_count());
  const Tensor x({4, 2}, oracle::random_vec(rng, 8));
  const std::vector<nn::Label> y{0, 1, 1, 0};
  const auto lp = nn::forward_log_probs(spec, theta, x);
  double ce = 0.0;
  for (std::size_t b = 0; b < 4; ++b) ce -= lp(b, y[b]) / 4.0;
  EXPECT_NEAR(nn::weighted_ce(spec, theta, x, y, {{1.0, 1.0}}).value, ce, 1e-14);
}

TEST(WeightedCe, HandEvaluatedUniform) {
  const nn::MlpSpec spec{{2, 2}};
  const std::vector<double> zero(spec.param_count(), 0.0);
  const std::vector<nn::Label> y{0, 1};
  EXPECT_NEAR(nn::weighted_ce(spec, zero, Tensor::matrix(2, 2), y, {{1.4, 1.0}}).value, std::log(2.0), 1e-15);
}

TEST(WeightedCe, ScaleInvariantAndDifferentiable) {
  std::mt19937_64 rng(14);
  const nn::MlpSpec spec{{2, 3, 2}};
  const auto theta = oracle::random_vec(rng, spec.param_count());
  const Tensor x({5, 2}, oracle::random_vec(rng, 10));
  const std::vector<nn::Label> y{0, 1, 1, 0, 1};
  const auto a = nn::weighted_ce(spec, theta, x, y, {{1.4, 1.0}});
  const auto b = nn::weighted_ce(spec, theta, x, y, {{2.8, 2.0}});
  EXPECT_NEAR(a.value, b.value, 1e-15);
  auto f = [&](const std::vector<double>& t) { return nn::weighted_ce(spec, t, x, y, {{1.4, 1.0}}).value; };
  EXPECT_LT(oracle::max_rel_err(a.grad, oracle::fd_gradient(f, theta)), 1e-5);
  EXPECT_THROW(nn::weighted_ce(spec, theta, x, y, {{1.0, 0.0}}), ContractViolation);
}
