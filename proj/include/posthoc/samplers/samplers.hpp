#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "posthoc/core/rng.hpp"
#include "posthoc/core/serialize.hpp"
#include "posthoc/data/dataset.hpp"
#include "posthoc/decisions/decisions.hpp"
#include "posthoc/models/mlp.hpp"
#include "posthoc/samplers/chain_store.hpp"
#include "posthoc/samplers/optim.hpp"

namespace posthoc::sampling {

// ------------------------------------------------------------------ MAP / SGD

struct MapConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  ScheduleKind schedule = ScheduleKind::kConstant;
  std::uint64_t seed = 0;
  // When set, minimises the class-weighted cross-entropy plus the prior
  // scaled per datum instead of U(theta)/N.
  std::optional<nn::ClassWeights> class_weights;
};

struct MapResult {
  ParamVector theta;
  std::vector<double> epoch_loss;  // mean per-datum loss of each epoch
};

// Minibatch SGD on U(theta)/N. Starts from `init` or from init_params(seed).
MapResult map_train(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                    const MapConfig& cfg, std::optional<ParamVector> init = {});

// ------------------------------------------------------------------ SGHMC

// Dynamics (position first, then velocity):
//   theta_k = theta_{k-1} + v_{k-1}
//   v_k     = v_{k-1} - a_k grad U(theta_k) - eta v_{k-1} + sqrt(2 (eta - gamma_hat) a_k) eps_k
struct SghmcConfig {
  double step_size = 1e-3;  // a_k, in units of the full-data energy
  ScheduleKind schedule = ScheduleKind::kConstant;
  double friction = 0.5;  // eta; the momentum factor is 1 - eta
  double gamma_hat = 0.0;
  std::size_t burn_in = 300;
  std::size_t thinning = 50;
  std::size_t total_samples = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool inject_noise = true;

  std::size_t total_iterations() const { return burn_in + thinning * total_samples; }
  void validate() const;

  // Maps a per-datum learning rate and a momentum factor (PyTorch-style
  // hyperparameters) onto this parameterisation: a = lr / n, eta = 1 - momentum.
  static SghmcConfig from_momentum(double lr, double momentum, std::size_t n_total);
};

Json to_json(const SghmcConfig& cfg);
SghmcConfig sghmc_config_from_json(const Json& j);

struct SamplerState {
  ParamVector theta;
  ParamVector velocity;
  std::size_t iteration = 0;
  Rng rng;
};

SamplerState init_state(ParamVector theta, std::uint64_t noise_seed);

// Stochastic gradient of the energy at theta (minibatching lives inside).
using GradientOracle = std::function<ParamVector(const ParamVector& theta)>;

void advance_position(SamplerState& state);
void update_velocity(SamplerState& state, const ParamVector& grad, double step, const SghmcConfig& cfg);
// One full iteration; the gradient is evaluated at the freshly moved theta.
SamplerState sghmc_step(SamplerState state, const GradientOracle& grad, const SghmcConfig& cfg);

// Called after every post-burn-in iteration; `recorded` marks the
// iterations kept in the chain.
using SampleObserver = std::function<void(std::size_t iteration, const ParamVector& theta, bool recorded)>;

ChainStore run_dynamics(const GradientOracle& grad, const SghmcConfig& cfg, ParamVector init, const std::string& name,
                        const SampleObserver& observer = {});

GradientOracle energy_oracle(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                             std::size_t batch_size, std::uint64_t seed);

ChainStore run_chain(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                     const SghmcConfig& cfg, ParamVector init, const SampleObserver& observer = {});

// SGHMC with eta = 1 and gamma_hat = 0.
ChainStore sgld_chain(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                      SghmcConfig cfg, ParamVector init, const SampleObserver& observer = {});

// Energy U(theta) - (N/|B|) sum_b log sum_y u(c_b, y) p(y | x_b, theta) with
// c_b the Bayes decision under p(. | x_b, theta) and u = cost.M - l.
// Requires cost.M strictly above every cost entry.
GradientOracle lc_energy_oracle(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                                const decision::CostSpec& cost, std::size_t batch_size, std::uint64_t seed);

ChainStore lc_sghmc_chain(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                          const decision::CostSpec& cost, const SghmcConfig& cfg, ParamVector init,
                          const SampleObserver& observer = {});

// ------------------------------------------------------------------ mean-field VI

struct ViPosterior {
  ParamVector mean;
  ParamVector log_std;
};

struct ViConfig {
  std::size_t iterations = 5000;
  double lr = 0.01;
  std::size_t batch_size = 32;
  double init_log_std = -3.0;
  std::uint64_t seed = 0;
};

struct ViResult {
  ViPosterior posterior;
  std::vector<double> elbo_trace;
};

struct ElboEstimate {
  double elbo = 0.0;
  ParamVector grad_mean;
  ParamVector grad_log_std;
};

// Single-draw reparameterised ELBO, theta = mean + exp(log_std) * eps, with
// the likelihood rescaled by n_total / |batch|. An empty batch gives -KL.
ElboEstimate elbo_estimate(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const ad::Tensor& x,
                           std::span<const nn::Label> y, std::size_t n_total, const ViPosterior& post,
                           const ParamVector& eps);

// KL(q || N(0, 1/tau)) in nats, summed over parameters.
double kl_to_prior(const ViPosterior& post, const nn::PriorConfig& prior);

ViResult vi_fit(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train, const ViConfig& cfg,
                std::optional<ParamVector> init_mean = {});
ChainStore vi_sample(const ViPosterior& post, std::size_t count, std::uint64_t seed);

}  // namespace posthoc::sampling
