#include <cmath>
#include <memory>

#include "posthoc/core/error.hpp"
#include "posthoc/samplers/samplers.hpp"

namespace posthoc::sampling {

void SghmcConfig::validate() const {
  require(step_size >= 0.0 && std::isfinite(step_size), "SGHMC step size must be >= 0");
  require(friction > 0.0 && friction <= 1.0, "SGHMC friction eta must lie in (0, 1]");
  require(gamma_hat >= 0.0 && friction - gamma_hat > 0.0, "SGHMC requires 0 <= gamma_hat < eta");
  require(thinning >= 1, "SGHMC thinning must be >= 1");
  require(batch_size >= 1, "SGHMC batch size must be >= 1");
}

SghmcConfig SghmcConfig::from_momentum(double lr, double momentum, std::size_t n_total) {
  require(n_total > 0, "from_momentum: empty dataset");
  SghmcConfig c;
  c.step_size = lr / static_cast<double>(n_total);
  c.friction = 1.0 - momentum;
  return c;
}

Json to_json(const SghmcConfig& c) {
  return Json{{"step_size", c.step_size},         {"schedule", to_string(c.schedule)},
              {"friction", c.friction},           {"gamma_hat", c.gamma_hat},
              {"burn_in", c.burn_in},             {"thinning", c.thinning},
              {"total_samples", c.total_samples}, {"batch_size", c.batch_size},
              {"seed", c.seed},                   {"inject_noise", c.inject_noise}};
}

SghmcConfig sghmc_config_from_json(const Json& j) {
  SghmcConfig c;
  c.step_size = j.value("step_size", c.step_size);
  c.schedule = parse_schedule(j.value("schedule", std::string("constant")));
  c.friction = j.value("friction", c.friction);
  c.gamma_hat = j.value("gamma_hat", c.gamma_hat);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.thinning = j.value("thinning", c.thinning);
  c.total_samples = j.value("total_samples", c.total_samples);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.inject_noise = j.value("inject_noise", c.inject_noise);
  return c;
}

SamplerState init_state(ParamVector theta, std::uint64_t noise_seed) {
  SamplerState s;
  s.velocity.assign(theta.size(), 0.0);
  s.theta = std::move(theta);
  s.rng.seed(noise_seed);
  return s;
}

void advance_position(SamplerState& state) {
  for (std::size_t i = 0; i < state.theta.size(); ++i) state.theta[i] += state.velocity[i];
}

void update_velocity(SamplerState& state, const ParamVector& grad, double step, const SghmcConfig& cfg) {
  require(grad.size() == state.theta.size(), "SGHMC gradient length does not match theta");
  check_finite(grad, "SGHMC gradient at iteration " + std::to_string(state.iteration));
  const double eta = cfg.friction;
  const double noise = std::sqrt(2.0 * (eta - cfg.gamma_hat) * step);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < state.velocity.size(); ++i) {
    const double v = state.velocity[i];
    double next = v - step * grad[i] - eta * v;
    if (cfg.inject_noise) next += noise * normal(state.rng);
    state.velocity[i] = next;
  }
  ++state.iteration;
}

SamplerState sghmc_step(SamplerState state, const GradientOracle& grad, const SghmcConfig& cfg) {
  const double step = scheduled_step(cfg.schedule, cfg.step_size, state.iteration, cfg.total_iterations());
  advance_position(state);
  update_velocity(state, grad(state.theta), step, cfg);
  return state;
}

ChainStore run_dynamics(const GradientOracle& grad, const SghmcConfig& cfg, ParamVector init, const std::string& name,
                        const SampleObserver& observer) {
  cfg.validate();
  ChainStore chain;
  chain.meta.sampler = name;
  chain.meta.config = to_json(cfg);
  chain.meta.seed = cfg.seed;
  chain.meta.burn_in = cfg.burn_in;
  chain.meta.thinning = cfg.thinning;
  chain.samples.reserve(cfg.total_samples);

  SamplerState state = init_state(std::move(init), stream_seed(cfg.seed, Stream::kSampler));
  const std::size_t total = cfg.total_iterations();
  for (std::size_t k = 1; k <= total; ++k) {
    state = sghmc_step(std::move(state), grad, cfg);
    check_finite(state.theta, name + " position at iteration " + std::to_string(k));
    if (k <= cfg.burn_in) continue;
    const bool recorded = (k - cfg.burn_in) % cfg.thinning == 0;
    if (recorded) chain.samples.push_back(state.theta);
    if (observer) observer(k, state.theta, recorded);
  }
  chain.meta.iterations = total;
  return chain;
}

GradientOracle energy_oracle(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                             std::size_t batch_size, std::uint64_t seed) {
  require(train.labeled() && train.size() > 0, "sampler needs a non-empty labeled dataset");
  train.validate(spec.num_classes());
  auto cycler = std::make_shared<MinibatchCycler>(train.size(), batch_size, seed);
  return [spec, prior, &train, cycler](const ParamVector& theta) {
    const auto idx = cycler->next();
    const auto batch = data::subset(train, idx);
    return nn::potential_energy(spec, theta, prior, batch.x, batch.labels(), train.size()).grad;
  };
}

ChainStore run_chain(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                     const SghmcConfig& cfg, ParamVector init, const SampleObserver& observer) {
  require(init.size() == spec.param_count(), "run_chain: init length does not match the network");
  auto oracle = energy_oracle(spec, prior, train, cfg.batch_size, stream_seed(cfg.seed, Stream::kMinibatch));
  return run_dynamics(oracle, cfg, std::move(init), "sghmc", observer);
}

ChainStore sgld_chain(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                      SghmcConfig cfg, ParamVector init, const SampleObserver& observer) {
  cfg.friction = 1.0;
  cfg.gamma_hat = 0.0;
  require(init.size() == spec.param_count(), "sgld_chain: init length does not match the network");
  auto oracle = energy_oracle(spec, prior, train, cfg.batch_size, stream_seed(cfg.seed, Stream::kMinibatch));
  return run_dynamics(oracle, cfg, std::move(init), "sgld", observer);
}

GradientOracle lc_energy_oracle(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                                const decision::CostSpec& cost, std::size_t batch_size, std::uint64_t seed) {
  require(train.labeled() && train.size() > 0, "sampler needs a non-empty labeled dataset");
  train.validate(spec.num_classes());
  cost.validate();
  require(cost.num_classes() == spec.num_classes(), "LC-SGHMC: cost classes do not match the network");
  require(cost.M > cost.max_entry(), "LC-SGHMC: need M strictly above every cost entry (log utility)");
  const auto utility = decision::cost_to_utility(cost);

  auto cycler = std::make_shared<MinibatchCycler>(train.size(), batch_size, seed);
  return [spec, prior, &train, cost, utility, cycler](const ParamVector& theta) {
    const auto idx = cycler->next();
    const auto batch = data::subset(train, idx);
    ad::Tape tape;
    const auto params = nn::bind_params(tape, spec, theta);
    ad::Var energy = nn::potential_energy(spec, params, prior, tape.constant(batch.x), batch.labels(), train.size());

    // Decisions come from the current per-theta predictive. Points whose
    // utility row is constant contribute a constant and are left out.
    const ad::Tensor probs = nn::forward_probs(spec, theta, batch.x);
    const std::size_t c = spec.num_classes();
    std::vector<std::size_t> rows;
    std::vector<double> weights;
    for (std::size_t b = 0; b < probs.rows(); ++b) {
      const std::size_t h = decision::bayes_decision(probs.row(b), cost);
      const auto u = utility.matrix.row(h);
      bool constant = true;
      for (double v : u) constant = constant && v == u[0];
      if (constant) continue;
      rows.push_back(b);
      weights.insert(weights.end(), u.begin(), u.end());
    }
    if (!rows.empty()) {
      ad::Var x = tape.constant(ad::take_rows(batch.x, rows));
      ad::Var p = nn::forward_probs(spec, params, x);
      ad::Var weighted = ad::mul(p, tape.constant(ad::Tensor({rows.size(), c}, std::move(weights))));
      ad::Var gain = ad::log(ad::matmul(weighted, tape.constant(ad::Tensor::matrix(c, 1, 1.0))));
      const double factor = -static_cast<double>(train.size()) / static_cast<double>(idx.size());
      energy = ad::add(energy, ad::scale(ad::sum(gain), factor));
    }
    return nn::flatten_gradient(tape.backward(energy), params);
  };
}

ChainStore lc_sghmc_chain(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                          const decision::CostSpec& cost, const SghmcConfig& cfg, ParamVector init,
                          const SampleObserver& observer) {
  require(init.size() == spec.param_count(), "lc_sghmc_chain: init length does not match the network");
  auto oracle = lc_energy_oracle(spec, prior, train, cost, cfg.batch_size, stream_seed(cfg.seed, Stream::kMinibatch));
  auto chain = run_dynamics(oracle, cfg, std::move(init), "lc-sghmc", observer);
  chain.meta.config["utility_offset"] = cost.M;
  return chain;
}

}  // namespace posthoc::sampling
