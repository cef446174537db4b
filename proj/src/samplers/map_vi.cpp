#include <cmath>

#include "posthoc/core/error.hpp"
#include "posthoc/samplers/samplers.hpp"

namespace posthoc::sampling {

MapResult map_train(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train,
                    const MapConfig& cfg, std::optional<ParamVector> init) {
  spec.validate();
  prior.validate();
  require(train.labeled() && train.size() > 0, "map_train: needs a non-empty labeled dataset");
  train.validate(spec.num_classes());
  if (cfg.class_weights) cfg.class_weights->validate(spec.num_classes());

  MapResult out;
  out.theta = init ? std::move(*init) : nn::init_params(spec, stream_seed(cfg.seed, Stream::kInit));
  require(out.theta.size() == spec.param_count(), "map_train: init length does not match the network");
  if (cfg.epochs == 0) return out;

  const std::size_t n = train.size();
  MinibatchCycler cycler(n, cfg.batch_size, stream_seed(cfg.seed, Stream::kMap));
  const std::size_t steps_per_epoch = (n + cycler.batch_size() - 1) / cycler.batch_size();
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  MomentumSgd opt(out.theta.size(), cfg.momentum);
  const double inv_n = 1.0 / static_cast<double>(n);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      const auto batch = data::subset(train, cycler.next());
      nn::Objective obj;
      if (cfg.class_weights) {
        obj = nn::weighted_ce(spec, out.theta, batch.x, batch.labels(), *cfg.class_weights);
        double sq = 0.0;
        for (std::size_t i = 0; i < out.theta.size(); ++i) {
          sq += out.theta[i] * out.theta[i];
          obj.grad[i] += prior.precision * inv_n * out.theta[i];
        }
        obj.value += 0.5 * prior.precision * inv_n * sq;
      } else {
        obj = nn::potential_energy(spec, out.theta, prior, batch.x, batch.labels(), n);
        obj.value *= inv_n;
        for (double& g : obj.grad) g *= inv_n;
      }
      if (!std::isfinite(obj.value)) {
        throw DivergenceError("map_train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(s));
      }
      check_finite(obj.grad, "map_train gradient");
      opt.step(out.theta, obj.grad, scheduled_step(cfg.schedule, cfg.lr, step, total_steps));
      epoch_loss += obj.value;
    }
    out.epoch_loss.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
  }
  return out;
}

// ------------------------------------------------------------------ VI

namespace {

struct BoundVi {
  std::vector<ad::Var> means;
  std::vector<ad::Var> log_stds;
};

BoundVi bind_vi(ad::Tape& tape, const nn::MlpSpec& spec, const ViPosterior& post) {
  BoundVi b;
  std::size_t off = 0;
  for (const auto& shape : nn::param_shapes(spec)) {
    const std::size_t n = ad::shape_size(shape);
    b.means.push_back(tape.leaf(ad::Tensor(shape, {post.mean.begin() + off, post.mean.begin() + off + n})));
    b.log_stds.push_back(tape.leaf(ad::Tensor(shape, {post.log_std.begin() + off, post.log_std.begin() + off + n})));
    off += n;
  }
  return b;
}

ParamVector flatten(const ad::Gradients& g, const std::vector<ad::Var>& vars) {
  ParamVector out;
  for (ad::Var v : vars) {
    const auto d = g[v].data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

}  // namespace

double kl_to_prior(const ViPosterior& post, const nn::PriorConfig& prior) {
  prior.validate();
  const double tau = prior.precision;
  double kl = 0.0;
  for (std::size_t i = 0; i < post.mean.size(); ++i) {
    const double var = std::exp(2.0 * post.log_std[i]);
    kl += -post.log_std[i] - 0.5 * std::log(tau) + 0.5 * tau * (var + post.mean[i] * post.mean[i]) - 0.5;
  }
  return kl;
}

ElboEstimate elbo_estimate(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const ad::Tensor& x,
                           std::span<const nn::Label> y, std::size_t n_total, const ViPosterior& post,
                           const ParamVector& eps) {
  spec.validate();
  prior.validate();
  const std::size_t p = spec.param_count();
  require(post.mean.size() == p && post.log_std.size() == p && eps.size() == p,
          "elbo_estimate: posterior/noise length does not match the network");

  ad::Tape tape;
  const BoundVi vi = bind_vi(tape, spec, post);
  nn::BoundParams theta;
  std::size_t off = 0;
  std::vector<ad::Var> kl_terms;
  const auto shapes = nn::param_shapes(spec);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::size_t n = ad::shape_size(shapes[i]);
    ad::Var e = tape.constant(ad::Tensor(shapes[i], {eps.begin() + off, eps.begin() + off + n}));
    ad::Var w = ad::add(vi.means[i], ad::mul(ad::exp(vi.log_stds[i]), e));
    (i % 2 == 0 ? theta.weights : theta.biases).push_back(w);
    // -log s + (tau/2)(s^2 + m^2); constants added below
    ad::Var quad = ad::add(ad::exp(ad::scale(vi.log_stds[i], 2.0)), ad::mul(vi.means[i], vi.means[i]));
    kl_terms.push_back(ad::add(ad::scale(ad::sum(vi.log_stds[i]), -1.0), ad::scale(ad::sum(quad), 0.5 * prior.precision)));
    off += n;
  }
  ad::Var kl = kl_terms[0];
  for (std::size_t i = 1; i < kl_terms.size(); ++i) kl = ad::add(kl, kl_terms[i]);
  const double kl_const = static_cast<double>(p) * (-0.5 * std::log(prior.precision) - 0.5);

  ad::Var objective = ad::scale(kl, -1.0);
  if (!y.empty()) {
    require(y.size() == x.rows(), "elbo_estimate: label count does not match batch rows");
    require(n_total >= y.size(), "elbo_estimate: n_total smaller than the batch");
    nn::check_labels(y, spec.num_classes());
    ad::Var lp = nn::log_probs(spec, theta, tape.constant(x));
    ad::Var ll = ad::sum(ad::gather_rows(lp, std::vector<nn::Label>(y.begin(), y.end())));
    objective = ad::add(objective, ad::scale(ll, static_cast<double>(n_total) / static_cast<double>(y.size())));
  }
  const auto g = tape.backward(objective);
  return {objective.value().item() - kl_const, flatten(g, vi.means), flatten(g, vi.log_stds)};
}

ViResult vi_fit(const nn::MlpSpec& spec, const nn::PriorConfig& prior, const data::Dataset& train, const ViConfig& cfg,
                std::optional<ParamVector> init_mean) {
  spec.validate();
  prior.validate();
  if (train.size() > 0) {
    require(train.labeled(), "vi_fit: dataset must be labeled");
    train.validate(spec.num_classes());
  }
  const std::size_t p = spec.param_count();
  ViResult out;
  out.posterior.mean = init_mean ? std::move(*init_mean) : nn::init_params(spec, stream_seed(cfg.seed, Stream::kInit));
  require(out.posterior.mean.size() == p, "vi_fit: init length does not match the network");
  out.posterior.log_std.assign(p, cfg.init_log_std);

  Rng rng(stream_seed(cfg.seed, Stream::kVi));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::optional<MinibatchCycler> cycler;
  if (train.size() > 0) cycler.emplace(train.size(), cfg.batch_size, stream_seed(cfg.seed, Stream::kMinibatch));

  // One Adam over [mean, log_std].
  Adam opt(2 * p, cfg.lr);
  ParamVector packed(2 * p), grad(2 * p), eps(p);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (double& e : eps) e = normal(rng);
    ElboEstimate est;
    if (cycler) {
      const auto batch = data::subset(train, cycler->next());
      est = elbo_estimate(spec, prior, batch.x, batch.labels(), train.size(), out.posterior, eps);
    } else {
      est = elbo_estimate(spec, prior, ad::Tensor::matrix(0, spec.input_dim()), {}, 0, out.posterior, eps);
    }
    if (!std::isfinite(est.elbo)) throw DivergenceError("vi_fit: non-finite ELBO at iteration " + std::to_string(it));
    out.elbo_trace.push_back(est.elbo);
    for (std::size_t i = 0; i < p; ++i) {
      packed[i] = out.posterior.mean[i];
      packed[p + i] = out.posterior.log_std[i];
      grad[i] = -est.grad_mean[i];
      grad[p + i] = -est.grad_log_std[i];
    }
    opt.step(packed, grad);
    std::copy(packed.begin(), packed.begin() + p, out.posterior.mean.begin());
    std::copy(packed.begin() + p, packed.end(), out.posterior.log_std.begin());
  }
  return out;
}

ChainStore vi_sample(const ViPosterior& post, std::size_t count, std::uint64_t seed) {
  require(post.mean.size() == post.log_std.size(), "vi_sample: mean/log_std length mismatch");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ChainStore chain;
  chain.meta.sampler = "vi";
  chain.meta.seed = seed;
  chain.meta.thinning = 1;
  for (std::size_t s = 0; s < count; ++s) {
    ParamVector theta(post.mean.size());
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = post.mean[i] + std::exp(post.log_std[i]) * normal(rng);
    chain.samples.push_back(std::move(theta));
  }
  chain.meta.iterations = count;
  return chain;
}

}  // namespace posthoc::sampling
