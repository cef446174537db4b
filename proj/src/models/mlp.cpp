#include "posthoc/models/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "posthoc/core/error.hpp"

namespace posthoc::nn {

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
  return n;
}

void MlpSpec::validate() const {
  require(layer_sizes.size() >= 2, "MlpSpec needs at least an input and an output layer");
  require(num_classes() >= 2, "MlpSpec needs at least 2 output classes");
  for (std::size_t s : layer_sizes) require(s > 0, "MlpSpec layer size must be positive");
}

void PriorConfig::validate() const {
  require(precision > 0.0 && std::isfinite(precision), "prior precision must be positive");
}

void ClassWeights::validate(std::size_t num_classes) const {
  require(weights.size() == num_classes, "class weights: expected " + std::to_string(num_classes) + " entries, got " +
                                             std::to_string(weights.size()));
  for (double w : weights) require(w > 0.0, "class weights must be positive");
}

void check_labels(std::span<const Label> y, std::size_t num_classes) {
  for (Label l : y) {
    require(l < num_classes, "label " + std::to_string(l) + " out of range for " + std::to_string(num_classes) +
                                 " classes");
  }
}

std::vector<ad::Shape> param_shapes(const MlpSpec& spec) {
  std::vector<ad::Shape> shapes;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    shapes.push_back({spec.layer_sizes[l], spec.layer_sizes[l + 1]});
    shapes.push_back({spec.layer_sizes[l + 1]});
  }
  return shapes;
}

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ParamVector theta;
  theta.reserve(spec.param_count());
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t n = (spec.layer_sizes[l] + 1) * spec.layer_sizes[l + 1];
    for (std::size_t i = 0; i < n; ++i) theta.push_back(u(rng));
  }
  return theta;
}

namespace {

void check_theta(const MlpSpec& spec, const ParamVector& theta) {
  spec.validate();
  require(theta.size() == spec.param_count(), "parameter vector has " + std::to_string(theta.size()) +
                                                  " entries, spec needs " + std::to_string(spec.param_count()));
}

void check_input(const MlpSpec& spec, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != spec.input_dim()) {
    throw ContractViolation("input batch shape " + ad::shape_string(x.shape()) + " does not match input dim " +
                            std::to_string(spec.input_dim()));
  }
}

std::vector<Tensor> unpack(const MlpSpec& spec, const ParamVector& theta) {
  std::vector<Tensor> parts;
  std::size_t off = 0;
  for (const auto& shape : param_shapes(spec)) {
    const std::size_t n = ad::shape_size(shape);
    parts.emplace_back(shape, std::vector<double>(theta.begin() + off, theta.begin() + off + n));
    off += n;
  }
  return parts;
}

}  // namespace

BoundParams bind_params(ad::Tape& tape, const MlpSpec& spec, const ParamVector& theta) {
  check_theta(spec, theta);
  auto parts = unpack(spec, theta);
  BoundParams p;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    p.weights.push_back(tape.leaf(std::move(parts[2 * l])));
    p.biases.push_back(tape.leaf(std::move(parts[2 * l + 1])));
  }
  return p;
}

ParamVector flatten_gradient(const ad::Gradients& grads, const BoundParams& params) {
  ParamVector out;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    for (ad::Var v : {params.weights[l], params.biases[l]}) {
      const auto d = grads[v].data();
      out.insert(out.end(), d.begin(), d.end());
    }
  }
  return out;
}

ad::Var log_probs(const MlpSpec& spec, const BoundParams& params, ad::Var x) {
  check_input(spec, x.value());
  ad::Var h = x;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    h = ad::add(ad::matmul(h, params.weights[l]), params.biases[l]);
    if (l + 1 < spec.num_layers()) h = ad::relu(h);
  }
  return ad::log_softmax_rows(h);
}

ad::Var forward_probs(const MlpSpec& spec, const BoundParams& params, ad::Var x) {
  return ad::exp(log_probs(spec, params, x));
}

ad::Var prior_energy(const BoundParams& params, const PriorConfig& prior) {
  std::vector<ad::Var> all;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    all.push_back(params.weights[l]);
    all.push_back(params.biases[l]);
  }
  ad::Var total = ad::sum(ad::mul(all[0], all[0]));
  for (std::size_t i = 1; i < all.size(); ++i) total = ad::add(total, ad::sum(ad::mul(all[i], all[i])));
  return ad::scale(total, 0.5 * prior.precision);
}

Tensor forward_log_probs(const MlpSpec& spec, const ParamVector& theta, const Tensor& x) {
  check_theta(spec, theta);
  check_input(spec, x);
  const auto parts = unpack(spec, theta);
  Tensor h = x;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    h = ad::add(ad::matmul(h, parts[2 * l]), parts[2 * l + 1]);
    if (l + 1 < spec.num_layers()) h = ad::relu(h);
  }
  return ad::log_softmax_rows(h);
}

Tensor forward_probs(const MlpSpec& spec, const ParamVector& theta, const Tensor& x) {
  return ad::exp(forward_log_probs(spec, theta, x));
}

ad::Var potential_energy(const MlpSpec& spec, const BoundParams& params, const PriorConfig& prior, ad::Var x,
                         std::span<const Label> y, std::size_t n_total) {
  prior.validate();
  require(!y.empty(), "potential_energy: empty minibatch");
  require(y.size() == x.value().rows(), "potential_energy: label count does not match batch rows");
  require(n_total >= y.size(), "potential_energy: n_total smaller than the minibatch");
  check_labels(y, spec.num_classes());
  const double factor = -static_cast<double>(n_total) / static_cast<double>(y.size());
  ad::Var picked = ad::gather_rows(log_probs(spec, params, x), std::vector<Label>(y.begin(), y.end()));
  ad::Var nll = ad::scale(ad::sum(picked), factor);
  return ad::add(nll, prior_energy(params, prior));
}

Objective potential_energy(const MlpSpec& spec, const ParamVector& theta, const PriorConfig& prior, const Tensor& x,
                           std::span<const Label> y, std::size_t n_total) {
  ad::Tape tape;
  const auto params = bind_params(tape, spec, theta);
  ad::Var u = potential_energy(spec, params, prior, tape.constant(x), y, n_total);
  return {u.value().item(), flatten_gradient(tape.backward(u), params)};
}

Objective weighted_ce(const MlpSpec& spec, const ParamVector& theta, const Tensor& x, std::span<const Label> y,
                      const ClassWeights& weights) {
  weights.validate(spec.num_classes());
  require(!y.empty(), "weighted_ce: empty batch");
  require(y.size() == x.rows(), "weighted_ce: label count does not match batch rows");
  check_labels(y, spec.num_classes());
  ad::Tape tape;
  const auto params = bind_params(tape, spec, theta);
  Tensor w({y.size()});
  double total = 0.0;
  for (std::size_t b = 0; b < y.size(); ++b) {
    w[b] = weights.weights[y[b]];
    total += w[b];
  }
  ad::Var picked = ad::gather_rows(log_probs(spec, params, tape.constant(x)), std::vector<Label>(y.begin(), y.end()));
  ad::Var loss = ad::scale(ad::sum(ad::mul(picked, tape.constant(std::move(w)))), -1.0 / total);
  return {loss.value().item(), flatten_gradient(tape.backward(loss), params)};
}

}  // namespace posthoc::nn
