#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "posthoc/autodiff/tape.hpp"
#include "posthoc/autodiff/tensor.hpp"

namespace posthoc::nn {

using ad::Tensor;
using Label = std::size_t;

// Fully connected ReLU network with a softmax output: [D, h_1, ..., C].
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t num_classes() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  std::size_t param_count() const;
  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Flat parameter vector. Layout per layer: weights [in x out] row-major,
// then biases [out].
using ParamVector = std::vector<double>;

struct PriorConfig {
  double precision = 1.0;  // isotropic zero-mean Gaussian over every parameter
  void validate() const;
};

struct ClassWeights {
  std::vector<double> weights;
  void validate(std::size_t num_classes) const;
};

// Value and gradient of a scalar objective in parameter space.
struct Objective {
  double value = 0.0;
  ParamVector grad;
};

// Parameters initialised as U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ParamVector init_params(const MlpSpec& spec, std::uint64_t seed);

// Per-layer weight and bias nodes on a tape.
struct BoundParams {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

BoundParams bind_params(ad::Tape& tape, const MlpSpec& spec, const ParamVector& theta);
ParamVector flatten_gradient(const ad::Gradients& grads, const BoundParams& params);
// Layer shapes, in layout order (W_1, b_1, W_2, ...).
std::vector<ad::Shape> param_shapes(const MlpSpec& spec);

ad::Var log_probs(const MlpSpec& spec, const BoundParams& params, ad::Var x);
ad::Var forward_probs(const MlpSpec& spec, const BoundParams& params, ad::Var x);
ad::Var prior_energy(const BoundParams& params, const PriorConfig& prior);

// Tape-free inference path; shares kernels with the tape so the results are
// bitwise equal to the recorded forward pass.
Tensor forward_log_probs(const MlpSpec& spec, const ParamVector& theta, const Tensor& x);
Tensor forward_probs(const MlpSpec& spec, const ParamVector& theta, const Tensor& x);

// (n_total/|B|) * -sum_b log p(y_b | x_b, theta) + (tau/2) |theta|^2
ad::Var potential_energy(const MlpSpec& spec, const BoundParams& params, const PriorConfig& prior, ad::Var x,
                         std::span<const Label> y, std::size_t n_total);
Objective potential_energy(const MlpSpec& spec, const ParamVector& theta, const PriorConfig& prior, const Tensor& x,
                           std::span<const Label> y, std::size_t n_total);

// sum_b w[y_b] * -log p(y_b|x_b) / sum_b w[y_b]
Objective weighted_ce(const MlpSpec& spec, const ParamVector& theta, const Tensor& x, std::span<const Label> y,
                      const ClassWeights& weights);

void check_labels(std::span<const Label> y, std::size_t num_classes);

}  // namespace posthoc::nn
