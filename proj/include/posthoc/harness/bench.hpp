#pragma once

#include <cstddef>
#include <vector>

#include "posthoc/core/serialize.hpp"
#include "posthoc/decisions/decisions.hpp"
#include "posthoc/harness/config.hpp"
#include "posthoc/models/mlp.hpp"
#include "posthoc/samplers/chain_store.hpp"

namespace posthoc::harness {

struct ThroughputPoint {
  std::size_t t = 0;
  double amortized = 0.0;  // decisions per second, single forward pass
  double mc = 0.0;         // decisions per second, t-sample average
  std::vector<double> amortized_trials;
  std::vector<double> mc_trials;
};

struct BenchResult {
  std::vector<ThroughputPoint> points;
  std::size_t passes_per_trial = 1;

  // (max - min) / min of the amortized figures across t values.
  double amortized_spread() const;
  double ratio_at(std::size_t t) const;  // amortized / mc
};

// Times decisions over `x` in batches: one forward pass through the
// amortized model versus an MC predictive over the first t chain samples.
// Warm-up batches are excluded; each figure is the best of the trials, which
// run round-robin over t.
BenchResult bench_throughput(const nn::MlpSpec& amortized_spec, const nn::ParamVector& amortized_params,
                             const nn::MlpSpec& chain_spec, const sampling::ChainStore& chain, const ad::Tensor& x,
                             const decision::CostSpec& cost, const BenchConfig& cfg);

Json to_json(const BenchResult& r);

}  // namespace posthoc::harness
