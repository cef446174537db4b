#include "posthoc/harness/bench.hpp"

#include <algorithm>
#include <chrono>

#include "posthoc/core/error.hpp"

namespace posthoc::harness {

namespace {

using Clock = std::chrono::steady_clock;

// Best trial. Interference from other processes only ever slows a trial
// down, so the fastest one is the most repeatable estimate of intrinsic cost.
double best(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

// Keeps results observable so the work is not optimised away.
volatile std::size_t g_sink = 0;

std::size_t amortized_batch(const nn::MlpSpec& spec, const nn::ParamVector& params, const ad::Tensor& xb,
                            const decision::CostSpec& cost) {
  const auto d = decision::bayes_decisions(nn::forward_probs(spec, params, xb), cost);
  return d.empty() ? 0 : d.back();
}

std::size_t mc_batch(const nn::MlpSpec& spec, const sampling::ChainStore& chain, std::size_t t, const ad::Tensor& xb,
                     const decision::CostSpec& cost) {
  ad::Tensor acc = nn::forward_probs(spec, chain.samples[0], xb);
  for (std::size_t s = 1; s < t; ++s) {
    const ad::Tensor p = nn::forward_probs(spec, chain.samples[s], xb);
    const double w = 1.0 / static_cast<double>(s + 1);
    for (std::size_t i = 0; i < p.size(); ++i) acc[i] += (p[i] - acc[i]) * w;
  }
  const auto d = decision::bayes_decisions(acc, cost);
  return d.empty() ? 0 : d.back();
}

}  // namespace

double BenchResult::amortized_spread() const {
  double lo = points.front().amortized, hi = lo;
  for (const auto& p : points) {
    lo = std::min(lo, p.amortized);
    hi = std::max(hi, p.amortized);
  }
  return (hi - lo) / lo;
}

double BenchResult::ratio_at(std::size_t t) const {
  for (const auto& p : points) {
    if (p.t == t) return p.amortized / p.mc;
  }
  throw ContractViolation("bench: no measurement at T = " + std::to_string(t));
}

BenchResult bench_throughput(const nn::MlpSpec& amortized_spec, const nn::ParamVector& amortized_params,
                             const nn::MlpSpec& chain_spec, const sampling::ChainStore& chain, const ad::Tensor& x,
                             const decision::CostSpec& cost, const BenchConfig& cfg) {
  require(x.rows() > 0, "bench: empty input");
  require(!cfg.t_values.empty() && cfg.trials >= 1, "bench: need T values and at least one trial");
  for (std::size_t t : cfg.t_values) {
    require(t >= 1 && t <= chain.size(), "bench: T = " + std::to_string(t) + " exceeds the chain length");
  }
  const std::size_t bs = std::min(cfg.batch_size, x.rows());
  std::vector<ad::Tensor> batches;
  for (std::size_t lo = 0; lo < x.rows(); lo += bs) {
    std::vector<std::size_t> rows;
    for (std::size_t i = lo; i < std::min(lo + bs, x.rows()); ++i) rows.push_back(i);
    batches.push_back(ad::take_rows(x, rows));
  }

  auto amortized_pass = [&] {
    for (const auto& b : batches) g_sink = g_sink + amortized_batch(amortized_spec, amortized_params, b, cost);
  };

  // Warm-up, then size the trials so each lasts at least min_trial_seconds.
  for (std::size_t i = 0; i < cfg.warmup_batches; ++i) {
    const auto& b = batches[i % batches.size()];
    g_sink = g_sink + amortized_batch(amortized_spec, amortized_params, b, cost);
    g_sink = g_sink + mc_batch(chain_spec, chain, 1, b, cost);
  }
  BenchResult out;
  {
    const auto t0 = Clock::now();
    amortized_pass();
    const double one = std::max(1e-9, std::chrono::duration<double>(Clock::now() - t0).count());
    out.passes_per_trial = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.min_trial_seconds / one) + 1);
  }
  const double decisions_per_trial = static_cast<double>(x.rows() * out.passes_per_trial);

  // Trials run round-robin over T so slow drift in machine speed is shared
  // evenly by every T instead of landing on whichever block ran last.
  for (std::size_t t : cfg.t_values) {
    ThroughputPoint pt;
    pt.t = t;
    out.points.push_back(std::move(pt));
  }
  for (std::size_t k = 0; k < cfg.trials; ++k) {
    for (auto& pt : out.points) {
      auto t0 = Clock::now();
      for (std::size_t p = 0; p < out.passes_per_trial; ++p) amortized_pass();
      pt.amortized_trials.push_back(decisions_per_trial / std::chrono::duration<double>(Clock::now() - t0).count());
      // MC trials use a single pass; their cost already scales with t.
      t0 = Clock::now();
      for (const auto& b : batches) g_sink = g_sink + mc_batch(chain_spec, chain, pt.t, b, cost);
      pt.mc_trials.push_back(static_cast<double>(x.rows()) / std::chrono::duration<double>(Clock::now() - t0).count());
    }
  }
  for (auto& pt : out.points) {
    pt.amortized = best(pt.amortized_trials);
    pt.mc = best(pt.mc_trials);
  }
  return out;
}

Json to_json(const BenchResult& r) {
  Json pts = Json::array();
  for (const auto& p : r.points) {
    pts.push_back(Json{{"T", p.t},
                       {"amortized_decisions_per_sec", p.amortized},
                       {"mc_decisions_per_sec", p.mc},
                       {"ratio", p.amortized / p.mc},
                       {"amortized_trials", p.amortized_trials},
                       {"mc_trials", p.mc_trials}});
  }
  return Json{{"points", pts}, {"amortized_spread", r.amortized_spread()}, {"passes_per_trial", r.passes_per_trial}};
}

}  // namespace posthoc::harness
