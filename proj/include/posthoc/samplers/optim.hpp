#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "posthoc/core/rng.hpp"
#include "posthoc/models/mlp.hpp"

namespace posthoc::sampling {

using nn::ParamVector;

enum class ScheduleKind { kConstant, kCosine };

ScheduleKind parse_schedule(const std::string& name);
std::string to_string(ScheduleKind kind);

// Step size at iteration k of `total`. Cosine decays base -> 0.
double scheduled_step(ScheduleKind kind, double base, std::size_t k, std::size_t total);

// Heavy-ball SGD: buf = momentum * buf + grad; theta -= lr * buf.
class MomentumSgd {
 public:
  MomentumSgd(std::size_t dim, double momentum) : momentum_(momentum), buf_(dim, 0.0) {}
  void step(ParamVector& theta, const ParamVector& grad, double lr);

 private:
  double momentum_;
  ParamVector buf_;
};

// Adam (Kingma & Ba) descent step.
class Adam {
 public:
  Adam(std::size_t dim, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(dim, 0.0), v_(dim, 0.0) {}
  void step(ParamVector& theta, const ParamVector& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  ParamVector m_, v_;
  std::size_t t_ = 0;
};

// Shuffled epoch cycling: every index is visited once per epoch, batches
// roll over into the next shuffled epoch when the current one runs out.
class MinibatchCycler {
 public:
  MinibatchCycler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();
  std::size_t batch_size() const { return batch_; }

 private:
  std::size_t n_, batch_, pos_ = 0;
  std::vector<std::size_t> order_;
  Rng rng_;
};

void check_finite(const ParamVector& v, const std::string& what);

}  // namespace posthoc::sampling
