#include "posthoc/samplers/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "posthoc/core/error.hpp"

namespace posthoc::sampling {

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw ContractViolation("unknown step schedule '" + name + "'");
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::kCosine ? "cosine" : "constant"; }

double scheduled_step(ScheduleKind kind, double base, std::size_t k, std::size_t total) {
  if (kind == ScheduleKind::kConstant || total == 0) return base;
  const double frac = static_cast<double>(std::min(k, total)) / static_cast<double>(total);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * frac));
}

void MomentumSgd::step(ParamVector& theta, const ParamVector& grad, double lr) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    buf_[i] = momentum_ * buf_[i] + grad[i];
    theta[i] -= lr * buf_[i];
  }
}

void Adam::step(ParamVector& theta, const ParamVector& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    theta[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

MinibatchCycler::MinibatchCycler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_(std::min(batch_size, n)), order_(n), rng_(seed) {
  require(n > 0, "minibatch cycler over an empty dataset");
  require(batch_size > 0, "minibatch size must be positive");
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
}

std::vector<std::size_t> MinibatchCycler::next() {
  std::vector<std::size_t> out;
  out.reserve(batch_);
  while (out.size() < batch_) {
    if (pos_ == n_) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

void check_finite(const ParamVector& v, const std::string& what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw DivergenceError(what + ": non-finite value at coordinate " + std::to_string(i));
  }
}

}  // namespace posthoc::sampling
