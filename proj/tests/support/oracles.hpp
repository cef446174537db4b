#pragma once

// Independent reference computations shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "posthoc/autodiff/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;

// Central differences, step h.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-6) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const Vec& a, const Vec& b, double floor = 1e-8) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i], floor));
  return m;
}

// Relative error of the whole vector, |a - b| / max(|a|, |b|).
inline double norm_rel_err(const Vec& a, const Vec& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

inline Vec random_vec(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Random probability row with every entry >= floor / c.
inline Vec random_simplex(std::mt19937_64& rng, std::size_t c, double floor = 0.0) {
  std::exponential_distribution<double> e(1.0);
  Vec v(c);
  double s = 0.0;
  for (double& x : v) s += (x = e(rng));
  for (double& x : v) x = (1.0 - floor) * x / s + floor / static_cast<double>(c);
  return v;
}

inline posthoc::ad::Tensor random_table(std::mt19937_64& rng, std::size_t n, std::size_t c, double floor = 0.0) {
  posthoc::ad::Tensor t = posthoc::ad::Tensor::matrix(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec row = random_simplex(rng, c, floor);
    std::copy(row.begin(), row.end(), t.row(i).begin());
  }
  return t;
}

// Long-double log-sum for high-precision reference sums.
inline long double kl_ld(const double* p, const double* q, std::size_t c) {
  long double s = 0.0L;
  for (std::size_t k = 0; k < c; ++k) {
    if (p[k] == 0.0) continue;
    s += static_cast<long double>(p[k]) * (std::log(static_cast<long double>(p[k])) - std::log(static_cast<long double>(q[k])));
  }
  return s;
}

// Exhaustive argmin of expected cost over all decisions, lowest index on ties.
inline std::size_t brute_bayes(const Vec& q, const posthoc::ad::Tensor& cost) {
  std::size_t best = 0;
  long double best_cost = 0.0L;
  for (std::size_t h = 0; h < cost.rows(); ++h) {
    long double c = 0.0L;
    for (std::size_t y = 0; y < q.size(); ++y) c += static_cast<long double>(cost(h, y)) * q[y];
    if (h == 0 || c < best_cost) {
      best = h;
      best_cost = c;
    }
  }
  return best;
}

// Batch-means standard error of the mean.
inline double batch_means_se(const Vec& xs, std::size_t batches = 50) {
  const std::size_t len = xs.size() / batches;
  Vec means(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < len; ++i) means[b] += xs[b * len + i];
    means[b] /= static_cast<double>(len);
  }
  double m = 0.0;
  for (double v : means) m += v;
  m /= static_cast<double>(batches);
  double var = 0.0;
  for (double v : means) var += (v - m) * (v - m);
  var /= static_cast<double>(batches - 1);
  return std::sqrt(var / static_cast<double>(batches));
}

}  // namespace oracle
