#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posthoc/autodiff/tensor.hpp"
#include "posthoc/core/serialize.hpp"
#include "posthoc/models/mlp.hpp"

namespace posthoc::decision {

using ad::Tensor;
using nn::Label;

// Decision cost l(h, y): rows are decisions, columns are true classes.
// For selective problems the referral decision is the last row.
struct CostSpec {
  std::vector<std::string> decisions;
  std::vector<std::string> classes;
  Tensor matrix = Tensor::matrix(0, 0);
  double M = 0.0;  // bound with M >= sup l
  std::optional<std::size_t> referral_index;

  std::size_t num_decisions() const { return matrix.rows(); }
  std::size_t num_classes() const { return matrix.cols(); }
  double max_entry() const;
  double cost(std::size_t decision, std::size_t cls) const { return matrix(decision, cls); }
  void validate() const;
};

// u(h, y) = M - l(h, y)
struct UtilitySpec {
  Tensor matrix = Tensor::matrix(0, 0);
};

struct DecisionSet {
  std::vector<std::string> labels;
  std::optional<std::size_t> referral_index;
};

DecisionSet decision_set(const CostSpec& cost);

UtilitySpec cost_to_utility(const CostSpec& cost);
// Offset used wherever log-utilities are needed: explicit value if given,
// otherwise 1.25 * max cost entry. Must exceed every cost entry strictly.
double resolve_offset(const CostSpec& cost, std::optional<double> requested);
CostSpec with_offset(CostSpec cost, double M);

double expected_cost(std::span<const double> q_row, const CostSpec& cost, std::size_t decision);
std::vector<double> expected_costs(std::span<const double> q_row, const CostSpec& cost);

// Lowest-index minimiser of expected cost.
std::size_t bayes_decision(std::span<const double> q_row, const CostSpec& cost);
// Lowest-index maximiser of expected utility.
std::size_t bayes_decision_utility(std::span<const double> q_row, const UtilitySpec& utility);
std::vector<std::size_t> bayes_decisions(const Tensor& q, const CostSpec& cost);

// Appends a referral decision of constant cost r; M becomes max(M, r).
CostSpec selective_extend(const CostSpec& base, double r);

// sum_y u(decision, y) q(y)
double conditional_gain(std::span<const double> q_row, const UtilitySpec& utility, std::size_t decision);

struct DecisionMetrics {
  double avg_cost = 0.0;
  std::optional<double> accuracy;  // over non-referred points; empty if all referred
  double referral_rate = 0.0;
  double nll = 0.0;
};

DecisionMetrics decision_metrics(const Tensor& probs, std::span<const Label> labels, const CostSpec& cost);

// Built-in matrices: "synthetic-asymmetric", "zero-one", "selective",
// "mnist-38", "cifar-auto-truck", "camvid". `num_classes` applies to
// zero-one/selective, `referral_cost` to selective.
CostSpec preset(const std::string& name, std::size_t num_classes = 2, double referral_cost = 0.3);
std::vector<std::string> preset_names();

Json to_json(const CostSpec& cost);
CostSpec cost_from_json(const Json& j);
CostSpec load_cost(const std::filesystem::path& path);

}  // namespace posthoc::decision
