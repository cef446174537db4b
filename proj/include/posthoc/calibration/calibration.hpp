#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posthoc/autodiff/tensor.hpp"
#include "posthoc/core/serialize.hpp"
#include "posthoc/decisions/decisions.hpp"
#include "posthoc/models/mlp.hpp"
#include "posthoc/predictive/predictive.hpp"

namespace posthoc::calib {

using ad::Tensor;
using nn::ParamVector;
using predictive::PredictiveTable;
using predictive::StudentModel;

// The loss-calibrated network q(. | x, lambda).
struct CorrectionModel {
  nn::MlpSpec spec;
  ParamVector lambda;

  Tensor predict(const Tensor& x) const { return nn::forward_probs(spec, lambda, x); }
};

enum class WarmStart { kStudent, kMap, kRandom };
enum class ObjectiveKind { kAmortized, kExact };
enum class OptimizerKind { kAdam, kMomentumSgd };
enum class DecisionSource { kCorrection, kReference };

WarmStart parse_warm_start(const std::string& s);
ObjectiveKind parse_objective(const std::string& s);
OptimizerKind parse_optimizer(const std::string& s);
DecisionSource parse_decision_source(const std::string& s);
std::string to_string(WarmStart w);
std::string to_string(ObjectiveKind o);
std::string to_string(OptimizerKind o);
std::string to_string(DecisionSource d);

struct CalibConfig {
  std::size_t batch_size = 64;
  std::size_t iterations = 500;
  double lr = 0.1;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double momentum = 0.9;  // momentum-sgd only
  WarmStart warm_start = WarmStart::kStudent;
  ObjectiveKind objective = ObjectiveKind::kAmortized;
  std::optional<double> M;  // defaults to 1.25 * max cost
  DecisionSource decision_source = DecisionSource::kCorrection;
  std::uint64_t seed = 0;

  void validate() const;
};

Json to_json(const CalibConfig& c);
CalibConfig calib_config_from_json(const Json& j);

// Value of the objective and its gradient in lambda. `infinite_rows` lists
// batch rows whose reference has a zero where q is positive (value = -inf).
struct ObjectiveValue {
  double value = 0.0;
  ParamVector grad;
  std::vector<std::size_t> infinite_rows;
};

// -sum_b sum_y q(y|x_b) l(c_b, y) / M - sum_b KL(q(.|x_b) || r_b) for given
// reference rows r; decisions are held fixed.
ObjectiveValue objective_rows(const CorrectionModel& q, const Tensor& x, const Tensor& reference_rows,
                              std::span<const std::size_t> decisions, const decision::CostSpec& cost, double M);

// Reference is the student evaluated on the batch.
ObjectiveValue objective_amortized(const CorrectionModel& q, const StudentModel& reference, const Tensor& x_batch,
                                   std::span<const std::size_t> decisions, const decision::CostSpec& cost, double M);

// Reference rows come from a precomputed table over D'; `batch` indexes both
// the table and `x_all`.
ObjectiveValue objective_exact(const CorrectionModel& q, const PredictiveTable& reference, const Tensor& x_all,
                               std::span<const std::size_t> batch, std::span<const std::size_t> decisions,
                               const decision::CostSpec& cost, double M);

std::vector<std::size_t> assign_decisions(const CorrectionModel& q, const Tensor& x_batch,
                                          const decision::CostSpec& cost);

// Everything calibrate needs besides the config. The correction network uses
// `spec`; `student`, `table` and `map_theta` are required according to the
// chosen objective and warm start.
struct CalibProblem {
  Tensor x;  // D'
  decision::CostSpec cost;
  nn::MlpSpec spec;
  std::optional<StudentModel> student;
  std::optional<PredictiveTable> table;
  std::optional<ParamVector> map_theta;
};

struct CalibResult {
  CorrectionModel model;
  std::vector<double> objective_trace;  // per iteration, before the step
  double M = 0.0;
};

CalibResult calibrate(const CalibProblem& problem, const CalibConfig& cfg);

// ------------------------------------------------------------------ diagnostics

struct GainDiagnostics {
  std::vector<double> log_gain;  // log Z_n
  std::vector<double> lower_bound;
  std::vector<double> gap;
  std::vector<double> Z;
  std::vector<std::size_t> decisions;
  std::vector<std::size_t> infinite_rows;  // zero utility under q mass

  double total_log_gain() const;
  double total_lower_bound() const;
  double total_gap() const;
};

// Bayes decisions under the reference rows.
std::vector<std::size_t> reference_decisions(const Tensor& reference_rows, const decision::CostSpec& cost);

// sum_n { E_q[log u(c_n, y)] - KL(q_n || p_n) }
double lower_bound_U(const Tensor& q_rows, const Tensor& reference_rows, const decision::UtilitySpec& utility,
                     std::span<const std::size_t> decisions);
// sum_n log sum_y p_n(y) u(c_n, y)
double log_gain(const Tensor& reference_rows, const decision::UtilitySpec& utility,
                std::span<const std::size_t> decisions);
// Per-point Z_n, log gain, bound and gap KL(q_n || p_n u(c_n, .) / Z_n);
// checks that the gaps sum to log_gain - U.
GainDiagnostics variational_gap(const Tensor& q_rows, const Tensor& reference_rows,
                                const decision::UtilitySpec& utility, std::span<const std::size_t> decisions);

// |sum_n E_q[log(M - l)] - sum_n E_q[log M - l / M]|
double taylor_residual(const Tensor& q_rows, std::span<const std::size_t> decisions, const decision::CostSpec& cost,
                       double M);

// One JSON object per data point.
std::string diagnostics_jsonl(const GainDiagnostics& d);

Json to_json(const CorrectionModel& m);
CorrectionModel correction_from_json(const Json& j);

}  // namespace posthoc::calib
