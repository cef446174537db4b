#include "posthoc/calibration/calibration.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "posthoc/core/error.hpp"
#include "posthoc/core/rng.hpp"
#include "posthoc/samplers/optim.hpp"

namespace posthoc::calib {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw ContractViolation(std::string("unknown ") + what + " '" + s + "'");
}

void check_rows(const Tensor& a, const Tensor& b, std::span<const std::size_t> decisions, const char* where) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(where) + ": shape mismatch " + ad::shape_string(a.shape()) + " vs " +
                            ad::shape_string(b.shape()));
  }
  require(decisions.size() == a.rows(), std::string(where) + ": one decision per row required");
}

}  // namespace

WarmStart parse_warm_start(const std::string& s) {
  return parse_enum<WarmStart>(s, {{"student", WarmStart::kStudent}, {"map", WarmStart::kMap}, {"random", WarmStart::kRandom}},
                               "warm start");
}
ObjectiveKind parse_objective(const std::string& s) {
  return parse_enum<ObjectiveKind>(s, {{"amortized", ObjectiveKind::kAmortized}, {"exact", ObjectiveKind::kExact}},
                                   "objective");
}
OptimizerKind parse_optimizer(const std::string& s) {
  return parse_enum<OptimizerKind>(s, {{"adam", OptimizerKind::kAdam}, {"momentum-sgd", OptimizerKind::kMomentumSgd}},
                                   "optimizer");
}
DecisionSource parse_decision_source(const std::string& s) {
  return parse_enum<DecisionSource>(
      s, {{"correction", DecisionSource::kCorrection}, {"reference", DecisionSource::kReference}}, "decision source");
}
std::string to_string(WarmStart w) {
  switch (w) {
    case WarmStart::kStudent: return "student";
    case WarmStart::kMap: return "map";
    case WarmStart::kRandom: return "random";
  }
  return "?";
}
std::string to_string(ObjectiveKind o) { return o == ObjectiveKind::kExact ? "exact" : "amortized"; }
std::string to_string(OptimizerKind o) { return o == OptimizerKind::kAdam ? "adam" : "momentum-sgd"; }
std::string to_string(DecisionSource d) { return d == DecisionSource::kReference ? "reference" : "correction"; }

void CalibConfig::validate() const {
  require(batch_size >= 1, "calibration batch size must be >= 1");
  require(lr > 0.0 && std::isfinite(lr), "calibration step size must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "calibration momentum must lie in [0, 1)");
}

Json to_json(const CalibConfig& c) {
  Json j{{"batch_size", c.batch_size},
         {"iterations", c.iterations},
         {"lr", c.lr},
         {"optimizer", to_string(c.optimizer)},
         {"momentum", c.momentum},
         {"warm_start", to_string(c.warm_start)},
         {"objective", to_string(c.objective)},
         {"decision_source", to_string(c.decision_source)},
         {"seed", c.seed}};
  j["M"] = c.M ? Json(*c.M) : Json(nullptr);
  return j;
}

CalibConfig calib_config_from_json(const Json& j) {
  CalibConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.iterations = j.value("iterations", c.iterations);
  c.lr = j.value("lr", c.lr);
  c.optimizer = parse_optimizer(j.value("optimizer", to_string(c.optimizer)));
  c.momentum = j.value("momentum", c.momentum);
  c.warm_start = parse_warm_start(j.value("warm_start", to_string(c.warm_start)));
  c.objective = parse_objective(j.value("objective", to_string(c.objective)));
  c.decision_source = parse_decision_source(j.value("decision_source", to_string(c.decision_source)));
  c.seed = j.value("seed", c.seed);
  if (j.contains("M") && !j["M"].is_null()) c.M = j["M"].get<double>();
  c.validate();
  return c;
}

// ------------------------------------------------------------------ objectives

ObjectiveValue objective_rows(const CorrectionModel& q, const Tensor& x, const Tensor& reference_rows,
                              std::span<const std::size_t> decisions, const decision::CostSpec& cost, double M) {
  const std::size_t c = q.spec.num_classes();
  require(reference_rows.rows() == x.rows() && reference_rows.cols() == c,
          "objective: reference rows " + ad::shape_string(reference_rows.shape()) + " do not match the batch");
  require(decisions.size() == x.rows(), "objective: one decision per batch row required");
  require(cost.num_classes() == c, "objective: cost classes do not match the correction network");
  require(M > 0.0, "objective: M must be positive");

  ObjectiveValue out;
  Tensor loss = Tensor::matrix(x.rows(), c);
  Tensor log_ref = Tensor::matrix(x.rows(), c);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    require(decisions[b] < cost.num_decisions(), "objective: decision index out of range");
    bool zero = false;
    for (std::size_t y = 0; y < c; ++y) {
      loss(b, y) = cost.cost(decisions[b], y) / M;
      const double r = reference_rows(b, y);
      zero = zero || r <= 0.0;
      log_ref(b, y) = r > 0.0 ? std::log(r) : 0.0;
    }
    if (zero) out.infinite_rows.push_back(b);
  }

  ad::Tape tape;
  const auto params = nn::bind_params(tape, q.spec, q.lambda);
  ad::Var lq = nn::log_probs(q.spec, params, tape.constant(x));
  ad::Var probs = ad::exp(lq);
  ad::Var expected = ad::sum(ad::mul(probs, tape.constant(loss)));
  ad::Var kl = ad::sum(ad::mul(probs, ad::sub(lq, tape.constant(log_ref))));
  ad::Var objective = ad::scale(ad::add(expected, kl), -1.0);
  out.grad = nn::flatten_gradient(tape.backward(objective), params);
  // softmax rows are strictly positive, so a zero reference entry sits under q mass
  out.value = out.infinite_rows.empty() ? objective.value().item() : -kInf;
  return out;
}

ObjectiveValue objective_amortized(const CorrectionModel& q, const StudentModel& reference, const Tensor& x_batch,
                                   std::span<const std::size_t> decisions, const decision::CostSpec& cost, double M) {
  return objective_rows(q, x_batch, reference.predict(x_batch), decisions, cost, M);
}

ObjectiveValue objective_exact(const CorrectionModel& q, const PredictiveTable& reference, const Tensor& x_all,
                               std::span<const std::size_t> batch, std::span<const std::size_t> decisions,
                               const decision::CostSpec& cost, double M) {
  require(reference.size() == x_all.rows(), "objective_exact: table rows do not match D'");
  for (std::size_t i : batch) require(i < x_all.rows(), "objective_exact: batch index out of range");
  return objective_rows(q, ad::take_rows(x_all, batch), ad::take_rows(reference.probs, batch), decisions, cost, M);
}

std::vector<std::size_t> assign_decisions(const CorrectionModel& q, const Tensor& x_batch,
                                          const decision::CostSpec& cost) {
  return decision::bayes_decisions(q.predict(x_batch), cost);
}

// ------------------------------------------------------------------ calibrate

CalibResult calibrate(const CalibProblem& p, const CalibConfig& cfg) {
  cfg.validate();
  p.spec.validate();
  p.cost.validate();
  require(p.x.rows() > 0, "calibrate: empty calibration set");
  require(p.x.cols() == p.spec.input_dim(), "calibrate: D' feature dim does not match the correction network");
  require(p.cost.num_classes() == p.spec.num_classes(), "calibrate: cost classes do not match the network");

  CalibResult out;
  out.M = decision::resolve_offset(p.cost, cfg.M);
  out.model.spec = p.spec;

  const bool exact = cfg.objective == ObjectiveKind::kExact;
  if (exact) {
    require(p.table.has_value(), "calibrate: exact objective needs a predictive table over D'");
    require(p.table->size() == p.x.rows() && p.table->num_classes() == p.spec.num_classes(),
            "calibrate: predictive table does not cover D'");
  } else {
    require(p.student.has_value(), "calibrate: amortized objective needs a student model");
  }

  switch (cfg.warm_start) {
    case WarmStart::kStudent:
      require(p.student.has_value(), "calibrate: student warm start needs a student model");
      require(p.student->spec == p.spec, "calibrate: student architecture differs from the correction network");
      out.model.lambda = p.student->omega;
      break;
    case WarmStart::kMap:
      require(p.map_theta.has_value(), "calibrate: map warm start needs MAP parameters");
      require(p.map_theta->size() == p.spec.param_count(), "calibrate: MAP parameters do not match the network");
      out.model.lambda = *p.map_theta;
      break;
    case WarmStart::kRandom:
      out.model.lambda = nn::init_params(p.spec, stream_seed(cfg.seed, Stream::kCalibration) ^ 1ULL);
      break;
  }
  if (cfg.iterations == 0) return out;

  sampling::MinibatchCycler cycler(p.x.rows(), cfg.batch_size, stream_seed(cfg.seed, Stream::kCalibration));
  sampling::Adam adam(out.model.lambda.size(), cfg.lr);
  sampling::MomentumSgd sgd(out.model.lambda.size(), cfg.momentum);
  ParamVector descent(out.model.lambda.size());

  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const auto idx = cycler.next();
    const Tensor xb = ad::take_rows(p.x, idx);
    const Tensor ref = exact ? ad::take_rows(p.table->probs, idx) : p.student->predict(xb);
    const auto decisions = cfg.decision_source == DecisionSource::kCorrection
                               ? assign_decisions(out.model, xb, p.cost)
                               : decision::bayes_decisions(ref, p.cost);
    const auto obj = objective_rows(out.model, xb, ref, decisions, p.cost, out.M);
    out.objective_trace.push_back(obj.value);
    if (!std::isfinite(obj.value)) {
      std::ostringstream msg;
      msg << "calibrate: non-finite objective at iteration " << t << " (trace:";
      const std::size_t from = out.objective_trace.size() > 5 ? out.objective_trace.size() - 5 : 0;
      for (std::size_t i = from; i < out.objective_trace.size(); ++i) msg << ' ' << out.objective_trace[i];
      msg << ")";
      throw DivergenceError(msg.str());
    }
    for (std::size_t i = 0; i < descent.size(); ++i) descent[i] = -obj.grad[i];
    sampling::check_finite(descent, "calibrate gradient");
    if (cfg.optimizer == OptimizerKind::kAdam) {
      adam.step(out.model.lambda, descent);
    } else {
      sgd.step(out.model.lambda, descent, cfg.lr);
    }
  }
  return out;
}

// ------------------------------------------------------------------ diagnostics

double GainDiagnostics::total_log_gain() const {
  double s = 0.0;
  for (double v : log_gain) s += v;
  return s;
}
double GainDiagnostics::total_lower_bound() const {
  double s = 0.0;
  for (double v : lower_bound) s += v;
  return s;
}
double GainDiagnostics::total_gap() const {
  double s = 0.0;
  for (double v : gap) s += v;
  return s;
}

std::vector<std::size_t> reference_decisions(const Tensor& reference_rows, const decision::CostSpec& cost) {
  return decision::bayes_decisions(reference_rows, cost);
}

GainDiagnostics variational_gap(const Tensor& q_rows, const Tensor& reference_rows,
                                const decision::UtilitySpec& utility, std::span<const std::size_t> decisions) {
  check_rows(q_rows, reference_rows, decisions, "variational_gap");
  require(utility.matrix.cols() == q_rows.cols(), "variational_gap: utility classes do not match the rows");
  GainDiagnostics d;
  const std::size_t c = q_rows.cols();
  for (std::size_t n = 0; n < q_rows.rows(); ++n) {
    const std::size_t h = decisions[n];
    require(h < utility.matrix.rows(), "variational_gap: decision index out of range");
    double z = 0.0;
    for (std::size_t y = 0; y < c; ++y) z += reference_rows(n, y) * utility.matrix(h, y);
    require(z > 0.0, "variational_gap: Z_n = 0 at row " + std::to_string(n));

    double e_log_u = 0.0, kl = 0.0, gap = 0.0;
    bool infinite = false;
    for (std::size_t y = 0; y < c; ++y) {
      const double qy = q_rows(n, y);
      if (qy == 0.0) continue;
      const double py = reference_rows(n, y);
      const double u = utility.matrix(h, y);
      if (u <= 0.0 || py <= 0.0) {
        infinite = true;
        continue;
      }
      const double lq = std::log(qy), lp = std::log(py), lu = std::log(u);
      e_log_u += qy * lu;
      kl += qy * (lq - lp);
      gap += qy * (lq - lp - lu + std::log(z));
    }
    d.decisions.push_back(h);
    d.Z.push_back(z);
    d.log_gain.push_back(std::log(z));
    if (infinite) {
      d.infinite_rows.push_back(n);
      d.lower_bound.push_back(-kInf);
      d.gap.push_back(kInf);
    } else {
      d.lower_bound.push_back(e_log_u - kl);
      d.gap.push_back(gap);
    }
  }
  if (d.infinite_rows.empty()) {
    const double lhs = d.total_log_gain() - d.total_lower_bound();
    const double rhs = d.total_gap();
    require(std::abs(lhs - rhs) <= 1e-9 * (1.0 + std::abs(d.total_log_gain()) + std::abs(d.total_lower_bound())),
            "variational_gap: gap identity violated");
  }
  return d;
}

double lower_bound_U(const Tensor& q_rows, const Tensor& reference_rows, const decision::UtilitySpec& utility,
                     std::span<const std::size_t> decisions) {
  check_rows(q_rows, reference_rows, decisions, "lower_bound_U");
  const std::size_t c = q_rows.cols();
  double total = 0.0;
  for (std::size_t n = 0; n < q_rows.rows(); ++n) {
    require(decisions[n] < utility.matrix.rows(), "lower_bound_U: decision index out of range");
    for (std::size_t y = 0; y < c; ++y) {
      const double qy = q_rows(n, y);
      if (qy == 0.0) continue;
      const double u = utility.matrix(decisions[n], y);
      const double py = reference_rows(n, y);
      if (u <= 0.0 || py <= 0.0) return -kInf;
      total += qy * (std::log(u) - std::log(qy) + std::log(py));
    }
  }
  return total;
}

double log_gain(const Tensor& reference_rows, const decision::UtilitySpec& utility,
                std::span<const std::size_t> decisions) {
  require(decisions.size() == reference_rows.rows(), "log_gain: one decision per row required");
  double total = 0.0;
  for (std::size_t n = 0; n < reference_rows.rows(); ++n) {
    total += std::log(decision::conditional_gain(reference_rows.row(n), utility, decisions[n]));
  }
  return total;
}

double taylor_residual(const Tensor& q_rows, std::span<const std::size_t> decisions, const decision::CostSpec& cost,
                       double M) {
  require(decisions.size() == q_rows.rows(), "taylor_residual: one decision per row required");
  require(M > cost.max_entry(), "taylor_residual: M must exceed every cost entry");
  double exact = 0.0, linear = 0.0;
  for (std::size_t n = 0; n < q_rows.rows(); ++n) {
    for (std::size_t y = 0; y < q_rows.cols(); ++y) {
      const double l = cost.cost(decisions[n], y);
      exact += q_rows(n, y) * std::log(M - l);
      linear += q_rows(n, y) * (std::log(M) - l / M);
    }
  }
  return std::abs(exact - linear);
}

std::string diagnostics_jsonl(const GainDiagnostics& d) {
  std::string out;
  for (std::size_t n = 0; n < d.Z.size(); ++n) {
    Json rec{{"n", n},
             {"decision", d.decisions[n]},
             {"Z", d.Z[n]},
             {"log_gain", d.log_gain[n]},
             {"lower_bound", std::isfinite(d.lower_bound[n]) ? Json(d.lower_bound[n]) : Json("-inf")},
             {"gap", std::isfinite(d.gap[n]) ? Json(d.gap[n]) : Json("inf")}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

Json to_json(const CorrectionModel& m) {
  return make_envelope("correction", Json{{"spec", predictive::spec_to_json(m.spec)}, {"params", encode_doubles(m.lambda)}});
}

CorrectionModel correction_from_json(const Json& j) {
  const auto s = predictive::student_from_json(j, "correction");
  return {s.spec, s.omega};
}

}  // namespace posthoc::calib
