#include "posthoc/predictive/predictive.hpp"

#include <cmath>
#include <limits>

#include "posthoc/core/error.hpp"

namespace posthoc::predictive {

void PredictiveTable::validate() const {
  require(probs.rank() == 2, "predictive table must be a matrix");
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    double s = 0.0;
    for (double v : probs.row(n)) {
      require(v >= 0.0 && v <= 1.0, "predictive table entry outside [0, 1] in row " + std::to_string(n));
      s += v;
    }
    require(std::abs(s - 1.0) <= 1e-9, "predictive table row " + std::to_string(n) + " does not sum to 1");
  }
}

PredictiveTable mc_predictive(const nn::MlpSpec& spec, const sampling::ChainStore& chain, const Tensor& x) {
  require(!chain.empty(), "mc_predictive: empty chain");
  PredictiveTable out;
  out.probs = Tensor::matrix(x.rows(), spec.num_classes());
  // Running mean: exact for repeated samples, fixed order otherwise.
  std::size_t t = 0;
  for (const auto& theta : chain.samples) {
    const Tensor p = nn::forward_probs(spec, theta, x);
    ++t;
    if (t == 1) {
      out.probs = p;
      continue;
    }
    const double w = 1.0 / static_cast<double>(t);
    for (std::size_t i = 0; i < p.size(); ++i) out.probs[i] += (p[i] - out.probs[i]) * w;
  }
  out.source = "chain:" + chain.meta.sampler;
  return out;
}

std::vector<double> kl_rows(const Tensor& p, const Tensor& q, std::vector<std::size_t>* infinite_rows) {
  if (p.shape() != q.shape()) {
    throw ContractViolation("kl_rows: shape mismatch " + ad::shape_string(p.shape()) + " vs " +
                            ad::shape_string(q.shape()));
  }
  std::vector<double> out(p.rows(), 0.0);
  for (std::size_t n = 0; n < p.rows(); ++n) {
    double kl = 0.0;
    for (std::size_t k = 0; k < p.cols(); ++k) {
      const double pk = p(n, k);
      if (pk == 0.0) continue;
      const double qk = q(n, k);
      if (qk == 0.0) {
        kl = std::numeric_limits<double>::infinity();
        break;
      }
      kl += pk * (std::log(pk) - std::log(qk));
    }
    if (std::isinf(kl) && infinite_rows) infinite_rows->push_back(n);
    out[n] = kl;
  }
  return out;
}

double mean_kl(const Tensor& p, const Tensor& q) {
  const auto kl = kl_rows(p, q);
  double s = 0.0;
  for (double v : kl) s += v;
  return kl.empty() ? 0.0 : s / static_cast<double>(kl.size());
}

double predictive_nll(const Tensor& probs, std::span<const Label> labels, std::vector<std::size_t>* zero_rows) {
  require(probs.rows() == labels.size(), "predictive_nll: label count does not match table rows");
  nn::check_labels(labels, probs.cols());
  if (labels.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const double p = probs(n, labels[n]);
    if (p == 0.0 && zero_rows) zero_rows->push_back(n);
    s -= std::log(p);
  }
  return s / static_cast<double>(labels.size());
}

nn::Objective distillation_loss(const nn::MlpSpec& student_spec, const ParamVector& omega, const Tensor& x,
                                const Tensor& teacher_probs) {
  require(teacher_probs.rows() == x.rows() && teacher_probs.cols() == student_spec.num_classes(),
          "distillation_loss: teacher table shape " + ad::shape_string(teacher_probs.shape()) +
              " does not match the batch");
  require(x.rows() > 0, "distillation_loss: empty batch");
  ad::Tape tape;
  const auto params = nn::bind_params(tape, student_spec, omega);
  ad::Var lp = nn::log_probs(student_spec, params, tape.constant(x));
  ad::Var loss = ad::scale(ad::sum(ad::mul(lp, tape.constant(teacher_probs))), -1.0 / static_cast<double>(x.rows()));
  return {loss.value().item(), nn::flatten_gradient(tape.backward(loss), params)};
}

OnlineDistiller::OnlineDistiller(nn::MlpSpec teacher_spec, StudentModel init, const Tensor& calib_x,
                                 const DistillConfig& cfg)
    : teacher_spec_(std::move(teacher_spec)),
      student_(std::move(init)),
      calib_x_(calib_x),
      cfg_(cfg),
      cycler_(calib_x.rows(), cfg.batch_size, stream_seed(cfg.seed, Stream::kDistill)),
      opt_(student_.omega.size(), cfg.momentum),
      noise_(stream_seed(cfg.seed, Stream::kDistill) ^ 0x5bd1e995ULL) {
  require(student_.spec.num_classes() == teacher_spec_.num_classes(), "student and teacher class counts differ");
  require(student_.spec.input_dim() == teacher_spec_.input_dim(), "student and teacher input dims differ");
  require(student_.omega.size() == student_.spec.param_count(), "student parameters do not match its spec");
  require(cfg.jitter >= 0.0, "distillation jitter must be >= 0");
}

void OnlineDistiller::observe(const ParamVector& teacher_theta) {
  const auto idx = cycler_.next();
  Tensor x = ad::take_rows(calib_x_, idx);
  if (cfg_.jitter > 0.0) {
    std::normal_distribution<double> normal(0.0, cfg_.jitter);
    for (double& v : x.data()) v += normal(noise_);
  }
  const Tensor teacher = nn::forward_probs(teacher_spec_, teacher_theta, x);
  auto obj = distillation_loss(student_.spec, student_.omega, x, teacher);
  if (!std::isfinite(obj.value)) {
    throw DivergenceError("distillation: non-finite loss at step " + std::to_string(steps_));
  }
  opt_.step(student_.omega, obj.grad, cfg_.lr);
  losses_.push_back(obj.value);
  ++steps_;
}

sampling::SampleObserver OnlineDistiller::observer() {
  return [this](std::size_t, const ParamVector& theta, bool) { observe(theta); };
}

DistillResult distill_online(const nn::MlpSpec& teacher_spec, const SamplerRun& run, StudentModel init,
                             const Tensor& calib_x, const DistillConfig& cfg) {
  require(calib_x.rows() > 0, "distill_online: empty calibration set");
  OnlineDistiller distiller(teacher_spec, std::move(init), calib_x, cfg);
  DistillResult out;
  out.chain = run(distiller.observer());
  out.student = distiller.student();
  out.loss_trace = distiller.loss_trace();
  return out;
}

// ------------------------------------------------------------------ JSON

Json tensor_to_json(const Tensor& t) { return Json{{"shape", t.shape()}, {"data", encode_doubles(t.data())}}; }

Tensor tensor_from_json(const Json& j) {
  return Tensor(j.at("shape").get<ad::Shape>(), decode_doubles(j.at("data").get<std::string>()));
}

Json spec_to_json(const nn::MlpSpec& spec) { return Json{{"layer_sizes", spec.layer_sizes}, {"activation", "relu"}}; }

nn::MlpSpec spec_from_json(const Json& j) {
  nn::MlpSpec s{j.at("layer_sizes").get<std::vector<std::size_t>>()};
  s.validate();
  return s;
}

Json to_json(const PredictiveTable& t) {
  return make_envelope("predictive", Json{{"source", t.source}, {"probs", tensor_to_json(t.probs)}});
}

PredictiveTable table_from_json(const Json& j) {
  open_envelope(j, "predictive");
  try {
    PredictiveTable t;
    t.source = j.value("source", std::string());
    t.probs = tensor_from_json(j.at("probs"));
    t.validate();
    return t;
  } catch (const Json::exception& e) {
    throw ParseError("predictive", "schema", e.what());
  }
}

Json to_json(const StudentModel& s, std::string_view kind) {
  return make_envelope(kind, Json{{"spec", spec_to_json(s.spec)}, {"params", encode_doubles(s.omega)}});
}

StudentModel student_from_json(const Json& j, std::string_view kind) {
  open_envelope(j, kind);
  try {
    StudentModel s;
    s.spec = spec_from_json(j.at("spec"));
    s.omega = decode_doubles(j.at("params").get<std::string>());
    require(s.omega.size() == s.spec.param_count(), "checkpoint parameters do not match its spec");
    return s;
  } catch (const Json::exception& e) {
    throw ParseError(std::string(kind), "schema", e.what());
  }
}

}  // namespace posthoc::predictive
