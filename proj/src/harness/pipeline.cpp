#include "posthoc/harness/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "posthoc/core/error.hpp"
#include "posthoc/core/rng.hpp"

namespace posthoc::harness {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool has_method(const ExperimentConfig& cfg, const std::string& m) {
  return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
}

nn::MlpSpec or_default(const std::vector<std::size_t>& layers, const nn::MlpSpec& fallback) {
  if (layers.empty()) return fallback;
  nn::MlpSpec s{layers};
  s.validate();
  return s;
}

data::Dataset drop_labels(data::Dataset d) {
  d.y.reset();
  return d;
}

}  // namespace

ReplicateData make_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto& dc = cfg.data;
  ReplicateData out;
  if (dc.kind == "synthetic") {
    auto spec = dc.synthetic;
    spec.seed = seed;
    auto s = data::gen_synthetic(spec);
    out.train = std::move(s.train);
    out.test = std::move(s.test);
    out.calib = std::move(s.calib);
  } else if (dc.kind == "csv") {
    out.train = data::load_csv(dc.train);
    out.test = data::load_csv(dc.test);
    out.calib = drop_labels(data::load_csv(dc.calib));
  } else {
    auto full = data::load_idx(dc.train, dc.train_labels.empty() ? std::nullopt
                                                                  : std::optional<std::filesystem::path>(dc.train_labels));
    const std::vector<double> fractions{1.0 - dc.calib_fraction, dc.calib_fraction};
    auto parts = data::split(full, fractions, stream_seed(seed, Stream::kCalibData));
    out.train = std::move(parts[0]);
    out.calib = drop_labels(std::move(parts[1]));
    out.test = data::load_idx(dc.test, dc.test_labels.empty() ? std::nullopt
                                                              : std::optional<std::filesystem::path>(dc.test_labels));
  }
  if (dc.max_train > 0 && out.train.size() > dc.max_train) {
    std::vector<std::size_t> rows(dc.max_train);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    out.train = data::subset(out.train, rows);
  }
  const std::size_t c = cfg.model.num_classes();
  require(out.train.labeled() && out.test.labeled(), "train and test data must be labeled");
  out.train.validate(c);
  out.test.validate(c);
  require(out.train.dim() == cfg.model.input_dim() && out.test.dim() == cfg.model.input_dim() &&
              out.calib.dim() == cfg.model.input_dim(),
          "data feature dimension does not match the model input");
  if (dc.corruption > 0.0) {
    out.train = data::corrupt_labels(out.train, c, {dc.corruption, stream_seed(seed, Stream::kCorruption)});
  }
  return out;
}

sampling::SghmcConfig resolve_sampler(const ExperimentConfig& cfg, std::size_t n_train, std::uint64_t seed) {
  sampling::SghmcConfig s = cfg.sampler.sghmc;
  if (cfg.sampler.lr || cfg.sampler.momentum) {
    require(cfg.sampler.lr && cfg.sampler.momentum, "sampler: lr and momentum must be given together");
    const auto mapped = sampling::SghmcConfig::from_momentum(*cfg.sampler.lr, *cfg.sampler.momentum, n_train);
    s.step_size = mapped.step_size;
    s.friction = mapped.friction;
  }
  s.seed = seed;
  s.validate();
  return s;
}

nn::ClassWeights resolve_class_weights(const ExperimentConfig& cfg, const decision::CostSpec& cost) {
  nn::ClassWeights w;
  if (!cfg.cw_sgd.class_weights.empty()) {
    w.weights = cfg.cw_sgd.class_weights;
  } else {
    const std::size_t c = cost.num_classes();
    w.weights.assign(c, 0.0);
    for (std::size_t y = 0; y < c; ++y) {
      for (std::size_t h = 0; h < cost.num_decisions(); ++h) w.weights[y] = std::max(w.weights[y], cost.cost(h, y));
    }
    double lo = 0.0;
    for (double v : w.weights) {
      if (v > 0.0 && (lo == 0.0 || v < lo)) lo = v;
    }
    for (double& v : w.weights) v = lo > 0.0 && v > 0.0 ? v / lo : 1.0;
  }
  w.validate(cost.num_classes());
  return w;
}

ParamVector train_map(const ExperimentConfig& cfg, const data::Dataset& train, std::uint64_t seed) {
  auto mc = cfg.map;
  mc.seed = seed;
  return sampling::map_train(cfg.model, cfg.prior, train, mc).theta;
}

PosteriorRun run_posterior(const ExperimentConfig& cfg, const data::Dataset& train, const data::Dataset& calib,
                           const ParamVector& map_theta, std::uint64_t seed) {
  const auto sg = resolve_sampler(cfg, train.size(), seed);
  ParamVector init = cfg.sampler.init_from_map ? map_theta : nn::init_params(cfg.model, stream_seed(seed, Stream::kInit));
  const auto& spec = cfg.model;
  const auto& prior = cfg.prior;
  const std::string kind = cfg.sampler.kind;

  predictive::SamplerRun run = [&](const sampling::SampleObserver& obs) {
    if (kind == "sghmc") return sampling::run_chain(spec, prior, train, sg, init, obs);
    if (kind == "sgld") return sampling::sgld_chain(spec, prior, train, sg, init, obs);
    auto vc = cfg.sampler.vi;
    vc.seed = seed;
    const auto fit = sampling::vi_fit(spec, prior, train, vc, init);
    auto chain = sampling::vi_sample(fit.posterior, cfg.sampler.vi_samples, stream_seed(seed, Stream::kVi) ^ 2ULL);
    if (obs) {
      for (std::size_t i = 0; i < chain.size(); ++i) obs(i + 1, chain.samples[i], true);
    }
    return chain;
  };

  PosteriorRun out;
  if (!cfg.distill.enabled) {
    out.chain = run({});
    return out;
  }
  predictive::StudentModel student;
  student.spec = or_default(cfg.distill.layer_sizes, spec);
  if (cfg.distill.init == "map") {
    require(student.spec == spec, "distill: map init needs the student to share the teacher architecture");
    student.omega = map_theta;
  } else {
    student.omega = nn::init_params(student.spec, stream_seed(seed, Stream::kStudentInit));
  }
  out.student_init = student;
  auto dc = cfg.distill.cfg;
  dc.seed = seed;
  auto res = predictive::distill_online(spec, run, std::move(student), calib.x, dc);
  out.chain = std::move(res.chain);
  out.student = std::move(res.student);
  return out;
}

calib::CalibProblem make_calib_problem(const ExperimentConfig& cfg, const ReplicateData& d, const PosteriorRun& post,
                                       const ParamVector& map_theta, const decision::CostSpec& cost) {
  calib::CalibProblem p;
  p.x = d.calib.x;
  p.cost = cost;
  p.spec = or_default(cfg.correction_layers, cfg.model);
  p.student = post.student;
  if (cfg.calibration.objective == calib::ObjectiveKind::kExact) {
    p.table = predictive::mc_predictive(cfg.model, post.chain, d.calib.x);
  }
  if (p.spec == cfg.model) p.map_theta = map_theta;
  return p;
}

ReplicateResult run_replicate(const ExperimentConfig& cfg, std::size_t index) {
  ReplicateResult out;
  out.index = index;
  out.seed = child_seed(cfg.base_seed, index);
  const std::uint64_t seed = out.seed;
  const auto cost = cfg.cost.resolve();

  auto t0 = Clock::now();
  out.data = make_data(cfg, seed);
  out.timings["data"] = seconds_since(t0);

  t0 = Clock::now();
  out.map_theta = train_map(cfg, out.data.train, seed);
  out.timings["map"] = seconds_since(t0);

  t0 = Clock::now();
  out.posterior = run_posterior(cfg, out.data.train, out.data.calib, out.map_theta, seed);
  out.timings["posterior"] = seconds_since(t0);

  out.calib_table = predictive::mc_predictive(cfg.model, out.posterior.chain, out.data.calib.x);
  const auto& test_x = out.data.test.x;
  out.test_probs["uncorrected"] = predictive::mc_predictive(cfg.model, out.posterior.chain, test_x).probs;

  if (has_method(cfg, "corrected")) {
    t0 = Clock::now();
    auto problem = make_calib_problem(cfg, out.data, out.posterior, out.map_theta, cost);
    if (problem.table) problem.table = out.calib_table;
    auto cc = cfg.calibration;
    cc.seed = seed;
    out.correction = calib::calibrate(problem, cc);
    out.test_probs["corrected"] = out.correction->model.predict(test_x);
    out.timings["calibrate"] = seconds_since(t0);
  }
  if (has_method(cfg, "lc-sghmc")) {
    t0 = Clock::now();
    const auto sg = resolve_sampler(cfg, out.data.train.size(), stream_seed(seed, Stream::kLcSampler));
    ParamVector init =
        cfg.sampler.init_from_map ? out.map_theta : nn::init_params(cfg.model, stream_seed(seed, Stream::kInit));
    const auto lc_cost = decision::with_offset(cost, decision::resolve_offset(cost, cfg.calibration.M));
    const auto chain = sampling::lc_sghmc_chain(cfg.model, cfg.prior, out.data.train, lc_cost, sg, std::move(init));
    out.test_probs["lc-sghmc"] = predictive::mc_predictive(cfg.model, chain, test_x).probs;
    out.timings["lc-sghmc"] = seconds_since(t0);
  }
  if (has_method(cfg, "cw-sgd")) {
    t0 = Clock::now();
    auto mc = cfg.cw_sgd.map;
    mc.seed = stream_seed(seed, Stream::kCwSgd);
    mc.class_weights = resolve_class_weights(cfg, cost);
    const auto theta = sampling::map_train(cfg.model, cfg.prior, out.data.train, mc).theta;
    out.test_probs["cw-sgd"] = nn::forward_probs(cfg.model, theta, test_x);
    out.timings["cw-sgd"] = seconds_since(t0);
  }

  const std::optional<double> rho = cfg.data.corruption > 0.0 ? std::optional<double>(cfg.data.corruption) : std::nullopt;
  std::optional<double> r;
  if (cost.referral_index) r = cost.cost(*cost.referral_index, 0);
  for (const auto& m : cfg.methods) {
    auto rec = make_record(index, seed, m, decision::decision_metrics(out.test_probs.at(m), out.data.test.labels(), cost));
    rec.r = r;
    rec.rho = rho;
    out.records.push_back(std::move(rec));
  }
  return out;
}

std::vector<ReplicateResult> run_replicates(const ExperimentConfig& cfg, std::size_t n, std::size_t workers) {
  require(n >= 1, "run_replicates: need at least one replicate");
  std::vector<ReplicateResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = run_replicate(cfg, i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t k = std::max<std::size_t>(1, std::min(workers, n));
  if (k == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < k; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::vector<MetricsRecord> sweep_referral(const std::map<std::string, ad::Tensor>& test_probs,
                                          std::span<const nn::Label> labels, const decision::CostSpec& base,
                                          std::span<const double> r_values, std::size_t replicate,
                                          std::uint64_t seed, std::optional<double> rho) {
  require(!r_values.empty(), "sweep_referral: no referral costs given");
  require(!base.referral_index.has_value(), "sweep_referral: base cost already has a referral decision");
  std::vector<MetricsRecord> out;
  for (double r : r_values) {
    require(r >= 0.0, "sweep_referral: referral cost must be >= 0");
    const auto cost = decision::selective_extend(base, r);
    for (const auto& [method, probs] : test_probs) {
      auto rec = make_record(replicate, seed, method, decision::decision_metrics(probs, labels, cost));
      rec.r = r;
      rec.rho = rho;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

Json to_json(const RunManifest& m) {
  return make_envelope("manifest", Json{{"config", m.config},
                                        {"code_version", m.code_version},
                                        {"command", m.command},
                                        {"replicate_seeds", m.replicate_seeds},
                                        {"artifacts", m.artifacts},
                                        {"timings", m.timings}});
}

RunManifest manifest_from_json(const Json& j) {
  open_envelope(j, "manifest");
  try {
    RunManifest m;
    m.config = j.at("config");
    m.code_version = j.value("code_version", m.code_version);
    m.command = j.value("command", std::string());
    m.replicate_seeds = j.value("replicate_seeds", m.replicate_seeds);
    m.artifacts = j.value("artifacts", m.artifacts);
    m.timings = j.value("timings", Json::object());
    return m;
  } catch (const Json::exception& e) {
    throw ParseError("manifest", "schema", e.what());
  }
}

}  // namespace posthoc::harness
