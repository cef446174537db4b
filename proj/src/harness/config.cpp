#include "posthoc/harness/config.hpp"

#include <algorithm>
#include <set>

#include "posthoc/core/error.hpp"

namespace posthoc::harness {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!j.is_object()) throw ParseError("config", section, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ParseError("config", section, "unknown key '" + key + "'");
  }
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> opt_double(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

Json map_to_json(const sampling::MapConfig& m) {
  Json j{{"epochs", m.epochs},
         {"batch_size", m.batch_size},
         {"lr", m.lr},
         {"momentum", m.momentum},
         {"schedule", sampling::to_string(m.schedule)}};
  return j;
}

sampling::MapConfig map_from_json(const Json& j, const std::string& section) {
  check_keys(j, {"epochs", "batch_size", "lr", "momentum", "schedule"}, section);
  sampling::MapConfig m;
  m.epochs = j.value("epochs", m.epochs);
  m.batch_size = j.value("batch_size", m.batch_size);
  m.lr = j.value("lr", m.lr);
  m.momentum = j.value("momentum", m.momentum);
  m.schedule = sampling::parse_schedule(j.value("schedule", std::string("constant")));
  return m;
}

Json synthetic_to_json(const data::SyntheticSpec& s) {
  return Json{{"neg_mean", s.neg_mean}, {"pos_mean", s.pos_mean}, {"std", s.std},       {"n_neg", s.n_neg},
              {"n_pos", s.n_pos},       {"calib_n", s.calib_n},   {"box_lo", s.box_lo}, {"box_hi", s.box_hi}};
}

data::SyntheticSpec synthetic_from_json(const Json& j) {
  check_keys(j, {"neg_mean", "pos_mean", "std", "n_neg", "n_pos", "calib_n", "box_lo", "box_hi"}, "data.synthetic");
  data::SyntheticSpec s;
  s.neg_mean = j.value("neg_mean", s.neg_mean);
  s.pos_mean = j.value("pos_mean", s.pos_mean);
  s.std = j.value("std", s.std);
  s.n_neg = j.value("n_neg", s.n_neg);
  s.n_pos = j.value("n_pos", s.n_pos);
  s.calib_n = j.value("calib_n", s.calib_n);
  s.box_lo = j.value("box_lo", s.box_lo);
  s.box_hi = j.value("box_hi", s.box_hi);
  return s;
}

Json data_to_json(const DataConfig& d) {
  return Json{{"kind", d.kind},
              {"synthetic", synthetic_to_json(d.synthetic)},
              {"train", d.train},
              {"test", d.test},
              {"calib", d.calib},
              {"train_labels", d.train_labels},
              {"test_labels", d.test_labels},
              {"calib_fraction", d.calib_fraction},
              {"max_train", d.max_train},
              {"corruption", d.corruption}};
}

DataConfig data_from_json(const Json& j) {
  check_keys(j,
             {"kind", "synthetic", "train", "test", "calib", "train_labels", "test_labels", "calib_fraction",
              "max_train", "corruption"},
             "data");
  DataConfig d;
  d.kind = j.value("kind", d.kind);
  if (j.contains("synthetic")) d.synthetic = synthetic_from_json(j["synthetic"]);
  d.train = j.value("train", d.train);
  d.test = j.value("test", d.test);
  d.calib = j.value("calib", d.calib);
  d.train_labels = j.value("train_labels", d.train_labels);
  d.test_labels = j.value("test_labels", d.test_labels);
  d.calib_fraction = j.value("calib_fraction", d.calib_fraction);
  d.max_train = j.value("max_train", d.max_train);
  d.corruption = j.value("corruption", d.corruption);
  return d;
}

Json sampler_to_json(const SamplerChoice& s) {
  Json sg = sampling::to_json(s.sghmc);
  sg.erase("seed");
  Json vi{{"iterations", s.vi.iterations},
          {"lr", s.vi.lr},
          {"batch_size", s.vi.batch_size},
          {"init_log_std", s.vi.init_log_std}};
  return Json{{"kind", s.kind},         {"sghmc", sg},           {"lr", opt(s.lr)},
              {"momentum", opt(s.momentum)}, {"vi", vi},        {"vi_samples", s.vi_samples},
              {"init_from_map", s.init_from_map}};
}

SamplerChoice sampler_from_json(const Json& j) {
  check_keys(j, {"kind", "sghmc", "lr", "momentum", "vi", "vi_samples", "init_from_map"}, "sampler");
  SamplerChoice s;
  s.kind = j.value("kind", s.kind);
  if (j.contains("sghmc")) {
    check_keys(j["sghmc"],
               {"step_size", "schedule", "friction", "gamma_hat", "burn_in", "thinning", "total_samples", "batch_size",
                "inject_noise"},
               "sampler.sghmc");
    s.sghmc = sampling::sghmc_config_from_json(j["sghmc"]);
  }
  s.lr = opt_double(j, "lr");
  s.momentum = opt_double(j, "momentum");
  if (j.contains("vi")) {
    const Json& v = j["vi"];
    check_keys(v, {"iterations", "lr", "batch_size", "init_log_std"}, "sampler.vi");
    s.vi.iterations = v.value("iterations", s.vi.iterations);
    s.vi.lr = v.value("lr", s.vi.lr);
    s.vi.batch_size = v.value("batch_size", s.vi.batch_size);
    s.vi.init_log_std = v.value("init_log_std", s.vi.init_log_std);
  }
  s.vi_samples = j.value("vi_samples", s.vi_samples);
  s.init_from_map = j.value("init_from_map", s.init_from_map);
  return s;
}

Json distill_to_json(const DistillChoice& d) {
  return Json{{"enabled", d.enabled},       {"batch_size", d.cfg.batch_size}, {"lr", d.cfg.lr},
              {"momentum", d.cfg.momentum}, {"jitter", d.cfg.jitter},         {"init", d.init},
              {"layer_sizes", d.layer_sizes}};
}

DistillChoice distill_from_json(const Json& j) {
  check_keys(j, {"enabled", "batch_size", "lr", "momentum", "jitter", "init", "layer_sizes"}, "distill");
  DistillChoice d;
  d.enabled = j.value("enabled", d.enabled);
  d.cfg.batch_size = j.value("batch_size", d.cfg.batch_size);
  d.cfg.lr = j.value("lr", d.cfg.lr);
  d.cfg.momentum = j.value("momentum", d.cfg.momentum);
  d.cfg.jitter = j.value("jitter", d.cfg.jitter);
  d.init = j.value("init", d.init);
  d.layer_sizes = j.value("layer_sizes", d.layer_sizes);
  return d;
}

Json cost_to_json(const CostChoice& c) {
  Json j{{"preset", c.preset}, {"num_classes", c.num_classes}, {"referral_cost", c.referral_cost}, {"file", c.file}};
  j["spec"] = c.inline_spec ? *c.inline_spec : Json(nullptr);
  j["M"] = opt(c.M);
  return j;
}

CostChoice cost_from_json(const Json& j) {
  check_keys(j, {"preset", "num_classes", "referral_cost", "file", "spec", "M"}, "cost");
  CostChoice c;
  c.preset = j.value("preset", c.preset);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.referral_cost = j.value("referral_cost", c.referral_cost);
  c.file = j.value("file", c.file);
  if (j.contains("spec") && !j["spec"].is_null()) c.inline_spec = j["spec"];
  c.M = opt_double(j, "M");
  return c;
}

Json calib_to_json(const calib::CalibConfig& c) {
  Json j = calib::to_json(c);
  j.erase("seed");
  return j;
}

Json bench_to_json(const BenchConfig& b) {
  return Json{{"t_values", b.t_values},   {"batch_size", b.batch_size},         {"points", b.points},
              {"trials", b.trials},       {"warmup_batches", b.warmup_batches}, {"min_trial_seconds", b.min_trial_seconds}};
}

BenchConfig bench_from_json(const Json& j) {
  check_keys(j, {"t_values", "batch_size", "points", "trials", "warmup_batches", "min_trial_seconds"}, "bench");
  BenchConfig b;
  b.t_values = j.value("t_values", b.t_values);
  b.batch_size = j.value("batch_size", b.batch_size);
  b.points = j.value("points", b.points);
  b.trials = j.value("trials", b.trials);
  b.warmup_batches = j.value("warmup_batches", b.warmup_batches);
  b.min_trial_seconds = j.value("min_trial_seconds", b.min_trial_seconds);
  return b;
}

}  // namespace

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"uncorrected", "corrected", "lc-sghmc", "cw-sgd"};
  return names;
}

decision::CostSpec CostChoice::resolve() const {
  decision::CostSpec cost;
  if (inline_spec) {
    cost = decision::cost_from_json(*inline_spec);
  } else if (!file.empty()) {
    cost = decision::load_cost(file);
  } else {
    cost = decision::preset(preset, num_classes, referral_cost);
  }
  if (M) cost = decision::with_offset(cost, *M);
  cost.validate();
  return cost;
}

void ExperimentConfig::validate() const {
  require(replicates >= 1, "config: replicates must be >= 1");
  require(workers >= 1, "config: workers must be >= 1");
  model.validate();
  prior.validate();
  require(data.kind == "synthetic" || data.kind == "csv" || data.kind == "idx",
          "config: data.kind must be synthetic, csv or idx");
  require(data.corruption >= 0.0 && data.corruption <= 1.0, "config: data.corruption must lie in [0, 1]");
  if (data.kind == "synthetic") {
    data.synthetic.validate();
    require(model.input_dim() == 2 && model.num_classes() == 2, "config: synthetic data needs a [2, ..., 2] model");
  }
  require(sampler.kind == "sghmc" || sampler.kind == "sgld" || sampler.kind == "vi",
          "config: sampler.kind must be sghmc, sgld or vi");
  sampler.sghmc.validate();
  require(distill.init == "map" || distill.init == "random", "config: distill.init must be map or random");
  for (const auto& m : methods) {
    require(std::find(method_names().begin(), method_names().end(), m) != method_names().end(),
            "config: unknown method '" + m + "'");
  }
  const auto cost_spec = cost.resolve();  // checks the preset exists
  require(cost_spec.num_classes() == model.num_classes(), "config: cost classes do not match the model");
  calibration.validate();
  if (calibration.objective == calib::ObjectiveKind::kAmortized ||
      calibration.warm_start == calib::WarmStart::kStudent) {
    require(distill.enabled, "config: amortized objective or student warm start needs distillation enabled");
  }
  for (double r : referral_sweep) require(r >= 0.0, "config: referral costs must be >= 0");
  require(!bench.t_values.empty() && bench.trials >= 1 && bench.batch_size >= 1 && bench.points >= 1,
          "config: invalid bench section");
}

Json to_json(const ExperimentConfig& c) {
  Json cw = map_to_json(c.cw_sgd.map);
  cw["class_weights"] = c.cw_sgd.class_weights;
  return Json{{"name", c.name},
              {"data", data_to_json(c.data)},
              {"model", {{"layer_sizes", c.model.layer_sizes}}},
              {"prior", {{"precision", c.prior.precision}}},
              {"map", map_to_json(c.map)},
              {"sampler", sampler_to_json(c.sampler)},
              {"distill", distill_to_json(c.distill)},
              {"cost", cost_to_json(c.cost)},
              {"calibration", calib_to_json(c.calibration)},
              {"correction_layers", c.correction_layers},
              {"methods", c.methods},
              {"cw_sgd", cw},
              {"referral_sweep", c.referral_sweep},
              {"bench", bench_to_json(c.bench)},
              {"replicates", c.replicates},
              {"workers", c.workers},
              {"base_seed", c.base_seed},
              {"output_dir", c.output_dir}};
}

ExperimentConfig experiment_from_json(const Json& j) {
  try {
    check_keys(j,
               {"name", "data", "model", "prior", "map", "sampler", "distill", "cost", "calibration",
                "correction_layers", "methods", "cw_sgd", "referral_sweep", "bench", "replicates", "workers",
                "base_seed", "output_dir"},
               "top level");
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    if (j.contains("data")) c.data = data_from_json(j["data"]);
    if (j.contains("model")) {
      check_keys(j["model"], {"layer_sizes"}, "model");
      c.model.layer_sizes = j["model"].at("layer_sizes").get<std::vector<std::size_t>>();
    }
    if (j.contains("prior")) {
      check_keys(j["prior"], {"precision"}, "prior");
      c.prior.precision = j["prior"].value("precision", c.prior.precision);
    }
    if (j.contains("map")) c.map = map_from_json(j["map"], "map");
    if (j.contains("sampler")) c.sampler = sampler_from_json(j["sampler"]);
    if (j.contains("distill")) c.distill = distill_from_json(j["distill"]);
    if (j.contains("cost")) c.cost = cost_from_json(j["cost"]);
    if (j.contains("calibration")) {
      check_keys(j["calibration"],
                 {"batch_size", "iterations", "lr", "optimizer", "momentum", "warm_start", "objective", "M",
                  "decision_source"},
                 "calibration");
      c.calibration = calib::calib_config_from_json(j["calibration"]);
    }
    c.correction_layers = j.value("correction_layers", c.correction_layers);
    c.methods = j.value("methods", c.methods);
    if (j.contains("cw_sgd")) {
      Json cw = j["cw_sgd"];
      if (cw.contains("class_weights")) {
        c.cw_sgd.class_weights = cw["class_weights"].get<std::vector<double>>();
        cw.erase("class_weights");
      }
      c.cw_sgd.map = map_from_json(cw, "cw_sgd");
    }
    c.referral_sweep = j.value("referral_sweep", c.referral_sweep);
    if (j.contains("bench")) c.bench = bench_from_json(j["bench"]);
    c.replicates = j.value("replicates", c.replicates);
    c.workers = j.value("workers", c.workers);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ParseError("config", "schema", e.what());
  }
}

ExperimentConfig load_experiment(const std::filesystem::path& path) { return experiment_from_json(read_json(path)); }

}  // namespace posthoc::harness
