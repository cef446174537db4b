// Command-line driver for the post-hoc correction pipeline.
#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "posthoc/calibration/calibration.hpp"
#include "posthoc/core/error.hpp"
#include "posthoc/harness/bench.hpp"
#include "posthoc/harness/config.hpp"
#include "posthoc/harness/pipeline.hpp"

namespace fs = std::filesystem;
using namespace posthoc;

namespace {

enum Exit { kOk = 0, kRuntime = 1, kUsage = 2 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void error_record(const std::string& kind, const std::string& message, const std::string& command) {
  Json rec{{"error", kind}, {"message", message}, {"command", command}};
  std::cerr << rec.dump() << std::endl;
}

struct Common {
  std::string config;
  std::string manifest;
  std::string out;
  std::size_t replicate = 0;
};

harness::ExperimentConfig load_config(const Common& c) {
  if (!c.manifest.empty()) {
    const auto m = harness::manifest_from_json(read_json(c.manifest));
    return harness::experiment_from_json(m.config);
  }
  if (c.config.empty()) throw UsageError("--config or --manifest is required");
  return harness::load_experiment(c.config);
}

fs::path out_dir(const Common& c, const harness::ExperimentConfig& cfg) {
  fs::path dir = c.out.empty() ? fs::path(cfg.output_dir) : fs::path(c.out);
  fs::create_directories(dir);
  return dir;
}

void write_manifest(const fs::path& dir, const harness::ExperimentConfig& cfg, const std::string& command,
                    std::vector<std::uint64_t> seeds, std::vector<std::string> artifacts, Json timings) {
  harness::RunManifest m;
  m.config = harness::to_json(cfg);
  m.command = command;
  m.replicate_seeds = std::move(seeds);
  m.artifacts = std::move(artifacts);
  m.timings = std::move(timings);
  write_json(harness::to_json(m), dir / "manifest.json");
}

Json timings_json(const std::map<std::string, double>& t) {
  Json j = Json::object();
  for (const auto& [k, v] : t) j[k] = v;
  return j;
}

nn::ParamVector load_params(const fs::path& path, const std::string& kind) {
  return predictive::student_from_json(read_json(path), kind).omega;
}

// Probabilities from any model checkpoint (student, correction, map) or chain.
ad::Tensor probs_from(const std::string& model, const std::string& chain, const harness::ExperimentConfig& cfg,
                      const ad::Tensor& x) {
  if (!chain.empty()) return predictive::mc_predictive(cfg.model, sampling::load_chain(chain), x).probs;
  const Json j = read_json(model);
  const std::string kind = j.value("kind", std::string());
  const auto m = predictive::student_from_json(j, kind);
  return m.predict(x);
}

int run_command(const std::string& name, const Common& c, const std::map<std::string, std::string>& files,
                const std::vector<double>& r_values, std::size_t n, std::size_t workers) {
  auto cfg = load_config(c);
  const fs::path dir = out_dir(c, cfg);
  const std::uint64_t seed = child_seed(cfg.base_seed, c.replicate);
  auto file = [&](const std::string& k) {
    auto it = files.find(k);
    return it == files.end() ? std::string() : it->second;
  };
  std::map<std::string, double> timings;
  using Clock = std::chrono::steady_clock;
  auto t0 = Clock::now();
  auto lap = [&](const std::string& k) {
    timings[k] = std::chrono::duration<double>(Clock::now() - t0).count();
    t0 = Clock::now();
  };

  if (name == "gen-data") {
    const auto d = harness::make_data(cfg, seed);
    data::save_csv(d.train, dir / "train.csv");
    data::save_csv(d.test, dir / "test.csv");
    data::save_csv(d.calib, dir / "calib.csv");
    lap("data");
    write_manifest(dir, cfg, name, {seed}, {"train.csv", "test.csv", "calib.csv"}, timings_json(timings));
    return kOk;
  }

  if (name == "train-map") {
    const auto d = harness::make_data(cfg, seed);
    const auto theta = harness::train_map(cfg, d.train, seed);
    lap("map");
    write_json(predictive::to_json(predictive::StudentModel{cfg.model, theta}, "map"), dir / "map.json");
    write_manifest(dir, cfg, name, {seed}, {"map.json"}, timings_json(timings));
    return kOk;
  }

  if (name == "sample" || name == "distill") {
    const auto d = harness::make_data(cfg, seed);
    const auto theta = file("map").empty() ? harness::train_map(cfg, d.train, seed) : load_params(file("map"), "map");
    lap("map");
    auto run_cfg = cfg;
    run_cfg.distill.enabled = name == "distill";
    const auto post = harness::run_posterior(run_cfg, d.train, d.calib, theta, seed);
    lap("posterior");
    sampling::save_chain(post.chain, dir / "chain.json");
    std::vector<std::string> artifacts{"chain.json"};
    if (post.student) {
      write_json(predictive::to_json(*post.student), dir / "student.json");
      artifacts.push_back("student.json");
    }
    write_manifest(dir, cfg, name, {seed}, artifacts, timings_json(timings));
    return kOk;
  }

  if (name == "calibrate") {
    harness::ReplicateData d = harness::make_data(cfg, seed);
    const auto cost = cfg.cost.resolve();
    const auto theta = file("map").empty() ? harness::train_map(cfg, d.train, seed) : load_params(file("map"), "map");
    harness::PosteriorRun post;
    if (!file("chain").empty()) {
      post.chain = sampling::load_chain(file("chain"));
      if (!file("student").empty()) post.student = predictive::student_from_json(read_json(file("student")));
    } else {
      post = harness::run_posterior(cfg, d.train, d.calib, theta, seed);
    }
    lap("upstream");
    auto problem = harness::make_calib_problem(cfg, d, post, theta, cost);
    auto cc = cfg.calibration;
    cc.seed = seed;
    const auto res = calib::calibrate(problem, cc);
    lap("calibrate");
    write_json(calib::to_json(res.model), dir / "correction.json");
    write_json(Json{{"objective_trace", res.objective_trace}, {"M", res.M}}, dir / "calib_trace.json");
    const auto ref = predictive::mc_predictive(cfg.model, post.chain, d.calib.x).probs;
    const auto q = res.model.predict(d.calib.x);
    const auto decisions = calib::assign_decisions(res.model, d.calib.x, cost);
    const auto utility = decision::cost_to_utility(decision::with_offset(cost, res.M));
    std::ofstream(dir / "diagnostics.jsonl") << calib::diagnostics_jsonl(calib::variational_gap(q, ref, utility, decisions));
    write_manifest(dir, cfg, name, {seed}, {"correction.json", "calib_trace.json", "diagnostics.jsonl"},
                   timings_json(timings));
    return kOk;
  }

  if (name == "decide") {
    if (file("input").empty()) throw UsageError("decide needs --input");
    if (file("model").empty() == file("chain").empty()) throw UsageError("decide needs exactly one of --model, --chain");
    const auto cost = file("cost").empty() ? cfg.cost.resolve() : decision::load_cost(file("cost"));
    const auto in = data::load_csv(file("input"));
    const auto probs = probs_from(file("model"), file("chain"), cfg, in.x);
    const auto dec = decision::bayes_decisions(probs, cost);
    std::ofstream out(dir / "decisions.csv");
    out << "row,decision,label\n";
    for (std::size_t i = 0; i < dec.size(); ++i) out << i << ',' << dec[i] << ',' << cost.decisions[dec[i]] << '\n';
    write_manifest(dir, cfg, name, {seed}, {"decisions.csv"}, timings_json(timings));
    return kOk;
  }

  if (name == "evaluate") {
    const auto cost = cfg.cost.resolve();
    std::vector<harness::MetricsRecord> records;
    if (!file("model").empty() || !file("chain").empty()) {
      const auto test = file("data").empty() ? harness::make_data(cfg, seed).test : data::load_csv(file("data"));
      const auto probs = probs_from(file("model"), file("chain"), cfg, test.x);
      const std::string tag = file("chain").empty() ? "corrected" : "uncorrected";
      records.push_back(harness::make_record(c.replicate, seed, tag, decision::decision_metrics(probs, test.labels(), cost)));
    } else {
      auto res = harness::run_replicate(cfg, c.replicate);
      records = res.records;
      timings = res.timings;
    }
    harness::write_metrics(records, dir);
    write_manifest(dir, cfg, name, {seed}, {"metrics.csv", "metrics.jsonl"}, timings_json(timings));
    return kOk;
  }

  if (name == "sweep") {
    std::vector<double> rs = r_values.empty() ? cfg.referral_sweep : r_values;
    if (rs.empty()) rs = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
    auto res = harness::run_replicate(cfg, c.replicate);
    std::map<std::string, ad::Tensor> probs;
    for (const auto& m : cfg.methods) probs[m] = res.test_probs.at(m);
    const std::optional<double> rho =
        cfg.data.corruption > 0.0 ? std::optional<double>(cfg.data.corruption) : std::nullopt;
    const auto records =
        harness::sweep_referral(probs, res.data.test.labels(), cfg.cost.resolve(), rs, c.replicate, res.seed, rho);
    harness::write_metrics(records, dir);
    write_manifest(dir, cfg, name, {seed}, {"metrics.csv", "metrics.jsonl"}, timings_json(res.timings));
    return kOk;
  }

  if (name == "bench") {
    auto res = harness::run_replicate(cfg, c.replicate);
    const auto cost = cfg.cost.resolve();
    const auto& amortized = res.correction ? res.correction->model.lambda : res.posterior.student->omega;
    const auto& spec = res.correction ? res.correction->model.spec : res.posterior.student->spec;
    // Bench points are drawn uniformly from the calibration region.
    const auto bench_x = [&] {
      std::vector<std::size_t> rows(cfg.bench.points);
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i % res.data.calib.size();
      return ad::take_rows(res.data.calib.x, rows);
    }();
    const auto b = harness::bench_throughput(spec, amortized, cfg.model, res.posterior.chain, bench_x, cost, cfg.bench);
    write_json(harness::to_json(b), dir / "bench.json");
    Json t = timings_json(res.timings);
    t["bench"] = harness::to_json(b);
    write_manifest(dir, cfg, name, {seed}, {"bench.json"}, t);
    std::cout << harness::to_json(b).dump(2) << std::endl;
    return kOk;
  }

  if (name == "replicate") {
    const std::size_t count = n ? n : cfg.replicates;
    const std::size_t w = workers ? workers : cfg.workers;
    const auto results = harness::run_replicates(cfg, count, w);
    std::vector<harness::MetricsRecord> records;
    std::vector<std::uint64_t> seeds;
    Json t = Json::array();
    for (const auto& r : results) {
      records.insert(records.end(), r.records.begin(), r.records.end());
      seeds.push_back(r.seed);
      t.push_back(timings_json(r.timings));
    }
    harness::write_metrics(records, dir);
    auto snapshot = cfg;
    snapshot.replicates = count;
    write_manifest(dir, snapshot, name, seeds, {"metrics.csv", "metrics.jsonl"}, Json{{"replicates", t}});
    return kOk;
  }
  throw UsageError("unknown subcommand " + name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-hoc loss-calibrated decisions for Bayesian neural networks"};
  app.require_subcommand(1);
  Common common;
  std::map<std::string, std::string> files;
  std::vector<double> r_values;
  std::size_t n = 0, workers = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", common.config, "experiment JSON");
    sub->add_option("--manifest", common.manifest, "rerun from a manifest.json instead of --config");
    if (needs_config) opt->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "output directory (default: config output_dir)");
    sub->add_option("--replicate", common.replicate, "replicate index for the seed");
  };
  auto add_file = [&](CLI::App* sub, const std::string& key, const std::string& help) {
    sub->add_option("--" + key, files[key], help)->check(CLI::ExistingFile);
  };

  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "generate train/test/calibration CSVs"},
      {"train-map", "train the MAP point estimate"},
      {"sample", "run the posterior sampler"},
      {"distill", "run the sampler with online student distillation"},
      {"calibrate", "fit the correction network"},
      {"decide", "Bayes decisions for a CSV of inputs"},
      {"evaluate", "decision metrics on the test set"},
      {"sweep", "referral-cost sweep"},
      {"bench", "amortized vs Monte Carlo decision throughput"},
      {"replicate", "run seeded replicates and write metrics.csv"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, false);
    if (name == "sample" || name == "distill" || name == "calibrate") add_file(sub, "map", "MAP checkpoint");
    if (name == "calibrate") {
      add_file(sub, "chain", "chain checkpoint");
      add_file(sub, "student", "student checkpoint");
    }
    if (name == "decide" || name == "evaluate") {
      add_file(sub, "model", "student/correction/map checkpoint");
      add_file(sub, "chain", "chain checkpoint");
    }
    if (name == "decide") {
      add_file(sub, "input", "CSV of inputs");
      add_file(sub, "cost", "cost matrix JSON");
    }
    if (name == "evaluate") add_file(sub, "data", "labeled CSV (default: generated test set)");
    if (name == "sweep") sub->add_option("--r", r_values, "referral costs")->delimiter(',');
    if (name == "replicate") {
      sub->add_option("--n", n, "number of replicates (default: config)");
      sub->add_option("--workers", workers, "concurrent replicates (default: config)");
    }
  }

  std::string command = argc > 1 ? argv[1] : "";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_record("usage", e.what(), command);
    return kUsage;
  }
  try {
    return run_command(app.get_subcommands().front()->get_name(), common, files, r_values, n, workers);
  } catch (const UsageError& e) {
    error_record("usage", e.what(), command);
    return kUsage;
  } catch (const ParseError& e) {
    error_record("parse", e.what(), command);
    return kUsage;
  } catch (const ContractViolation& e) {
    error_record("contract", e.what(), command);
    return kUsage;
  } catch (const DivergenceError& e) {
    error_record("divergence", e.what(), command);
    return kRuntime;
  } catch (const std::exception& e) {
    error_record("runtime", e.what(), command);
    return kRuntime;
  }
}
