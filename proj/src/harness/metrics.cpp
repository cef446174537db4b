#include "posthoc/harness/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "posthoc/core/error.hpp"

namespace posthoc::harness {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

MetricsRecord make_record(std::size_t replicate, std::uint64_t seed, const std::string& method,
                          const decision::DecisionMetrics& m) {
  MetricsRecord r;
  r.replicate = replicate;
  r.seed = seed;
  r.method = method;
  r.avg_cost = m.avg_cost;
  r.accuracy = m.accuracy;
  r.nll = m.nll;
  r.referral_rate = m.referral_rate;
  return r;
}

std::string csv_header() { return "schema_version,replicate,seed,method,r,rho,avg_cost,accuracy,nll,referral_rate"; }

std::string to_csv_row(const MetricsRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("null"); };
  std::string row = std::to_string(kMetricsSchemaVersion);
  row += ',' + std::to_string(r.replicate);
  row += ',' + std::to_string(r.seed);
  row += ',' + r.method;
  row += ',' + (r.r ? format_double(*r.r) : std::string());
  row += ',' + (r.rho ? format_double(*r.rho) : std::string());
  row += ',' + format_double(r.avg_cost);
  row += ',' + opt(r.accuracy);
  row += ',' + format_double(r.nll);
  row += ',' + format_double(r.referral_rate);
  return row;
}

Json to_json(const MetricsRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return Json{{"schema_version", kMetricsSchemaVersion},
              {"replicate", r.replicate},
              {"seed", r.seed},
              {"method", r.method},
              {"r", opt(r.r)},
              {"rho", opt(r.rho)},
              {"avg_cost", r.avg_cost},
              {"accuracy", opt(r.accuracy)},
              {"nll", std::isfinite(r.nll) ? Json(r.nll) : Json(format_double(r.nll))},
              {"referral_rate", r.referral_rate}};
}

void write_metrics(const std::vector<MetricsRecord>& records, const std::filesystem::path& dir,
                   const std::string& stem) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / (stem + ".csv"));
  std::ofstream jsonl(dir / (stem + ".jsonl"));
  if (!csv || !jsonl) throw std::runtime_error("cannot write metrics under " + dir.string());
  csv << csv_header() << '\n';
  for (const auto& r : records) {
    csv << to_csv_row(r) << '\n';
    jsonl << to_json(r).dump() << '\n';
  }
}

}  // namespace posthoc::harness
