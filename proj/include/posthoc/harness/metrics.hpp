#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "posthoc/core/serialize.hpp"
#include "posthoc/decisions/decisions.hpp"

namespace posthoc::harness {

inline constexpr int kMetricsSchemaVersion = 1;

struct MetricsRecord {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::string method;
  double avg_cost = 0.0;
  std::optional<double> accuracy;  // null when every point is referred
  double nll = 0.0;
  double referral_rate = 0.0;
  std::optional<double> r;    // referral cost, selective problems only
  std::optional<double> rho;  // training-label corruption rate
};

MetricsRecord make_record(std::size_t replicate, std::uint64_t seed, const std::string& method,
                          const decision::DecisionMetrics& m);

std::string csv_header();
std::string to_csv_row(const MetricsRecord& r);
Json to_json(const MetricsRecord& r);

// Writes <stem>.csv and <stem>.jsonl; rows in the given order.
void write_metrics(const std::vector<MetricsRecord>& records, const std::filesystem::path& dir,
                   const std::string& stem = "metrics");

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace posthoc::harness
