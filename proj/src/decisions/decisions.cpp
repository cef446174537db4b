#include "posthoc/decisions/decisions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "posthoc/core/error.hpp"

namespace posthoc::decision {

double CostSpec::max_entry() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : matrix.data()) m = std::max(m, v);
  return m;
}

void CostSpec::validate() const {
  require(matrix.rank() == 2 && matrix.rows() > 0 && matrix.cols() > 0, "cost matrix must be a non-empty matrix");
  require(decisions.empty() || decisions.size() == matrix.rows(), "cost: decision names do not match matrix rows");
  require(classes.empty() || classes.size() == matrix.cols(), "cost: class names do not match matrix columns");
  for (double v : matrix.data()) require(v >= 0.0 && std::isfinite(v), "cost entries must be finite and >= 0");
  require(M >= max_entry(), "cost bound M=" + std::to_string(M) + " is below the largest cost entry " +
                                std::to_string(max_entry()));
  if (referral_index) require(*referral_index < matrix.rows(), "referral index out of range");
}

DecisionSet decision_set(const CostSpec& cost) {
  DecisionSet s;
  s.labels = cost.decisions;
  if (s.labels.empty()) {
    for (std::size_t i = 0; i < cost.num_decisions(); ++i) s.labels.push_back(std::to_string(i));
  }
  s.referral_index = cost.referral_index;
  return s;
}

UtilitySpec cost_to_utility(const CostSpec& cost) {
  cost.validate();
  UtilitySpec u;
  u.matrix = Tensor(cost.matrix.shape());
  for (std::size_t i = 0; i < cost.matrix.size(); ++i) u.matrix[i] = cost.M - cost.matrix[i];
  return u;
}

double resolve_offset(const CostSpec& cost, std::optional<double> requested) {
  const double mx = cost.max_entry();
  const double M = requested ? *requested : 1.25 * mx;
  require(M > mx, "utility offset M=" + std::to_string(M) + " must exceed the largest cost entry " + std::to_string(mx));
  return M;
}

CostSpec with_offset(CostSpec cost, double M) {
  cost.M = M;
  cost.validate();
  return cost;
}

double expected_cost(std::span<const double> q_row, const CostSpec& cost, std::size_t decision) {
  require(decision < cost.num_decisions(), "decision index " + std::to_string(decision) + " out of range");
  require(q_row.size() == cost.num_classes(), "probability row length does not match cost columns");
  double s = 0.0;
  for (std::size_t k = 0; k < q_row.size(); ++k) s += cost.cost(decision, k) * q_row[k];
  return s;
}

std::vector<double> expected_costs(std::span<const double> q_row, const CostSpec& cost) {
  std::vector<double> out(cost.num_decisions());
  for (std::size_t h = 0; h < out.size(); ++h) out[h] = expected_cost(q_row, cost, h);
  return out;
}

std::size_t bayes_decision(std::span<const double> q_row, const CostSpec& cost) {
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < cost.num_decisions(); ++h) {
    const double c = expected_cost(q_row, cost, h);
    if (c < best_cost) {
      best_cost = c;
      best = h;
    }
  }
  return best;
}

std::size_t bayes_decision_utility(std::span<const double> q_row, const UtilitySpec& utility) {
  require(q_row.size() == utility.matrix.cols(), "probability row length does not match utility columns");
  std::size_t best = 0;
  double best_gain = -std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < utility.matrix.rows(); ++h) {
    const double g = conditional_gain(q_row, utility, h);
    if (g > best_gain) {
      best_gain = g;
      best = h;
    }
  }
  return best;
}

std::vector<std::size_t> bayes_decisions(const Tensor& q, const CostSpec& cost) {
  std::vector<std::size_t> out(q.rows());
  for (std::size_t n = 0; n < q.rows(); ++n) out[n] = bayes_decision(q.row(n), cost);
  return out;
}

CostSpec selective_extend(const CostSpec& base, double r) {
  require(r >= 0.0, "referral cost must be non-negative");
  require(!base.referral_index, "cost already has a referral decision");
  CostSpec out;
  const std::size_t a = base.num_decisions(), c = base.num_classes();
  out.matrix = Tensor::matrix(a + 1, c);
  for (std::size_t h = 0; h < a; ++h)
    for (std::size_t k = 0; k < c; ++k) out.matrix(h, k) = base.matrix(h, k);
  for (std::size_t k = 0; k < c; ++k) out.matrix(a, k) = r;
  out.decisions = decision_set(base).labels;
  out.decisions.push_back("referral");
  out.classes = base.classes;
  out.M = std::max(base.M, r);
  out.referral_index = a;
  return out;
}

double conditional_gain(std::span<const double> q_row, const UtilitySpec& utility, std::size_t decision) {
  require(decision < utility.matrix.rows(), "decision index " + std::to_string(decision) + " out of range");
  require(q_row.size() == utility.matrix.cols(), "probability row length does not match utility columns");
  double s = 0.0;
  for (std::size_t k = 0; k < q_row.size(); ++k) s += utility.matrix(decision, k) * q_row[k];
  return s;
}

DecisionMetrics decision_metrics(const Tensor& probs, std::span<const Label> labels, const CostSpec& cost) {
  require(probs.rows() == labels.size(), "decision_metrics: label count does not match table rows");
  require(probs.cols() == cost.num_classes(), "decision_metrics: table columns do not match cost classes");
  nn::check_labels(labels, cost.num_classes());
  DecisionMetrics m;
  const std::size_t n = labels.size();
  if (n == 0) return m;
  std::size_t referred = 0, correct = 0;
  double total_cost = 0.0, nll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = probs.row(i);
    const std::size_t h = bayes_decision(row, cost);
    total_cost += cost.cost(h, labels[i]);
    nll -= std::log(row[labels[i]]);
    if (cost.referral_index && h == *cost.referral_index) {
      ++referred;
    } else if (h == labels[i]) {
      ++correct;
    }
  }
  m.avg_cost = total_cost / static_cast<double>(n);
  m.referral_rate = static_cast<double>(referred) / static_cast<double>(n);
  m.nll = nll / static_cast<double>(n);
  if (referred < n) m.accuracy = static_cast<double>(correct) / static_cast<double>(n - referred);
  return m;
}

// ---------------------------------------------------------------- presets

namespace {

CostSpec important_classes(std::vector<std::string> classes, std::vector<std::size_t> important) {
  const std::size_t c = classes.size();
  CostSpec s;
  s.classes = classes;
  s.decisions = std::move(classes);
  s.matrix = Tensor::matrix(c, c);
  for (std::size_t h = 0; h < c; ++h) {
    const bool cheap = std::find(important.begin(), important.end(), h) != important.end();
    for (std::size_t y = 0; y < c; ++y) s.matrix(h, y) = h == y ? 0.0 : (cheap ? 0.7 : 1.0);
  }
  s.M = 1.0;
  return s;
}

CostSpec zero_one(std::size_t c) {
  require(c >= 2, "zero-one cost needs at least 2 classes");
  CostSpec s;
  for (std::size_t k = 0; k < c; ++k) s.classes.push_back(std::to_string(k));
  s.decisions = s.classes;
  s.matrix = Tensor::matrix(c, c);
  for (std::size_t h = 0; h < c; ++h)
    for (std::size_t y = 0; y < c; ++y) s.matrix(h, y) = h == y ? 0.0 : 1.0;
  s.M = 1.0;
  return s;
}

CostSpec camvid() {
  const std::vector<std::string> names = {"sky",      "building", "pole",  "road",       "pavement", "tree",
                                          "sign",     "fence",    "car",   "pedestrian", "cyclist",  "unlabelled"};
  // Off-diagonal cost of predicting each class; pedestrian<->cyclist is 0.2.
  const double by_decision[12] = {0.8, 0.8, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.4, 0.4, 0.4, 0.6};
  CostSpec s;
  s.classes = names;
  s.decisions = names;
  s.matrix = Tensor::matrix(12, 12);
  for (std::size_t h = 0; h < 12; ++h) {
    for (std::size_t y = 0; y < 12; ++y) {
      double v = h == y ? 0.0 : by_decision[h];
      if ((h == 9 && y == 10) || (h == 10 && y == 9)) v = 0.2;
      s.matrix(h, y) = v;
    }
  }
  s.M = 0.8;
  return s;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"synthetic-asymmetric", "zero-one", "selective", "mnist-38", "cifar-auto-truck", "camvid"};
}

CostSpec preset(const std::string& name, std::size_t num_classes, double referral_cost) {
  if (name == "synthetic-asymmetric") {
    // Missing a positive costs 1, a false alarm 0.1.
    CostSpec s;
    s.classes = {"negative", "positive"};
    s.decisions = s.classes;
    s.matrix = Tensor::from_rows({{0.0, 1.0}, {0.1, 0.0}});
    s.M = 1.0;
    return s;
  }
  if (name == "zero-one") return zero_one(num_classes);
  if (name == "selective") return selective_extend(zero_one(num_classes), referral_cost);
  if (name == "mnist-38") {
    std::vector<std::string> c;
    for (int k = 0; k < 10; ++k) c.push_back(std::to_string(k));
    return important_classes(std::move(c), {3, 8});
  }
  if (name == "cifar-auto-truck") {
    return important_classes({"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"},
                             {1, 9});
  }
  if (name == "camvid") return camvid();
  throw ContractViolation("unknown cost preset '" + name + "'");
}

Json to_json(const CostSpec& cost) {
  Json j;
  j["decisions"] = decision_set(cost).labels;
  std::vector<std::string> classes = cost.classes;
  if (classes.empty()) {
    for (std::size_t k = 0; k < cost.num_classes(); ++k) classes.push_back(std::to_string(k));
  }
  j["classes"] = classes;
  Json rows = Json::array();
  for (std::size_t h = 0; h < cost.num_decisions(); ++h) {
    const auto r = cost.matrix.row(h);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  j["matrix"] = rows;
  j["M"] = cost.M;
  if (cost.referral_index) j["referral_index"] = *cost.referral_index;
  return j;
}

CostSpec cost_from_json(const Json& j) {
  try {
    CostSpec s;
    s.decisions = j.at("decisions").get<std::vector<std::string>>();
    s.classes = j.at("classes").get<std::vector<std::string>>();
    s.matrix = Tensor::from_rows(j.at("matrix").get<std::vector<std::vector<double>>>());
    s.M = j.at("M").get<double>();
    if (j.contains("referral_index")) {
      s.referral_index = j.at("referral_index").get<std::size_t>();
    } else {
      const auto it = std::find(s.decisions.begin(), s.decisions.end(), "referral");
      if (it != s.decisions.end()) s.referral_index = static_cast<std::size_t>(it - s.decisions.begin());
    }
    s.validate();
    return s;
  } catch (const Json::exception& e) {
    throw ParseError("cost", "schema", e.what());
  }
}

CostSpec load_cost(const std::filesystem::path& path) {
  try {
    return cost_from_json(read_json(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string(), "schema", e.what());
  }
}

}  // namespace posthoc::decision
