#include "tipas/metrics.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace tipas {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorKind::InvalidInput, "prediction and truth lengths differ");
  if (a == 0) throw Error(ErrorKind::InvalidInput, "metric needs at least one prediction");
}

}  // namespace

double accuracy(std::span<const ActionId> preds, std::span<const ActionId> truths) {
  check_lengths(preds.size(), truths.size());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == truths[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

std::vector<std::optional<double>> per_action_recall(std::span<const ActionId> preds,
                                                     std::span<const ActionId> truths,
                                                     int n_actions) {
  check_lengths(preds.size(), truths.size());
  std::vector<std::size_t> seen(static_cast<std::size_t>(n_actions), 0);
  std::vector<std::size_t> hit(static_cast<std::size_t>(n_actions), 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto a = truths[i];
    if (a < 0 || a >= n_actions) throw Error(ErrorKind::InvalidInput, "truth action out of range");
    ++seen[static_cast<std::size_t>(a)];
    if (preds[i] == a) ++hit[static_cast<std::size_t>(a)];
  }
  std::vector<std::optional<double>> out(static_cast<std::size_t>(n_actions));
  for (std::size_t a = 0; a < out.size(); ++a)
    if (seen[a] > 0) out[a] = static_cast<double>(hit[a]) / static_cast<double>(seen[a]);
  return out;
}

double macro_recall(std::span<const ActionId> preds, std::span<const ActionId> truths, int n_actions) {
  const auto recall = per_action_recall(preds, truths, n_actions);
  double sum = 0.0;
  int n = 0;
  for (const auto& r : recall)
    if (r) {
      sum += *r;
      ++n;
    }
  return sum / n;
}

MaeResult mae_filtered(std::span<const double> pred_times, std::span<const double> true_times,
                       std::span<const double> last_times, double horizon) {
  if (pred_times.size() != true_times.size() || true_times.size() != last_times.size())
    throw Error(ErrorKind::InvalidInput, "time vectors have different lengths");
  MaeResult out;
  double sum = 0.0;
  for (std::size_t i = 0; i < true_times.size(); ++i) {
    if (true_times[i] - last_times[i] > horizon) {
      ++out.n_filtered;
      continue;
    }
    sum += std::abs(pred_times[i] - true_times[i]);
    ++out.n_used;
  }
  if (out.n_used > 0) out.mae = sum / static_cast<double>(out.n_used);
  return out;
}

std::optional<double> standard_error(std::span<const double> values) {
  if (values.size() < 2) return std::nullopt;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double n = static_cast<double>(values.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

const ModelReport* EvalReport::find(const std::string& name) const {
  for (const auto& m : models)
    if (m.name == name) return &m;
  return nullptr;
}

namespace {

using nlohmann::json;

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json recall_json(const std::vector<std::optional<double>>& r) {
  json out = json::array();
  for (const auto& v : r) out.push_back(opt(v));
  return out;
}

json counts_json(const MetricCounts& c) {
  return {{"n_predictions", c.n_predictions},     {"n_time_predictions", c.n_time_predictions},
          {"n_filtered", c.n_filtered},           {"n_censored", c.n_censored},
          {"n_coldstart", c.n_coldstart},         {"n_degenerate", c.n_degenerate}};
}

std::string csv_cell(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

}  // namespace

std::string to_json(const EvalReport& report) {
  json doc;
  doc["schema_version"] = report.schema_version;
  doc["n_actions"] = report.n_actions;
  doc["actions"] = report.actions;
  doc["window_hours"] = report.window_hours;
  doc["horizon_filter"] = report.horizon_filter;
  doc["n_windows"] = report.n_windows;
  doc["warnings"] = report.warnings;
  json models = json::array();
  for (const auto& m : report.models) {
    json jm;
    jm["name"] = m.name;
    jm["predicts_actions"] = m.predicts_actions;
    jm["predicts_times"] = m.predicts_times;
    json windows = json::array();
    for (const auto& w : m.windows) {
      windows.push_back({{"window", w.window},
                         {"accuracy", opt(w.accuracy)},
                         {"macro_recall", opt(w.macro_recall)},
                         {"recall", recall_json(w.recall)},
                         {"mae_hours", opt(w.mae_hours)},
                         {"counts", counts_json(w.counts)}});
    }
    jm["windows"] = windows;
    const auto& p = m.pooled;
    jm["pooled"] = {{"accuracy", opt(p.accuracy)},         {"macro_recall", opt(p.macro_recall)},
                    {"recall", recall_json(p.recall)},     {"mae_hours", opt(p.mae_hours)},
                    {"accuracy_se", opt(p.accuracy_se)},   {"macro_recall_se", opt(p.macro_recall_se)},
                    {"mae_se", opt(p.mae_se)},             {"counts", counts_json(p.counts)}};
    models.push_back(std::move(jm));
  }
  doc["models"] = models;
  return doc.dump(2) + "\n";
}

std::string to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "model,window,accuracy,macro_recall,mae_hours,n_predictions,n_time_predictions,n_filtered,"
        "n_censored,n_coldstart\n";
  auto row = [&](const std::string& name, const std::string& window, const std::optional<double>& acc,
                 const std::optional<double>& mr, const std::optional<double>& mae, const MetricCounts& c) {
    os << name << ',' << window << ',' << csv_cell(acc) << ',' << csv_cell(mr) << ',' << csv_cell(mae) << ','
       << c.n_predictions << ',' << c.n_time_predictions << ',' << c.n_filtered << ',' << c.n_censored << ','
       << c.n_coldstart << '\n';
  };
  for (const auto& m : report.models) {
    for (const auto& w : m.windows)
      row(m.name, std::to_string(w.window), w.accuracy, w.macro_recall, w.mae_hours, w.counts);
    row(m.name, "pooled", m.pooled.accuracy, m.pooled.macro_recall, m.pooled.mae_hours, m.pooled.counts);
  }
  return os.str();
}

}  // namespace tipas
