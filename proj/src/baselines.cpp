#include "tipas/baselines.hpp"

#include <algorithm>
#include <cmath>

namespace tipas {

namespace {

ActionId argmax_lowest(const Eigen::VectorXd& scores) {
  Index best = 0;
  for (Index a = 1; a < scores.size(); ++a)
    if (scores(a) > scores(best)) best = a;
  return static_cast<ActionId>(best);
}

ActionId majority_action(const Dataset& data, int n_actions) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_actions);
  for (const auto& h : data)
    for (const auto& e : h.events) counts(e.action) += 1.0;
  return argmax_lowest(counts);
}

}  // namespace

ActionPrediction copy_predict(std::span<const EventRecord> history, ActionId fallback) {
  if (history.empty()) return {fallback, false, true};
  return {history.back().action, false, false};
}

Eigen::VectorXd MarkovModel::probabilities(std::span<const EventRecord> history, int* used_order) const {
  for (int j = std::min<int>(order, static_cast<int>(history.size())); j >= 0; --j) {
    std::vector<ActionId> context;
    for (std::size_t i = history.size() - static_cast<std::size_t>(j); i < history.size(); ++i)
      context.push_back(history[i].action);
    const auto& table = tables[static_cast<std::size_t>(j)];
    auto it = table.find(context);
    if (it == table.end()) continue;
    Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(it->second.data(), n_actions);
    p.array() += 1.0;
    p /= p.sum();
    if (used_order) *used_order = j;
    return p;
  }
  if (used_order) *used_order = -1;
  return Eigen::VectorXd::Constant(n_actions, 1.0 / n_actions);
}

MarkovModel markov_fit(const Dataset& histories, int order, int n_actions) {
  if (order < 1 || order > 5) throw Error(ErrorKind::InvalidInput, "Markov order must be in [1, 5]");
  MarkovModel m;
  m.order = order;
  m.n_actions = n_actions;
  m.tables.resize(static_cast<std::size_t>(order) + 1);
  for (const auto& h : histories) {
    const auto& ev = h.events;
    for (std::size_t n = 0; n < ev.size(); ++n) {
      for (int j = 0; j <= order && static_cast<std::size_t>(j) <= n; ++j) {
        std::vector<ActionId> context;
        for (std::size_t i = n - static_cast<std::size_t>(j); i < n; ++i) context.push_back(ev[i].action);
        auto& row = m.tables[static_cast<std::size_t>(j)][context];
        if (row.empty()) row.assign(static_cast<std::size_t>(n_actions), 0.0);
        row[static_cast<std::size_t>(ev[n].action)] += 1.0;
      }
    }
  }
  return m;
}

ActionPrediction markov_predict(const MarkovModel& model, std::span<const EventRecord> history) {
  int used = 0;
  const auto p = model.probabilities(history, &used);
  ActionPrediction out;
  out.action = argmax_lowest(p);
  out.fallback = used < model.order;
  out.degenerate = used < 0;
  return out;
}

Eigen::VectorXd pp_global_fit(const Dataset& histories, double horizon, int n_actions) {
  if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidInput, "horizon must be > 0");
  Eigen::VectorXd rates = Eigen::VectorXd::Zero(n_actions);
  if (histories.empty()) return rates;
  for (const auto& h : histories)
    for (const auto& e : h.events) rates(e.action) += 1.0;
  return rates / (horizon * static_cast<double>(histories.size()));
}

std::map<std::string, Eigen::VectorXd> pp_user_fit(const Dataset& histories, double horizon, int n_actions) {
  if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidInput, "horizon must be > 0");
  std::map<std::string, Eigen::VectorXd> out;
  for (const auto& h : histories) {
    Eigen::VectorXd rates = Eigen::VectorXd::Zero(n_actions);
    for (const auto& e : h.events) rates(e.action) += 1.0;
    out[h.user] = rates / horizon;
  }
  return out;
}

ActionPrediction pp_predict_action(const Eigen::VectorXd& rates) {
  ActionPrediction out;
  out.action = argmax_lowest(rates);
  out.degenerate = !(rates.maxCoeff() > 0.0);
  return out;
}

double pp_predict_time(const Eigen::VectorXd& rates, double last) {
  const double total = rates.sum();
  if (!(total > 0.0)) throw Error(ErrorKind::InvalidInput, "zero total rate has no next-event time");
  return last + 1.0 / total;
}

void IntervalStats::add(std::span<const EventRecord> history) {
  for (std::size_t i = 1; i < history.size(); ++i) {
    sum += history[i].t - history[i - 1].t;
    ++count;
  }
}

std::optional<double> IntervalStats::mean() const {
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

IntervalStats IntervalStats::of(const Dataset& data) {
  IntervalStats s;
  for (const auto& h : data) s.add(h.events);
  return s;
}

namespace {

double last_time(std::span<const EventRecord> history) {
  if (history.empty()) throw Error(ErrorKind::InvalidInput, "time baselines need at least one prior event");
  return history.back().t;
}

TimePrediction global_fallback(std::span<const EventRecord> history, const IntervalStats& global) {
  const auto g = global.mean();
  if (!g) throw Error(ErrorKind::InvalidInput, "no interarrival intervals available");
  return {last_time(history) + *g, 0, true};
}

}  // namespace

TimePrediction time_copy_predict(std::span<const EventRecord> history, const IntervalStats& global) {
  if (history.size() < 2) return global_fallback(history, global);
  const auto n = history.size();
  return {history[n - 1].t + (history[n - 1].t - history[n - 2].t), 0, false};
}

TimePrediction avg_interval_predict(std::span<const EventRecord> history, const IntervalStats& global) {
  auto out = global_fallback(history, global);
  out.fallback = false;
  return out;
}

TimePrediction user_avg_interval_predict(std::span<const EventRecord> history, const IntervalStats& global) {
  IntervalStats user;
  user.add(history);
  if (const auto m = user.mean()) return {last_time(history) + *m, 0, false};
  return global_fallback(history, global);
}

void CopyPredictor::fit(const Dataset& train, double, int n_actions) {
  majority_ = majority_action(train, n_actions);
}

ActionPrediction CopyPredictor::predict_action(const PredictionTask& task) const {
  return copy_predict(task.prefix, majority_);
}

MarkovPredictor::MarkovPredictor(int order) : order_(order) {
  if (order < 1 || order > 5) throw Error(ErrorKind::InvalidInput, "Markov order must be in [1, 5]");
}

void MarkovPredictor::fit(const Dataset& train, double, int n_actions) {
  model_ = markov_fit(train, order_, n_actions);
}

ActionPrediction MarkovPredictor::predict_action(const PredictionTask& task) const {
  return markov_predict(model_, task.prefix);
}

void PPGlobalPredictor::fit(const Dataset& train, double horizon, int n_actions) {
  rates_ = pp_global_fit(train, horizon, n_actions);
}

ActionPrediction PPGlobalPredictor::predict_action(const PredictionTask&) const {
  return pp_predict_action(rates_);
}

TimePrediction PPGlobalPredictor::predict_time(const PredictionTask& task, std::uint64_t) const {
  return {pp_predict_time(rates_, last_time(task.prefix)), 0, false};
}

void PPUserPredictor::fit(const Dataset& train, double horizon, int n_actions) {
  rates_ = pp_user_fit(train, horizon, n_actions);
  global_ = pp_global_fit(train, horizon, n_actions);
}

const Eigen::VectorXd* PPUserPredictor::user_rates(const std::string& user) const {
  auto it = rates_.find(user);
  if (it == rates_.end() || !(it->second.sum() > 0.0)) return nullptr;
  return &it->second;
}

bool PPUserPredictor::is_coldstart(const std::string& user) const { return user_rates(user) == nullptr; }

ActionPrediction PPUserPredictor::predict_action(const PredictionTask& task) const {
  if (const auto* r = user_rates(task.user)) return pp_predict_action(*r);
  auto out = pp_predict_action(global_);
  out.degenerate = true;
  out.fallback = true;
  return out;
}

TimePrediction PPUserPredictor::predict_time(const PredictionTask& task, std::uint64_t) const {
  const double last = last_time(task.prefix);
  if (const auto* r = user_rates(task.user)) return {pp_predict_time(*r, last), 0, false};
  return {pp_predict_time(global_, last), 0, true};
}

std::string IntervalPredictor::name() const {
  switch (rule_) {
    case IntervalRule::Copy: return "TimeCopy";
    case IntervalRule::Global: return "AvgInterval";
    case IntervalRule::User: return "UserAvgInterval";
  }
  return "Interval";
}

void IntervalPredictor::fit(const Dataset& train, double, int) { global_ = IntervalStats::of(train); }

TimePrediction IntervalPredictor::predict_time(const PredictionTask& task, std::uint64_t) const {
  switch (rule_) {
    case IntervalRule::Copy: return time_copy_predict(task.prefix, global_);
    case IntervalRule::Global: return avg_interval_predict(task.prefix, global_);
    case IntervalRule::User: return user_avg_interval_predict(task.prefix, global_);
  }
  throw Error(ErrorKind::Internal, "unknown interval rule");
}

std::vector<PredictorFactory> make_baselines(const std::vector<std::string>& names) {
  std::vector<std::string> expanded;
  for (const auto& n : names) {
    if (n == "all") {
      for (const char* b : {"copy", "markov1", "markov2", "markov3", "markov4", "markov5", "pp-global",
                            "pp-user", "time-copy", "avg-interval", "user-avg-interval"})
        expanded.emplace_back(b);
    } else if (n == "markov") {
      for (int k = 1; k <= 5; ++k) expanded.push_back("markov" + std::to_string(k));
    } else if (n != "none" && !n.empty()) {
      expanded.push_back(n);
    }
  }
  std::vector<PredictorFactory> out;
  for (const auto& n : expanded) {
    if (n == "copy") {
      out.emplace_back([] { return std::make_unique<CopyPredictor>(); });
    } else if (n.size() == 7 && n.starts_with("markov") && n[6] >= '1' && n[6] <= '5') {
      const int k = n[6] - '0';
      out.emplace_back([k] { return std::make_unique<MarkovPredictor>(k); });
    } else if (n == "pp-global") {
      out.emplace_back([] { return std::make_unique<PPGlobalPredictor>(); });
    } else if (n == "pp-user") {
      out.emplace_back([] { return std::make_unique<PPUserPredictor>(); });
    } else if (n == "time-copy") {
      out.emplace_back([] { return std::make_unique<IntervalPredictor>(IntervalRule::Copy); });
    } else if (n == "avg-interval") {
      out.emplace_back([] { return std::make_unique<IntervalPredictor>(IntervalRule::Global); });
    } else if (n == "user-avg-interval") {
      out.emplace_back([] { return std::make_unique<IntervalPredictor>(IntervalRule::User); });
    } else {
      throw Error(ErrorKind::InvalidInput, "unknown baseline '" + n + "'");
    }
  }
  return out;
}

}  // namespace tipas
