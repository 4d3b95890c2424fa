#include "tipas/predict.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tipas/parallel.hpp"
#include "tipas/rng.hpp"
#include "tipas/simulate.hpp"

namespace tipas {

ActionPrediction predict_next_action(const ModelParams& params, const PredictionTask& task) {
  const Index slot = params.user_slot(task.user);
  const Eigen::VectorXd lambda = intensity_vector(params, slot, task.prefix, task.query_time);
  ActionPrediction out;
  Index best = 0;
  for (Index a = 1; a < lambda.size(); ++a)
    if (lambda(a) > lambda(best)) best = a;
  out.action = static_cast<ActionId>(best);
  out.degenerate = !(lambda(best) > 0.0);
  return out;
}

TimePrediction predict_next_time(const ModelParams& params, const std::string& user,
                                 std::span<const EventRecord> history, const TimeSamplingOptions& options) {
  if (options.n_samples < 1) throw Error(ErrorKind::InvalidInput, "n_samples must be >= 1");
  const Index slot = params.user_slot(user);
  const double start = history.empty() ? 0.0 : history.back().t;
  const double cap = options.censor_factor * options.horizon_filter;
  const std::uint64_t key = stable_hash(user);
  if (!history.empty() && history.back().t > start)
    throw Error(ErrorKind::InvalidInput, "history extends past the sampling start");
  const ThinningState state(params, slot, history);
  TimePrediction out;
  double sum = 0.0;
  for (int i = 0; i < options.n_samples; ++i) {
    Rng rng(stream_seed(options.seed, key, static_cast<std::uint64_t>(i)));
    const auto next = sample_next_event(state, start, cap, rng, options.bound_window);
    if (next) {
      sum += next->t;
    } else {
      sum += start + cap;
      ++out.n_censored;
    }
  }
  if (out.n_censored == static_cast<std::size_t>(options.n_samples))
    throw Error(ErrorKind::CensoredPrediction,
                "no sample produced an event within " + std::to_string(cap) + " h for user '" + user + "'");
  out.time = sum / options.n_samples;
  return out;
}

ActionPrediction Predictor::predict_action(const PredictionTask&) const {
  throw Error(ErrorKind::InvalidInput, name() + " does not predict actions");
}

TimePrediction Predictor::predict_time(const PredictionTask&, std::uint64_t) const {
  throw Error(ErrorKind::InvalidInput, name() + " does not predict times");
}

TipasPredictor::TipasPredictor(std::string name, FitConfig config, TimeSamplingOptions sampling)
    : name_(std::move(name)), config_(std::move(config)), sampling_(sampling) {}

void TipasPredictor::fit(const Dataset& train, double horizon, int n_actions) {
  FitConfig cfg = config_;
  cfg.horizon = horizon;
  cfg.n_actions = n_actions;
  auto result = tipas::fit(train, cfg);
  params_ = std::move(result.params);
  report_ = std::move(result.report);
}

ActionPrediction TipasPredictor::predict_action(const PredictionTask& task) const {
  return predict_next_action(params_, task);
}

TimePrediction TipasPredictor::predict_time(const PredictionTask& task, std::uint64_t stream) const {
  TimeSamplingOptions opt = sampling_;
  opt.seed = stream;
  return predict_next_time(params_, task.user, task.prefix, opt);
}

bool TipasPredictor::is_coldstart(const std::string& user) const {
  return params_.user_slot(user) == kColdStart;
}

namespace {

struct Outcome {
  std::vector<ActionId> preds, truths;
  std::vector<double> pred_times, true_times, last_times;
  MetricCounts counts;

  void append(const Outcome& o) {
    preds.insert(preds.end(), o.preds.begin(), o.preds.end());
    truths.insert(truths.end(), o.truths.begin(), o.truths.end());
    pred_times.insert(pred_times.end(), o.pred_times.begin(), o.pred_times.end());
    true_times.insert(true_times.end(), o.true_times.begin(), o.true_times.end());
    last_times.insert(last_times.end(), o.last_times.begin(), o.last_times.end());
    counts.n_predictions += o.counts.n_predictions;
    counts.n_time_predictions += o.counts.n_time_predictions;
    counts.n_filtered += o.counts.n_filtered;
    counts.n_censored += o.counts.n_censored;
    counts.n_coldstart += o.counts.n_coldstart;
    counts.n_degenerate += o.counts.n_degenerate;
  }
};

// One user's view of a train/test window pair, shifted so the train window starts at 0.
struct UserSlice {
  std::string user;
  std::vector<EventRecord> events;
  std::size_t first_test = 0;
};

template <class Metrics>
void fill_metrics(Metrics& m, const Outcome& o, int n_actions, double horizon_filter) {
  m.counts = o.counts;
  if (!o.preds.empty()) {
    m.accuracy = accuracy(o.preds, o.truths);
    m.macro_recall = macro_recall(o.preds, o.truths, n_actions);
    m.recall = per_action_recall(o.preds, o.truths, n_actions);
  }
  if (!o.true_times.empty()) m.mae_hours = mae_filtered(o.pred_times, o.true_times, o.last_times, horizon_filter).mae;
}

}  // namespace

EvalReport rolling_window_eval(const Dataset& data, std::span<const PredictorFactory> factories,
                               const EvalConfig& config) {
  if (!(config.window_hours > 0.0)) throw Error(ErrorKind::InvalidInput, "window length must be > 0");
  const double W = config.window_hours;
  const int n_actions = config.n_actions.value_or(infer_n_actions(data));
  double last = 0.0;
  for (const auto& h : data) {
    for (std::size_t i = 1; i < h.events.size(); ++i)
      if (h.events[i].t < h.events[i - 1].t)
        throw Error(ErrorKind::InvalidInput, "history of user '" + h.user + "' is unsorted");
    if (!h.events.empty()) last = std::max(last, h.events.back().t);
  }
  const auto n_windows = static_cast<std::size_t>(std::floor(last / W)) + 1;
  if (n_windows < 2) throw Error(ErrorKind::InvalidInput, "dataset must span at least two windows");

  EvalReport report;
  report.n_actions = n_actions;
  report.actions = config.actions;
  report.window_hours = W;
  report.horizon_filter = config.horizon_filter;

  std::vector<std::unique_ptr<Predictor>> predictors;
  for (const auto& make : factories) predictors.push_back(make());
  report.models.resize(predictors.size());
  std::vector<Outcome> pooled(predictors.size());
  for (std::size_t p = 0; p < predictors.size(); ++p) {
    report.models[p].name = predictors[p]->name();
    report.models[p].predicts_actions = predictors[p]->predicts_actions();
    report.models[p].predicts_times = config.predict_times && predictors[p]->predicts_times();
  }

  for (std::size_t k = 0; k + 1 < n_windows; ++k) {
    const double offset = static_cast<double>(k) * W;
    Dataset train;
    std::vector<UserSlice> slices;
    std::size_t n_test = 0;
    for (const auto& h : data) {
      UserSlice s{h.user, {}, 0};
      UserHistory tr{h.user, {}};
      for (const auto& e : h.events) {
        if (e.t < offset || e.t >= offset + 2.0 * W) continue;
        const EventRecord shifted{e.action, e.t - offset};
        s.events.push_back(shifted);
        if (shifted.t < W) {
          tr.events.push_back(shifted);
          ++s.first_test;
        }
      }
      n_test += s.events.size() - s.first_test;
      if (!tr.events.empty()) train.push_back(std::move(tr));
      if (s.events.size() > s.first_test) slices.push_back(std::move(s));
    }
    if (n_test == 0) {
      report.warnings.push_back("window " + std::to_string(k + 1) + ": empty test window, skipped");
      continue;
    }
    if (count_events(train) == 0) {
      report.warnings.push_back("window " + std::to_string(k) + ": empty training window, skipped");
      continue;
    }
    ++report.n_windows;

    for (std::size_t p = 0; p < predictors.size(); ++p) {
      auto& predictor = *predictors[p];
      auto& model = report.models[p];
      if (config.progress)
        config.progress("window " + std::to_string(k + 1) + "/" + std::to_string(n_windows - 1) + ": " +
                        model.name);
      predictor.fit(train, W, n_actions);
      std::vector<Outcome> per_user(slices.size());
      parallel_for(slices.size(), [&](std::size_t u) {
        const auto& s = slices[u];
        auto& o = per_user[u];
        const bool cold = predictor.is_coldstart(s.user);
        const std::uint64_t user_key = stable_hash(s.user);
        for (std::size_t n = s.first_test; n < s.events.size(); ++n) {
          const PredictionTask task{s.user, std::span(s.events.data(), n), s.events[n].t};
          if (model.predicts_actions) {
            const auto pred = predictor.predict_action(task);
            o.preds.push_back(pred.action);
            o.truths.push_back(s.events[n].action);
            ++o.counts.n_predictions;
            o.counts.n_coldstart += cold;
            o.counts.n_degenerate += pred.degenerate;
          }
          if (model.predicts_times && n > 0) {
            const double prev = s.events[n - 1].t;
            if (s.events[n].t - prev > config.horizon_filter) {
              ++o.counts.n_filtered;
              continue;
            }
            const std::uint64_t stream =
                stream_seed(config.seed ^ (static_cast<std::uint64_t>(k) << 32), user_key, n);
            try {
              const auto pred = predictor.predict_time(task, stream);
              o.pred_times.push_back(pred.time);
              o.true_times.push_back(s.events[n].t);
              o.last_times.push_back(prev);
              ++o.counts.n_time_predictions;
              o.counts.n_censored += pred.n_censored > 0;
            } catch (const Error& e) {
              if (e.kind() != ErrorKind::CensoredPrediction) throw;
              ++o.counts.n_censored;
            }
          }
        }
      });
      Outcome window;
      for (const auto& o : per_user) window.append(o);
      WindowMetrics wm;
      wm.window = static_cast<int>(k + 1);
      fill_metrics(wm, window, n_actions, config.horizon_filter);
      model.windows.push_back(std::move(wm));
      pooled[p].append(window);
    }
  }

  for (std::size_t p = 0; p < predictors.size(); ++p) {
    auto& model = report.models[p];
    fill_metrics(model.pooled, pooled[p], n_actions, config.horizon_filter);
    std::vector<double> acc, mr, mae;
    for (const auto& w : model.windows) {
      if (w.accuracy) acc.push_back(*w.accuracy);
      if (w.macro_recall) mr.push_back(*w.macro_recall);
      if (w.mae_hours) mae.push_back(*w.mae_hours);
    }
    model.pooled.accuracy_se = standard_error(acc);
    model.pooled.macro_recall_se = standard_error(mr);
    model.pooled.mae_se = standard_error(mae);
  }
  return report;
}

}  // namespace tipas
