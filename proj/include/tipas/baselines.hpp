#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tipas/predict.hpp"

namespace tipas {

// Action baselines

/// Last action of the history; empty history returns `fallback` flagged.
ActionPrediction copy_predict(std::span<const EventRecord> history, ActionId fallback);

/// Order-k Markov chain with add-one smoothing, backing off to shorter
/// contexts (down to the unigram) when a context was never observed.
struct MarkovModel {
  int order = 1;
  int n_actions = 1;
  // tables[j] maps a length-j context to next-action counts; tables[0] has
  // the single empty context.
  std::vector<std::map<std::vector<ActionId>, std::vector<double>>> tables;

  /// Smoothed next-action distribution for the longest seen context.
  Eigen::VectorXd probabilities(std::span<const EventRecord> history, int* used_order = nullptr) const;
};

MarkovModel markov_fit(const Dataset& histories, int order, int n_actions);
ActionPrediction markov_predict(const MarkovModel& model, std::span<const EventRecord> history);

/// Constant-rate Poisson fits: per-action rates pooled over users, or per user.
Eigen::VectorXd pp_global_fit(const Dataset& histories, double horizon, int n_actions);
std::map<std::string, Eigen::VectorXd> pp_user_fit(const Dataset& histories, double horizon, int n_actions);

/// argmax of constant rates; all-zero rates give a degenerate prediction.
ActionPrediction pp_predict_action(const Eigen::VectorXd& rates);
/// last + 1 / sum(rates); throws InvalidInput for zero total rate.
double pp_predict_time(const Eigen::VectorXd& rates, double last);

// Time baselines

struct IntervalStats {
  double sum = 0.0;
  std::size_t count = 0;

  void add(std::span<const EventRecord> history);
  std::optional<double> mean() const;
  static IntervalStats of(const Dataset& data);
};

TimePrediction time_copy_predict(std::span<const EventRecord> history, const IntervalStats& global);
TimePrediction avg_interval_predict(std::span<const EventRecord> history, const IntervalStats& global);
TimePrediction user_avg_interval_predict(std::span<const EventRecord> history,
                                         const IntervalStats& global);

// Predictor adapters

class CopyPredictor : public Predictor {
 public:
  std::string name() const override { return "Copy"; }
  bool predicts_actions() const override { return true; }
  void fit(const Dataset& train, double horizon, int n_actions) override;
  ActionPrediction predict_action(const PredictionTask& task) const override;

 private:
  ActionId majority_ = 0;
};

class MarkovPredictor : public Predictor {
 public:
  explicit MarkovPredictor(int order);
  std::string name() const override { return "Markov" + std::to_string(order_); }
  bool predicts_actions() const override { return true; }
  void fit(const Dataset& train, double horizon, int n_actions) override;
  ActionPrediction predict_action(const PredictionTask& task) const override;

 private:
  int order_;
  MarkovModel model_;
};

class PPGlobalPredictor : public Predictor {
 public:
  std::string name() const override { return "PP-Global"; }
  bool predicts_actions() const override { return true; }
  bool predicts_times() const override { return true; }
  void fit(const Dataset& train, double horizon, int n_actions) override;
  ActionPrediction predict_action(const PredictionTask& task) const override;
  TimePrediction predict_time(const PredictionTask& task, std::uint64_t stream) const override;

 private:
  Eigen::VectorXd rates_;
};

class PPUserPredictor : public Predictor {
 public:
  std::string name() const override { return "PP-User"; }
  bool predicts_actions() const override { return true; }
  bool predicts_times() const override { return true; }
  void fit(const Dataset& train, double horizon, int n_actions) override;
  ActionPrediction predict_action(const PredictionTask& task) const override;
  TimePrediction predict_time(const PredictionTask& task, std::uint64_t stream) const override;
  bool is_coldstart(const std::string& user) const override;

 private:
  const Eigen::VectorXd* user_rates(const std::string& user) const;
  std::map<std::string, Eigen::VectorXd> rates_;
  Eigen::VectorXd global_;
};

enum class IntervalRule { Copy, Global, User };

class IntervalPredictor : public Predictor {
 public:
  explicit IntervalPredictor(IntervalRule rule) : rule_(rule) {}
  std::string name() const override;
  bool predicts_times() const override { return true; }
  void fit(const Dataset& train, double horizon, int n_actions) override;
  TimePrediction predict_time(const PredictionTask& task, std::uint64_t stream) const override;

 private:
  IntervalRule rule_;
  IntervalStats global_;
};

/// Baseline names accepted by make_baselines: "copy", "markov1".."markov5",
/// "markov" (all orders), "pp-global", "pp-user", "time-copy", "avg-interval",
/// "user-avg-interval", or "all".
std::vector<PredictorFactory> make_baselines(const std::vector<std::string>& names);

}  // namespace tipas
