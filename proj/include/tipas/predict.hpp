#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tipas/em.hpp"
#include "tipas/metrics.hpp"
#include "tipas/model.hpp"

namespace tipas {

struct PredictionTask {
  std::string user;
  std::span<const EventRecord> prefix;  // every event before the target
  double query_time = 0.0;              // true time of the target (action prediction)
};

struct ActionPrediction {
  ActionId action = 0;
  bool degenerate = false;  // all scores zero; lowest id returned
  bool fallback = false;    // predictor fell back to a global rule
};

struct TimePrediction {
  double time = 0.0;
  std::size_t n_censored = 0;  // samples that hit the simulation cap
  bool fallback = false;
};

/// argmax_a lambda_u(query_time, a); ties go to the lowest action id.
ActionPrediction predict_next_action(const ModelParams& params, const PredictionTask& task);

struct TimeSamplingOptions {
  int n_samples = 100;
  std::uint64_t seed = 0;
  double horizon_filter = 12.0;
  double censor_factor = 10.0;  // samples stop at censor_factor * horizon_filter
  double bound_window = 1.0;
};

/// Mean first-event time over n_samples thinning runs started at the last
/// event of `history` (or 0 when empty). Throws CensoredPrediction when no
/// sample produced an event.
TimePrediction predict_next_time(const ModelParams& params, const std::string& user,
                                 std::span<const EventRecord> history,
                                 const TimeSamplingOptions& options = {});

/// Uniform surface for TIPAS, its ablations and every baseline.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  virtual bool predicts_actions() const { return false; }
  virtual bool predicts_times() const { return false; }
  virtual void fit(const Dataset& train, double horizon, int n_actions) = 0;
  virtual ActionPrediction predict_action(const PredictionTask& task) const;
  /// `stream` keys the randomness of stochastic predictors.
  virtual TimePrediction predict_time(const PredictionTask& task, std::uint64_t stream) const;
  virtual bool is_coldstart(const std::string& /*user*/) const { return false; }
};

using PredictorFactory = std::function<std::unique_ptr<Predictor>()>;

class TipasPredictor : public Predictor {
 public:
  TipasPredictor(std::string name, FitConfig config, TimeSamplingOptions sampling = {});

  std::string name() const override { return name_; }
  bool predicts_actions() const override { return true; }
  bool predicts_times() const override { return true; }
  void fit(const Dataset& train, double horizon, int n_actions) override;
  ActionPrediction predict_action(const PredictionTask& task) const override;
  TimePrediction predict_time(const PredictionTask& task, std::uint64_t stream) const override;
  bool is_coldstart(const std::string& user) const override;

  const ModelParams& params() const { return params_; }
  const FitReport& report() const { return report_; }

 private:
  std::string name_;
  FitConfig config_;
  TimeSamplingOptions sampling_;
  ModelParams params_;
  FitReport report_;
};

struct EvalConfig {
  double window_hours = 720.0;
  double horizon_filter = 12.0;
  bool predict_times = true;
  std::uint64_t seed = 0;
  std::optional<int> n_actions;
  std::vector<std::string> actions;  // labels copied into the report
  std::function<void(const std::string&)> progress;  // optional, called per fitted model
};

/// Train on window k, test on window k + 1 for every consecutive pair.
/// Test predictions condition on all earlier events of the user in both
/// windows; the model is never refit on test events.
EvalReport rolling_window_eval(const Dataset& data, std::span<const PredictorFactory> factories,
                               const EvalConfig& config);

}  // namespace tipas
