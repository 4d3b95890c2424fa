#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tipas/model.hpp"

namespace tipas {

double accuracy(std::span<const ActionId> preds, std::span<const ActionId> truths);

/// Recall per action; nullopt for actions with no true instance.
std::vector<std::optional<double>> per_action_recall(std::span<const ActionId> preds,
                                                     std::span<const ActionId> truths,
                                                     int n_actions);

/// Unweighted mean of per-action recall over actions that occur in `truths`.
double macro_recall(std::span<const ActionId> preds, std::span<const ActionId> truths,
                    int n_actions);

struct MaeResult {
  std::optional<double> mae;  // nullopt when no event passes the filter
  std::size_t n_used = 0;
  std::size_t n_filtered = 0;
};

/// Mean |pred - true| over events whose true interarrival (true - last) is
/// at most `horizon` hours.
MaeResult mae_filtered(std::span<const double> pred_times, std::span<const double> true_times,
                       std::span<const double> last_times, double horizon = 12.0);

struct MetricCounts {
  std::size_t n_predictions = 0;
  std::size_t n_time_predictions = 0;
  std::size_t n_filtered = 0;
  std::size_t n_censored = 0;
  std::size_t n_coldstart = 0;
  std::size_t n_degenerate = 0;
};

struct WindowMetrics {
  int window = 0;  // index of the test window
  std::optional<double> accuracy;
  std::optional<double> macro_recall;
  std::vector<std::optional<double>> recall;
  std::optional<double> mae_hours;
  MetricCounts counts;
};

struct PooledMetrics {
  std::optional<double> accuracy;
  std::optional<double> macro_recall;
  std::vector<std::optional<double>> recall;
  std::optional<double> mae_hours;
  // standard errors of the per-window values
  std::optional<double> accuracy_se;
  std::optional<double> macro_recall_se;
  std::optional<double> mae_se;
  MetricCounts counts;
};

struct ModelReport {
  std::string name;
  bool predicts_actions = false;
  bool predicts_times = false;
  std::vector<WindowMetrics> windows;
  PooledMetrics pooled;
};

struct EvalReport {
  int schema_version = 1;
  int n_actions = 0;
  std::vector<std::string> actions;
  double window_hours = 0.0;
  double horizon_filter = 12.0;
  std::size_t n_windows = 0;
  std::vector<std::string> warnings;
  std::vector<ModelReport> models;

  const ModelReport* find(const std::string& name) const;
};

/// Standard error of the mean over window values; nullopt for fewer than two.
std::optional<double> standard_error(std::span<const double> values);

std::string to_json(const EvalReport& report);
std::string to_csv(const EvalReport& report);

}  // namespace tipas
