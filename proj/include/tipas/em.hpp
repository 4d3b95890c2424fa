#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tipas/likelihood.hpp"
#include "tipas/model.hpp"

namespace tipas {

/// Posterior attribution of one event to the additive intensity terms.
struct EventResponsibility {
  double preference = 0.0;     // user preference alpha
  Eigen::VectorXd background;  // one entry per mixture
  std::size_t first_source = 0;
  std::vector<double> short_term;  // entry i is prior event first_source + i
  std::vector<std::pair<std::size_t, double>> long_term;  // (prior same-action event, weight)

  double total() const;
};

struct Responsibilities {
  std::vector<std::vector<EventResponsibility>> users;  // parallel to the dataset
};

struct MStepOptions {
  double param_floor = 1e-8;
  double sigma_floor = 0.05;
  int newton_max_inner = 50;
  int newton_max_outer = 30;
};

struct FitConfig {
  int n_mixtures = 3;
  std::vector<DayWindow> tod_windows = default_tod_windows();
  double day_length = 24.0;
  std::optional<double> horizon;  // default: data span rounded up to whole days
  std::optional<int> n_actions;   // default: largest action id + 1
  Components components;
  int max_iterations = 500;
  double rel_ll_tolerance = 1e-6;
  MStepOptions mstep;
  std::uint64_t rng_seed = 0;
  std::size_t lookback_cap = 0;  // 0 = unlimited

  void validate() const;
};

struct FitReport {
  std::vector<LogLikValue> ll_trace;  // entry 0 is the initial point
  int iterations_run = 0;
  bool converged = false;
  double wall_time_seconds = 0.0;
  int newton_failures = 0;
  std::vector<std::string> diagnostics;
};

struct FitResult {
  ModelParams params;
  FitReport report;
};

/// Throws DegenerateEvent if every term of some event's intensity is zero.
/// `event_log_sum`, when given, receives sum log lambda over all events.
Responsibilities e_step(const ModelParams& params, const Dataset& data,
                        std::size_t lookback = 0, double* event_log_sum = nullptr);

/// Closed-form maximizers of the expected complete log-likelihood for
/// alpha, beta, theta and phi, holding the remaining parameters fixed.
ModelParams m_step_closed(const Responsibilities& resp, const Dataset& data,
                          const ModelParams& params, double horizon,
                          const MStepOptions& options = {},
                          std::vector<std::string>* diagnostics = nullptr);

/// omega and gamma from the tangent lower bound of the compensator at the
/// current rates; uses whatever theta, phi and kappa `params` holds.
ModelParams m_step_rate(const Responsibilities& resp, const Dataset& data,
                        const ModelParams& params, double horizon,
                        const MStepOptions& options = {},
                        std::vector<std::string>* diagnostics = nullptr);

/// Damped Newton ascent with backtracking for kappa (per category, action)
/// and (mu, sigma) jointly (per action, mixture). `failures` counts slices
/// that could not improve and kept their previous value.
ModelParams m_step_newton(const Responsibilities& resp, const Dataset& data,
                          const ModelParams& params, double horizon,
                          const MStepOptions& options = {}, int* failures = nullptr);

FitResult fit(const Dataset& data, const FitConfig& config);

/// Picks n_mixtures from `grid` by held-out log-likelihood: every fifth user
/// is held out and scored as a cold-start user.
int select_mixtures(const Dataset& data, const FitConfig& config,
                    std::span<const int> grid);

ModelParams initialize_params(const Dataset& data, const ModelStructure& structure,
                              const FitConfig& config);

// Q-function slices handled by Newton. Values omit terms constant in the
// slice's own parameters.

struct WeibullSlice {
  std::vector<double> weights;  // responsibilities of same-action pairs
  std::vector<double> deltas;   // their separations (clamped to kMinDelta)
  std::vector<double> tails;    // horizon - t for triggering events of this slice
  double phi = 0.0;
  double gamma = 0.0;

  /// Caches logarithms so each kappa evaluation costs one exp per entry.
  /// Optional; kappa_q_slice falls back to computing them.
  void prepare();
  std::vector<double> log_deltas, log_tails;
  double weight_sum = 0.0, weighted_log_sum = 0.0;
};

struct ScalarSlice {
  double value = 0.0;
  double gradient = 0.0;
  double hessian = 0.0;
};

ScalarSlice kappa_q_slice(const WeibullSlice& slice, double kappa);

struct GaussianSlice {
  double mass = 0.0;    // sum of p_z
  double first = 0.0;   // sum of p_z * tod
  double second = 0.0;  // sum of p_z * tod^2
  double beta = 0.0;
  double n_users = 0.0;
  double horizon = 0.0;
  double day_length = 24.0;
};

struct VectorSlice {
  double value = 0.0;
  Eigen::Vector2d gradient = Eigen::Vector2d::Zero();  // d/dmu, d/dsigma
  Eigen::Matrix2d hessian = Eigen::Matrix2d::Zero();
};

VectorSlice gaussian_q_slice(const GaussianSlice& slice, double mu, double sigma);

}  // namespace tipas
