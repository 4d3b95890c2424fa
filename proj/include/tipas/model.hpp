#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tipas/error.hpp"

namespace tipas {

using ActionId = int;
using Index = Eigen::Index;

/// Slot of a user inside ModelParams::alpha. Unseen users map to kColdStart.
inline constexpr Index kColdStart = -1;

/// Minimum separation used for kernel evaluation when two events share a timestamp.
inline constexpr double kMinDelta = 1e-6;

struct EventRecord {
  ActionId action = 0;
  double t = 0.0;  // hours since observation start

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct UserHistory {
  std::string user;
  std::vector<EventRecord> events;  // non-decreasing in t, ties keep input order
};

using Dataset = std::vector<UserHistory>;

/// Half-open window [begin, end) of hours within a day.
struct DayWindow {
  double begin = 0.0;
  double end = 0.0;
};

/// Which intensity terms participate in a model. Disabled terms hold zeros
/// and are never touched by inference.
struct Components {
  bool preference = true;
  bool background = true;
  bool short_term = true;
  bool long_term = true;

  static Components time_only() { return {true, true, false, false}; }
  static Components time_short() { return {true, true, true, false}; }
  static Components full() { return {}; }
};

std::vector<DayWindow> default_tod_windows();

struct ModelStructure {
  int n_actions = 1;
  int n_mixtures = 1;
  std::vector<DayWindow> tod_windows = default_tod_windows();
  double day_length = 24.0;
  double horizon = 0.0;
  Components components;

  int n_categories() const { return static_cast<int>(tod_windows.size()); }

  /// Throws InvalidInput unless the windows tile [0, day_length) exactly.
  void validate() const;
};

/// All parameters of the intensity
///   alpha[u,a] + sum_z beta N(tod; mu, sigma) + exponential excitation
///   + time-of-day conditioned Weibull recurrence.
///
/// Layouts: alpha is users x actions; beta/mu/sigma are actions x mixtures;
/// theta/omega are source action x target action; phi/gamma/kappa are
/// categories x actions, indexed by the category of the triggering event.
struct ModelParams {
  ModelStructure structure;
  std::vector<std::string> users;

  Eigen::MatrixXd alpha;
  Eigen::MatrixXd beta;
  Eigen::MatrixXd mu;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd theta;
  Eigen::MatrixXd omega;
  Eigen::MatrixXd phi;
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd kappa;

  /// Zero rates, unit shapes, mixtures spread evenly over the day.
  static ModelParams zeros(const ModelStructure& structure,
                           std::vector<std::string> users = {});

  /// Must be called after `users` is modified directly.
  void reindex_users();
  Index user_slot(std::string_view user) const;
  double alpha_at(Index slot, ActionId a) const {
    return slot == kColdStart ? 0.0 : alpha(slot, a);
  }

  /// Shape and sign checks; throws InvalidInput naming the offending entry.
  void validate() const;

 private:
  std::map<std::string, Index, std::less<>> user_lookup_;
};

double time_of_day(double t, double day_length = 24.0);
int tod_category(double t, const ModelStructure& structure);

double gaussian_density(double x, double mean, double sd);

inline double exponential_kernel(double theta, double omega, double delta) {
  return theta * omega * std::exp(-omega * delta);
}

double weibull_kernel(double phi, double gamma, double kappa, double delta);

double background_intensity(const ModelParams& params, ActionId a, double t);
double short_term_intensity(const ModelParams& params,
                            std::span<const EventRecord> prefix, ActionId a,
                            double t);
double long_term_intensity(const ModelParams& params,
                           std::span<const EventRecord> prefix, ActionId a,
                           double t);
double total_intensity(const ModelParams& params, Index user,
                       std::span<const EventRecord> prefix, ActionId a,
                       double t);

/// Per-action intensities at t; entry a equals total_intensity(.., a, t).
Eigen::VectorXd intensity_vector(const ModelParams& params, Index user,
                                 std::span<const EventRecord> prefix, double t);

/// Throws InvalidInput if the prefix is unsorted or has an event after t.
void check_prefix(std::span<const EventRecord> prefix, double t);

/// Stable sort by time. Returns the number of events that moved.
std::size_t sort_history(UserHistory& history);

int infer_n_actions(const Dataset& data);
std::size_t count_events(const Dataset& data);

}  // namespace tipas
