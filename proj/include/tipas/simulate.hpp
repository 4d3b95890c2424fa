#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tipas/model.hpp"
#include "tipas/rng.hpp"

namespace tipas {

struct SimConfig {
  double horizon = 24.0;  // length of the simulated span
  std::uint64_t seed = 0;
  std::size_t max_events = 1'000'000;
  double bound_window = 1.0;
  std::optional<double> start;  // default: last event of the seed history, or 0
};

struct SyntheticSpec {
  std::size_t n_users = 0;
  ModelParams params;  // ground truth; users missing from params.users get alpha = 0
  double horizon = 0.0;
  std::uint64_t seed = 0;
};

/// Intensity of one user given a growing history, maintained incrementally
/// for thinning: exponential terms as per-(source, target) sums decayed to
/// the last event, Weibull terms over events whose kernel can be nonzero.
/// Holds a pointer to `params`, which must outlive it.
class ThinningState {
 public:
  ThinningState(const ModelParams& params, Index user, std::span<const EventRecord> history);

  const std::vector<EventRecord>& history() const { return history_; }
  void add(const EventRecord& e);
  /// Upper bound on sum_a lambda over [t, t + window]; t must not decrease
  /// between calls.
  double bound(double t, double window);
  Eigen::VectorXd intensity(double t) const;

 private:
  struct Live {
    double t;
    int c;
    ActionId a;
  };
  void absorb(const EventRecord& e);
  Eigen::VectorXd short_term(double t) const;

  const ModelParams* p_;
  Index user_;
  std::vector<EventRecord> history_;
  Eigen::VectorXd base_;
  Eigen::MatrixXd decay_, rate_, mode_;
  std::vector<Live> live_;
  double ref_ = 0.0;
  bool has_ref_ = false;
};

/// Upper bound on sum_a lambda over [t, t + window] given `history`
/// (events at or before t).
double intensity_upper_bound(const ModelParams& params, Index user,
                             std::span<const EventRecord> history, double t, double window);

/// Ogata thinning on (start, start + horizon]. Returns only the new events.
/// Throws Truncation past max_events and Internal if the bound is violated.
std::vector<EventRecord> simulate(const ModelParams& params, Index user,
                                  const UserHistory& seed_history, const SimConfig& config);

/// First event after `start` (any action), or nullopt if none before
/// start + max_span. `history` must end at or before `start`.
std::optional<EventRecord> sample_next_event(const ModelParams& params, Index user,
                                             std::span<const EventRecord> history,
                                             double start, double max_span, Rng& rng,
                                             double bound_window = 1.0);

/// Same, from a prepared state (copied, so one state serves many samples).
std::optional<EventRecord> sample_next_event(ThinningState state, double start, double max_span,
                                             Rng& rng, double bound_window = 1.0);

/// Independent per-user simulations on [0, horizon]; user i is named
/// "u<i>" zero-padded and draws from stream (seed, i).
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace tipas
