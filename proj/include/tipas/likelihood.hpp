#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tipas/model.hpp"

namespace tipas {

/// An observed event whose intensity fell below kIntensityFloor.
struct ZeroIntensityEvent {
  std::string user;
  std::size_t index = 0;
};

inline constexpr double kIntensityFloor = 1e-300;

struct LogLikValue {
  double event_term = 0.0;
  double compensator = 0.0;
  double total = 0.0;  // event_term - compensator; -inf if any event hit the floor
  std::vector<ZeroIntensityEvent> zero_intensity;
};

/// Exact data log-likelihood over [0, horizon]. `lookback` > 0 restricts the
/// excitation sums of the event term to the most recent `lookback` events.
LogLikValue log_likelihood(const ModelParams& params, const Dataset& data,
                           double horizon, std::size_t lookback = 0);

/// Closed form of sum_u int_0^T sum_a lambda_u(t, a) dt.
double analytic_compensator(const ModelParams& params, const Dataset& data,
                            double horizon);

/// Numerical oracle for analytic_compensator: adaptive Gauss-Legendre on
/// panels split at event times and midnights. Throws NumericalFailure when
/// a panel does not converge.
double quadrature_compensator(const ModelParams& params, const Dataset& data,
                              double horizon, int n_panels = 1000);

/// int_{t0}^{t1} N(tod(t); mean, sd) dt, summing over every day piece.
double background_mass(double mean, double sd, double t0, double t1,
                        double day_length);

/// Exact integral of sum_a lambda over [t0, t1] given the events in
/// `history` with time <= t0 (later events are ignored).
double integrated_intensity(const ModelParams& params, Index user,
                            std::span<const EventRecord> history, double t0,
                            double t1);

/// Compensator increments between consecutive events of `events`, starting
/// at `start`. Under the generating model these are i.i.d. Exp(1).
std::vector<double> rescaled_interarrivals(const ModelParams& params, Index user,
                                           std::span<const EventRecord> events,
                                           double start);

}  // namespace tipas
