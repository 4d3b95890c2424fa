#include "tipas/likelihood.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "tipas/parallel.hpp"

namespace tipas {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// int_a^b N(l; mean, sd) dl for a <= b within one day.
double day_piece(double mean, double sd, double a, double b) {
  if (b <= a) return 0.0;
  return normal_cdf((b - mean) / sd) - normal_cdf((a - mean) / sd);
}

void check_horizon(const Dataset& data, double horizon) {
  if (!std::isfinite(horizon) || horizon < 0.0)
    throw Error(ErrorKind::InvalidInput, "horizon must be finite and >= 0");
  for (const auto& h : data)
    for (std::size_t n = 0; n < h.events.size(); ++n) {
      const double t = h.events[n].t;
      if (!std::isfinite(t) || t < 0.0 || t > horizon) {
        std::ostringstream os;
        os << "event " << n << " of user '" << h.user << "' at t=" << t
           << " lies outside [0, " << horizon << "]";
        throw Error(ErrorKind::InvalidInput, os.str());
      }
      if (n > 0 && t < h.events[n - 1].t)
        throw Error(ErrorKind::InvalidInput, "history of user '" + h.user + "' is unsorted");
    }
}

struct UserLogLik {
  double event_term = 0.0;
  std::vector<std::size_t> zero_events;
};

UserLogLik user_event_term(const ModelParams& params, const UserHistory& h,
                           std::size_t lookback) {
  const Index slot = params.user_slot(h.user);
  UserLogLik out;
  const auto& ev = h.events;
  std::vector<int> cats(ev.size());
  for (std::size_t n = 0; n < ev.size(); ++n) cats[n] = tod_category(ev[n].t, params.structure);
  for (std::size_t n = 0; n < ev.size(); ++n) {
    const ActionId a = ev[n].action;
    const double t = ev[n].t;
    double lambda = params.alpha_at(slot, a) + background_intensity(params, a, t);
    const std::size_t first = (lookback > 0 && n > lookback) ? n - lookback : 0;
    for (std::size_t m = first; m < n; ++m) {
      const double delta = std::max(t - ev[m].t, kMinDelta);
      const ActionId src = ev[m].action;
      lambda += exponential_kernel(params.theta(src, a), params.omega(src, a), delta);
      if (src == a) {
        const int c = cats[m];
        lambda += weibull_kernel(params.phi(c, a), params.gamma(c, a), params.kappa(c, a), delta);
      }
    }
    if (std::isnan(lambda))
      throw Error(ErrorKind::NumericalFailure,
                  "NaN intensity at event " + std::to_string(n) + " of user '" + h.user + "'");
    if (lambda < kIntensityFloor) {
      out.zero_events.push_back(n);
      lambda = kIntensityFloor;
    }
    out.event_term += std::log(lambda);
  }
  return out;
}

}  // namespace

double background_mass(double mean, double sd, double t0, double t1, double day_length) {
  if (!(t1 > t0)) return 0.0;
  const double first_day = std::floor(t0 / day_length);
  const double last_day = std::floor(t1 / day_length);
  const double a = t0 - first_day * day_length;
  const double b = t1 - last_day * day_length;
  if (first_day == last_day) return day_piece(mean, sd, a, b);
  const double full = day_piece(mean, sd, 0.0, day_length);
  const double middle_days = last_day - first_day - 1.0;
  return day_piece(mean, sd, a, day_length) + middle_days * full + day_piece(mean, sd, 0.0, b);
}

double analytic_compensator(const ModelParams& params, const Dataset& data, double horizon) {
  check_horizon(data, horizon);
  const auto& s = params.structure;
  const Index A = s.n_actions;

  double preference = 0.0;
  for (const auto& h : data) {
    const Index slot = params.user_slot(h.user);
    if (slot != kColdStart) preference += params.alpha.row(slot).sum();
  }
  preference *= horizon;

  double background = 0.0;
  for (Index a = 0; a < A; ++a)
    for (Index z = 0; z < s.n_mixtures; ++z)
      if (params.beta(a, z) != 0.0)
        background += params.beta(a, z) *
                      background_mass(params.mu(a, z), params.sigma(a, z), 0.0, horizon, s.day_length);
  background *= static_cast<double>(data.size());

  double excitation = 0.0;
  double recurrence = 0.0;
  for (const auto& h : data) {
    for (const auto& e : h.events) {
      const double rest = horizon - e.t;
      for (Index a = 0; a < A; ++a) {
        const double th = params.theta(e.action, a);
        if (th != 0.0) excitation += th * -std::expm1(-params.omega(e.action, a) * rest);
      }
      const int c = tod_category(e.t, s);
      const double ph = params.phi(c, e.action);
      if (ph != 0.0 && rest > 0.0)
        recurrence += ph * -std::expm1(-params.gamma(c, e.action) *
                                       std::pow(rest, params.kappa(c, e.action)));
    }
  }
  return preference + background + excitation + recurrence;
}

LogLikValue log_likelihood(const ModelParams& params, const Dataset& data, double horizon,
                           std::size_t lookback) {
  check_horizon(data, horizon);
  std::vector<UserLogLik> per_user(data.size());
  parallel_for(data.size(),
               [&](std::size_t u) { per_user[u] = user_event_term(params, data[u], lookback); });

  LogLikValue out;
  for (std::size_t u = 0; u < data.size(); ++u) {
    out.event_term += per_user[u].event_term;
    for (auto n : per_user[u].zero_events) out.zero_intensity.push_back({data[u].user, n});
  }
  out.compensator = analytic_compensator(params, data, horizon);
  if (std::isnan(out.compensator))
    throw Error(ErrorKind::NumericalFailure, "NaN compensator");
  if (!out.zero_intensity.empty()) {
    out.event_term = -std::numeric_limits<double>::infinity();
    out.total = out.event_term;
  } else {
    out.total = out.event_term - out.compensator;
  }
  return out;
}

double integrated_intensity(const ModelParams& params, Index user,
                            std::span<const EventRecord> history, double t0, double t1) {
  if (!(t1 >= t0)) throw Error(ErrorKind::InvalidInput, "integration bounds reversed");
  const auto& s = params.structure;
  const Index A = s.n_actions;
  double total = 0.0;
  for (ActionId a = 0; a < A; ++a) {
    total += params.alpha_at(user, a) * (t1 - t0);
    for (Index z = 0; z < s.n_mixtures; ++z)
      if (params.beta(a, z) != 0.0)
        total += params.beta(a, z) *
                 background_mass(params.mu(a, z), params.sigma(a, z), t0, t1, s.day_length);
  }
  for (const auto& e : history) {
    if (e.t > t0) break;
    const double d0 = t0 - e.t;
    const double d1 = t1 - e.t;
    for (ActionId a = 0; a < A; ++a) {
      const double th = params.theta(e.action, a);
      if (th == 0.0) continue;
      const double w = params.omega(e.action, a);
      total += th * (std::exp(-w * d0) - std::exp(-w * d1));
    }
    const int c = tod_category(e.t, s);
    const double ph = params.phi(c, e.action);
    if (ph != 0.0) {
      const double g = params.gamma(c, e.action);
      const double k = params.kappa(c, e.action);
      total += ph * (std::exp(-g * std::pow(d0, k)) - std::exp(-g * std::pow(d1, k)));
    }
  }
  return total;
}

std::vector<double> rescaled_interarrivals(const ModelParams& params, Index user,
                                           std::span<const EventRecord> events, double start) {
  std::vector<double> out;
  double prev = start;
  for (const auto& e : events) {
    if (e.t <= start) continue;
    out.push_back(integrated_intensity(params, user, events, prev, e.t));
    prev = e.t;
  }
  return out;
}

namespace {

// 5-point Gauss-Legendre on [0, 1].
constexpr std::array<double, 5> kGLNodes = {
    0.046910077030668004, 0.23076534494715845, 0.5, 0.76923465505284155, 0.95308992296933200};
constexpr std::array<double, 5> kGLWeights = {
    0.11846344252809454, 0.23931433524968324, 0.28444444444444444, 0.23931433524968324,
    0.11846344252809454};

template <class F>
double gauss_legendre(const F& f, double a, double b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kGLNodes.size(); ++i) sum += kGLWeights[i] * f(a + (b - a) * kGLNodes[i]);
  return sum * (b - a);
}

template <class F>
double adaptive(const F& f, double a, double b, double whole, double tol, int depth) {
  const double mid = 0.5 * (a + b);
  const double left = gauss_legendre(f, a, mid);
  const double right = gauss_legendre(f, mid, b);
  const double refined = left + right;
  if (std::abs(refined - whole) <= tol) return refined;
  if (depth >= 48) {
    std::ostringstream os;
    os << "quadrature did not converge on [" << a << ", " << b << "]";
    throw Error(ErrorKind::NumericalFailure, os.str());
  }
  return adaptive(f, a, mid, left, 0.5 * tol, depth + 1) +
         adaptive(f, mid, b, right, 0.5 * tol, depth + 1);
}

}  // namespace

double quadrature_compensator(const ModelParams& params, const Dataset& data, double horizon,
                              int n_panels) {
  check_horizon(data, horizon);
  if (n_panels < 1) throw Error(ErrorKind::InvalidInput, "n_panels must be >= 1");
  const double day = params.structure.day_length;
  double total = 0.0;
  for (const auto& h : data) {
    const Index slot = params.user_slot(h.user);
    std::vector<double> cuts{0.0, horizon};
    for (const auto& e : h.events) cuts.push_back(e.t);
    for (double d = day; d < horizon; d += day) cuts.push_back(d);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::size_t prefix_len = 0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double a = cuts[i];
      const double b = cuts[i + 1];
      while (prefix_len < h.events.size() && h.events[prefix_len].t <= a) ++prefix_len;
      const std::span<const EventRecord> prefix(h.events.data(), prefix_len);
      // Keep evaluation strictly inside (a, b) so tod() stays on one side of midnight.
      auto f = [&](double t) { return intensity_vector(params, slot, prefix, t).sum(); };
      const int panels = std::max(1, static_cast<int>(std::ceil(n_panels * (b - a) / horizon)));
      const double width = (b - a) / panels;
      for (int p = 0; p < panels; ++p) {
        const double lo = a + p * width;
        const double hi = (p + 1 == panels) ? b : lo + width;
        const double whole = gauss_legendre(f, lo, hi);
        total += adaptive(f, lo, hi, whole, 1e-13 * std::max(1.0, std::abs(whole)), 0);
      }
    }
  }
  return total;
}

}  // namespace tipas
