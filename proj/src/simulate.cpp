#include "tipas/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace tipas {

namespace {

// Largest Gaussian density over the time-of-day values visited in [t, t + window].
double peak_density(double mu, double sigma, double t, double window, double day) {
  auto best_in = [&](double lo, double hi) {
    return gaussian_density(std::clamp(mu, lo, hi), mu, sigma);
  };
  if (window >= day) return gaussian_density(mu, mu, sigma);
  const double l0 = time_of_day(t, day);
  const double l1 = l0 + window;
  if (l1 < day) return best_in(l0, l1);
  return std::max(best_in(l0, day), best_in(0.0, l1 - day));
}

// sup of the Weibull kernel over separations [d0, d0 + window].
double weibull_sup(double phi, double gamma, double kappa, double d0, double window) {
  if (phi == 0.0 || gamma == 0.0) return 0.0;
  d0 = std::max(d0, kMinDelta);
  if (kappa <= 1.0) return weibull_kernel(phi, gamma, kappa, d0);
  const double mode = std::pow((kappa - 1.0) / (gamma * kappa), 1.0 / kappa);
  return weibull_kernel(phi, gamma, kappa, std::clamp(mode, d0, d0 + window));
}

}  // namespace

ThinningState::ThinningState(const ModelParams& params, Index user, std::span<const EventRecord> history)
    : p_(&params), user_(user), history_(history.begin(), history.end()) {
  const auto& s = params.structure;
  const Index A = s.n_actions;
  decay_ = Eigen::MatrixXd::Zero(A, A);
  rate_ = params.theta.cwiseProduct(params.omega);
  mode_ = Eigen::MatrixXd::Zero(s.n_categories(), A);
  for (Index c = 0; c < mode_.rows(); ++c)
    for (Index a = 0; a < A; ++a) {
      const double k = params.kappa(c, a), g = params.gamma(c, a);
      mode_(c, a) = (k > 1.0 && g > 0.0) ? std::pow((k - 1.0) / (g * k), 1.0 / k) : 0.0;
    }
  base_.resize(A);
  for (ActionId a = 0; a < A; ++a) base_(a) = params.alpha_at(user_, a);
  for (const auto& e : history_) absorb(e);
}

void ThinningState::add(const EventRecord& e) {
  history_.push_back(e);
  absorb(e);
}

double ThinningState::bound(double t, double window) {
  const auto& p = *p_;
  const auto& s = p.structure;
  const Index A = s.n_actions;
  double b = base_.sum();
  for (ActionId a = 0; a < A; ++a)
    for (Index z = 0; z < s.n_mixtures; ++z)
      if (p.beta(a, z) != 0.0)
        b += p.beta(a, z) * peak_density(p.mu(a, z), p.sigma(a, z), t, window, s.day_length);
  if (has_ref_) b += short_term(t).sum();
  std::size_t keep = 0;
  for (const auto& e : live_) {
    const double d0 = std::max(t - e.t, kMinDelta);
    const double phi = p.phi(e.c, e.a), g = p.gamma(e.c, e.a), k = p.kappa(e.c, e.a);
    if (phi == 0.0 || g == 0.0) continue;
    // Past the mode the kernel only shrinks; once exp underflows it is exactly zero for good.
    if (d0 >= mode_(e.c, e.a) && g * std::pow(d0, k) > 800.0) continue;
    live_[keep++] = e;
    const double at = k <= 1.0 ? d0 : std::clamp(mode_(e.c, e.a), d0, d0 + window);
    b += weibull_kernel(phi, g, k, at);
  }
  live_.resize(keep);
  return b;
}

Eigen::VectorXd ThinningState::intensity(double t) const {
  const auto& p = *p_;
  if (has_ref_ && t - ref_ < kMinDelta) return intensity_vector(p, user_, history_, t);
  const Index A = p.structure.n_actions;
  Eigen::VectorXd lambda(A);
  for (ActionId a = 0; a < A; ++a) lambda(a) = base_(a) + background_intensity(p, a, t);
  if (has_ref_) lambda += short_term(t);
  for (const auto& e : live_)
    lambda(e.a) += weibull_kernel(p.phi(e.c, e.a), p.gamma(e.c, e.a), p.kappa(e.c, e.a), t - e.t);
  return lambda;
}

void ThinningState::absorb(const EventRecord& e) {
  if (has_ref_ && e.t > ref_) decay_.array() *= (-p_->omega.array() * (e.t - ref_)).exp();
  decay_.row(e.action).array() += 1.0;
  ref_ = has_ref_ ? std::max(ref_, e.t) : e.t;
  has_ref_ = true;
  live_.push_back({e.t, tod_category(e.t, p_->structure), e.action});
}

Eigen::VectorXd ThinningState::short_term(double t) const {
  const Eigen::ArrayXXd w = rate_.array() * decay_.array() * (-p_->omega.array() * (t - ref_)).exp();
  return w.colwise().sum().transpose();
}

namespace {

// Thinning driver; `accept` returns false to stop.
template <class Accept>
void thin(ThinningState& state, double start, double end, double window, Rng& rng, Accept&& accept) {
  if (!(window > 0.0)) throw Error(ErrorKind::InvalidInput, "bound_window must be > 0");
  double t = start;
  while (t < end) {
    const double bound = state.bound(t, window);
    if (!(bound > 0.0)) {
      t += window;
      continue;
    }
    const double wait = rng.exponential(bound);
    if (wait > window) {
      t += window;
      continue;
    }
    t += wait;
    if (t > end) break;
    const Eigen::VectorXd lambda = state.intensity(t);
    const double total = lambda.sum();
    if (total > bound * (1.0 + 1e-9)) {
      std::ostringstream os;
      os << "thinning bound violated at t=" << t << ": intensity " << total << " > bound " << bound;
      throw Error(ErrorKind::Internal, os.str());
    }
    if (rng.uniform() * bound > total) continue;
    double pick = rng.uniform() * total;
    ActionId chosen = static_cast<ActionId>(lambda.size()) - 1;
    for (Index a = 0; a < lambda.size(); ++a) {
      if (pick < lambda(a)) {
        chosen = static_cast<ActionId>(a);
        break;
      }
      pick -= lambda(a);
    }
    state.add({chosen, t});
    if (!accept(state.history().back())) return;
  }
}

}  // namespace

double intensity_upper_bound(const ModelParams& params, Index user,
                             std::span<const EventRecord> history, double t, double window) {
  const auto& s = params.structure;
  const Index A = s.n_actions;
  double bound = 0.0;
  for (ActionId a = 0; a < A; ++a) {
    bound += params.alpha_at(user, a);
    for (Index z = 0; z < s.n_mixtures; ++z)
      if (params.beta(a, z) != 0.0)
        bound += params.beta(a, z) * peak_density(params.mu(a, z), params.sigma(a, z), t, window, s.day_length);
  }
  for (const auto& e : history) {
    if (e.t > t) break;
    const double d0 = std::max(t - e.t, kMinDelta);
    for (ActionId a = 0; a < A; ++a)
      bound += exponential_kernel(params.theta(e.action, a), params.omega(e.action, a), d0);
    const int c = tod_category(e.t, s);
    bound += weibull_sup(params.phi(c, e.action), params.gamma(c, e.action), params.kappa(c, e.action),
                         d0, window);
  }
  return bound;
}

std::vector<EventRecord> simulate(const ModelParams& params, Index user,
                                  const UserHistory& seed_history, const SimConfig& config) {
  if (!(config.horizon > 0.0)) throw Error(ErrorKind::InvalidInput, "simulation horizon must be > 0");
  const auto& seed_events = seed_history.events;
  for (std::size_t i = 1; i < seed_events.size(); ++i)
    if (seed_events[i].t < seed_events[i - 1].t)
      throw Error(ErrorKind::InvalidInput, "seed history is unsorted");
  const double last = seed_events.empty() ? 0.0 : seed_events.back().t;
  const double start = config.start.value_or(last);
  if (start < last) throw Error(ErrorKind::InvalidInput, "simulation start precedes seed history");

  ThinningState state(params, user, seed_events);
  const auto& history = state.history();
  const std::size_t offset = history.size();
  Rng rng(config.seed);
  thin(state, start, start + config.horizon, config.bound_window, rng, [&](const EventRecord&) {
         if (history.size() - offset > config.max_events)
           throw Error(ErrorKind::Truncation,
                       "simulation exceeded max_events=" + std::to_string(config.max_events));
         return true;
       });
  return {history.begin() + static_cast<std::ptrdiff_t>(offset), history.end()};
}

std::optional<EventRecord> sample_next_event(const ModelParams& params, Index user,
                                             std::span<const EventRecord> history, double start,
                                             double max_span, Rng& rng, double bound_window) {
  if (!history.empty() && history.back().t > start)
    throw Error(ErrorKind::InvalidInput, "history extends past the sampling start");
  return sample_next_event(ThinningState(params, user, history), start, max_span, rng, bound_window);
}

std::optional<EventRecord> sample_next_event(ThinningState state, double start, double max_span, Rng& rng,
                                             double bound_window) {
  std::optional<EventRecord> first;
  thin(state, start, start + max_span, bound_window, rng, [&](const EventRecord& e) {
    first = e;
    return false;
  });
  return first;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.params.validate();
  if (!(spec.horizon > 0.0)) throw Error(ErrorKind::InvalidInput, "synthetic horizon must be > 0");
  Dataset out(spec.n_users);
  for (std::size_t i = 0; i < spec.n_users; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "u%04zu", i);
    out[i].user = name;
    SimConfig cfg;
    cfg.horizon = spec.horizon;
    cfg.start = 0.0;
    cfg.seed = stream_seed(spec.seed, static_cast<std::uint64_t>(i));
    out[i].events = simulate(spec.params, spec.params.user_slot(name), UserHistory{name, {}}, cfg);
  }
  return out;
}

}  // namespace tipas
