#include "tipas/em.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "tipas/parallel.hpp"
#include "tipas/rng.hpp"

namespace tipas {

double EventResponsibility::total() const {
  double s = preference + background.sum();
  for (double q : short_term) s += q;
  for (const auto& [l, r] : long_term) s += r;
  return s;
}

void FitConfig::validate() const {
  if (n_mixtures < 1) throw Error(ErrorKind::InvalidInput, "n_mixtures must be >= 1");
  if (max_iterations < 0) throw Error(ErrorKind::InvalidInput, "max_iterations must be >= 0");
  if (!(rel_ll_tolerance > 0.0)) throw Error(ErrorKind::InvalidInput, "tolerance must be > 0");
  if (!(mstep.param_floor > 0.0)) throw Error(ErrorKind::InvalidInput, "param_floor must be > 0");
  if (!(mstep.sigma_floor > 0.0)) throw Error(ErrorKind::InvalidInput, "sigma_floor must be > 0");
  if (mstep.newton_max_inner < 1) throw Error(ErrorKind::InvalidInput, "newton_max_inner must be >= 1");
  if (horizon && !(*horizon > 0.0)) throw Error(ErrorKind::InvalidInput, "horizon must be > 0");
  if (n_actions && *n_actions < 1) throw Error(ErrorKind::InvalidInput, "n_actions must be >= 1");
  const auto& c = components;
  if (!c.preference && !c.background && !c.short_term && !c.long_term)
    throw Error(ErrorKind::InvalidInput, "at least one intensity component must be enabled");
}

namespace {

std::vector<int> event_categories(const UserHistory& h, const ModelStructure& s) {
  std::vector<int> c(h.events.size());
  for (std::size_t n = 0; n < h.events.size(); ++n) c[n] = tod_category(h.events[n].t, s);
  return c;
}

std::vector<EventResponsibility> user_e_step(const ModelParams& params, const UserHistory& h,
                                             std::size_t lookback, double& log_sum) {
  const auto& s = params.structure;
  const Index slot = params.user_slot(h.user);
  const auto& ev = h.events;
  const auto cats = event_categories(h, s);
  std::vector<EventResponsibility> out(ev.size());
  for (std::size_t n = 0; n < ev.size(); ++n) {
    auto& r = out[n];
    const ActionId a = ev[n].action;
    const double t = ev[n].t;
    const double l = time_of_day(t, s.day_length);
    r.preference = params.alpha_at(slot, a);
    r.background.resize(s.n_mixtures);
    for (Index z = 0; z < s.n_mixtures; ++z) {
      const double b = params.beta(a, z);
      r.background(z) = b == 0.0 ? 0.0 : b * gaussian_density(l, params.mu(a, z), params.sigma(a, z));
    }
    r.first_source = (lookback > 0 && n > lookback) ? n - lookback : 0;
    r.short_term.resize(n - r.first_source);
    for (std::size_t m = r.first_source; m < n; ++m) {
      const double delta = std::max(t - ev[m].t, kMinDelta);
      const ActionId src = ev[m].action;
      r.short_term[m - r.first_source] =
          exponential_kernel(params.theta(src, a), params.omega(src, a), delta);
      if (src == a) {
        const int c = cats[m];
        const double w = weibull_kernel(params.phi(c, a), params.gamma(c, a), params.kappa(c, a), delta);
        if (w > 0.0) r.long_term.emplace_back(m, w);
      }
    }
    const double total = r.total();
    if (!(total > 0.0) || !std::isfinite(total)) {
      std::ostringstream os;
      os << "event " << n << " of user '" << h.user << "' has total intensity " << total;
      throw Error(ErrorKind::DegenerateEvent, os.str());
    }
    log_sum += std::log(total);
    r.preference /= total;
    r.background /= total;
    for (double& q : r.short_term) q /= total;
    for (auto& lr : r.long_term) lr.second /= total;
  }
  return out;
}

void note(std::vector<std::string>* diagnostics, const std::string& msg) {
  if (diagnostics) diagnostics->push_back(msg);
}

std::string cell(const char* name, Index i, Index j) {
  std::ostringstream os;
  os << name << "(" << i << "," << j << ")";
  return os.str();
}

void check_alignment(const Responsibilities& resp, const Dataset& data) {
  if (resp.users.size() != data.size())
    throw Error(ErrorKind::InvalidInput, "responsibilities do not match the dataset");
  for (std::size_t u = 0; u < data.size(); ++u)
    if (resp.users[u].size() != data[u].events.size())
      throw Error(ErrorKind::InvalidInput,
                  "responsibilities do not match events of user '" + data[u].user + "'");
}

}  // namespace

Responsibilities e_step(const ModelParams& params, const Dataset& data, std::size_t lookback,
                        double* event_log_sum) {
  Responsibilities resp;
  resp.users.resize(data.size());
  std::vector<double> sums(data.size(), 0.0);
  parallel_for(data.size(),
               [&](std::size_t u) { resp.users[u] = user_e_step(params, data[u], lookback, sums[u]); });
  if (event_log_sum) {
    *event_log_sum = 0.0;
    for (double v : sums) *event_log_sum += v;
  }
  return resp;
}

ModelParams m_step_closed(const Responsibilities& resp, const Dataset& data,
                          const ModelParams& params, double horizon, const MStepOptions& options,
                          std::vector<std::string>* diagnostics) {
  check_alignment(resp, data);
  const auto& s = params.structure;
  const Index A = s.n_actions;
  const Index Z = s.n_mixtures;
  const Index C = s.n_categories();
  const double floor = options.param_floor;

  Eigen::MatrixXd pref = Eigen::MatrixXd::Zero(params.alpha.rows(), A);
  Eigen::MatrixXd bg = Eigen::MatrixXd::Zero(A, Z);
  Eigen::MatrixXd q_mass = Eigen::MatrixXd::Zero(A, A);
  Eigen::MatrixXd theta_den = Eigen::MatrixXd::Zero(A, A);
  Eigen::MatrixXd r_mass = Eigen::MatrixXd::Zero(C, A);
  Eigen::MatrixXd phi_den = Eigen::MatrixXd::Zero(C, A);

  for (std::size_t u = 0; u < data.size(); ++u) {
    const auto& ev = data[u].events;
    const auto cats = event_categories(data[u], s);
    const Index slot = params.user_slot(data[u].user);
    for (std::size_t n = 0; n < ev.size(); ++n) {
      const auto& r = resp.users[u][n];
      const ActionId a = ev[n].action;
      if (slot != kColdStart) pref(slot, a) += r.preference;
      bg.row(a) += r.background.transpose();
      for (std::size_t i = 0; i < r.short_term.size(); ++i)
        q_mass(ev[r.first_source + i].action, a) += r.short_term[i];
      for (const auto& [l, w] : r.long_term) r_mass(cats[l], a) += w;

      const double rest = horizon - ev[n].t;
      for (Index b = 0; b < A; ++b) theta_den(a, b) += -std::expm1(-params.omega(a, b) * rest);
      const int c = cats[n];
      if (rest > 0.0)
        phi_den(c, a) += -std::expm1(-params.gamma(c, a) * std::pow(rest, params.kappa(c, a)));
    }
  }

  ModelParams next = params;
  if (s.components.preference) {
    next.alpha = (pref / horizon).cwiseMax(floor);
  }
  if (s.components.background) {
    const double n_users = static_cast<double>(data.size());
    for (Index a = 0; a < A; ++a)
      for (Index z = 0; z < Z; ++z) {
        const double den =
            n_users * background_mass(params.mu(a, z), params.sigma(a, z), 0.0, horizon, s.day_length);
        if (!(den > 0.0)) {
          note(diagnostics, cell("beta", a, z) + ": zero compensator mass, set to floor");
          next.beta(a, z) = floor;
        } else {
          next.beta(a, z) = std::max(bg(a, z) / den, floor);
        }
      }
  }
  if (s.components.short_term) {
    for (Index src = 0; src < A; ++src)
      for (Index a = 0; a < A; ++a) {
        if (!(theta_den(src, a) > 0.0)) {
          note(diagnostics, cell("theta", src, a) + ": zero denominator, set to floor");
          next.theta(src, a) = floor;
        } else {
          next.theta(src, a) = std::max(q_mass(src, a) / theta_den(src, a), floor);
        }
      }
  }
  if (s.components.long_term) {
    for (Index c = 0; c < C; ++c)
      for (Index a = 0; a < A; ++a) {
        if (!(phi_den(c, a) > 0.0)) {
          note(diagnostics, cell("phi", c, a) + ": zero denominator, set to floor");
          next.phi(c, a) = floor;
        } else {
          next.phi(c, a) = std::max(r_mass(c, a) / phi_den(c, a), floor);
        }
      }
  }
  return next;
}

ModelParams m_step_rate(const Responsibilities& resp, const Dataset& data,
                        const ModelParams& params, double horizon, const MStepOptions& options,
                        std::vector<std::string>* diagnostics) {
  check_alignment(resp, data);
  const auto& s = params.structure;
  const Index A = s.n_actions;
  const Index C = s.n_categories();

  Eigen::MatrixXd q_mass = Eigen::MatrixXd::Zero(A, A);
  Eigen::MatrixXd q_delta = Eigen::MatrixXd::Zero(A, A);
  Eigen::MatrixXd omega_tail = Eigen::MatrixXd::Zero(A, A);
  Eigen::MatrixXd r_mass = Eigen::MatrixXd::Zero(C, A);
  Eigen::MatrixXd r_delta = Eigen::MatrixXd::Zero(C, A);
  Eigen::MatrixXd gamma_tail = Eigen::MatrixXd::Zero(C, A);

  for (std::size_t u = 0; u < data.size(); ++u) {
    const auto& ev = data[u].events;
    const auto cats = event_categories(data[u], s);
    for (std::size_t n = 0; n < ev.size(); ++n) {
      const auto& r = resp.users[u][n];
      const ActionId a = ev[n].action;
      const double t = ev[n].t;
      for (std::size_t i = 0; i < r.short_term.size(); ++i) {
        const auto& src = ev[r.first_source + i];
        q_mass(src.action, a) += r.short_term[i];
        q_delta(src.action, a) += r.short_term[i] * std::max(t - src.t, kMinDelta);
      }
      for (const auto& [l, w] : r.long_term) {
        if (w == 0.0) continue;
        const int c = cats[l];
        r_mass(c, a) += w;
        r_delta(c, a) += w * std::pow(std::max(t - ev[l].t, kMinDelta), params.kappa(c, a));
      }
      const double rest = horizon - t;
      if (rest > 0.0) {
        for (Index b = 0; b < A; ++b)
          omega_tail(a, b) += params.theta(a, b) * rest * std::exp(-params.omega(a, b) * rest);
        const int c = cats[n];
        const double x = std::pow(rest, params.kappa(c, a));
        if (std::isfinite(x)) gamma_tail(c, a) += params.phi(c, a) * x * std::exp(-params.gamma(c, a) * x);
      }
    }
  }

  ModelParams next = params;
  const double floor = options.param_floor;
  if (s.components.short_term) {
    for (Index src = 0; src < A; ++src)
      for (Index a = 0; a < A; ++a) {
        const double den = q_delta(src, a) + omega_tail(src, a);
        if (!(q_mass(src, a) > 0.0) || !(den > 0.0)) {
          note(diagnostics, cell("omega", src, a) + ": no excitation mass, kept previous value");
          continue;
        }
        next.omega(src, a) = std::max(q_mass(src, a) / den, floor);
      }
  }
  if (s.components.long_term) {
    for (Index c = 0; c < C; ++c)
      for (Index a = 0; a < A; ++a) {
        const double den = r_delta(c, a) + gamma_tail(c, a);
        if (!(r_mass(c, a) > 0.0) || !(den > 0.0)) {
          note(diagnostics, cell("gamma", c, a) + ": no recurrence mass, kept previous value");
          continue;
        }
        next.gamma(c, a) = std::max(r_mass(c, a) / den, floor);
      }
  }
  return next;
}

void WeibullSlice::prepare() {
  log_deltas.resize(deltas.size());
  weight_sum = weighted_log_sum = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    log_deltas[i] = std::log(deltas[i]);
    weight_sum += weights[i];
    weighted_log_sum += weights[i] * log_deltas[i];
  }
  log_tails.clear();
  for (double s : tails)
    if (s > 0.0) log_tails.push_back(std::log(s));
}

ScalarSlice kappa_q_slice(const WeibullSlice& slice, double kappa) {
  if (slice.log_deltas.size() != slice.deltas.size()) {
    WeibullSlice prepared = slice;
    prepared.prepare();
    return kappa_q_slice(prepared, kappa);
  }
  ScalarSlice out;
  const double g = slice.gamma;
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;  // sum w dk ld^j
  for (std::size_t i = 0; i < slice.weights.size(); ++i) {
    const double ld = slice.log_deltas[i];
    if (slice.weights[i] == 0.0) continue;
    const double wd = slice.weights[i] * std::exp(kappa * ld);
    s0 += wd;
    s1 += wd * ld;
    s2 += wd * ld * ld;
  }
  const double W = slice.weight_sum;
  out.value = W * std::log(kappa) + (kappa - 1.0) * slice.weighted_log_sum - g * s0;
  out.gradient = W / kappa + slice.weighted_log_sum - g * s1;
  out.hessian = -W / (kappa * kappa) - g * s2;
  for (double ls : slice.log_tails) {
    const double x = g * std::exp(kappa * ls);
    out.value -= slice.phi * -std::expm1(-x);
    if (std::isinf(x)) continue;  // survival term saturated, derivatives vanish
    const double ex = std::exp(-x);
    out.gradient -= slice.phi * ex * x * ls;
    out.hessian -= slice.phi * ex * x * (1.0 - x) * ls * ls;
  }
  return out;
}

namespace {

struct PieceDerivatives {
  double value = 0.0, d_mu = 0.0, d_sigma = 0.0, d_mu_mu = 0.0, d_mu_sigma = 0.0, d_sigma_sigma = 0.0;

  PieceDerivatives& operator+=(const PieceDerivatives& o) {
    value += o.value;
    d_mu += o.d_mu;
    d_sigma += o.d_sigma;
    d_mu_mu += o.d_mu_mu;
    d_mu_sigma += o.d_mu_sigma;
    d_sigma_sigma += o.d_sigma_sigma;
    return *this;
  }
  PieceDerivatives scaled(double k) const {
    return {k * value, k * d_mu, k * d_sigma, k * d_mu_mu, k * d_mu_sigma, k * d_sigma_sigma};
  }
};

// Derivatives of Phi((x - mu) / sigma) in (mu, sigma).
PieceDerivatives cdf_derivatives(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double s2 = sigma * sigma;
  return {0.5 * std::erfc(-z / std::numbers::sqrt2),
          -pdf / sigma,
          -z * pdf / sigma,
          -z * pdf / s2,
          -(z * z - 1.0) * pdf / s2,
          -z * pdf * (z * z - 2.0) / s2};
}

PieceDerivatives piece_derivatives(double lo, double hi, double mu, double sigma) {
  auto d = cdf_derivatives(hi, mu, sigma);
  d += cdf_derivatives(lo, mu, sigma).scaled(-1.0);
  return d;
}

// Mass of N(tod; mu, sigma) over [0, horizon] with derivatives.
PieceDerivatives horizon_mass(double mu, double sigma, double horizon, double day) {
  const double full_days = std::floor(horizon / day);
  const double rest = horizon - full_days * day;
  PieceDerivatives d = piece_derivatives(0.0, day, mu, sigma).scaled(full_days);
  if (rest > 0.0) d += piece_derivatives(0.0, rest, mu, sigma);
  return d;
}

}  // namespace

VectorSlice gaussian_q_slice(const GaussianSlice& slice, double mu, double sigma) {
  const double m0 = slice.mass;
  const double s1 = slice.first - mu * m0;
  const double s2 = slice.second - 2.0 * mu * slice.first + mu * mu * m0;
  const double sg2 = sigma * sigma;
  const auto b = horizon_mass(mu, sigma, slice.horizon, slice.day_length);
  const double k = slice.n_users * slice.beta;
  VectorSlice out;
  out.value = -m0 * std::log(sigma) - s2 / (2.0 * sg2) - k * b.value;
  out.gradient(0) = s1 / sg2 - k * b.d_mu;
  out.gradient(1) = -m0 / sigma + s2 / (sg2 * sigma) - k * b.d_sigma;
  out.hessian(0, 0) = -m0 / sg2 - k * b.d_mu_mu;
  out.hessian(0, 1) = -2.0 * s1 / (sg2 * sigma) - k * b.d_mu_sigma;
  out.hessian(1, 0) = out.hessian(0, 1);
  out.hessian(1, 1) = m0 / sg2 - 3.0 * s2 / (sg2 * sg2) - k * b.d_sigma_sigma;
  return out;
}

namespace {

// Returns false if no improving step was found on the first outer iteration.
bool newton_kappa(const WeibullSlice& slice, double& kappa, const MStepOptions& opt) {
  const double lo = opt.param_floor;
  auto current = kappa_q_slice(slice, kappa);
  for (int outer = 0; outer < opt.newton_max_outer; ++outer) {
    double step;
    if (current.hessian < 0.0)
      step = -current.gradient / current.hessian;
    else
      step = (current.gradient > 0.0 ? 0.5 : -0.5) * kappa;
    bool improved = false;
    for (int inner = 0; inner < opt.newton_max_inner; ++inner, step *= 0.5) {
      const double candidate = std::max(kappa + step, lo);
      const auto trial = kappa_q_slice(slice, candidate);
      if (std::isfinite(trial.value) && trial.value >= current.value) {
        const double moved = std::abs(candidate - kappa);
        kappa = candidate;
        current = trial;
        improved = true;
        if (moved < 1e-10 * (1.0 + kappa)) return true;
        break;
      }
    }
    if (!improved) return outer > 0 || std::abs(current.gradient) < 1e-8 * (1.0 + std::abs(current.value));
  }
  return true;
}

bool newton_gaussian(const GaussianSlice& slice, double& mu, double& sigma, double day,
                     const MStepOptions& opt) {
  const double mu_lo = 1e-6 * day;
  const double mu_hi = day - mu_lo;
  auto current = gaussian_q_slice(slice, mu, sigma);
  for (int outer = 0; outer < opt.newton_max_outer; ++outer) {
    const Eigen::Matrix2d& h = current.hessian;
    Eigen::Vector2d step;
    if (h(0, 0) < 0.0 && h.determinant() > 0.0) {
      step = -h.ldlt().solve(current.gradient);
    } else {
      step(0) = current.gradient(0) / (std::abs(h(0, 0)) + 1e-12);
      step(1) = current.gradient(1) / (std::abs(h(1, 1)) + 1e-12);
      step(0) = std::clamp(step(0), -2.0, 2.0);
      step(1) = std::clamp(step(1), -0.5 * sigma, 0.5 * sigma);
    }
    bool improved = false;
    for (int inner = 0; inner < opt.newton_max_inner; ++inner, step *= 0.5) {
      const double m = std::clamp(mu + step(0), mu_lo, mu_hi);
      const double sd = std::max(sigma + step(1), opt.sigma_floor);
      const auto trial = gaussian_q_slice(slice, m, sd);
      if (std::isfinite(trial.value) && trial.value >= current.value) {
        const double moved = std::abs(m - mu) + std::abs(sd - sigma);
        mu = m;
        sigma = sd;
        current = trial;
        improved = true;
        if (moved < 1e-10 * (1.0 + std::abs(mu) + sigma)) return true;
        break;
      }
    }
    if (!improved) return outer > 0 || current.gradient.norm() < 1e-8 * (1.0 + std::abs(current.value));
  }
  return true;
}

}  // namespace

ModelParams m_step_newton(const Responsibilities& resp, const Dataset& data,
                          const ModelParams& params, double horizon, const MStepOptions& options,
                          int* failures) {
  check_alignment(resp, data);
  const auto& s = params.structure;
  const Index A = s.n_actions;
  const Index Z = s.n_mixtures;
  const Index C = s.n_categories();
  ModelParams next = params;
  int failed = 0;

  if (s.components.long_term) {
    std::vector<WeibullSlice> slices(static_cast<std::size_t>(C * A));
    auto at = [&](Index c, Index a) -> WeibullSlice& { return slices[static_cast<std::size_t>(c * A + a)]; };
    for (std::size_t u = 0; u < data.size(); ++u) {
      const auto& ev = data[u].events;
      const auto cats = event_categories(data[u], s);
      for (std::size_t n = 0; n < ev.size(); ++n) {
        const ActionId a = ev[n].action;
        for (const auto& [l, w] : resp.users[u][n].long_term) {
          auto& sl = at(cats[l], a);
          sl.weights.push_back(w);
          sl.deltas.push_back(std::max(ev[n].t - ev[l].t, kMinDelta));
        }
        const double rest = horizon - ev[n].t;
        if (rest > 0.0) at(cats[n], a).tails.push_back(rest);
      }
    }
    for (Index c = 0; c < C; ++c)
      for (Index a = 0; a < A; ++a) {
        auto& sl = at(c, a);
        if (sl.weights.empty()) continue;
        sl.phi = next.phi(c, a);
        sl.gamma = next.gamma(c, a);
        sl.prepare();
        double kappa = next.kappa(c, a);
        if (newton_kappa(sl, kappa, options))
          next.kappa(c, a) = kappa;
        else
          ++failed;
      }
  }

  if (s.components.background) {
    std::vector<GaussianSlice> slices(static_cast<std::size_t>(A * Z));
    for (std::size_t u = 0; u < data.size(); ++u) {
      const auto& ev = data[u].events;
      for (std::size_t n = 0; n < ev.size(); ++n) {
        const ActionId a = ev[n].action;
        const double l = time_of_day(ev[n].t, s.day_length);
        const auto& p = resp.users[u][n].background;
        for (Index z = 0; z < Z; ++z) {
          auto& sl = slices[static_cast<std::size_t>(a * Z + z)];
          sl.mass += p(z);
          sl.first += p(z) * l;
          sl.second += p(z) * l * l;
        }
      }
    }
    for (Index a = 0; a < A; ++a)
      for (Index z = 0; z < Z; ++z) {
        auto& sl = slices[static_cast<std::size_t>(a * Z + z)];
        if (!(sl.mass > 1e-12)) continue;
        sl.beta = next.beta(a, z);
        sl.n_users = static_cast<double>(data.size());
        sl.horizon = horizon;
        sl.day_length = s.day_length;
        double mu = next.mu(a, z);
        double sigma = std::max(next.sigma(a, z), options.sigma_floor);
        if (newton_gaussian(sl, mu, sigma, s.day_length, options)) {
          next.mu(a, z) = mu;
          next.sigma(a, z) = sigma;
        } else {
          ++failed;
        }
      }
  }
  if (failures) *failures += failed;
  return next;
}

ModelParams initialize_params(const Dataset& data, const ModelStructure& structure,
                              const FitConfig& config) {
  std::vector<std::string> users;
  users.reserve(data.size());
  for (const auto& h : data) users.push_back(h.user);
  ModelParams p = ModelParams::zeros(structure, users);
  const auto& s = structure;
  const Index A = s.n_actions;
  const Index Z = s.n_mixtures;
  const Index C = s.n_categories();
  const double T = s.horizon;
  const double days = T / s.day_length;
  const double n_users = static_cast<double>(std::max<std::size_t>(data.size(), 1));
  Rng rng(stream_seed(config.rng_seed, 0x1A17ULL));

  std::vector<std::vector<double>> tods(static_cast<std::size_t>(A));
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Index>(data.size()), A);
  for (std::size_t u = 0; u < data.size(); ++u)
    for (const auto& e : data[u].events) {
      tods[static_cast<std::size_t>(e.action)].push_back(time_of_day(e.t, s.day_length));
      counts(static_cast<Index>(u), e.action) += 1.0;
    }

  if (s.components.preference)
    for (Index u = 0; u < p.alpha.rows(); ++u)
      for (Index a = 0; a < A; ++a) p.alpha(u, a) = rng.uniform(0.1, 0.3) * (counts(u, a) + 1.0) / T;

  if (s.components.background) {
    const double edge = 0.25;
    for (Index a = 0; a < A; ++a) {
      auto& v = tods[static_cast<std::size_t>(a)];
      std::sort(v.begin(), v.end());
      const double per_user_day = static_cast<double>(v.size()) / (n_users * days);
      for (Index z = 0; z < Z; ++z) {
        const double q = (static_cast<double>(z) + 0.5) / static_cast<double>(Z);
        double centre = s.day_length * q;
        if (!v.empty()) centre = v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1) + 0.5)];
        p.mu(a, z) = std::clamp(centre + rng.uniform(-0.5, 0.5), edge, s.day_length - edge);
        p.sigma(a, z) = rng.uniform(1.0, 3.0);
        p.beta(a, z) = rng.uniform(0.2, 0.4) * std::max(per_user_day, 0.01) / static_cast<double>(Z);
      }
    }
  }
  if (s.components.short_term)
    for (Index i = 0; i < A; ++i)
      for (Index j = 0; j < A; ++j) p.theta(i, j) = rng.uniform(0.01, 0.1);
  if (s.components.long_term)
    for (Index c = 0; c < C; ++c)
      for (Index a = 0; a < A; ++a) p.phi(c, a) = rng.uniform(0.01, 0.1);
  return p;
}

namespace {

ModelStructure structure_for(const Dataset& data, const FitConfig& config) {
  ModelStructure s;
  s.n_actions = config.n_actions.value_or(infer_n_actions(data));
  s.n_mixtures = config.n_mixtures;
  s.tod_windows = config.tod_windows;
  s.day_length = config.day_length;
  s.components = config.components;
  if (config.horizon) {
    s.horizon = *config.horizon;
  } else {
    double last = 0.0;
    for (const auto& h : data)
      if (!h.events.empty()) last = std::max(last, h.events.back().t);
    s.horizon = std::max(1.0, std::ceil(last / s.day_length)) * s.day_length;
    if (s.horizon < last) s.horizon += s.day_length;
  }
  s.validate();
  for (const auto& h : data)
    for (const auto& e : h.events)
      if (e.action < 0 || e.action >= s.n_actions)
        throw Error(ErrorKind::InvalidInput, "action id out of range for user '" + h.user + "'");
  return s;
}

}  // namespace

FitResult fit(const Dataset& data, const FitConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  if (count_events(data) == 0) throw Error(ErrorKind::InvalidInput, "cannot fit a model to zero events");

  const ModelStructure structure = structure_for(data, config);
  const double T = structure.horizon;
  FitResult result{initialize_params(data, structure, config), {}};
  auto& report = result.report;
  auto& params = result.params;

  // The E-step at the current parameters also yields the event term of the
  // log-likelihood, so each iteration evaluates the intensities once.
  Responsibilities resp;
  const auto expect = [&]() -> LogLikValue {
    LogLikValue v;
    try {
      resp = e_step(params, data, config.lookback_cap, &v.event_term);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateEvent) throw;
      return log_likelihood(params, data, T, config.lookback_cap);
    }
    v.compensator = analytic_compensator(params, data, T);
    v.total = v.event_term - v.compensator;
    return v;
  };

  report.ll_trace.push_back(expect());
  if (!std::isfinite(report.ll_trace.back().total))
    throw Error(ErrorKind::NumericalFailure, "initial log-likelihood is not finite");

  for (int it = 1; it <= config.max_iterations; ++it) {
    params = m_step_closed(resp, data, params, T, config.mstep, &report.diagnostics);
    params = m_step_newton(resp, data, params, T, config.mstep, &report.newton_failures);
    params = m_step_rate(resp, data, params, T, config.mstep, &report.diagnostics);

    auto ll = expect();
    if (!std::isfinite(ll.total))
      throw Error(ErrorKind::NumericalFailure,
                  "log-likelihood became non-finite at iteration " + std::to_string(it));
    const double prev = report.ll_trace.back().total;
    report.ll_trace.push_back(std::move(ll));
    report.iterations_run = it;
    const double change = std::abs(report.ll_trace.back().total - prev) / std::max(1.0, std::abs(prev));
    if (change < config.rel_ll_tolerance) {
      report.converged = true;
      break;
    }
  }
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

int select_mixtures(const Dataset& data, const FitConfig& config, std::span<const int> grid) {
  if (grid.empty()) throw Error(ErrorKind::InvalidInput, "empty mixture grid");
  if (data.size() < 2) return config.n_mixtures;
  Dataset train, held_out;
  for (std::size_t u = 0; u < data.size(); ++u) (u % 5 == 4 ? held_out : train).push_back(data[u]);
  if (count_events(held_out) == 0 || count_events(train) == 0) return config.n_mixtures;

  FitConfig cfg = config;
  if (!cfg.horizon) cfg.horizon = structure_for(data, config).horizon;
  if (!cfg.n_actions) cfg.n_actions = infer_n_actions(data);
  int best = grid.front();
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int z : grid) {
    cfg.n_mixtures = z;
    const auto fitted = fit(train, cfg);
    const double ll = log_likelihood(fitted.params, held_out, *cfg.horizon, cfg.lookback_cap).total;
    if (ll > best_ll) {
      best_ll = ll;
      best = z;
    }
  }
  return best;
}

}  // namespace tipas
