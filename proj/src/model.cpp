#include "tipas/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace tipas {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::DataError: return "data error";
    case ErrorKind::NumericalFailure: return "numerical failure";
    case ErrorKind::DegenerateEvent: return "degenerate event";
    case ErrorKind::CensoredPrediction: return "censored prediction";
    case ErrorKind::Truncation: return "truncation";
    case ErrorKind::Vocabulary: return "vocabulary";
    case ErrorKind::UnsupportedVersion: return "unsupported version";
    case ErrorKind::Internal: return "internal error";
  }
  return "unknown";
}

std::vector<DayWindow> default_tod_windows() {
  return {{0.0, 6.0}, {6.0, 12.0}, {12.0, 18.0}, {18.0, 24.0}};
}

void ModelStructure::validate() const {
  if (n_actions < 1) throw Error(ErrorKind::InvalidInput, "n_actions must be >= 1");
  if (n_mixtures < 1) throw Error(ErrorKind::InvalidInput, "n_mixtures must be >= 1");
  if (!(day_length > 0.0) || !std::isfinite(day_length))
    throw Error(ErrorKind::InvalidInput, "day_length must be positive");
  if (!(horizon >= 0.0) || !std::isfinite(horizon))
    throw Error(ErrorKind::InvalidInput, "horizon must be finite and >= 0");
  if (tod_windows.empty())
    throw Error(ErrorKind::InvalidInput, "at least one time-of-day window required");
  double cursor = 0.0;
  for (const auto& w : tod_windows) {
    if (w.begin != cursor || !(w.end > w.begin)) {
      std::ostringstream os;
      os << "time-of-day windows must tile [0, " << day_length
         << ") in order; bad window [" << w.begin << ", " << w.end << ")";
      throw Error(ErrorKind::InvalidInput, os.str());
    }
    cursor = w.end;
  }
  if (cursor != day_length)
    throw Error(ErrorKind::InvalidInput, "time-of-day windows leave a gap before day end");
}

ModelParams ModelParams::zeros(const ModelStructure& structure,
                               std::vector<std::string> users) {
  structure.validate();
  const Index A = structure.n_actions;
  const Index Z = structure.n_mixtures;
  const Index C = structure.n_categories();
  ModelParams p;
  p.structure = structure;
  p.users = std::move(users);
  p.alpha = Eigen::MatrixXd::Zero(static_cast<Index>(p.users.size()), A);
  p.beta = Eigen::MatrixXd::Zero(A, Z);
  p.mu.resize(A, Z);
  for (Index z = 0; z < Z; ++z)
    p.mu.col(z).setConstant(structure.day_length * (z + 0.5) / static_cast<double>(Z));
  p.sigma = Eigen::MatrixXd::Constant(A, Z, 1.0);
  p.theta = Eigen::MatrixXd::Zero(A, A);
  p.omega = Eigen::MatrixXd::Constant(A, A, 1.0);
  p.phi = Eigen::MatrixXd::Zero(C, A);
  p.gamma = Eigen::MatrixXd::Constant(C, A, 0.1);
  p.kappa = Eigen::MatrixXd::Constant(C, A, 1.0);
  p.reindex_users();
  return p;
}

void ModelParams::reindex_users() {
  user_lookup_.clear();
  for (std::size_t i = 0; i < users.size(); ++i) {
    auto [it, fresh] = user_lookup_.emplace(users[i], static_cast<Index>(i));
    if (!fresh) throw Error(ErrorKind::InvalidInput, "duplicate user key '" + users[i] + "'");
  }
}

Index ModelParams::user_slot(std::string_view user) const {
  auto it = user_lookup_.find(user);
  return it == user_lookup_.end() ? kColdStart : it->second;
}

namespace {

void check_shape(const Eigen::MatrixXd& m, Index rows, Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << " has shape " << m.rows() << "x" << m.cols() << ", expected "
       << rows << "x" << cols;
    throw Error(ErrorKind::InvalidInput, os.str());
  }
}

template <class Pred>
void check_entries(const Eigen::MatrixXd& m, const char* name, const char* rule, Pred ok) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (!ok(m(i, j))) {
        std::ostringstream os;
        os << name << "(" << i << "," << j << ") = " << m(i, j) << " violates " << rule;
        throw Error(ErrorKind::InvalidInput, os.str());
      }
}

}  // namespace

void ModelParams::validate() const {
  structure.validate();
  const Index A = structure.n_actions;
  const Index Z = structure.n_mixtures;
  const Index C = structure.n_categories();
  check_shape(alpha, static_cast<Index>(users.size()), A, "alpha");
  check_shape(beta, A, Z, "beta");
  check_shape(mu, A, Z, "mu");
  check_shape(sigma, A, Z, "sigma");
  check_shape(theta, A, A, "theta");
  check_shape(omega, A, A, "omega");
  check_shape(phi, C, A, "phi");
  check_shape(gamma, C, A, "gamma");
  check_shape(kappa, C, A, "kappa");
  auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  check_entries(alpha, "alpha", ">= 0", nonneg);
  check_entries(beta, "beta", ">= 0", nonneg);
  const double day = structure.day_length;
  check_entries(mu, "mu", "in (0, day_length)", [day](double v) { return v > 0.0 && v < day; });
  check_entries(sigma, "sigma", "> 0", positive);
  check_entries(theta, "theta", ">= 0", nonneg);
  check_entries(omega, "omega", ">= 0", nonneg);
  check_entries(phi, "phi", ">= 0", nonneg);
  check_entries(gamma, "gamma", ">= 0", nonneg);
  check_entries(kappa, "kappa", "> 0", positive);
  if (user_lookup_.size() != users.size())
    throw Error(ErrorKind::InvalidInput, "user index is stale; call reindex_users()");
}

double time_of_day(double t, double day_length) {
  if (!std::isfinite(t)) throw Error(ErrorKind::InvalidInput, "non-finite timestamp");
  double l = std::fmod(t, day_length);
  if (l < 0.0) l += day_length;
  // fmod of a value just below a multiple can round up to day_length
  return l >= day_length ? 0.0 : l;
}

int tod_category(double t, const ModelStructure& structure) {
  const double l = time_of_day(t, structure.day_length);
  const auto& windows = structure.tod_windows;
  for (std::size_t c = 0; c < windows.size(); ++c)
    if (l >= windows[c].begin && l < windows[c].end) return static_cast<int>(c);
  return static_cast<int>(windows.size()) - 1;
}

double gaussian_density(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

double weibull_kernel(double phi, double gamma, double kappa, double delta) {
  if (phi == 0.0 || gamma == 0.0) return 0.0;
  const double d = std::max(delta, kMinDelta);
  // log form: d^kappa may overflow for large kappa, where the kernel is 0
  const double ld = std::log(d);
  return phi * gamma * kappa * std::exp((kappa - 1.0) * ld - gamma * std::exp(kappa * ld));
}

void check_prefix(std::span<const EventRecord> prefix, double t) {
  if (!std::isfinite(t)) throw Error(ErrorKind::InvalidInput, "non-finite query time");
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (i > 0 && prefix[i].t < prefix[i - 1].t)
      throw Error(ErrorKind::InvalidInput,
                  "history prefix unsorted at index " + std::to_string(i));
    if (prefix[i].t > t)
      throw Error(ErrorKind::InvalidInput,
                  "history prefix has event " + std::to_string(i) + " after query time");
  }
}

double background_intensity(const ModelParams& params, ActionId a, double t) {
  const double l = time_of_day(t, params.structure.day_length);
  double sum = 0.0;
  for (Index z = 0; z < params.beta.cols(); ++z) {
    const double b = params.beta(a, z);
    if (b != 0.0) sum += b * gaussian_density(l, params.mu(a, z), params.sigma(a, z));
  }
  return sum;
}

double short_term_intensity(const ModelParams& params,
                            std::span<const EventRecord> prefix, ActionId a, double t) {
  check_prefix(prefix, t);
  double sum = 0.0;
  for (const auto& e : prefix) {
    const double delta = std::max(t - e.t, kMinDelta);
    sum += exponential_kernel(params.theta(e.action, a), params.omega(e.action, a), delta);
  }
  return sum;
}

double long_term_intensity(const ModelParams& params,
                           std::span<const EventRecord> prefix, ActionId a, double t) {
  check_prefix(prefix, t);
  double sum = 0.0;
  for (const auto& e : prefix) {
    if (e.action != a) continue;
    const int c = tod_category(e.t, params.structure);
    sum += weibull_kernel(params.phi(c, a), params.gamma(c, a), params.kappa(c, a), t - e.t);
  }
  return sum;
}

double total_intensity(const ModelParams& params, Index user,
                       std::span<const EventRecord> prefix, ActionId a, double t) {
  return params.alpha_at(user, a) + background_intensity(params, a, t) +
         short_term_intensity(params, prefix, a, t) +
         long_term_intensity(params, prefix, a, t);
}

Eigen::VectorXd intensity_vector(const ModelParams& params, Index user,
                                 std::span<const EventRecord> prefix, double t) {
  check_prefix(prefix, t);
  const Index A = params.structure.n_actions;
  Eigen::VectorXd lambda(A);
  for (ActionId a = 0; a < A; ++a)
    lambda(a) = params.alpha_at(user, a) + background_intensity(params, a, t);
  for (const auto& e : prefix) {
    const double delta = std::max(t - e.t, kMinDelta);
    for (ActionId a = 0; a < A; ++a)
      lambda(a) += exponential_kernel(params.theta(e.action, a), params.omega(e.action, a), delta);
    const int c = tod_category(e.t, params.structure);
    lambda(e.action) += weibull_kernel(params.phi(c, e.action), params.gamma(c, e.action),
                                       params.kappa(c, e.action), delta);
  }
  return lambda;
}

std::size_t sort_history(UserHistory& history) {
  auto before = history.events;
  std::stable_sort(history.events.begin(), history.events.end(),
                   [](const EventRecord& x, const EventRecord& y) { return x.t < y.t; });
  std::size_t moved = 0;
  for (std::size_t i = 0; i < before.size(); ++i)
    if (!(before[i] == history.events[i])) ++moved;
  return moved;
}

int infer_n_actions(const Dataset& data) {
  int n = 0;
  for (const auto& h : data)
    for (const auto& e : h.events) n = std::max(n, e.action + 1);
  return std::max(n, 1);
}

std::size_t count_events(const Dataset& data) {
  std::size_t n = 0;
  for (const auto& h : data) n += h.events.size();
  return n;
}

}  // namespace tipas
