#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <boost/math/special_functions/gamma.hpp>

#include "tipas/model.hpp"
#include "tipas/rng.hpp"

namespace tipas::testing {

inline ModelStructure small_structure(int n_actions, int n_mixtures, double horizon = 0.0) {
  ModelStructure s;
  s.n_actions = n_actions;
  s.n_mixtures = n_mixtures;
  s.horizon = horizon;
  return s;
}

// Random parameters in ranges that keep the process stable (branching < 1).
inline ModelParams random_params(Rng& rng, int n_actions, int n_mixtures, std::vector<std::string> users,
                                 double kappa_lo = 0.5, double kappa_hi = 3.0) {
  auto p = ModelParams::zeros(small_structure(n_actions, n_mixtures), std::move(users));
  const double share = 0.5 / (n_actions + 1);
  for (Index u = 0; u < p.alpha.rows(); ++u)
    for (Index a = 0; a < n_actions; ++a) p.alpha(u, a) = rng.uniform(0.0, 0.2);
  for (Index a = 0; a < n_actions; ++a)
    for (Index z = 0; z < n_mixtures; ++z) {
      p.beta(a, z) = rng.uniform(0.1, 2.0);
      p.mu(a, z) = rng.uniform(1.0, 23.0);
      p.sigma(a, z) = rng.uniform(0.5, 4.0);
    }
  for (Index i = 0; i < n_actions; ++i)
    for (Index j = 0; j < n_actions; ++j) {
      p.theta(i, j) = rng.uniform(0.0, share);
      p.omega(i, j) = rng.uniform(0.2, 4.0);
    }
  for (Index c = 0; c < p.phi.rows(); ++c)
    for (Index a = 0; a < n_actions; ++a) {
      p.phi(c, a) = rng.uniform(0.0, share);
      p.kappa(c, a) = rng.uniform(kappa_lo, kappa_hi);
      p.gamma(c, a) = std::pow(rng.uniform(4.0, 30.0), -p.kappa(c, a));
    }
  return p;
}

inline std::vector<EventRecord> random_events(Rng& rng, int n, int n_actions, double horizon) {
  std::vector<EventRecord> ev;
  for (int i = 0; i < n; ++i)
    ev.push_back({static_cast<ActionId>(rng.uniform() * n_actions), rng.uniform(0.0, horizon)});
  std::sort(ev.begin(), ev.end(), [](const auto& x, const auto& y) { return x.t < y.t; });
  return ev;
}

// Asymptotic Kolmogorov tail with the small-sample correction of Stephens.
inline double ks_pvalue(std::vector<double> x, double (*cdf)(double)) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

inline double exp1_cdf(double x) { return x <= 0.0 ? 0.0 : -std::expm1(-x); }

inline double chi_square_pvalue(const std::vector<double>& observed, const std::vector<double>& expected,
                                int fitted_params = 0) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i)
    stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  const double dof = static_cast<double>(observed.size()) - 1.0 - fitted_params;
  return boost::math::gamma_q(dof / 2.0, stat / 2.0);
}

inline double rel_err(double got, double want) { return std::abs(got - want) / std::max(1e-300, std::abs(want)); }

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("tipas_" + tag + "_" + std::to_string(stable_hash(tag) ^ static_cast<std::uint64_t>(::getpid())));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Runs the CLI; returns its exit status. Output goes to the given files.
inline int run_cli(const std::string& args, const std::filesystem::path& out = "/dev/null",
                   const std::filesystem::path& err = "/dev/null") {
  const std::string cmd =
      std::string(TIPAS_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace tipas::testing
