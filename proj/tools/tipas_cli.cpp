// tipas: fit, simulate, predict with and evaluate TIPAS point-process models.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tipas/baselines.hpp"
#include "tipas/em.hpp"
#include "tipas/io.hpp"
#include "tipas/predict.hpp"
#include "tipas/simulate.hpp"

using namespace tipas;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return kExitUsage;
    case ErrorKind::DataError:
    case ErrorKind::Vocabulary:
    case ErrorKind::UnsupportedVersion: return kExitData;
    default: return kExitNumerical;
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void note(const std::string& msg) { std::cerr << "tipas: " << msg << '\n'; }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

// "0,6,12,18,24" -> [0,6) [6,12) [12,18) [18,24)
std::vector<DayWindow> parse_windows(const std::string& spec) {
  std::vector<double> cuts;
  for (const auto& tok : split(spec, ',')) {
    try {
      cuts.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidInput, "bad --windows boundary '" + tok + "'");
    }
  }
  if (cuts.size() < 2) throw Error(ErrorKind::InvalidInput, "--windows needs at least two boundaries");
  std::vector<DayWindow> out;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) out.push_back({cuts[i], cuts[i + 1]});
  return out;
}

Components parse_components(const std::string& name) {
  if (name == "full") return Components::full();
  if (name == "time") return Components::time_only();
  if (name == "time-short") return Components::time_short();
  throw Error(ErrorKind::InvalidInput, "--components must be full, time or time-short");
}

LoadedDataset load_reported(const std::string& path, const LoadOptions& opt) {
  auto data = load_dataset(path, opt);
  const auto& s = data.stats;
  note("loaded " + std::to_string(s.n_records) + " records, " + std::to_string(s.n_users) + " users, " +
       std::to_string(data.actions.size()) + " actions from " + path);
  if (s.n_reordered > 0) note("sorted " + std::to_string(s.n_reordered) + " out-of-order events");
  if (s.n_blank_lines > 0) note("skipped " + std::to_string(s.n_blank_lines) + " blank lines");
  return data;
}

struct FitArgs {
  std::string data, out, mixtures = "3", windows = "0,6,12,18,24", components = "full", t0;
  std::uint64_t seed = 0;
  double tol = 1e-6;
  int max_iters = 500;
  double horizon = 0.0;
  double day_length = 24.0;
};

int run_fit(const FitArgs& a) {
  LoadOptions opt;
  if (!a.t0.empty()) opt.t0 = a.t0;
  auto data = load_reported(a.data, opt);

  FitConfig cfg;
  cfg.day_length = a.day_length;
  cfg.tod_windows = parse_windows(a.windows);
  cfg.components = parse_components(a.components);
  cfg.rel_ll_tolerance = a.tol;
  cfg.max_iterations = a.max_iters;
  cfg.rng_seed = a.seed;
  cfg.n_actions = static_cast<int>(data.actions.size());
  if (a.horizon > 0.0) cfg.horizon = a.horizon;
  if (a.mixtures == "auto") {
    const std::vector<int> grid{1, 2, 3, 4, 5, 6};
    note("selecting mixture count on held-out users");
    cfg.n_mixtures = select_mixtures(data.histories, cfg, grid);
    note("selected " + std::to_string(cfg.n_mixtures) + " mixtures");
  } else {
    try {
      cfg.n_mixtures = std::stoi(a.mixtures);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidInput, "--mixtures must be an integer or 'auto'");
    }
  }
  note("fitting " + std::to_string(count_events(data.histories)) + " events");
  const auto result = fit(data.histories, cfg);
  const auto& r = result.report;
  const double ll = r.ll_trace.back().total;
  note(std::string(r.converged ? "converged" : "stopped") + " after " + std::to_string(r.iterations_run) +
       " iterations, log-likelihood " + fmt(ll));
  for (const auto& d : r.diagnostics) note(d);

  ModelFile model{result.params, data.actions, FitMetadata{a.seed, r.iterations_run, ll, r.converged}};
  save_model(a.out, model);
  note("wrote " + a.out);
  return 0;
}

struct PredictArgs {
  std::string model, data, user, t0;
  double at = 0.0;
  bool has_at = false;
  int samples = 100;
  std::uint64_t seed = 0;
  double horizon_filter = 12.0;
};

// Histories restricted to events strictly before --at, when given.
std::vector<UserHistory> prefixes(const LoadedDataset& data, const PredictArgs& a) {
  std::vector<UserHistory> out;
  for (const auto& h : data.histories) {
    if (!a.user.empty() && h.user != a.user) continue;
    UserHistory p{h.user, {}};
    for (const auto& e : h.events)
      if (!a.has_at || e.t < a.at) p.events.push_back(e);
    out.push_back(std::move(p));
  }
  if (!a.user.empty() && out.empty()) throw Error(ErrorKind::DataError, "user '" + a.user + "' not in data");
  return out;
}

int run_predict(const PredictArgs& a) {
  const auto model = load_model(a.model);
  LoadOptions opt;
  opt.vocabulary = model.actions;
  if (!a.t0.empty()) opt.t0 = a.t0;
  const auto data = load_reported(a.data, opt);
  for (const auto& h : prefixes(data, a)) {
    const auto pred = predict_next_action(model.params, {h.user, h.events, a.at});
    json rec;
    rec["user"] = h.user;
    rec["at"] = a.at;
    rec["action"] = model.actions[static_cast<std::size_t>(pred.action)];
    rec["coldstart"] = model.params.user_slot(h.user) == kColdStart;
    rec["degenerate"] = pred.degenerate;
    std::cout << rec.dump() << '\n';
  }
  return 0;
}

int run_predict_time(const PredictArgs& a) {
  const auto model = load_model(a.model);
  LoadOptions opt;
  opt.vocabulary = model.actions;
  if (!a.t0.empty()) opt.t0 = a.t0;
  const auto data = load_reported(a.data, opt);
  TimeSamplingOptions sampling;
  sampling.n_samples = a.samples;
  sampling.seed = a.seed;
  sampling.horizon_filter = a.horizon_filter;
  for (const auto& h : prefixes(data, a)) {
    json rec;
    rec["user"] = h.user;
    rec["last_event"] = h.events.empty() ? 0.0 : h.events.back().t;
    try {
      const auto pred = predict_next_time(model.params, h.user, h.events, sampling);
      rec["predicted_time"] = pred.time;
      rec["censored_samples"] = pred.n_censored;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::CensoredPrediction) throw;
      rec["predicted_time"] = nullptr;
      rec["censored_samples"] = a.samples;
      note(e.what());
    }
    std::cout << rec.dump() << '\n';
  }
  return 0;
}

struct SimulateArgs {
  std::string model, out;
  std::size_t users = 1;
  double horizon = 24.0;
  std::uint64_t seed = 0;
};

int run_simulate(const SimulateArgs& a) {
  const auto model = load_model(a.model);
  SyntheticSpec spec{a.users, model.params, a.horizon, a.seed};
  const auto data = generate_synthetic(spec);
  save_dataset(a.out, data, model.actions);
  note("simulated " + std::to_string(count_events(data)) + " events for " + std::to_string(a.users) + " users");
  return 0;
}

int run_generate(const std::string& spec_path, const std::string& out, const std::uint64_t* seed) {
  auto spec = load_synthetic_spec(spec_path);
  if (seed) spec.spec.seed = *seed;
  const auto data = generate_synthetic(spec.spec);
  save_dataset(out, data, spec.actions);
  note("generated " + std::to_string(count_events(data)) + " events for " + std::to_string(data.size()) +
       " users");
  return 0;
}

struct EvaluateArgs {
  std::string data, out = "report.json", csv, baselines = "all", ablations = "auto", windows = "0,6,12,18,24",
                    t0;
  double window_days = 30.0;
  double horizon_filter = 12.0;
  std::uint64_t seed = 0;
  int mixtures = 3;
  double tol = 1e-6;
  int max_iters = 500;
  int samples = 100;
  bool no_times = false;
};

int run_evaluate(const EvaluateArgs& a) {
  LoadOptions opt;
  if (!a.t0.empty()) opt.t0 = a.t0;
  const auto data = load_reported(a.data, opt);

  FitConfig cfg;
  cfg.n_mixtures = a.mixtures;
  cfg.tod_windows = parse_windows(a.windows);
  cfg.rel_ll_tolerance = a.tol;
  cfg.max_iterations = a.max_iters;
  cfg.rng_seed = a.seed;
  TimeSamplingOptions sampling;
  sampling.n_samples = a.samples;
  sampling.horizon_filter = a.horizon_filter;

  const auto names = split(a.baselines, ',');
  bool ablations = false;
  if (a.ablations == "on") {
    ablations = true;
  } else if (a.ablations == "auto") {
    ablations = std::find(names.begin(), names.end(), "all") != names.end();
  } else if (a.ablations != "off") {
    throw Error(ErrorKind::InvalidInput, "--ablations must be auto, on or off");
  }

  std::vector<PredictorFactory> factories;
  const auto tipas_variant = [&](const std::string& name, Components c) {
    FitConfig v = cfg;
    v.components = c;
    factories.emplace_back([=] { return std::make_unique<TipasPredictor>(name, v, sampling); });
  };
  if (ablations) {
    tipas_variant("Time", Components::time_only());
    tipas_variant("Time+Short", Components::time_short());
  }
  tipas_variant("TIPAS", Components::full());
  for (auto& f : make_baselines(names)) factories.push_back(std::move(f));

  EvalConfig ec;
  ec.window_hours = a.window_days * 24.0;
  ec.horizon_filter = a.horizon_filter;
  ec.predict_times = !a.no_times;
  ec.seed = a.seed;
  ec.n_actions = static_cast<int>(data.actions.size());
  ec.actions = data.actions;
  ec.progress = [](const std::string& msg) { note(msg); };
  const auto report = rolling_window_eval(data.histories, factories, ec);
  for (const auto& w : report.warnings) note("warning: " + w);

  write_atomic(a.out, to_json(report));
  note("wrote " + a.out);
  if (!a.csv.empty()) {
    write_atomic(a.csv, to_csv(report));
    note("wrote " + a.csv);
  }
  for (const auto& m : report.models) {
    std::string line = m.name;
    if (m.pooled.accuracy) line += "  accuracy " + fmt(*m.pooled.accuracy);
    if (m.pooled.macro_recall) line += "  macro-recall " + fmt(*m.pooled.macro_recall);
    if (m.pooled.mae_hours) line += "  mae " + fmt(*m.pooled.mae_hours) + " h";
    std::cout << line << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TIPAS: time-varying point processes for next-action and next-time prediction"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model by EM");
  fit_cmd->add_option("--data", fa.data, "Event log (.jsonl or .csv)")->required();
  fit_cmd->add_option("--out", fa.out, "Model JSON to write")->required();
  fit_cmd->add_option("--mixtures", fa.mixtures, "Gaussian mixtures per action, or 'auto'")->capture_default_str();
  fit_cmd->add_option("--windows", fa.windows, "Time-of-day category boundaries in hours")->capture_default_str();
  fit_cmd->add_option("--components", fa.components, "full, time or time-short")->capture_default_str();
  fit_cmd->add_option("--seed", fa.seed, "Initialization seed")->capture_default_str();
  fit_cmd->add_option("--tol", fa.tol, "Relative log-likelihood tolerance")->capture_default_str();
  fit_cmd->add_option("--max-iters", fa.max_iters, "Maximum EM iterations")->capture_default_str();
  fit_cmd->add_option("--horizon", fa.horizon, "Observation horizon in hours (default: whole days spanned)");
  fit_cmd->add_option("--day-length", fa.day_length, "Period of the time-of-day cycle")->capture_default_str();
  fit_cmd->add_option("--t0", fa.t0, "ISO-8601 anchor for timestamp strings");

  PredictArgs pa;
  auto* pred_cmd = app.add_subcommand("predict", "Most likely next action per user at a given time");
  pred_cmd->add_option("--model", pa.model)->required();
  pred_cmd->add_option("--data", pa.data, "History to condition on")->required();
  pred_cmd->add_option("--at", pa.at, "Query time in hours; events at or after it are ignored")->required();
  pred_cmd->add_option("--user", pa.user, "Restrict to one user");
  pred_cmd->add_option("--t0", pa.t0, "ISO-8601 anchor for timestamp strings");

  PredictArgs ta;
  auto* time_cmd = app.add_subcommand("predict-time", "Expected time of the next event per user");
  time_cmd->add_option("--model", ta.model)->required();
  time_cmd->add_option("--data", ta.data, "History to condition on")->required();
  time_cmd->add_option("--samples", ta.samples, "Simulated continuations per user")->capture_default_str();
  auto* at_opt = time_cmd->add_option("--at", ta.at, "Ignore events at or after this time");
  time_cmd->add_option("--user", ta.user, "Restrict to one user");
  time_cmd->add_option("--seed", ta.seed)->capture_default_str();
  time_cmd->add_option("--horizon-filter", ta.horizon_filter, "Hours; simulations stop at 10x this")
      ->capture_default_str();
  time_cmd->add_option("--t0", ta.t0, "ISO-8601 anchor for timestamp strings");

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Sample event logs from a fitted model");
  sim_cmd->add_option("--model", sa.model)->required();
  sim_cmd->add_option("--users", sa.users, "Number of users")->capture_default_str();
  sim_cmd->add_option("--horizon", sa.horizon, "Hours per user")->capture_default_str();
  sim_cmd->add_option("--seed", sa.seed)->capture_default_str();
  sim_cmd->add_option("--out", sa.out, "JSONL to write")->required();

  std::string gen_spec, gen_out;
  std::uint64_t gen_seed = 0;
  auto* gen_cmd = app.add_subcommand("generate", "Generate a synthetic dataset from a ground-truth spec");
  gen_cmd->add_option("--spec", gen_spec, "Synthetic spec JSON")->required();
  gen_cmd->add_option("--out", gen_out, "JSONL to write")->required();
  auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "Override the spec's seed");

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Rolling-window evaluation of TIPAS and baselines");
  eval_cmd->add_option("--data", ea.data)->required();
  eval_cmd->add_option("--window-days", ea.window_days)->capture_default_str();
  eval_cmd->add_option("--baselines", ea.baselines, "Comma-separated baseline names, 'all' or 'none'")
      ->capture_default_str();
  eval_cmd->add_option("--ablations", ea.ablations, "Time and Time+Short variants: auto (with 'all'), on, off")
      ->capture_default_str();
  eval_cmd->add_option("--horizon-filter", ea.horizon_filter, "Largest true interarrival scored for MAE")
      ->capture_default_str();
  eval_cmd->add_option("--out", ea.out, "JSON report")->capture_default_str();
  eval_cmd->add_option("--csv", ea.csv, "Also write a flat CSV report");
  eval_cmd->add_option("--seed", ea.seed)->capture_default_str();
  eval_cmd->add_option("--mixtures", ea.mixtures)->capture_default_str();
  eval_cmd->add_option("--windows", ea.windows)->capture_default_str();
  eval_cmd->add_option("--tol", ea.tol)->capture_default_str();
  eval_cmd->add_option("--max-iters", ea.max_iters)->capture_default_str();
  eval_cmd->add_option("--samples", ea.samples, "Simulations per time prediction")->capture_default_str();
  eval_cmd->add_flag("--no-times", ea.no_times, "Skip next-time prediction");
  eval_cmd->add_option("--t0", ea.t0, "ISO-8601 anchor for timestamp strings");

  std::string exp_model, exp_dir;
  auto* exp_cmd = app.add_subcommand("export-params", "Write kernel and background curves as CSV");
  exp_cmd->add_option("--model", exp_model)->required();
  exp_cmd->add_option("--out-dir", exp_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*fit_cmd) return run_fit(fa);
    if (*pred_cmd) {
      pa.has_at = true;
      return run_predict(pa);
    }
    if (*time_cmd) {
      ta.has_at = at_opt->count() > 0;
      return run_predict_time(ta);
    }
    if (*sim_cmd) return run_simulate(sa);
    if (*gen_cmd) return run_generate(gen_spec, gen_out, gen_seed_opt->count() ? &gen_seed : nullptr);
    if (*eval_cmd) return run_evaluate(ea);
    if (*exp_cmd) {
      export_params(load_model(exp_model), exp_dir);
      note("wrote curves to " + exp_dir);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "tipas: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "tipas: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "tipas: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}
