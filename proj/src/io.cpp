#include "tipas/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tipas {

using nlohmann::json;

namespace {

[[noreturn]] void data_error(std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::DataError, "line " + std::to_string(line) + ": " + msg);
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

double iso8601_seconds(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0.0;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%d-%d-%d%n", &y, &mo, &d, &consumed) != 3)
    throw Error(ErrorKind::DataError, "bad ISO-8601 timestamp '" + s + "'");
  std::size_t pos = static_cast<std::size_t>(consumed);
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    int used = 0;
    if (std::sscanf(s.c_str() + pos + 1, "%d:%d%n", &h, &mi, &used) != 2)
      throw Error(ErrorKind::DataError, "bad ISO-8601 time in '" + s + "'");
    pos += 1 + static_cast<std::size_t>(used);
    if (pos < s.size() && s[pos] == ':') {
      char* end = nullptr;
      sec = std::strtod(s.c_str() + pos + 1, &end);
      pos = static_cast<std::size_t>(end - s.c_str());
    }
  }
  double offset = 0.0;
  if (pos < s.size()) {
    if (s[pos] == 'Z') {
      ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
      int oh = 0, om = 0;
      if (std::sscanf(s.c_str() + pos + 1, "%d:%d", &oh, &om) < 1)
        throw Error(ErrorKind::DataError, "bad UTC offset in '" + s + "'");
      offset = (s[pos] == '+' ? 1.0 : -1.0) * (oh * 3600.0 + om * 60.0);
      pos = s.size();
    }
  }
  if (pos != s.size() || mo < 1 || mo > 12 || d < 1 || d > 31 || h > 24 || mi > 59 || sec >= 61.0)
    throw Error(ErrorKind::DataError, "bad ISO-8601 timestamp '" + s + "'");
  const double days = static_cast<double>(days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)));
  return days * 86400.0 + h * 3600.0 + mi * 60.0 + sec - offset;
}

struct RawRecord {
  std::string user;
  std::string action;
  double t = 0.0;
  std::size_t line = 0;
};

double parse_time_value(const json& v, const LoadOptions& opt, std::size_t line) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (opt.t0) return iso8601_hours_since(s, *opt.t0);
    try {
      std::size_t used = 0;
      const double x = std::stod(s, &used);
      if (used == s.size()) return x;
    } catch (const std::exception&) {
    }
    data_error(line, "timestamp '" + s + "' is not a number (pass --t0 for ISO-8601 input)");
  }
  data_error(line, "field 't' must be a number or string");
}

std::string key_string(const json& v, const char* field, std::size_t line) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  data_error(line, std::string("field '") + field + "' must be a string or integer");
}

std::vector<RawRecord> read_jsonl(std::istream& in, const LoadOptions& opt, LoadStats& stats) {
  std::vector<RawRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) {
      ++stats.n_blank_lines;
      continue;
    }
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      data_error(n, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) data_error(n, "record must be a JSON object");
    for (const char* f : {"user", "action", "t"})
      if (!doc.contains(f)) data_error(n, std::string("missing field '") + f + "'");
    out.push_back({key_string(doc["user"], "user", n), key_string(doc["action"], "action", n),
                   parse_time_value(doc["t"], opt, n), n});
  }
  return out;
}

std::vector<RawRecord> read_csv(std::istream& in, const LoadOptions& opt, LoadStats& stats) {
  std::vector<RawRecord> out;
  std::string line;
  std::size_t n = 0;
  int cu = -1, ca = -1, ct = -1;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      ++stats.n_blank_lines;
      continue;
    }
    const auto cells = split_csv(line);
    if (cu < 0) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "user") cu = static_cast<int>(i);
        if (cells[i] == "action") ca = static_cast<int>(i);
        if (cells[i] == "t") ct = static_cast<int>(i);
      }
      if (cu < 0 || ca < 0 || ct < 0) data_error(n, "CSV header must name user, action and t");
      width = cells.size();
      continue;
    }
    if (cells.size() != width)
      data_error(n, "expected " + std::to_string(width) + " columns, found " + std::to_string(cells.size()));
    const auto& user = cells[static_cast<std::size_t>(cu)];
    const auto& action = cells[static_cast<std::size_t>(ca)];
    if (user.empty() || action.empty()) data_error(n, "empty user or action");
    out.push_back({user, action, parse_time_value(json(cells[static_cast<std::size_t>(ct)]), opt, n), n});
  }
  if (cu < 0) data_error(n, "missing CSV header");
  return out;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const json& doc, const char* name, Index rows, Index cols) {
  if (!doc.contains(name)) throw Error(ErrorKind::DataError, std::string("model is missing '") + name + "'");
  const auto& v = doc.at(name);
  if (!v.is_array() || static_cast<Index>(v.size()) != rows)
    throw Error(ErrorKind::DataError, std::string("'") + name + "' must have " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw Error(ErrorKind::DataError,
                  std::string("'") + name + "' row " + std::to_string(i) + " must have " + std::to_string(cols) + " entries");
    for (Index j = 0; j < cols; ++j) m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

}  // namespace

double iso8601_hours_since(const std::string& timestamp, const std::string& anchor) {
  return (iso8601_seconds(timestamp) - iso8601_seconds(anchor)) / 3600.0;
}

LoadedDataset load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataError, "cannot open dataset '" + path.string() + "'");
  LoadedDataset out;
  const bool csv = path.extension() == ".csv";
  const auto records = csv ? read_csv(in, options, out.stats) : read_jsonl(in, options, out.stats);
  out.stats.n_records = records.size();

  for (const auto& r : records)
    if (!std::isfinite(r.t) || r.t < 0.0) data_error(r.line, "timestamp must be finite and >= 0");

  if (options.vocabulary) {
    out.actions = *options.vocabulary;
  } else {
    std::set<std::string> names;
    for (const auto& r : records) names.insert(r.action);
    out.actions.assign(names.begin(), names.end());
  }
  std::map<std::string, ActionId, std::less<>> action_ids;
  for (std::size_t i = 0; i < out.actions.size(); ++i) action_ids[out.actions[i]] = static_cast<ActionId>(i);

  std::map<std::string, UserHistory> users;
  for (const auto& r : records) {
    auto it = action_ids.find(r.action);
    if (it == action_ids.end())
      throw Error(ErrorKind::Vocabulary,
                  "line " + std::to_string(r.line) + ": unknown action '" + r.action + "'");
    auto& h = users[r.user];
    h.user = r.user;
    h.events.push_back({it->second, r.t});
  }
  for (auto& [name, h] : users) {
    out.stats.n_reordered += sort_history(h);
    out.histories.push_back(std::move(h));
  }
  out.stats.n_users = out.histories.size();
  return out;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data,
                  const std::vector<std::string>& actions) {
  std::ostringstream os;
  for (const auto& h : data)
    for (const auto& e : h.events) {
      const auto a = static_cast<std::size_t>(e.action);
      const std::string name = a < actions.size() ? actions[a] : "a" + std::to_string(e.action);
      json rec;
      rec["user"] = h.user;
      rec["action"] = name;
      rec["t"] = e.t;
      os << rec.dump() << '\n';
    }
  write_atomic(path, os.str());
}

std::vector<std::string> default_action_names(int n_actions) {
  std::vector<std::string> out;
  for (int a = 0; a < n_actions; ++a) out.push_back("a" + std::to_string(a));
  return out;
}

json model_to_json(const ModelFile& model) {
  const auto& p = model.params;
  const auto& s = p.structure;
  json windows = json::array();
  for (const auto& w : s.tod_windows) windows.push_back({w.begin, w.end});
  json doc;
  doc["schema_version"] = kModelSchemaVersion;
  doc["structure"] = {{"n_actions", s.n_actions},
                      {"n_mixtures", s.n_mixtures},
                      {"tod_windows", windows},
                      {"day_length", s.day_length},
                      {"horizon", s.horizon},
                      {"components",
                       {{"preference", s.components.preference},
                        {"background", s.components.background},
                        {"short_term", s.components.short_term},
                        {"long_term", s.components.long_term}}}};
  doc["actions"] = model.actions.empty() ? default_action_names(s.n_actions) : model.actions;
  doc["users"] = p.users;
  doc["params"] = {{"alpha", matrix_json(p.alpha)}, {"beta", matrix_json(p.beta)},
                   {"mu", matrix_json(p.mu)},       {"sigma", matrix_json(p.sigma)},
                   {"theta", matrix_json(p.theta)}, {"omega", matrix_json(p.omega)},
                   {"phi", matrix_json(p.phi)},     {"gamma", matrix_json(p.gamma)},
                   {"kappa", matrix_json(p.kappa)}};
  if (model.fit)
    doc["fit"] = {{"seed", model.fit->seed},
                  {"iterations", model.fit->iterations},
                  {"final_log_likelihood", model.fit->final_log_likelihood},
                  {"converged", model.fit->converged}};
  return doc;
}

ModelFile model_from_json(const json& doc) {
  try {
    if (!doc.contains("schema_version")) throw Error(ErrorKind::DataError, "model is missing schema_version");
    const int version = doc.at("schema_version").get<int>();
    if (version != kModelSchemaVersion)
      throw Error(ErrorKind::UnsupportedVersion,
                  "model schema_version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kModelSchemaVersion) + ")");
    const auto& js = doc.at("structure");
    ModelStructure s;
    s.n_actions = js.at("n_actions").get<int>();
    s.n_mixtures = js.at("n_mixtures").get<int>();
    s.day_length = js.value("day_length", 24.0);
    s.horizon = js.value("horizon", 0.0);
    if (js.contains("tod_windows")) {
      s.tod_windows.clear();
      for (const auto& w : js.at("tod_windows")) s.tod_windows.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
    }
    if (js.contains("components")) {
      const auto& c = js.at("components");
      s.components.preference = c.value("preference", true);
      s.components.background = c.value("background", true);
      s.components.short_term = c.value("short_term", true);
      s.components.long_term = c.value("long_term", true);
    }
    s.validate();

    ModelFile out;
    out.actions = doc.contains("actions") ? doc.at("actions").get<std::vector<std::string>>()
                                          : default_action_names(s.n_actions);
    if (static_cast<int>(out.actions.size()) != s.n_actions)
      throw Error(ErrorKind::DataError, "action vocabulary size does not match n_actions");
    std::vector<std::string> users;
    if (doc.contains("users")) users = doc.at("users").get<std::vector<std::string>>();
    out.params = ModelParams::zeros(s, users);
    const auto& jp = doc.at("params");
    const Index A = s.n_actions, Z = s.n_mixtures, C = s.n_categories();
    auto& p = out.params;
    p.alpha = matrix_from(jp, "alpha", static_cast<Index>(users.size()), A);
    p.beta = matrix_from(jp, "beta", A, Z);
    p.mu = matrix_from(jp, "mu", A, Z);
    p.sigma = matrix_from(jp, "sigma", A, Z);
    p.theta = matrix_from(jp, "theta", A, A);
    p.omega = matrix_from(jp, "omega", A, A);
    p.phi = matrix_from(jp, "phi", C, A);
    p.gamma = matrix_from(jp, "gamma", C, A);
    p.kappa = matrix_from(jp, "kappa", C, A);
    p.validate();
    if (doc.contains("fit")) {
      const auto& f = doc.at("fit");
      out.fit = FitMetadata{f.value("seed", std::uint64_t{0}), f.value("iterations", 0),
                            f.value("final_log_likelihood", 0.0), f.value("converged", false)};
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::DataError, std::string("malformed model document: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  model.params.validate();
  write_atomic(path, model_to_json(model).dump(2) + "\n");
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataError, "cannot open model '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::DataError, "model '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

SyntheticSpecFile synthetic_spec_from_json(const json& doc) {
  try {
    json model = doc;
    model["users"] = json::array();
    if (!model.contains("schema_version")) model["schema_version"] = kModelSchemaVersion;
    if (model.contains("params")) model["params"]["alpha"] = json::array();
    auto parsed = model_from_json(model);

    SyntheticSpecFile out;
    out.actions = std::move(parsed.actions);
    out.spec.n_users = doc.at("n_users").get<std::size_t>();
    out.spec.horizon = doc.at("horizon").get<double>();
    out.spec.seed = doc.value("seed", std::uint64_t{0});
    const int A = parsed.params.structure.n_actions;
    if (doc.contains("alpha")) {
      const auto row = doc.at("alpha").get<std::vector<double>>();
      if (static_cast<int>(row.size()) != A)
        throw Error(ErrorKind::DataError, "spec 'alpha' must have one entry per action");
      std::vector<std::string> users;
      for (std::size_t i = 0; i < out.spec.n_users; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "u%04zu", i);
        users.emplace_back(name);
      }
      auto params = ModelParams::zeros(parsed.params.structure, users);
      params.beta = parsed.params.beta;
      params.mu = parsed.params.mu;
      params.sigma = parsed.params.sigma;
      params.theta = parsed.params.theta;
      params.omega = parsed.params.omega;
      params.phi = parsed.params.phi;
      params.gamma = parsed.params.gamma;
      params.kappa = parsed.params.kappa;
      for (Index u = 0; u < params.alpha.rows(); ++u)
        for (Index a = 0; a < A; ++a) params.alpha(u, a) = row[static_cast<std::size_t>(a)];
      params.validate();
      out.spec.params = std::move(params);
    } else {
      out.spec.params = std::move(parsed.params);
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::DataError, std::string("malformed synthetic spec: ") + e.what());
  }
}

SyntheticSpecFile load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataError, "cannot open spec '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::DataError, "spec '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return synthetic_spec_from_json(doc);
}

void export_params(const ModelFile& model, const std::filesystem::path& out_dir, const ExportGrid& grid) {
  const auto& p = model.params;
  const auto& s = p.structure;
  const auto actions = model.actions.empty() ? default_action_names(s.n_actions) : model.actions;
  std::filesystem::create_directories(out_dir);

  std::ostringstream lt;
  lt << "category,window_begin,window_end,action,delta_hours,value\n";
  const int n_long = static_cast<int>(std::llround(grid.long_term_max / grid.long_term_step));
  for (Index c = 0; c < s.n_categories(); ++c)
    for (Index a = 0; a < s.n_actions; ++a)
      for (int k = 1; k <= n_long; ++k) {
        const double d = k * grid.long_term_step;
        lt << c << ',' << fmt17(s.tod_windows[static_cast<std::size_t>(c)].begin) << ','
           << fmt17(s.tod_windows[static_cast<std::size_t>(c)].end) << ',' << actions[static_cast<std::size_t>(a)]
           << ',' << fmt17(d) << ',' << fmt17(weibull_kernel(p.phi(c, a), p.gamma(c, a), p.kappa(c, a), d)) << '\n';
      }

  std::ostringstream st;
  st << "source,target,delta_hours,value\n";
  const int n_short = static_cast<int>(std::llround(grid.short_term_max / grid.short_term_step));
  for (Index src = 0; src < s.n_actions; ++src)
    for (Index a = 0; a < s.n_actions; ++a)
      for (int k = 1; k <= n_short; ++k) {
        const double d = k * grid.short_term_step;
        st << actions[static_cast<std::size_t>(src)] << ',' << actions[static_cast<std::size_t>(a)] << ','
           << fmt17(d) << ',' << fmt17(exponential_kernel(p.theta(src, a), p.omega(src, a), d)) << '\n';
      }

  std::ostringstream bg;
  bg << "action,hour,value\n";
  const int n_bg = static_cast<int>(std::llround(s.day_length / grid.background_step));
  for (Index a = 0; a < s.n_actions; ++a)
    for (int k = 0; k < n_bg; ++k) {
      const double hour = k * grid.background_step;
      bg << actions[static_cast<std::size_t>(a)] << ',' << fmt17(hour) << ','
         << fmt17(background_intensity(p, static_cast<ActionId>(a), hour)) << '\n';
    }

  write_atomic(out_dir / "long_term_kernels.csv", lt.str());
  write_atomic(out_dir / "short_term_kernels.csv", st.str());
  write_atomic(out_dir / "background_densities.csv", bg.str());
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::DataError, "cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorKind::DataError, "failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorKind::DataError, "cannot move output into place at '" + path.string() + "': " + ec.message());
  }
}

}  // namespace tipas
