#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tipas/model.hpp"
#include "tipas/simulate.hpp"

namespace tipas {

inline constexpr int kModelSchemaVersion = 1;

struct LoadOptions {
  /// Fixed action vocabulary; unknown actions raise a Vocabulary error.
  /// Without it the vocabulary is the sorted set of action names.
  std::optional<std::vector<std::string>> vocabulary;
  /// ISO-8601 anchor; required when records carry ISO timestamps.
  std::optional<std::string> t0;
};

struct LoadStats {
  std::size_t n_records = 0;
  std::size_t n_blank_lines = 0;
  std::size_t n_reordered = 0;  // events that moved when sorting per user
  std::size_t n_users = 0;
};

struct LoadedDataset {
  Dataset histories;  // users in lexicographic order
  std::vector<std::string> actions;
  LoadStats stats;
};

/// JSON Lines {"user","action","t"} or, for *.csv, a header naming user,action,t.
/// Malformed records raise DataError with the line number.
LoadedDataset load_dataset(const std::filesystem::path& path, const LoadOptions& options = {});

void save_dataset(const std::filesystem::path& path, const Dataset& data,
                  const std::vector<std::string>& actions);

/// Hours between an ISO-8601 timestamp and the anchor.
double iso8601_hours_since(const std::string& timestamp, const std::string& anchor);

struct FitMetadata {
  std::uint64_t seed = 0;
  int iterations = 0;
  double final_log_likelihood = 0.0;
  bool converged = false;
};

struct ModelFile {
  ModelParams params;
  std::vector<std::string> actions;
  std::optional<FitMetadata> fit;
};

nlohmann::json model_to_json(const ModelFile& model);
ModelFile model_from_json(const nlohmann::json& doc);

void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

std::vector<std::string> default_action_names(int n_actions);

struct SyntheticSpecFile {
  SyntheticSpec spec;
  std::vector<std::string> actions;
};

/// Model-shaped JSON without users plus n_users, horizon, seed and an
/// optional per-action "alpha" row shared by every generated user.
SyntheticSpecFile synthetic_spec_from_json(const nlohmann::json& doc);
SyntheticSpecFile load_synthetic_spec(const std::filesystem::path& path);

struct ExportGrid {
  double long_term_max = 72.0;
  double long_term_step = 0.25;
  double short_term_max = 12.0;
  double short_term_step = 0.05;
  double background_step = 0.1;
};

/// Writes long_term_kernels.csv, short_term_kernels.csv and
/// background_densities.csv into `out_dir`.
void export_params(const ModelFile& model, const std::filesystem::path& out_dir,
                   const ExportGrid& grid = {});

/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace tipas
