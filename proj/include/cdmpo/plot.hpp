#pragma once

// Static SVG line plots of metrics streams: the mean over runs with a shaded
// +-1 standard deviation band.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cdmpo {

/// Parses a metrics JSONL file. Throws IoError when the file is unreadable,
/// empty, or holds a line that is not a JSON object with a schema_version.
std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path);

struct Band {
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> stddev;     // population standard deviation across runs
  std::vector<std::size_t> runs;  // runs contributing at each point
};

/// Point-wise statistics over runs aligned by record index. Missing values
/// (nullopt) are skipped; points with no values are dropped.
Band compute_band(const std::vector<double>& x, const std::vector<std::vector<std::optional<double>>>& runs);

/// Band of one metrics field across several parsed runs, with env_steps of the
/// first run on the x axis. Runs are truncated to the shortest.
Band metric_band(const std::vector<std::vector<nlohmann::json>>& runs, const std::string& field);

struct PlotSpec {
  std::string title;
  std::string y_label;
  std::optional<double> reference;  // horizontal dashed line, e.g. the cost limit
};

/// Shading is omitted where fewer than two runs contribute.
std::string render_svg(const Band& band, const PlotSpec& spec);

}  // namespace cdmpo
