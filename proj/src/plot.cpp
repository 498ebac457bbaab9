#include "cdmpo/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdmpo/common.hpp"

namespace cdmpo {

using nlohmann::json;

std::vector<json> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics file " + path.string());
  std::vector<json> records;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw IoError(path.string() + ":" + std::to_string(number) + ": malformed metrics line");
    }
    if (!j.is_object() || !j.contains("schema_version")) {
      throw IoError(path.string() + ":" + std::to_string(number) + ": not a metrics record");
    }
    records.push_back(std::move(j));
  }
  if (records.empty()) throw IoError("metrics file " + path.string() + " is empty");
  return records;
}

Band compute_band(const std::vector<double>& x, const std::vector<std::vector<std::optional<double>>>& runs) {
  Band b;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> v;
    for (const auto& run : runs) {
      if (i < run.size() && run[i]) v.push_back(*run[i]);
    }
    if (v.empty()) continue;
    double mean = 0.0;
    for (double e : v) mean += e;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double e : v) var += (e - mean) * (e - mean);
    var /= static_cast<double>(v.size());
    b.x.push_back(x[i]);
    b.mean.push_back(mean);
    b.stddev.push_back(std::sqrt(var));
    b.runs.push_back(v.size());
  }
  return b;
}

Band metric_band(const std::vector<std::vector<json>>& runs, const std::string& field) {
  if (runs.empty()) throw IoError("no metrics runs to plot");
  std::size_t length = runs.front().size();
  for (const auto& r : runs) length = std::min(length, r.size());
  std::vector<double> x;
  for (std::size_t i = 0; i < length; ++i) {
    const json& rec = runs.front()[i];
    x.push_back(rec.contains("env_steps") ? rec.at("env_steps").get<double>() : static_cast<double>(i));
  }
  std::vector<std::vector<std::optional<double>>> values;
  for (const auto& r : runs) {
    std::vector<std::optional<double>> v;
    for (std::size_t i = 0; i < length; ++i) {
      const auto it = r[i].find(field);
      if (it != r[i].end() && it->is_number()) {
        v.emplace_back(it->get<double>());
      } else {
        v.emplace_back(std::nullopt);
      }
    }
    values.push_back(std::move(v));
  }
  return compute_band(x, values);
}

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

std::string number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const Band& band, const PlotSpec& spec) {
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
  if (!band.x.empty()) {
    x_lo = *std::min_element(band.x.begin(), band.x.end());
    x_hi = *std::max_element(band.x.begin(), band.x.end());
    y_lo = y_hi = band.mean.front();
    for (std::size_t i = 0; i < band.x.size(); ++i) {
      y_lo = std::min(y_lo, band.mean[i] - band.stddev[i]);
      y_hi = std::max(y_hi, band.mean[i] + band.stddev[i]);
    }
  }
  if (spec.reference) {
    y_lo = std::min(y_lo, *spec.reference);
    y_hi = std::max(y_hi, *spec.reference);
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(spec.title)
      << "</text>\n";

  // Axes with five ticks each.
  svg << "<g stroke=\"black\" fill=\"none\"><rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw
      << "\" height=\"" << ph << "\"/></g>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x_lo + (x_hi - x_lo) * t / 4.0;
    const double yv = y_lo + (y_hi - y_lo) * t / 4.0;
    svg << "<text x=\"" << number(px(xv)) << "\" y=\"" << kHeight - kBottom + 18
        << "\" text-anchor=\"middle\">" << number(xv) << "</text>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << number(py(yv) + 4) << "\" text-anchor=\"end\">" << number(yv)
        << "</text>\n";
  }
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">environment steps</text>\n";
  svg << "<text transform=\"translate(16," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(spec.y_label) << "</text>\n";

  // Shaded band over contiguous stretches with at least two runs.
  std::size_t i = 0;
  while (i < band.x.size()) {
    if (band.runs[i] < 2) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < band.x.size() && band.runs[end] >= 2) ++end;
    svg << "<polygon fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\" class=\"band\" points=\"";
    for (std::size_t k = i; k < end; ++k) svg << number(px(band.x[k])) << "," << number(py(band.mean[k] + band.stddev[k])) << " ";
    for (std::size_t k = end; k-- > i;) svg << number(px(band.x[k])) << "," << number(py(band.mean[k] - band.stddev[k])) << " ";
    svg << "\"/>\n";
    i = end;
  }
  if (!band.x.empty()) {
    svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" class=\"mean\" points=\"";
    for (std::size_t k = 0; k < band.x.size(); ++k) svg << number(px(band.x[k])) << "," << number(py(band.mean[k])) << " ";
    svg << "\"/>\n";
  }
  if (spec.reference) {
    svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << number(py(*spec.reference))
        << "\" y2=\"" << number(py(*spec.reference))
        << "\" stroke=\"firebrick\" stroke-dasharray=\"6 4\" class=\"reference\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace cdmpo
