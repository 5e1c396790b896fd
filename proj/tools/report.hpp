#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace ffc::cli {

using Json = nlohmann::ordered_json;

/// Wall-clock seconds per named phase. Kept apart from the payload so that
/// repeated runs compare byte-identical on everything else.
class PhaseTimer {
 public:
  void start(const std::string& phase);
  void stop();
  Json to_json() const;

 private:
  std::vector<std::pair<std::string, double>> phases_;
  std::string current_;
  std::chrono::steady_clock::time_point began_;
};

/// {"command", "config", "payload", "timing"} written atomically.
void write_report(const std::filesystem::path& path, const std::string& command, const Json& config,
                  const Json& payload, const PhaseTimer& timer);

/// CSV with a leading "# config: {...}" comment line.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  void add(std::vector<std::string> row);
  void write(const std::filesystem::path& path, const Json& config) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Shortest round-trip decimal rendering.
std::string fmt(double value);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal SVG chart: polylines when `lines`, dots otherwise.
void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<Series>& series, bool lines = true);

/// 8-bit binary PGM of an [H, W] plane, min-max scaled.
void write_pgm(const std::filesystem::path& path, const std::vector<double>& plane, std::size_t height,
               std::size_t width);

/// Flat key=value file. Blank lines and lines starting with '#' or ';' are skipped.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ffc::cli
