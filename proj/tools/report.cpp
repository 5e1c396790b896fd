#include "report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ffc/error.hpp"
#include "ffc/formats.hpp"

namespace ffc::cli {

void PhaseTimer::start(const std::string& phase) {
  if (!current_.empty()) stop();
  current_ = phase;
  began_ = std::chrono::steady_clock::now();
}

void PhaseTimer::stop() {
  if (current_.empty()) return;
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - began_).count();
  phases_.emplace_back(current_, s);
  current_.clear();
}

Json PhaseTimer::to_json() const {
  Json out = Json::object();
  double total = 0.0;
  for (const auto& [name, s] : phases_) {
    out[name + "_seconds"] = s;
    total += s;
  }
  out["total_seconds"] = total;
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<unsigned char>(text.begin(), text.end()));
}

void write_report(const std::filesystem::path& path, const std::string& command, const Json& config,
                  const Json& payload, const PhaseTimer& timer) {
  Json doc = Json::object();
  doc["command"] = command;
  doc["config"] = config;
  doc["payload"] = payload;
  doc["timing"] = timer.to_json();
  write_text_file(path, doc.dump(2) + "\n");
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw std::logic_error("csv row width mismatch");
  rows_.push_back(std::move(row));
}

void CsvTable::write(const std::filesystem::path& path, const Json& config) const {
  std::ostringstream out;
  out << "# config: " << config.dump() << "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  write_text_file(path, out.str());
}

std::string fmt(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<Series>& series, bool lines) {
  constexpr double W = 640, H = 420, L = 70, R = 170, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (double v : s.x) if (std::isfinite(v)) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
  if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(title)
      << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << fmt(std::round(xv * 1000) / 1000) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
        << fmt(std::round(yv * 1000) / 1000) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << escape_xml(x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\">" << escape_xml(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % std::size(palette)];
    const auto& sr = series[s];
    if (lines) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < sr.x.size(); ++i) {
        if (std::isfinite(sr.x[i]) && std::isfinite(sr.y[i])) out << px(sr.x[i]) << "," << py(sr.y[i]) << " ";
      }
      out << "\"/>\n";
    } else {
      for (std::size_t i = 0; i < sr.x.size(); ++i) {
        if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
        out << "<circle cx=\"" << px(sr.x[i]) << "\" cy=\"" << py(sr.y[i]) << "\" r=\"4\" fill=\"" << color
            << "\"/>\n";
      }
    }
    const double ly = T + 16 + 18 * static_cast<double>(s);
    out << "<rect x=\"" << W - R + 12 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"12\" fill=\"" << color
        << "\"/>\n";
    out << "<text x=\"" << W - R + 30 << "\" y=\"" << ly + 1 << "\" font-size=\"11\">" << escape_xml(sr.label)
        << "</text>\n";
  }
  out << "</svg>\n";
  write_text_file(path, out.str());
}

void write_pgm(const std::filesystem::path& path, const std::vector<double>& plane, std::size_t height,
               std::size_t width) {
  if (plane.size() != height * width) throw std::logic_error("pgm plane size mismatch");
  const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
  const double span = *hi - *lo;
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (double v : plane) {
    const double t = span > 0 ? (v - *lo) / span : 0.5;
    bytes.push_back(static_cast<unsigned char>(std::lround(255.0 * t)));
  }
  write_file_bytes(path, bytes);
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t number = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(number) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty()) throw UsageError(path.string() + ":" + std::to_string(number) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

}  // namespace ffc::cli
