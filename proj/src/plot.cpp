#include "ganfinger/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ganfinger/error.hpp"

namespace ganfinger {

namespace {

constexpr double kW = 480;
constexpr double kH = 320;
constexpr double kLeft = 50;
constexpr double kRight = 20;
constexpr double kTop = 30;
constexpr double kBottom = 40;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
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

double px(double t) { return kLeft + t * (kW - kLeft - kRight); }
double py(double v) { return kH - kBottom - v * (kH - kTop - kBottom); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

void axes(std::ostringstream& s, const std::string& title, const std::string& xlabel) {
  s << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << kW / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(title)
    << "</text>\n";
  s << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(0)
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(0) << "\" y2=\"" << py(1)
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    s << "<text x=\"" << px(v) << "\" y=\"" << py(0) + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << num(v) << "</text>\n";
    s << "<text x=\"" << px(0) - 6 << "\" y=\"" << py(v) + 3 << "\" text-anchor=\"end\" font-size=\"10\">"
      << num(v) << "</text>\n";
  }
  s << "<text x=\"" << px(0.5) << "\" y=\"" << kH - 6 << "\" text-anchor=\"middle\" font-size=\"11\">"
    << escape(xlabel) << "</text>\n";
}

}  // namespace

std::string curves_svg(const ARUCResult& result, const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  axes(s, title + " (ARUC " + num(result.aruc) + ")", "threshold");

  std::ostringstream area, rob, uni;
  area << px(0) << ',' << py(0);
  for (std::size_t i = 0; i < result.thresholds.size(); ++i) {
    const double t = result.thresholds[i];
    area << ' ' << px(t) << ',' << py(std::min(result.robustness[i], result.uniqueness[i]));
    rob << (i ? " " : "") << px(t) << ',' << py(result.robustness[i]);
    uni << (i ? " " : "") << px(t) << ',' << py(result.uniqueness[i]);
  }
  area << ' ' << px(1) << ',' << py(0);
  s << "<polygon points=\"" << area.str() << "\" fill=\"#9ecae1\" fill-opacity=\"0.6\"/>\n";
  s << "<polyline points=\"" << rob.str() << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
  s << "<polyline points=\"" << uni.str() << "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n";
  s << "<text x=\"" << px(0.72) << "\" y=\"" << py(0.95) << "\" font-size=\"11\" fill=\"#d62728\">robustness</text>\n";
  s << "<text x=\"" << px(0.72) << "\" y=\"" << py(0.88) << "\" font-size=\"11\" fill=\"#1f77b4\">uniqueness</text>\n";
  s << "</svg>\n";
  return s.str();
}

void write_curves_svg(const std::filesystem::path& path, const ARUCResult& result, const std::string& title) {
  write_text(path, curves_svg(result, title));
}

std::string bars_svg(const std::vector<Bar>& bars, const std::string& title) {
  const double row = 22;
  const double label_w = 150;
  const double height = kTop + row * static_cast<double>(bars.size()) + 30;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << height << "\">\n";
  s << "<rect width=\"" << kW << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << kW / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(title)
    << "</text>\n";
  const double span = kW - label_w - 60;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = kTop + row * static_cast<double>(i);
    const double v = std::clamp(bars[i].value, 0.0, 1.0);
    s << "<text x=\"" << label_w - 6 << "\" y=\"" << y + 14 << "\" text-anchor=\"end\" font-size=\"11\">"
      << escape(bars[i].label) << "</text>\n";
    s << "<rect x=\"" << label_w << "\" y=\"" << y + 3 << "\" width=\"" << v * span << "\" height=\"" << row - 6
      << "\" fill=\"#6baed6\"/>\n";
    s << "<text x=\"" << label_w + v * span + 4 << "\" y=\"" << y + 14 << "\" font-size=\"10\">"
      << num(bars[i].value) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_bars_svg(const std::filesystem::path& path, const std::vector<Bar>& bars, const std::string& title) {
  write_text(path, bars_svg(bars, title));
}

}  // namespace ganfinger
