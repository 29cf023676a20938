#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace hsam::detail {

namespace {

constexpr double kWidth = 480, kHeight = 360;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double to_unit(double v) const {
    const double a = log ? std::log10(v) : v;
    const double l = log ? std::log10(lo) : lo;
    const double h = log ? std::log10(hi) : hi;
    return (a - l) / (h - l);
  }
};

// decade tick positions within [lo, hi]
std::vector<double> log_ticks(double lo, double hi) {
  std::vector<double> t;
  for (int e = static_cast<int>(std::floor(std::log10(lo))); e <= static_cast<int>(std::ceil(std::log10(hi))); ++e) {
    const double v = std::pow(10.0, e);
    if (v >= lo * 0.999 && v <= hi * 1.001) t.push_back(v);
  }
  if (t.empty()) t = {lo, hi};
  return t;
}

std::vector<double> linear_ticks(double lo, double hi) {
  std::vector<double> t;
  for (int i = 0; i <= 4; ++i) t.push_back(lo + (hi - lo) * i / 4.0);
  return t;
}

}  // namespace

void write_sensitivity_svg(const std::filesystem::path& path, const PlotSpec& spec) {
  if (spec.points.empty()) throw std::invalid_argument("plot: no points");
  const double floor_positive = 1e-12;

  Axis xaxis, yaxis;
  xaxis.log = spec.log_x;
  yaxis.log = spec.log_y;

  double xlo = spec.points.front().x, xhi = spec.points.back().x;
  for (const auto& p : spec.points) {
    xlo = std::min(xlo, p.x);
    xhi = std::max(xhi, p.x);
  }
  if (spec.log_x) xlo = std::max(xlo, floor_positive);
  if (xlo == xhi) {
    xlo *= 0.5;
    xhi *= 2.0;
    if (xlo == xhi) {
      xlo -= 1.0;
      xhi += 1.0;
    }
  }
  double ylo = spec.points.front().mean, yhi = spec.points.front().mean;
  for (const auto& p : spec.points) {
    ylo = std::min(ylo, p.mean - p.sd);
    yhi = std::max(yhi, p.mean + p.sd);
  }
  if (spec.reference) {
    ylo = std::min(ylo, *spec.reference);
    yhi = std::max(yhi, *spec.reference);
  }
  if (spec.log_y) {
    ylo = std::max(ylo, floor_positive);
    yhi = std::max(yhi, ylo * 10.0);
    ylo /= 2.0;
    yhi *= 2.0;
  } else {
    const double pad = 0.1 * (yhi - ylo + 1e-30);
    ylo -= pad;
    yhi += pad;
  }
  xaxis.lo = xlo;
  xaxis.hi = xhi;
  yaxis.lo = ylo;
  yaxis.hi = yhi;

  auto px = [&](double v) { return kLeft + xaxis.to_unit(v) * (kWidth - kLeft - kRight); };
  auto py = [&](double v) {
    const double clamped = spec.log_y ? std::max(v, floor_positive) : v;
    return kHeight - kBottom - yaxis.to_unit(clamped) * (kHeight - kTop - kBottom);
  };

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\" font-family=\"sans-serif\">"
    << spec.title << "</text>\n";

  // frame
  f << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
    << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";

  // ticks
  const auto xticks = spec.log_x ? log_ticks(xaxis.lo, xaxis.hi) : linear_ticks(xaxis.lo, xaxis.hi);
  for (double v : xticks) {
    const double x = px(v);
    f << "<line x1=\"" << x << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << x << "\" y2=\""
      << kHeight - kBottom + 5 << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << x << "\" y=\"" << kHeight - kBottom + 18
      << "\" text-anchor=\"middle\" font-size=\"10\" font-family=\"sans-serif\">" << fmt(v) << "</text>\n";
  }
  const auto yticks = spec.log_y ? log_ticks(yaxis.lo, yaxis.hi) : linear_ticks(yaxis.lo, yaxis.hi);
  for (double v : yticks) {
    const double y = py(v);
    f << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
      << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 3
      << "\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\">" << fmt(v) << "</text>\n";
  }

  // axis labels
  f << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12
    << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << spec.x_label << "</text>\n";
  f << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
    << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" transform=\"rotate(-90 16 "
    << (kTop + kHeight - kBottom) / 2 << ")\">" << spec.y_label << "</text>\n";

  // dashed reference line
  if (spec.reference) {
    const double y = py(*spec.reference);
    f << "<line x1=\"" << kLeft << "\" y1=\"" << y << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << y
      << "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
    if (!spec.reference_label.empty()) {
      f << "<text x=\"" << kWidth - kRight - 4 << "\" y=\"" << y - 4
        << "\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\" fill=\"gray\">"
        << spec.reference_label << "</text>\n";
    }
  }

  // error bars and polyline
  std::string poly;
  for (const auto& p : spec.points) {
    const double x = px(p.x);
    const double y = py(p.mean);
    const double ylo_bar = py(spec.log_y ? std::max(p.mean - p.sd, floor_positive) : p.mean - p.sd);
    const double yhi_bar = py(p.mean + p.sd);
    f << "<line x1=\"" << x << "\" y1=\"" << ylo_bar << "\" x2=\"" << x << "\" y2=\"" << yhi_bar
      << "\" stroke=\"steelblue\"/>\n";
    f << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"steelblue\"/>\n";
    poly += fmt(x) + "," + fmt(y) + " ";
  }
  if (spec.points.size() > 1) {
    f << "<polyline points=\"" << poly << "\" fill=\"none\" stroke=\"steelblue\"/>\n";
  }
  f << "</svg>\n";
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace hsam::detail
