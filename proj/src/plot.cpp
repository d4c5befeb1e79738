#include "toilcast/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "toilcast/errors.hpp"

namespace toilcast::plot {

namespace {

constexpr double kWidth = 1000.0, kHeight = 420.0;
constexpr double kLeft = 60.0, kRight = 20.0, kTop = 30.0, kBottom = 40.0;
constexpr const char* kColours[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Frame {
  Instant t0 = 0, t1 = 1;
  double y0 = 0.0, y1 = 1.0;

  double x(Instant t) const {
    return kLeft + (kWidth - kLeft - kRight) * static_cast<double>(t - t0) / static_cast<double>(std::max<Instant>(1, t1 - t0));
  }
  double y(double v) const { return kHeight - kBottom - (kHeight - kTop - kBottom) * (v - y0) / (y1 - y0); }
};

std::string polyline(const Frame& f, const std::vector<Instant>& t, const std::vector<double>& v) {
  std::string pts;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(v[i])) continue;
    pts += fmt(f.x(t[i])) + "," + fmt(f.y(v[i])) + " ";
  }
  if (!pts.empty()) pts.pop_back();
  return pts;
}

}  // namespace

std::string render_svg(const std::vector<rolling::ForecastTrace>& traces, const TransformerDataset& valid,
                       const std::string& title) {
  if (valid.size() == 0) throw ValidationError("nothing to plot");
  const Channel target = traces.empty() ? Channel::top_oil : traces.front().targets.front();
  const auto& measured = valid.channel(target);

  Frame f;
  f.t0 = valid.timestamps().front();
  f.t1 = valid.timestamps().back();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  auto extend = [&](const std::vector<double>& v) {
    for (double x : v) {
      if (!std::isfinite(x)) continue;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  };
  extend(measured);
  for (const auto& tr : traces) {
    extend(tr.predicted.front());
    if (tr.is_quantile()) {
      extend(tr.quantiles.front().front());
      extend(tr.quantiles.front().back());
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  f.y0 = std::floor(lo - pad);
  f.y1 = std::ceil(hi + pad);

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kLeft << "\" y=\"18\">" << escape(title) << "</text>\n";

  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double v = f.y0 + (f.y1 - f.y0) * i / ticks;
    s << "<line x1=\"" << kLeft << "\" x2=\"" << kWidth - kRight << "\" y1=\"" << fmt(f.y(v)) << "\" y2=\""
      << fmt(f.y(v)) << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(f.y(v) + 4) << "\" text-anchor=\"end\">" << fmt(v)
      << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const Instant t = f.t0 + (f.t1 - f.t0) * i / 4;
    s << "<text x=\"" << fmt(f.x(t)) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
      << format_instant(t).substr(0, 16) << "</text>\n";
  }
  s << "<text x=\"14\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 14 " << kHeight / 2
    << ")\" text-anchor=\"middle\">°C</text>\n";

  for (std::size_t k = 0; k < traces.size(); ++k) {
    const auto& tr = traces[k];
    if (!tr.is_quantile()) continue;
    const auto& lower = tr.quantiles.front().front();
    const auto& upper = tr.quantiles.front().back();
    std::string pts = polyline(f, tr.timestamps, upper);
    for (std::size_t i = tr.size(); i-- > 0;) pts += " " + fmt(f.x(tr.timestamps[i])) + "," + fmt(f.y(lower[i]));
    s << "<polygon points=\"" << pts << "\" fill=\"" << kColours[k % 6] << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
  }
  s << "<polyline points=\"" << polyline(f, valid.timestamps(), measured)
    << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (std::size_t k = 0; k < traces.size(); ++k) {
    s << "<polyline points=\"" << polyline(f, traces[k].timestamps, traces[k].predicted.front()) << "\" fill=\"none\" stroke=\""
      << kColours[k % 6] << "\" stroke-width=\"1\"/>\n";
  }

  double ly = kTop + 6;
  s << "<text x=\"" << kWidth - kRight - 150 << "\" y=\"" << ly << "\">measured</text>\n";
  for (std::size_t k = 0; k < traces.size(); ++k) {
    ly += 16;
    s << "<text x=\"" << kWidth - kRight - 150 << "\" y=\"" << ly << "\" fill=\"" << kColours[k % 6] << "\">"
      << escape(traces[k].model_id) << (traces[k].is_quantile() ? " (PI98)" : "") << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_svg(const std::vector<rolling::ForecastTrace>& traces, const TransformerDataset& valid,
               const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << render_svg(traces, valid);
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

}  // namespace toilcast::plot
