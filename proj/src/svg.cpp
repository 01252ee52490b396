#include "rolldrop/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "rolldrop/csv.hpp"
#include "rolldrop/errors.hpp"

namespace rolldrop::svg {
namespace {

constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
                                "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  double w = 0, h = 0;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (w - kLeft - kRight); }
  double py(double y) const { return h - kBottom - (y - y0) / (y1 - y0) * (h - kTop - kBottom); }
};

void widen(double& lo, double& hi) {
  if (!(hi > lo)) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    lo -= pad;
    hi += pad;
  }
}

std::string header(const PlotSpec& spec, const Frame& f) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) + "\" height=\"" +
       std::to_string(spec.height) + "\" viewBox=\"0 0 " + std::to_string(spec.width) + " " +
       std::to_string(spec.height) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(spec.width) + "\" height=\"" +
       std::to_string(spec.height) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(spec.width / 2.0) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"15\">" + escape(spec.title) + "</text>\n";
  const double ax0 = f.px(f.x0), ax1 = f.px(f.x1), ay0 = f.py(f.y0), ay1 = f.py(f.y1);
  s += "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  s += "<line x1=\"" + num(ax0) + "\" y1=\"" + num(ay0) + "\" x2=\"" + num(ax1) + "\" y2=\"" + num(ay0) + "\"/>\n";
  s += "<line x1=\"" + num(ax0) + "\" y1=\"" + num(ay0) + "\" x2=\"" + num(ax0) + "\" y2=\"" + num(ay1) + "\"/>\n";
  s += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(ay0 + 16) + "\" text-anchor=\"middle\">" + tick(xv) +
         "</text>\n";
    s += "<text x=\"" + num(ax0 - 6) + "\" y=\"" + num(f.py(yv) + 4) + "\" text-anchor=\"end\">" + tick(yv) +
         "</text>\n";
  }
  s += "<text x=\"" + num((ax0 + ax1) / 2) + "\" y=\"" + num(spec.height - 10.0) + "\" text-anchor=\"middle\">" +
       escape(spec.xlabel) + "</text>\n";
  s += "<text x=\"14\" y=\"" + num((ay0 + ay1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
       num((ay0 + ay1) / 2) + ")\">" + escape(spec.ylabel) + "</text>\n";
  s += "</g>\n";
  return s;
}

}  // namespace

std::string line_plot(const PlotSpec& spec, const std::vector<Series>& series) {
  Frame f;
  f.w = spec.width;
  f.h = spec.height;
  bool any = false;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      any = true;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      double lo = s.y[i], hi = s.y[i];
      if (i < s.band_lo.size() && std::isfinite(s.band_lo[i])) lo = std::min(lo, s.band_lo[i]);
      if (i < s.band_hi.size() && std::isfinite(s.band_hi[i])) hi = std::max(hi, s.band_hi[i]);
      y0 = std::min(y0, lo);
      y1 = std::max(y1, hi);
    }
  }
  if (any) {
    widen(x0, x1);
    widen(y0, y1);
    f.x0 = x0;
    f.x1 = x1;
    f.y0 = y0;
    f.y1 = y1;
  }
  std::string doc = header(spec, f);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % (sizeof kPalette / sizeof kPalette[0])];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.band_lo.size() == n && s.band_hi.size() == n && n > 0) {
      doc += "<polygon fill=\"" + std::string(color) + "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < n; ++i) doc += num(f.px(s.x[i])) + "," + num(f.py(s.band_hi[i])) + " ";
      for (std::size_t i = n; i-- > 0;) doc += num(f.px(s.x[i])) + "," + num(f.py(s.band_lo[i])) + " ";
      doc += "\"/>\n";
    }
    if (n > 0) {
      doc += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < n; ++i) {
        if (s.step && i > 0) doc += num(f.px(s.x[i])) + "," + num(f.py(s.y[i - 1])) + " ";
        doc += num(f.px(s.x[i])) + "," + num(f.py(s.y[i])) + " ";
      }
      doc += "\"/>\n";
    }
    if (s.markers)
      for (std::size_t i = 0; i < n; ++i)
        doc += "<circle cx=\"" + num(f.px(s.x[i])) + "\" cy=\"" + num(f.py(s.y[i])) + "\" r=\"3\" fill=\"" +
               color + "\"/>\n";
    if (!s.label.empty())
      doc += "<text x=\"" + num(spec.width - kRight - 4) + "\" y=\"" + num(kTop + 14.0 * static_cast<double>(k)) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + color + "\">" +
             escape(s.label) + "</text>\n";
  }
  doc += "</svg>\n";
  return doc;
}

std::string histogram_plot(const PlotSpec& spec, const std::vector<double>& edges,
                           const std::vector<double>& counts) {
  Frame f;
  f.w = spec.width;
  f.h = spec.height;
  if (edges.size() == counts.size() + 1 && !counts.empty()) {
    f.x0 = edges.front();
    f.x1 = edges.back();
    f.y1 = std::max(1.0, *std::max_element(counts.begin(), counts.end()));
    widen(f.x0, f.x1);
  }
  std::string doc = header(spec, f);
  if (edges.size() == counts.size() + 1) {
    doc += "<g fill=\"#1f77b4\" stroke=\"none\">\n";
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const double x = f.px(edges[i]), xr = f.px(edges[i + 1]);
      const double top = f.py(counts[i]), base = f.py(0.0);
      doc += "<rect x=\"" + num(x) + "\" y=\"" + num(top) + "\" width=\"" + num(std::max(0.0, xr - x)) +
             "\" height=\"" + num(std::max(0.0, base - top)) + "\"/>\n";
    }
    doc += "</g>\n";
  }
  doc += "</svg>\n";
  return doc;
}

void write_svg(const std::filesystem::path& path, const std::string& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc;
}

namespace {

std::vector<double> iota_of(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
  return x;
}

std::vector<std::string> text_column(const CsvTable& t, const std::string& name) {
  const std::size_t idx = t.index_of(name);
  std::vector<std::string> out;
  for (const auto& r : t.rows) out.push_back(r[idx]);
  return out;
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& csv, const std::filesystem::path& out_dir) {
  const CsvTable t = read_csv(csv);
  const std::string stem = csv.stem().string();
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& doc) {
    const auto p = out_dir / name;
    write_svg(p, doc);
    written.push_back(p);
  };

  if (t.has_column("mean_sigma") && t.has_column("mean_reward")) {
    const auto x = t.column("iteration");
    emit(stem + "_sigma.svg", line_plot({"Action std over training", "iteration", "mean sigma"},
                                        {{"mean sigma", x, t.column("mean_sigma"), {}, {}, false, false}}));
    emit(stem + "_reward.svg", line_plot({"Mean reward over training", "iteration", "mean reward"},
                                         {{"mean reward", x, t.column("mean_reward"), {}, {}, false, false}}));
  } else if (t.has_column("success_rate") && t.has_column("level")) {
    emit(stem + ".svg", line_plot({"Success rate vs observation noise", "noise level n", "success rate"},
                                  {{"success rate", t.column("level"), t.column("success_rate"), {}, {}, true, true}}));
  } else if (t.has_column("variant") && t.has_column("mean") && t.has_column("std")) {
    const auto variants = text_column(t, "variant");
    const auto it = t.column("iteration"), mean = t.column("mean"), sd = t.column("std");
    std::map<std::string, Series> by;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < variants.size(); ++i) {
      if (!by.count(variants[i])) order.push_back(variants[i]);
      Series& s = by[variants[i]];
      s.label = variants[i];
      s.x.push_back(it[i]);
      s.y.push_back(mean[i]);
      s.band_lo.push_back(mean[i] - sd[i]);
      s.band_hi.push_back(mean[i] + sd[i]);
    }
    std::vector<Series> series;
    for (const auto& v : order) series.push_back(by[v]);
    emit(stem + ".svg", line_plot({"Reward across seeds (mean +/- std)", "iteration", "mean reward"}, series));
  } else if (t.has_column("channel") && t.has_column("count") && t.has_column("lo") && t.has_column("hi")) {
    const auto ch = text_column(t, "channel");
    const auto lo = t.column("lo"), hi = t.column("hi"), cnt = t.column("count");
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by;
    for (std::size_t i = 0; i < ch.size(); ++i) {
      auto& [edges, counts] = by[ch[i]];
      if (edges.empty()) {
        order.push_back(ch[i]);
        edges.push_back(lo[i]);
      }
      edges.push_back(hi[i]);
      counts.push_back(cnt[i]);
    }
    for (const auto& c : order)
      emit(stem + "_" + c + ".svg",
           histogram_plot({"Distribution of " + c, c, "count"}, by[c].first, by[c].second));
  } else if (t.has_column("iteration") && t.header.size() >= 2) {
    const auto x = t.column("iteration");
    std::vector<Series> series;
    for (const auto& h : t.header) {
      if (h == "iteration") continue;
      series.push_back({h, x, t.column(h), {}, {}, false, false});
    }
    emit(stem + ".svg", line_plot({"Per-iteration means", "iteration", "mean"}, series));
  } else if (t.rows.empty() && t.header.size() == 1 && t.header[0].empty()) {
    emit(stem + ".svg", line_plot({stem, "", ""}, {}));
  } else {
    throw ParseError(csv.string(), 1, "unrecognised CSV header for plotting");
  }
  (void)iota_of;
  return written;
}

}  // namespace rolldrop::svg
