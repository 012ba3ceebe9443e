// Copyright 2026 The tsm-dither Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tsm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "tsm/error.hpp"

namespace tsm::io {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigurationError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw ConfigurationError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string format_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv(const std::vector<std::string>& header, const std::vector<std::span<const double>>& columns) {
  if (header.size() != columns.size()) throw DimensionMismatch("csv header and column count differ");
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns) {
    if (c.size() != rows) throw DimensionMismatch("csv columns differ in length");
  }
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out += ',';
      out += format_number(columns[c][r]);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<double> times(const TimeSeries& s) {
  std::vector<double> t(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = s.time_at(i);
  return t;
}

}  // namespace

std::string trajectory_csv(const TimeSeries& traj) {
  const auto t = times(traj);
  return csv({"t_s", "pos_mm"}, {t, traj.values()});
}

std::string episode_csv(const TimeSeries& p_cmd, const Episode& episode) {
  const auto& log = episode.log;
  return csv({"t_s", "p_cmd_mm", "p_meas_mm", "T_in_N", "T_out_N"},
             {log.t, p_cmd.values(), log.p_meas, log.T_in, log.T_out});
}

std::string log_csv(const ObservationLog& log) {
  return csv({"t_s", "q_ref_mm", "q_d_mm", "p_meas_mm", "T_in_N", "T_out_N"},
             {log.t, log.q_ref, log.q_d, log.p_meas, log.T_in, log.T_out});
}

std::string curve_csv(const std::vector<EpochRecord>& curve) {
  std::vector<double> e, tr, va;
  for (const auto& r : curve) {
    e.push_back(static_cast<double>(r.epoch));
    tr.push_back(r.train_mse);
    va.push_back(r.val_mse);
  }
  return csv({"epoch", "train_mse", "val_mse"}, {e, tr, va});
}

namespace {

std::string esc(std::string_view s) {
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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Ticks at 1, 2 or 5 times a power of ten, about five per axis.
std::vector<double> nice_ticks(double lo, double hi) {
  std::vector<double> ticks;
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return ticks;
}

}  // namespace

std::string svg_plot(const std::vector<PlotSeries>& series, const PlotOptions& o) {
  const double left = 70, right = 20, top = 40, bottom = 55;
  const double pw = o.width - left - right;
  const double ph = o.height - top - bottom;
  auto tx = [&](double x) { return o.log_x ? std::log10(x) : x; };

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (o.log_x && !(s.x[i] > 0.0))) continue;
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return left + (tx(x) - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\"" << o.height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << o.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(o.title)
      << "</text>\n";
  svg << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
      << "\" fill=\"none\" stroke=\"#333\"/>\n";

  std::vector<double> xticks;
  if (o.log_x) {
    for (double e = std::ceil(xmin); e <= xmax + 1e-9; e += 1.0) xticks.push_back(e);
  } else {
    xticks = nice_ticks(xmin, xmax);
  }
  for (double t : xticks) {
    const double x = left + (t - xmin) / (xmax - xmin) * pw;
    svg << "<line x1=\"" << num(x) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(x) << "\" y2=\""
        << num(top + ph + 5) << "\" stroke=\"#333\"/>";
    svg << "<text x=\"" << num(x) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">"
        << tick_label(o.log_x ? std::pow(10.0, t) : t) << "</text>\n";
  }
  for (double t : nice_ticks(ymin, ymax)) {
    const double y = py(t);
    svg << "<line x1=\"" << num(left - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left + pw) << "\" y2=\""
        << num(y) << "\" stroke=\"#ddd\"/>";
    svg << "<text x=\"" << num(left - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << tick_label(t)
        << "</text>\n";
  }
  svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << o.height - 12 << "\" text-anchor=\"middle\">"
      << esc(o.x_label) << "</text>\n";
  svg << "<text transform=\"translate(16," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << esc(o.y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (o.log_x && !(s.x[i] > 0.0))) continue;
      svg << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
    }
    svg << "\"/>\n";
    if (o.markers) {
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (!std::isfinite(s.y[i]) || (o.log_x && !(s.x[i] > 0.0))) continue;
        svg << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"3\" fill=\"" << s.color
            << "\"/>";
      }
      svg << '\n';
    }
    const double ly = top + 14 + 16 * static_cast<double>(k);
    svg << "<line x1=\"" << num(left + pw - 150) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(left + pw - 130)
        << "\" y2=\"" << num(ly) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>";
    svg << "<text x=\"" << num(left + pw - 125) << "\" y=\"" << num(ly + 4) << "\">" << esc(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = nlohmann::json{{"command", m.command},       {"arguments", m.arguments}, {"config_path", m.config_path}, {"config_hash", m.config_hash},
                     {"seeds", m.seeds},           {"out_dir", m.out_dir},         {"version", m.version},
                     {"wall_seconds", m.wall_seconds}, {"extra", m.extra}};
}

}  // namespace tsm::io
