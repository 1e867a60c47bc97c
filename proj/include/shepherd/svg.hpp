#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "shepherd/errors.hpp"
#include "shepherd/vec2.hpp"

namespace shepherd::svg {

// Minimal SVG assembly; no timestamps or other run-dependent metadata, so
// re-rendering the same artifacts reproduces the file byte-for-byte.
class Document {
 public:
  Document(double width, double height) : width_(width), height_(height) {}

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double stroke_width = 1.0, const std::string& dash = "") {
    body_ << "  <line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
          << "\" y2=\"" << fmt(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
          << fmt(stroke_width) << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << "/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double stroke_width = 1.0, double opacity = 1.0) {
    if (pts.size() < 2) return;
    body_ << "  <polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\""
          << fmt(stroke_width) << "\" stroke-opacity=\"" << fmt(opacity) << "\" points=\"";
    append_points(pts);
    body_ << "\"/>\n";
  }

  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill,
               double opacity) {
    if (pts.size() < 3) return;
    body_ << "  <polygon fill=\"" << fill << "\" fill-opacity=\"" << fmt(opacity)
          << "\" stroke=\"none\" points=\"";
    append_points(pts);
    body_ << "\"/>\n";
  }

  void circle(double cx, double cy, double r, const std::string& stroke,
              const std::string& fill, double fill_opacity = 1.0, double stroke_width = 1.0,
              const std::string& dash = "") {
    body_ << "  <circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\"" << fmt(r)
          << "\" stroke=\"" << stroke << "\" stroke-width=\"" << fmt(stroke_width)
          << "\" fill=\"" << fill << "\" fill-opacity=\"" << fmt(fill_opacity) << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << "/>\n";
  }

  void rounded_rect(double cx, double cy, double width, double height, double rx,
                    double angle_deg, const std::string& fill) {
    body_ << "  <rect x=\"" << fmt(cx - width / 2) << "\" y=\"" << fmt(cy - height / 2)
          << "\" width=\"" << fmt(width) << "\" height=\"" << fmt(height) << "\" rx=\""
          << fmt(rx) << "\" fill=\"" << fill << "\" transform=\"rotate(" << fmt(angle_deg)
          << " " << fmt(cx) << " " << fmt(cy) << ")\"/>\n";
  }

  void text(double x, double y, const std::string& s, double size = 12.0,
            const std::string& anchor = "start") {
    body_ << "  <text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\""
          << fmt(size) << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">"
          << escape(s) << "</text>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width_)
        << "\" height=\"" << fmt(height_) << "\" viewBox=\"0 0 " << fmt(width_) << " "
        << fmt(height_) << "\">\n"
        << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write figure: " + path.string());
    os << str();
    if (!os) throw IoError("short write to figure: " + path.string());
  }

 private:
  static std::string fmt(double v) {
    std::ostringstream o;
    o << v;
    return o.str();
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else if (c == '&') out += "&amp;";
      else out += c;
    }
    return out;
  }

  void append_points(const std::vector<std::pair<double, double>>& pts) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) body_ << ' ';
      body_ << fmt(pts[i].first) << ',' << fmt(pts[i].second);
    }
  }

  double width_;
  double height_;
  std::ostringstream body_;
};

// Affine world -> pixel map with y flipped.
struct Frame {
  double x0, x1, y0, y1;  // world extents
  double px, py, pw, ph;  // pixel viewport

  std::pair<double, double> map(double x, double y) const {
    return {px + (x - x0) / (x1 - x0) * pw, py + (y1 - y) / (y1 - y0) * ph};
  }
};

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("missing artifact: " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline std::vector<double> column_as_double(const std::vector<std::vector<std::string>>& rows,
                                            std::size_t col) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r = 1; r < rows.size(); ++r) out.push_back(std::stod(rows[r].at(col)));
  return out;
}

}  // namespace detail

// Cumulative reward against episode index, with a trailing-window median to
// show the plateau through the sampling noise.
inline void render_reward_curve(const std::filesystem::path& csv,
                                const std::filesystem::path& out) {
  const auto rows = detail::read_csv(csv);
  if (rows.size() < 2)
    throw IoError("reward curve source has no data rows: " + csv.string());
  const std::vector<double> episode = detail::column_as_double(rows, 0);
  const std::vector<double> reward = detail::column_as_double(rows, 1);

  const double x_max = episode.back();
  double y_min = *std::min_element(reward.begin(), reward.end());
  double y_max = *std::max_element(reward.begin(), reward.end());
  if (y_min == y_max) {
    y_min -= 1.0;
    y_max += 1.0;
  }

  Document doc(720, 420);
  Frame frame{0.0, std::max(x_max, 1.0), y_min, y_max, 60, 20, 640, 360};

  std::vector<std::pair<double, double>> raw;
  raw.reserve(reward.size());
  for (std::size_t i = 0; i < reward.size(); ++i)
    raw.push_back(frame.map(episode[i], reward[i]));
  doc.polyline(raw, "#bbbbbb", 1.0, 0.8);

  const std::size_t window = std::max<std::size_t>(1, reward.size() / 50);
  std::vector<std::pair<double, double>> smooth;
  std::vector<double> buf;
  for (std::size_t i = 0; i < reward.size(); ++i) {
    const std::size_t lo = i >= window ? i - window : 0;
    buf.assign(reward.begin() + static_cast<std::ptrdiff_t>(lo),
               reward.begin() + static_cast<std::ptrdiff_t>(i + 1));
    std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2),
                     buf.end());
    smooth.push_back(frame.map(episode[i], buf[buf.size() / 2]));
  }
  doc.polyline(smooth, "#c2185b", 2.0);

  doc.line(frame.px, frame.py + frame.ph, frame.px + frame.pw, frame.py + frame.ph, "#333333");
  doc.line(frame.px, frame.py, frame.px, frame.py + frame.ph, "#333333");
  doc.text(frame.px + frame.pw / 2, 412, "episode", 13, "middle");
  doc.text(12, frame.py + 10, "cumulative reward", 13);
  doc.text(frame.px, frame.py + frame.ph + 16, "0", 11, "middle");
  std::ostringstream tick;
  tick << static_cast<long long>(x_max);
  doc.text(frame.px + frame.pw, frame.py + frame.ph + 16, tick.str(), 11, "middle");
  doc.write(out);
}

// Goal disc, init circle, obstacles and every agent path.
inline void render_trajectory_plot(const std::filesystem::path& trajectory_csv,
                                   const std::filesystem::path& geometry_json,
                                   const std::filesystem::path& out) {
  std::ifstream gis(geometry_json);
  if (!gis) throw IoError("missing artifact: " + geometry_json.string());
  nlohmann::json geom = nlohmann::json::parse(gis);
  const double R = geom.at("init_radius").get<double>();
  const double goal = geom.at("goal_radius").get<double>();

  const auto rows = detail::read_csv(trajectory_csv);
  if (rows.size() < 2)
    throw IoError("trajectory source has no data rows: " + trajectory_csv.string());

  Document doc(640, 640);
  const double margin = 1.08 * R;
  Frame frame{-margin, margin, -margin, margin, 20, 20, 600, 600};
  auto scale = [&](double w) { return w / (2.0 * margin) * 600.0; };

  const auto [cx, cy] = frame.map(0.0, 0.0);
  doc.circle(cx, cy, scale(R), "#888888", "none", 1.0, 1.0, "6,4");
  doc.circle(cx, cy, scale(goal), "#2e7d32", "#a5d6a7", 0.5);

  for (const auto& o : geom.at("obstacles")) {
    const double ox = o.at("center")[0].get<double>();
    const double oy = o.at("center")[1].get<double>();
    const double ax = o.at("long_axis")[0].get<double>();
    const double ay = o.at("long_axis")[1].get<double>();
    const auto [pcx, pcy] = frame.map(ox, oy);
    // Pixel y grows downward, so the rotation angle flips sign.
    const double angle = -std::atan2(ay, ax) * 180.0 / M_PI;
    doc.rounded_rect(pcx, pcy, scale(2.0 * o.at("half_long").get<double>()),
                     scale(2.0 * o.at("half_short").get<double>()),
                     scale(o.at("corner_radius").get<double>()), angle, "#ef6c00");
  }

  // group rows into per-agent paths
  struct Path {
    std::vector<std::pair<double, double>> pts;
    bool herder = false;
  };
  std::vector<Path> herders;
  std::vector<Path> targets;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const bool herder = row.at(1) == "herder";
    const std::size_t idx = static_cast<std::size_t>(std::stoul(row.at(2)));
    auto& vec = herder ? herders : targets;
    if (vec.size() <= idx) vec.resize(idx + 1);
    vec[idx].pts.push_back(frame.map(std::stod(row.at(3)), std::stod(row.at(4))));
  }
  for (const auto& p : targets) doc.polyline(p.pts, "#d81b60", 1.0, 0.6);
  for (const auto& p : herders) doc.polyline(p.pts, "#1565c0", 1.4, 0.9);
  doc.write(out);
}

// Mean +/- std bands of agent radial distances and the goal threshold.
inline void render_radii_plot(const std::filesystem::path& radii_csv, double goal_radius,
                              const std::filesystem::path& out) {
  const auto rows = detail::read_csv(radii_csv);
  if (rows.size() < 2) throw IoError("radii source has no data rows: " + radii_csv.string());
  const auto tm = detail::column_as_double(rows, 1);
  const auto ts = detail::column_as_double(rows, 2);
  const auto hm = detail::column_as_double(rows, 3);
  const auto hs = detail::column_as_double(rows, 4);

  double y_max = goal_radius;
  for (std::size_t i = 0; i < tm.size(); ++i) {
    y_max = std::max(y_max, tm[i] + ts[i]);
    y_max = std::max(y_max, hm[i] + hs[i]);
  }

  Document doc(720, 420);
  Frame frame{0.0, static_cast<double>(tm.size() - 1), 0.0, 1.05 * y_max, 60, 20, 640, 360};

  auto band = [&](const std::vector<double>& mean, const std::vector<double>& std,
                  const std::string& color) {
    std::vector<std::pair<double, double>> poly;
    poly.reserve(2 * mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i)
      poly.push_back(frame.map(static_cast<double>(i), mean[i] + std[i]));
    for (std::size_t i = mean.size(); i-- > 0;)
      poly.push_back(frame.map(static_cast<double>(i), std::max(0.0, mean[i] - std[i])));
    doc.polygon(poly, color, 0.25);
    std::vector<std::pair<double, double>> line;
    line.reserve(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i)
      line.push_back(frame.map(static_cast<double>(i), mean[i]));
    doc.polyline(line, color, 2.0);
  };
  band(tm, ts, "#d81b60");
  band(hm, hs, "#1565c0");

  const auto [gx0, gy] = frame.map(0.0, goal_radius);
  const auto [gx1, gy1] = frame.map(static_cast<double>(tm.size() - 1), goal_radius);
  doc.line(gx0, gy, gx1, gy1, "#2e7d32", 1.5, "8,5");
  doc.text(gx0 + 4, gy - 5, "goal radius", 11);
  doc.line(frame.px, frame.py + frame.ph, frame.px + frame.pw, frame.py + frame.ph, "#333333");
  doc.line(frame.px, frame.py, frame.px, frame.py + frame.ph, "#333333");
  doc.text(frame.px + frame.pw / 2, 412, "step", 13, "middle");
  doc.text(12, frame.py + 10, "distance from goal center", 13);
  (void)gy1;
  doc.write(out);
}

// Renders every figure whose source artifacts exist under run_dir; throws
// when none are present.
inline std::vector<std::filesystem::path> render_figures(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> produced;
  const fs::path figures = run_dir / "figures";

  const fs::path reward_csv = run_dir / "reward_curve.csv";
  const fs::path traj_dir = run_dir / "trajectories";
  if (!fs::exists(reward_csv) && !fs::exists(traj_dir))
    throw IoError("no renderable artifacts under " + run_dir.string() +
                  " (expected reward_curve.csv or trajectories/)");
  fs::create_directories(figures);

  if (fs::exists(reward_csv)) {
    const fs::path out = figures / "reward_curve.svg";
    render_reward_curve(reward_csv, out);
    produced.push_back(out);
  }
  if (fs::exists(traj_dir)) {
    std::vector<fs::path> stems;
    for (const auto& entry : fs::directory_iterator(traj_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.size() > 4 && name.substr(name.size() - 4) == ".csv" &&
          name.find("_radii") == std::string::npos)
        stems.push_back(entry.path());
    }
    std::sort(stems.begin(), stems.end());
    for (const auto& csv : stems) {
      const std::string stem = csv.stem().string();
      const fs::path geom = traj_dir / (stem + "_geometry.json");
      const fs::path radii = traj_dir / (stem + "_radii.csv");
      if (fs::exists(geom)) {
        const fs::path out = figures / (stem + "_paths.svg");
        render_trajectory_plot(csv, geom, out);
        produced.push_back(out);
      }
      if (fs::exists(radii)) {
        nlohmann::json g;
        {
          std::ifstream gis(geom);
          if (!gis) throw IoError("missing artifact: " + geom.string());
          g = nlohmann::json::parse(gis);
        }
        const fs::path out = figures / (stem + "_radii.svg");
        render_radii_plot(radii, g.at("goal_radius").get<double>(), out);
        produced.push_back(out);
      }
    }
  }
  return produced;
}

}  // namespace shepherd::svg
