#pragma once

// Config-driven experiment runs and their file outputs: single-frequency field slices and
// summaries, and the frequency sweep. All tables are CSV with 9 significant digits; every file is
// written to a temporary name and renamed into place.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "sfsep/config.hpp"
#include "sfsep/scenario.hpp"

namespace sfsep {

namespace io {

[[nodiscard]] inline std::string sig9(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw ConfigError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ConfigError("cannot rename '" + tmp.string() + "': " + ec.message());
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw ConfigError("cannot create output directory '" + dir.string() + "'" + (ec ? ": " + ec.message() : ""));
}

using Rgb = std::array<unsigned char, 3>;

// Piecewise-linear colour ramp through the given anchors, t in [0, 1].
[[nodiscard]] inline Rgb ramp(double t, std::span<const Rgb> anchors) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const double x = t * static_cast<double>(anchors.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(x), anchors.size() - 2);
  const double f = x - static_cast<double>(i);
  Rgb c{};
  for (int ch = 0; ch < 3; ++ch)
    c[ch] = static_cast<unsigned char>(std::lround((1 - f) * anchors[i][ch] + f * anchors[i + 1][ch]));
  return c;
}

inline constexpr std::array<Rgb, 3> kDiverging{{{33, 102, 172}, {247, 247, 247}, {178, 24, 43}}};
inline constexpr std::array<Rgb, 5> kSequential{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};

// Binary PPM of an n x n slice (row-major, first row at the lowest coordinate), drawn with the
// second coordinate pointing up and the target-region circle in black.
inline void write_heatmap(const std::filesystem::path& path, const SliceSpec& slice, double region_radius,
                          const std::vector<double>& t_values, std::span<const Rgb> anchors) {
  const int n = slice.points_per_side();
  std::string img = "P6\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
  const std::size_t header = img.size();
  img.resize(header + static_cast<std::size_t>(3 * n * n));
  const double half_pixel = 0.75 * slice.resolution;
  for (int row = 0; row < n; ++row) {
    const int j = n - 1 - row;
    for (int i = 0; i < n; ++i) {
      const double u = -0.5 * slice.extent + i * slice.resolution;
      const double v = -0.5 * slice.extent + j * slice.resolution;
      const double r = std::hypot(u, v);
      Rgb c = ramp(t_values[static_cast<std::size_t>(j * n + i)], anchors);
      if (std::abs(r - region_radius) < half_pixel) c = {0, 0, 0};
      std::copy(c.begin(), c.end(), img.begin() + static_cast<std::ptrdiff_t>(header + 3 * (row * n + i)));
    }
  }
  write_atomic(path, img);
}

}  // namespace io

inline const std::string kSummaryHeader = "frequency_hz,method,truncation_order,weighting,lambda1,lambda2,nmse_db,status";

[[nodiscard]] inline std::string method_tag(const MethodSpec& m) {
  if (m.kind == MethodKind::krr) return "krr";
  return "proposed_" + to_string(m.weighting) + "_" + std::to_string(m.truncation_multiplier);
}

// RFC 4180 quoting for fields that contain a separator or quote.
[[nodiscard]] inline std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string q = "\"";
  for (char ch : v) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

[[nodiscard]] inline std::string summary_row(const SweepRecord& r) {
  const bool krr = r.method.kind == MethodKind::krr;
  const bool ok = r.status == "ok";
  std::string status = r.status;
  std::replace(status.begin(), status.end(), '\n', ' ');
  return io::sig9(r.frequency_hz) + "," + csv_field(r.method.label()) + "," + (krr || !ok ? "" : std::to_string(r.truncation_order)) +
         "," + (krr ? "" : to_string(r.method.weighting)) + "," + (ok ? io::sig9(r.lambda1) : "") + "," +
         (krr || !ok ? "" : io::sig9(r.lambda2)) + "," + (ok ? io::sig9(r.nmse_db) : "") + "," + csv_field(status);
}

[[nodiscard]] inline std::string summary_csv(std::span<const SweepRecord> records) {
  std::string s = kSummaryHeader + "\n";
  for (const auto& r : records) s += summary_row(r) + "\n";
  return s;
}

[[nodiscard]] inline std::vector<double> config_lambdas(const ExperimentConfig& c) {
  return lambda_grid(c.lambda_exp_min, c.lambda_exp_max);
}

inline void require_valid(const ExperimentConfig& c) {
  const auto v = validate(c);
  if (v.empty()) return;
  std::string msg = "invalid configuration";
  for (const auto& e : v) msg += "\n  " + e;
  throw ConfigError(msg);
}

struct SingleRunResult {
  double frequency_hz = 0.0;
  std::vector<SweepRecord> summary;
  std::vector<std::filesystem::path> files;

  [[nodiscard]] bool all_ok() const {
    return std::all_of(summary.begin(), summary.end(), [](const SweepRecord& r) { return r.status == "ok"; });
  }
};

namespace detail {

inline std::string xyz(const Position& p) {
  return io::sig9(p.x()) + "," + io::sig9(p.y()) + "," + io::sig9(p.z());
}

inline std::string field_csv(const std::vector<Position>& pts, const std::vector<cplx>& values) {
  std::string s = "x,y,z,real,imag,magnitude\n";
  for (std::size_t i = 0; i < pts.size(); ++i)
    s += xyz(pts[i]) + "," + io::sig9(values[i].real()) + "," + io::sig9(values[i].imag()) + "," +
         io::sig9(std::abs(values[i])) + "\n";
  return s;
}

}  // namespace detail

// Grid-searches every configured method at one frequency and writes, per method:
//   slice_<tag>.csv  estimated incident field on the slice
//   error_<tag>.csv  |u_inc - u_hat|^2 / mean |u_inc|^2, the mean taken over slice points in the region
//   grid_<tag>.csv   truth and estimate at the NMSE evaluation points
// plus slice_truth.csv and summary.csv, and PPM heatmaps when enabled.
[[nodiscard]] inline SingleRunResult run_single(const ExperimentConfig& c, double frequency_hz,
                                                const std::filesystem::path& out_dir) {
  auto checked = c;
  checked.frequency = frequency_hz;
  require_valid(checked);
  io::ensure_directory(out_dir);

  const Scenario sc = to_scenario(c, {frequency_hz});
  const auto problem = make_problem(sc, frequency_hz);
  const auto lambdas = config_lambdas(c);
  const auto slice_pts = c.slice.points();

  SingleRunResult out;
  out.frequency_hz = frequency_hz;
  const auto emit = [&](const std::string& name, const std::string& content) {
    io::write_atomic(out_dir / name, content);
    out.files.push_back(out_dir / name);
  };

  std::vector<cplx> truth(slice_pts.size());
  double mean_power = 0.0;
  std::size_t inside = 0;
  for (std::size_t i = 0; i < slice_pts.size(); ++i) {
    truth[i] = point_source_field(sc.source, problem.k, slice_pts[i]);
    if (slice_pts[i].norm() <= sc.region_radius) {
      mean_power += std::norm(truth[i]);
      ++inside;
    }
  }
  mean_power /= static_cast<double>(inside);
  emit("slice_truth.csv", detail::field_csv(slice_pts, truth));

  double scale = 0.0;
  for (std::size_t i = 0; i < slice_pts.size(); ++i)
    if (slice_pts[i].norm() <= sc.region_radius) scale = std::max(scale, std::abs(truth[i]));
  const auto pressure_t = [&](const std::vector<cplx>& v) {
    std::vector<double> t(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = 0.5 + 0.5 * v[i].real() / scale;
    return t;
  };
  if (c.heatmap) {
    io::write_heatmap(out_dir / "slice_truth.ppm", c.slice, sc.region_radius, pressure_t(truth), io::kDiverging);
    out.files.push_back(out_dir / "slice_truth.ppm");
  }

  for (const auto& method : c.methods) {
    SweepRecord rec;
    rec.frequency_hz = frequency_hz;
    rec.method = method;
    try {
      const auto gs = grid_search(method, problem, lambdas);
      rec.truncation_order = gs.truncation_order;
      rec.lambda1 = gs.lambda1;
      rec.lambda2 = gs.lambda2;
      rec.nmse_db = gs.nmse_db;

      const auto estimate = [&](const Position& p) {
        return std::visit(
            [&](const auto& fit) -> cplx {
              if constexpr (std::is_same_v<std::decay_t<decltype(fit)>, std::monostate>) return {};
              else return reconstruct_incident(fit, p);
            },
            gs.fit);
      };
      const std::string tag = method_tag(method);
      std::vector<cplx> est(slice_pts.size());
      std::vector<double> err(slice_pts.size());
      for (std::size_t i = 0; i < slice_pts.size(); ++i) {
        est[i] = estimate(slice_pts[i]);
        err[i] = std::norm(truth[i] - est[i]) / mean_power;
      }
      emit("slice_" + tag + ".csv", detail::field_csv(slice_pts, est));

      std::string e = "x,y,z,normalized_error\n";
      for (std::size_t i = 0; i < slice_pts.size(); ++i) e += detail::xyz(slice_pts[i]) + "," + io::sig9(err[i]) + "\n";
      emit("error_" + tag + ".csv", e);

      std::string g = "x,y,z,true_real,true_imag,est_real,est_imag\n";
      for (std::size_t i = 0; i < problem.grid.positions.size(); ++i) {
        const cplx t = problem.truth(static_cast<Eigen::Index>(i));
        const cplx u = estimate(problem.grid.positions[i]);
        g += detail::xyz(problem.grid.positions[i]) + "," + io::sig9(t.real()) + "," + io::sig9(t.imag()) + "," +
             io::sig9(u.real()) + "," + io::sig9(u.imag()) + "\n";
      }
      emit("grid_" + tag + ".csv", g);

      if (c.heatmap) {
        io::write_heatmap(out_dir / ("slice_" + tag + ".ppm"), c.slice, sc.region_radius, pressure_t(est), io::kDiverging);
        std::vector<double> t(err.size());
        // -40 dB .. 0 dB
        for (std::size_t i = 0; i < err.size(); ++i) t[i] = 1.0 + std::log10(std::max(err[i], 1e-30)) / 4.0;
        io::write_heatmap(out_dir / ("error_" + tag + ".ppm"), c.slice, sc.region_radius, t, io::kSequential);
        out.files.push_back(out_dir / ("slice_" + tag + ".ppm"));
        out.files.push_back(out_dir / ("error_" + tag + ".ppm"));
      }
    } catch (const std::exception& e) {
      rec.status = std::string("error: ") + e.what();
    }
    out.summary.push_back(rec);
  }
  emit("summary.csv", summary_csv(out.summary));
  return out;
}

// Writes sweep.csv, one row per (frequency, method) cell in frequency-major order.
[[nodiscard]] inline SweepResult run_sweep(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
  require_valid(c);
  io::ensure_directory(out_dir);
  const Scenario sc = to_scenario(c, sweep_frequencies(c));
  const auto lambdas = config_lambdas(c);
  auto result = frequency_sweep(sc, c.methods, lambdas, c.threads);
  io::write_atomic(out_dir / "sweep.csv", summary_csv(result.records));
  return result;
}

}  // namespace sfsep
