#pragma once

// Experiment geometry, NMSE metric, oracle regularization search and the frequency sweep.

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "sfsep/errors.hpp"
#include "sfsep/estimator.hpp"
#include "sfsep/field.hpp"
#include "sfsep/kernel.hpp"

namespace sfsep {

// ---------------------------------------------------------------------------------------------
// Point sets on the unit sphere

// Plain text, one unit vector per line as three whitespace-separated decimals; '#' lines ignored.
[[nodiscard]] inline std::vector<Eigen::Vector3d> parse_point_set(std::istream& in, const std::string& name = "<stream>") {
  std::vector<Eigen::Vector3d> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    Eigen::Vector3d v;
    std::string extra;
    if (!(fields >> v.x() >> v.y() >> v.z()) || (fields >> extra))
      throw ConfigError(name + ":" + std::to_string(lineno) + ": expected three decimal fields");
    const double n = v.norm();
    if (std::abs(n - 1.0) > 1e-6)
      throw ConfigError(name + ":" + std::to_string(lineno) + ": not a unit vector (norm " + std::to_string(n) + ")");
    pts.push_back(v / n);
  }
  return pts;
}

[[nodiscard]] inline std::vector<Eigen::Vector3d> load_point_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open point-set file '" + path + "'");
  return parse_point_set(in, path);
}

// Fibonacci lattice; z = 1 - (2i+1)/n keeps every point off the poles.
[[nodiscard]] inline std::vector<Eigen::Vector3d> fibonacci_points(int n) {
  if (n <= 0) throw std::invalid_argument("point count must be positive");
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double rho = std::sqrt(1.0 - z * z);
    pts.emplace_back(rho * std::cos(golden * i), rho * std::sin(golden * i), z);
  }
  return pts;
}

[[nodiscard]] inline std::vector<Eigen::Vector3d> random_points(int n, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("point count must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::Vector3d> pts;
  while (static_cast<int>(pts.size()) < n) {
    Eigen::Vector3d v(g(rng), g(rng), g(rng));
    const double len = v.norm();
    if (len < 1e-12) continue;
    v /= len;
    if (std::sqrt(1.0 - v.z() * v.z()) < 1e-6) continue;  // keep off the poles
    pts.push_back(v);
  }
  return pts;
}

enum class PointSetKind { file, fibonacci, random };

struct MicLayout {
  PointSetKind provider = PointSetKind::file;
  std::string pointset_path;
  std::vector<double> shell_radii{0.5, 0.55};
  int points_per_shell = 25;
  std::uint64_t random_seed = 0;
};

[[nodiscard]] inline std::vector<Eigen::Vector3d> provide_points(const MicLayout& layout) {
  switch (layout.provider) {
    case PointSetKind::file: return load_point_set(layout.pointset_path);
    case PointSetKind::fibonacci: return fibonacci_points(layout.points_per_shell);
    case PointSetKind::random: return random_points(layout.points_per_shell, layout.random_seed);
  }
  throw std::logic_error("unknown point-set provider");
}

// The same angular set scaled to each shell radius.
[[nodiscard]] inline std::vector<Position> dual_shell_layout(std::span<const Eigen::Vector3d> directions,
                                                             std::span<const double> radii, int count_per_shell) {
  if (static_cast<int>(directions.size()) != count_per_shell)
    throw ConfigError("point-set provider returned " + std::to_string(directions.size()) + " points, expected " +
                      std::to_string(count_per_shell));
  std::vector<Position> mics;
  mics.reserve(directions.size() * radii.size());
  for (double r : radii)
    for (const auto& d : directions) mics.push_back(r * d.normalized());
  return mics;
}

[[nodiscard]] inline std::vector<Position> build_layout(const MicLayout& layout) {
  const auto dirs = provide_points(layout);
  return dual_shell_layout(dirs, layout.shell_radii, layout.points_per_shell);
}

// ---------------------------------------------------------------------------------------------
// Scenario

struct Scenario {
  double region_radius = 0.5;
  double scatterer_radius = 0.3;  // 0 disables the scatterer
  MicLayout layout;
  Position source{2.0, 2.0, 0.0};
  double snr_db = 40.0;  // +inf disables noise
  std::vector<double> frequencies;
  double sound_speed = kDefaultSoundSpeed;
  std::uint64_t noise_seed = 1;
  double grid_spacing = 0.05;
  bool include_scatterer_interior = true;

  [[nodiscard]] bool has_scatterer() const noexcept { return scatterer_radius > 0.0; }
};

// All invariant violations; empty means valid.
[[nodiscard]] inline std::vector<std::string> validate(const Scenario& sc) {
  std::vector<std::string> v;
  if (!(sc.region_radius > 0.0)) v.emplace_back("region radius must be positive");
  if (sc.scatterer_radius < 0.0) v.emplace_back("scatterer radius must be non-negative");
  if (sc.has_scatterer() && !(sc.scatterer_radius < sc.region_radius))
    v.emplace_back("scatterer radius must be smaller than region radius");
  if (sc.source.norm() <= sc.region_radius) v.emplace_back("source inside region");
  if (!(sc.sound_speed > 0.0)) v.emplace_back("sound speed must be positive");
  if (!(sc.grid_spacing > 0.0)) v.emplace_back("grid spacing must be positive");
  if (std::isnan(sc.snr_db)) v.emplace_back("SNR must be a number or inf");
  for (double f : sc.frequencies)
    if (!(f > 0.0)) {
      v.emplace_back("frequencies must be positive");
      break;
    }
  for (double r : sc.layout.shell_radii)
    if (!(r > 0.0)) {
      v.emplace_back("shell radii must be positive");
      break;
    }
  try {
    const auto mics = build_layout(sc.layout);
    for (std::size_t i = 0; i < mics.size(); ++i) {
      if (sc.has_scatterer() && mics[i].norm() <= sc.scatterer_radius) {
        v.emplace_back("microphone inside scatterer");
        break;
      }
    }
    for (const auto& m : mics) {
      const auto s = to_spherical(m);
      if (std::abs(std::sin(s.theta)) < kPoleGuard) {
        v.emplace_back("microphone on a pole of the expansion axis");
        break;
      }
    }
  } catch (const std::exception& e) {
    v.emplace_back(std::string("microphone layout: ") + e.what());
  }
  return v;
}

// ---------------------------------------------------------------------------------------------
// Evaluation grid and NMSE

struct EvaluationGrid {
  std::vector<Position> positions;
  double spacing = 0.0;
};

// Cubic lattice centred at the origin, restricted to |r| <= R; optionally drops |r| < a.
[[nodiscard]] inline EvaluationGrid evaluation_grid(double region_radius, double spacing = 0.05,
                                                    bool include_scatterer_interior = true,
                                                    double scatterer_radius = 0.0) {
  if (!(spacing > 0.0)) throw std::invalid_argument("grid spacing must be positive");
  const int n = static_cast<int>(std::floor(region_radius / spacing + 1e-9));
  const double r2max = region_radius * region_radius * (1.0 + 1e-12);
  EvaluationGrid g{{}, spacing};
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j)
      for (int k = -n; k <= n; ++k) {
        const Position p(i * spacing, j * spacing, k * spacing);
        const double r2 = p.squaredNorm();
        if (r2 > r2max) continue;
        if (!include_scatterer_interior && r2 < scatterer_radius * scatterer_radius) continue;
        g.positions.push_back(p);
      }
  return g;
}

inline constexpr double kNmseFloorDb = -300.0;

[[nodiscard]] inline double nmse_db(std::span<const cplx> estimate, std::span<const cplx> truth) {
  if (truth.empty() || estimate.size() != truth.size()) throw std::invalid_argument("NMSE needs equal non-empty sets");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    num += std::norm(truth[i] - estimate[i]);
    den += std::norm(truth[i]);
  }
  if (!(den > 0.0)) throw DomainError("NMSE undefined: true field vanishes on the grid");
  if (num == 0.0) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(num / den));
}

[[nodiscard]] inline double nmse_db(const CVector& estimate, const CVector& truth) {
  return nmse_db(std::span<const cplx>(estimate.data(), static_cast<std::size_t>(estimate.size())),
                 std::span<const cplx>(truth.data(), static_cast<std::size_t>(truth.size())));
}

template <class Estimate, class Truth>
[[nodiscard]] double nmse_db(Estimate&& estimate, Truth&& truth, const EvaluationGrid& grid) {
  std::vector<cplx> est;
  std::vector<cplx> tru;
  est.reserve(grid.positions.size());
  tru.reserve(grid.positions.size());
  for (const auto& p : grid.positions) {
    est.push_back(estimate(p));
    tru.push_back(truth(p));
  }
  return nmse_db(est, tru);
}

// ---------------------------------------------------------------------------------------------
// Methods and the oracle regularization search

enum class MethodKind { krr, proposed };

struct MethodSpec {
  MethodKind kind = MethodKind::krr;
  Weighting weighting = Weighting::smoothness;
  int truncation_multiplier = 1;  // N = multiplier * ceil(kR)

  [[nodiscard]] static MethodSpec krr() { return {MethodKind::krr, Weighting::identity, 0}; }
  [[nodiscard]] static MethodSpec proposed(Weighting w, int multiplier) { return {MethodKind::proposed, w, multiplier}; }

  [[nodiscard]] std::string label() const {
    if (kind == MethodKind::krr) return "KRR";
    const std::string order = truncation_multiplier == 1 ? "ceil(kR)" : std::to_string(truncation_multiplier) + "ceil(kR)";
    return "Proposed(" + to_string(weighting) + "," + order + ")";
  }
  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

// KRR plus Proposed x {I, W} x {ceil(kR), 2 ceil(kR)}.
[[nodiscard]] inline std::vector<MethodSpec> default_methods() {
  return {MethodSpec::krr(), MethodSpec::proposed(Weighting::identity, 1), MethodSpec::proposed(Weighting::identity, 2),
          MethodSpec::proposed(Weighting::smoothness, 1), MethodSpec::proposed(Weighting::smoothness, 2)};
}

// 10^n for n = exp_min..exp_max.
[[nodiscard]] inline std::vector<double> lambda_grid(int exp_min = -15, int exp_max = 9) {
  if (exp_min > exp_max) throw std::invalid_argument("empty regularization grid");
  std::vector<double> g;
  for (int n = exp_min; n <= exp_max; ++n) g.push_back(std::pow(10.0, n));
  return g;
}

// Distinct noise stream per frequency bin, fixed by the scenario seed.
[[nodiscard]] inline std::uint64_t frequency_seed(std::uint64_t seed, double frequency_hz) {
  const auto millihz = static_cast<std::uint64_t>(std::llround(frequency_hz * 1000.0));
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (millihz + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Everything about one frequency bin that the methods share.
struct FrequencyProblem {
  double frequency_hz = 0.0;
  Wavenumber k{1.0};
  double region_radius = 0.0;
  std::vector<Position> mics;
  CVector measurements;
  GramMatrix gram;
  EvaluationGrid grid;
  CVector truth;       // incident field on the grid
  CMatrix grid_kernel; // kernel_cross_matrix(grid, mics)

  [[nodiscard]] int base_order() const {
    return static_cast<int>(std::ceil(k.value() * region_radius));
  }
};

[[nodiscard]] inline FrequencyProblem make_problem(const Scenario& sc, double frequency_hz,
                                                   const std::vector<Position>& mics) {
  const auto k = Wavenumber::from_frequency(frequency_hz, sc.sound_speed);
  const auto spec = KernelSpec::diffuse(k);
  FrequencyProblem p{frequency_hz, k, sc.region_radius, mics, {}, gram_matrix(spec, mics), {}, {}, {}};
  p.measurements = synthesize_measurements(mics, sc.source, sc.scatterer_radius, k, sc.snr_db,
                                           frequency_seed(sc.noise_seed, frequency_hz));
  p.grid = evaluation_grid(sc.region_radius, sc.grid_spacing, sc.include_scatterer_interior, sc.scatterer_radius);
  p.truth.resize(static_cast<Eigen::Index>(p.grid.positions.size()));
  for (std::size_t i = 0; i < p.grid.positions.size(); ++i)
    p.truth(static_cast<Eigen::Index>(i)) = point_source_field(sc.source, k, p.grid.positions[i]);
  p.grid_kernel = kernel_cross_matrix(spec, p.grid.positions, mics);
  return p;
}

[[nodiscard]] inline FrequencyProblem make_problem(const Scenario& sc, double frequency_hz) {
  return make_problem(sc, frequency_hz, build_layout(sc.layout));
}

struct Candidate {
  double lambda1 = 0.0;
  double lambda2 = 0.0;  // 0 for KRR
  double nmse_db = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
};

struct GridSearchResult {
  MethodSpec method;
  int truncation_order = 0;  // 0 for KRR
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double nmse_db = std::numeric_limits<double>::quiet_NaN();
  std::variant<std::monostate, KrrFit, JointFit> fit;
  std::vector<Candidate> candidates;
  int failures = 0;
  bool loaded = false;  // diagonal loading applied to W
};

[[nodiscard]] inline double grid_nmse(const FrequencyProblem& p, const CVector& alpha) {
  return nmse_db(CVector(p.grid_kernel * alpha), p.truth);
}

// Exhaustive search minimising the oracle NMSE on the evaluation grid. Candidates are visited from
// the largest regularization down and only strict improvements replace the incumbent, so ties go
// to the larger value (lambda1 first, then lambda2).
[[nodiscard]] inline GridSearchResult grid_search(const MethodSpec& method, const FrequencyProblem& p,
                                                  std::span<const double> lambdas) {
  if (lambdas.empty()) throw std::invalid_argument("empty regularization grid");
  std::vector<double> desc(lambdas.begin(), lambdas.end());
  std::sort(desc.begin(), desc.end(), std::greater<>());

  GridSearchResult out;
  out.method = method;
  double best = std::numeric_limits<double>::infinity();

  if (method.kind == MethodKind::krr) {
    for (double lambda : desc) {
      Candidate c{lambda, 0.0};
      try {
        auto fit = krr_fit(p.measurements, p.gram, lambda);
        c.nmse_db = grid_nmse(p, fit.alpha);
        c.ok = std::isfinite(c.nmse_db);
        if (c.ok && c.nmse_db < best) {
          best = c.nmse_db;
          out.lambda1 = lambda;
          out.nmse_db = c.nmse_db;
          out.fit = std::move(fit);
        }
      } catch (const SingularSystemError&) {
      }
      if (!c.ok) ++out.failures;
      out.candidates.push_back(c);
    }
  } else {
    out.truncation_order = method.truncation_multiplier * p.base_order();
    const CMatrix phi = expansion_matrix(p.mics, out.truncation_order, p.k);
    WeightingMatrix w = method.weighting == Weighting::identity ? identity_weighting(out.truncation_order)
                                                                : weighting_matrix(p.mics, out.truncation_order, p.k);
    const JointSolver solver(p.measurements, p.gram, phi, std::move(w));
    out.loaded = solver.loaded();
    for (double l1 : desc) {
      std::optional<JointSolver::Stage> stage;
      try {
        stage.emplace(solver.prepare(l1));
      } catch (const SingularSystemError&) {
      }
      for (double l2 : desc) {
        Candidate c{l1, l2};
        if (stage) {
          try {
            auto fit = solver.solve(*stage, l2);
            c.nmse_db = grid_nmse(p, fit.alpha_hat);
            c.ok = std::isfinite(c.nmse_db);
            if (c.ok && c.nmse_db < best) {
              best = c.nmse_db;
              out.lambda1 = l1;
              out.lambda2 = l2;
              out.nmse_db = c.nmse_db;
              out.fit = std::move(fit);
            }
          } catch (const SingularSystemError&) {
          }
        }
        if (!c.ok) ++out.failures;
        out.candidates.push_back(c);
      }
    }
  }
  if (std::holds_alternative<std::monostate>(out.fit)) throw SingularSystemError("all regularization candidates failed");
  return out;
}

// ---------------------------------------------------------------------------------------------
// Frequency sweep

struct SweepRecord {
  double frequency_hz = 0.0;
  MethodSpec method;
  int truncation_order = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double nmse_db = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

struct SweepResult {
  std::vector<SweepRecord> records;  // frequency-major, methods in configured order
};

[[nodiscard]] inline std::vector<double> frequency_range(double start, double stop, double step) {
  if (!(step > 0.0) || stop < start) throw std::invalid_argument("invalid frequency range");
  std::vector<double> f;
  const int n = static_cast<int>(std::floor((stop - start) / step + 1e-9));
  for (int i = 0; i <= n; ++i) f.push_back(start + i * step);
  return f;
}

// Runs every (frequency, method) cell; a failing cell is recorded with its status and the sweep
// continues. Cells run on up to `threads` workers; output order does not depend on scheduling.
[[nodiscard]] inline SweepResult frequency_sweep(const Scenario& sc, const std::vector<MethodSpec>& methods,
                                                 std::span<const double> lambdas, int threads = 1) {
  const auto mics = build_layout(sc.layout);
  const std::size_t nf = sc.frequencies.size();
  const std::size_t nm = methods.size();
  SweepResult result;
  result.records.resize(nf * nm);

  std::vector<std::optional<FrequencyProblem>> problems(nf);
  std::vector<std::string> problem_errors(nf);
  std::vector<std::once_flag> built(nf);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t cell = next++; cell < nf * nm; cell = next++) {
      const std::size_t fi = cell / nm;
      const std::size_t mi = cell % nm;
      std::call_once(built[fi], [&] {
        try {
          problems[fi].emplace(make_problem(sc, sc.frequencies[fi], mics));
        } catch (const std::exception& e) {
          problem_errors[fi] = e.what();
        }
      });
      SweepRecord& rec = result.records[cell];
      rec.frequency_hz = sc.frequencies[fi];
      rec.method = methods[mi];
      if (!problems[fi]) {
        rec.status = "error: " + problem_errors[fi];
        continue;
      }
      try {
        const auto gs = grid_search(methods[mi], *problems[fi], lambdas);
        rec.truncation_order = gs.truncation_order;
        rec.lambda1 = gs.lambda1;
        rec.lambda2 = gs.lambda2;
        rec.nmse_db = gs.nmse_db;
      } catch (const std::exception& e) {
        rec.status = std::string("error: ") + e.what();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(nf * nm)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  return result;
}

}  // namespace sfsep
