#pragma once

// Experiment configuration: INI-style text with [scenario], [methods], [search] and [output]
// sections. Unknown sections or keys are errors, missing keys take the defaults below.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sfsep/errors.hpp"
#include "sfsep/scenario.hpp"

namespace sfsep {

struct SliceSpec {
  char axis = 'z';           // normal of the axis-aligned plane
  double offset = 0.0;       // plane position along the axis
  double extent = 1.4;       // full side length of the square, centred on the axis
  double resolution = 0.01;

  [[nodiscard]] int points_per_side() const {
    return static_cast<int>(std::lround(extent / resolution)) + 1;
  }
  [[nodiscard]] std::vector<Position> points() const {
    const int n = points_per_side();
    std::vector<Position> pts;
    pts.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    const int a = axis == 'x' ? 1 : 0;
    const int b = axis == 'z' ? 1 : 2;
    const int c = axis == 'x' ? 0 : (axis == 'y' ? 1 : 2);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        Position p = Position::Zero();
        p[a] = -0.5 * extent + i * resolution;
        p[b] = -0.5 * extent + j * resolution;
        p[c] = offset;
        pts.push_back(p);
      }
    return pts;
  }
};

struct ExperimentConfig {
  // [scenario]
  double region_radius = 0.5;
  double scatterer_radius = 0.3;
  Position source{2.0, 2.0, 0.0};
  double snr_db = 40.0;
  std::uint64_t noise_seed = 1;
  double sound_speed = kDefaultSoundSpeed;
  double grid_spacing = 0.05;
  bool include_scatterer_interior = true;
  PointSetKind pointset = PointSetKind::file;
  std::string pointset_path = "data/sphdesign_t4_n25.txt";
  std::uint64_t pointset_seed = 0;
  int points_per_shell = 25;
  std::vector<double> shell_radii{0.5, 0.55};
  double frequency = 300.0;
  double sweep_start = 100.0;
  double sweep_stop = 1000.0;
  double sweep_step = 50.0;

  // [methods]
  std::vector<MethodSpec> methods = default_methods();

  // [search]
  int lambda_exp_min = -15;
  int lambda_exp_max = 9;

  // [output]
  std::string directory = "out";
  SliceSpec slice;
  bool heatmap = false;
  int threads = 1;

  // Directory relative paths are resolved against; not serialized.
  std::filesystem::path base_dir = ".";

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    const auto same_slice = [](const SliceSpec& x, const SliceSpec& y) {
      return x.axis == y.axis && x.offset == y.offset && x.extent == y.extent && x.resolution == y.resolution;
    };
    return a.region_radius == b.region_radius && a.scatterer_radius == b.scatterer_radius && a.source == b.source &&
           (a.snr_db == b.snr_db) && a.noise_seed == b.noise_seed && a.sound_speed == b.sound_speed &&
           a.grid_spacing == b.grid_spacing && a.include_scatterer_interior == b.include_scatterer_interior &&
           a.pointset == b.pointset && a.pointset_path == b.pointset_path && a.pointset_seed == b.pointset_seed &&
           a.points_per_shell == b.points_per_shell && a.shell_radii == b.shell_radii && a.frequency == b.frequency &&
           a.sweep_start == b.sweep_start && a.sweep_stop == b.sweep_stop && a.sweep_step == b.sweep_step &&
           a.methods == b.methods && a.lambda_exp_min == b.lambda_exp_min && a.lambda_exp_max == b.lambda_exp_max &&
           a.directory == b.directory && same_slice(a.slice, b.slice) && a.heatmap == b.heatmap &&
           a.threads == b.threads;
  }
};

// ---------------------------------------------------------------------------------------------
// Value codecs

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string method_token(const MethodSpec& m) {
  if (m.kind == MethodKind::krr) return "krr";
  return "proposed-" + to_string(m.weighting) + "-" + std::to_string(m.truncation_multiplier);
}

}  // namespace detail

// Field-level diagnostics: "[section] key: message".
class ConfigReader {
 public:
  explicit ConfigReader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  template <class T, class Parse>
  void read(const std::string& section, const std::string& key, T& target, Parse parse) {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return;
    const auto v = sec->get_optional<std::string>(key);
    if (!v) return;
    try {
      target = parse(detail::trim(*v));
    } catch (const std::exception& e) {
      errors_.push_back("[" + section + "] " + key + ": " + e.what());
    }
  }

  void check_known(const std::map<std::string, std::set<std::string>>& known) {
    for (const auto& [section, body] : tree_) {
      const auto it = known.find(section);
      if (body.empty() && !body.data().empty()) {
        errors_.push_back(section + ": key outside any section");
        continue;
      }
      if (it == known.end()) {
        errors_.push_back("[" + section + "]: unknown section");
        continue;
      }
      if (!body.data().empty()) errors_.push_back("[" + section + "]: unexpected value");
      for (const auto& [key, _] : body)
        if (!it->second.contains(key)) errors_.push_back("[" + section + "] " + key + ": unknown key");
    }
  }

  [[nodiscard]] const std::vector<std::string>& errors() const { return errors_; }

 private:
  const boost::property_tree::ptree& tree_;
  std::vector<std::string> errors_;
};

namespace parse {

inline double real(const std::string& s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

inline long long integer(const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

inline std::uint64_t unsigned64(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  return v;
}

inline bool boolean(const std::string& s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

inline std::vector<double> reals(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : detail::split_list(s)) out.push_back(real(item));
  return out;
}

inline Position vec3(const std::string& s) {
  const auto v = reals(s);
  if (v.size() != 3) throw std::invalid_argument("expected three comma-separated numbers");
  return {v[0], v[1], v[2]};
}

inline PointSetKind pointset(const std::string& s) {
  if (s == "file") return PointSetKind::file;
  if (s == "fibonacci") return PointSetKind::fibonacci;
  if (s == "random") return PointSetKind::random;
  throw std::invalid_argument("expected file, fibonacci or random, got '" + s + "'");
}

inline MethodSpec method(const std::string& s) {
  if (s == "krr") return MethodSpec::krr();
  if (s.rfind("proposed-", 0) == 0 && s.size() == 12 && s[10] == '-') {
    const char w = s[9];
    const char mult = s[11];
    if ((w == 'I' || w == 'W') && (mult == '1' || mult == '2'))
      return MethodSpec::proposed(w == 'I' ? Weighting::identity : Weighting::smoothness, mult - '0');
  }
  throw std::invalid_argument("unknown method '" + s + "' (use krr or proposed-{I,W}-{1,2})");
}

inline std::vector<MethodSpec> methods(const std::string& s) {
  std::vector<MethodSpec> out;
  for (const auto& item : detail::split_list(s)) out.push_back(method(item));
  return out;
}

inline char axis(const std::string& s) {
  if (s == "x" || s == "y" || s == "z") return s[0];
  throw std::invalid_argument("expected x, y or z");
}

}  // namespace parse

[[nodiscard]] inline ExperimentConfig parse_config(std::istream& in, const std::string& name = "<config>") {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(name + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  ConfigReader r(tree);
  r.check_known({{"scenario",
                  {"region_radius", "scatterer_radius", "source", "snr_db", "noise_seed", "sound_speed", "grid_spacing",
                   "include_scatterer_interior", "pointset", "pointset_path", "pointset_seed", "points_per_shell",
                   "shell_radii", "frequency", "sweep_start", "sweep_stop", "sweep_step"}},
                 {"methods", {"enabled"}},
                 {"search", {"lambda_exp_min", "lambda_exp_max"}},
                 {"output", {"directory", "slice_axis", "slice_offset", "slice_extent", "slice_resolution", "heatmap",
                             "threads"}}});
  ExperimentConfig c;
  const auto to_int = [](const std::string& s) { return static_cast<int>(parse::integer(s)); };
  r.read("scenario", "region_radius", c.region_radius, parse::real);
  r.read("scenario", "scatterer_radius", c.scatterer_radius, parse::real);
  r.read("scenario", "source", c.source, parse::vec3);
  r.read("scenario", "snr_db", c.snr_db, parse::real);
  r.read("scenario", "noise_seed", c.noise_seed, parse::unsigned64);
  r.read("scenario", "sound_speed", c.sound_speed, parse::real);
  r.read("scenario", "grid_spacing", c.grid_spacing, parse::real);
  r.read("scenario", "include_scatterer_interior", c.include_scatterer_interior, parse::boolean);
  r.read("scenario", "pointset", c.pointset, parse::pointset);
  r.read("scenario", "pointset_path", c.pointset_path, [](const std::string& s) { return s; });
  r.read("scenario", "pointset_seed", c.pointset_seed, parse::unsigned64);
  r.read("scenario", "points_per_shell", c.points_per_shell, to_int);
  r.read("scenario", "shell_radii", c.shell_radii, parse::reals);
  r.read("scenario", "frequency", c.frequency, parse::real);
  r.read("scenario", "sweep_start", c.sweep_start, parse::real);
  r.read("scenario", "sweep_stop", c.sweep_stop, parse::real);
  r.read("scenario", "sweep_step", c.sweep_step, parse::real);
  r.read("methods", "enabled", c.methods, parse::methods);
  r.read("search", "lambda_exp_min", c.lambda_exp_min, to_int);
  r.read("search", "lambda_exp_max", c.lambda_exp_max, to_int);
  r.read("output", "directory", c.directory, [](const std::string& s) { return s; });
  r.read("output", "slice_axis", c.slice.axis, parse::axis);
  r.read("output", "slice_offset", c.slice.offset, parse::real);
  r.read("output", "slice_extent", c.slice.extent, parse::real);
  r.read("output", "slice_resolution", c.slice.resolution, parse::real);
  r.read("output", "heatmap", c.heatmap, parse::boolean);
  r.read("output", "threads", c.threads, to_int);
  if (!r.errors().empty()) {
    std::string msg = name + ": invalid configuration";
    for (const auto& e : r.errors()) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

[[nodiscard]] inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  auto c = parse_config(in, path.string());
  c.base_dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  return c;
}

[[nodiscard]] inline std::string serialize_config(const ExperimentConfig& c) {
  using detail::format_double;
  const auto list = [](const auto& items, auto fmt) {
    std::string s;
    for (const auto& x : items) s += (s.empty() ? "" : ", ") + fmt(x);
    return s;
  };
  const char* pointset = c.pointset == PointSetKind::file ? "file" : c.pointset == PointSetKind::fibonacci ? "fibonacci" : "random";
  std::ostringstream o;
  o << "[scenario]\n"
    << "region_radius = " << format_double(c.region_radius) << "\n"
    << "scatterer_radius = " << format_double(c.scatterer_radius) << "\n"
    << "source = " << format_double(c.source.x()) << ", " << format_double(c.source.y()) << ", "
    << format_double(c.source.z()) << "\n"
    << "snr_db = " << format_double(c.snr_db) << "\n"
    << "noise_seed = " << c.noise_seed << "\n"
    << "sound_speed = " << format_double(c.sound_speed) << "\n"
    << "grid_spacing = " << format_double(c.grid_spacing) << "\n"
    << "include_scatterer_interior = " << (c.include_scatterer_interior ? "true" : "false") << "\n"
    << "pointset = " << pointset << "\n"
    << "pointset_path = " << c.pointset_path << "\n"
    << "pointset_seed = " << c.pointset_seed << "\n"
    << "points_per_shell = " << c.points_per_shell << "\n"
    << "shell_radii = " << list(c.shell_radii, format_double) << "\n"
    << "frequency = " << format_double(c.frequency) << "\n"
    << "sweep_start = " << format_double(c.sweep_start) << "\n"
    << "sweep_stop = " << format_double(c.sweep_stop) << "\n"
    << "sweep_step = " << format_double(c.sweep_step) << "\n\n"
    << "[methods]\n"
    << "enabled = " << list(c.methods, detail::method_token) << "\n\n"
    << "[search]\n"
    << "lambda_exp_min = " << c.lambda_exp_min << "\n"
    << "lambda_exp_max = " << c.lambda_exp_max << "\n\n"
    << "[output]\n"
    << "directory = " << c.directory << "\n"
    << "slice_axis = " << c.slice.axis << "\n"
    << "slice_offset = " << format_double(c.slice.offset) << "\n"
    << "slice_extent = " << format_double(c.slice.extent) << "\n"
    << "slice_resolution = " << format_double(c.slice.resolution) << "\n"
    << "heatmap = " << (c.heatmap ? "true" : "false") << "\n"
    << "threads = " << c.threads << "\n";
  return o.str();
}

[[nodiscard]] inline std::filesystem::path resolve(const ExperimentConfig& c, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : c.base_dir / path;
}

[[nodiscard]] inline Scenario to_scenario(const ExperimentConfig& c, std::vector<double> frequencies) {
  Scenario sc;
  sc.region_radius = c.region_radius;
  sc.scatterer_radius = c.scatterer_radius;
  sc.layout.provider = c.pointset;
  sc.layout.pointset_path = resolve(c, c.pointset_path).string();
  sc.layout.shell_radii = c.shell_radii;
  sc.layout.points_per_shell = c.points_per_shell;
  sc.layout.random_seed = c.pointset_seed;
  sc.source = c.source;
  sc.snr_db = c.snr_db;
  sc.frequencies = std::move(frequencies);
  sc.sound_speed = c.sound_speed;
  sc.noise_seed = c.noise_seed;
  sc.grid_spacing = c.grid_spacing;
  sc.include_scatterer_interior = c.include_scatterer_interior;
  return sc;
}

[[nodiscard]] inline std::vector<double> sweep_frequencies(const ExperimentConfig& c) {
  return frequency_range(c.sweep_start, c.sweep_stop, c.sweep_step);
}

// Every violation, scenario invariants included; empty means the configuration can run.
[[nodiscard]] inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> v;
  if (c.methods.empty()) v.emplace_back("[methods] enabled: no methods enabled");
  if (c.lambda_exp_min > c.lambda_exp_max) v.emplace_back("[search] lambda_exp_min exceeds lambda_exp_max");
  if (!(c.frequency > 0.0)) v.emplace_back("[scenario] frequency must be positive");
  if (!(c.sweep_step > 0.0) || !(c.sweep_start > 0.0) || c.sweep_stop < c.sweep_start)
    v.emplace_back("[scenario] sweep range must satisfy 0 < sweep_start <= sweep_stop and sweep_step > 0");
  if (c.points_per_shell <= 0) v.emplace_back("[scenario] points_per_shell must be positive");
  if (c.shell_radii.empty()) v.emplace_back("[scenario] shell_radii must list at least one radius");
  if (!(c.slice.resolution > 0.0)) v.emplace_back("[output] slice_resolution must be positive");
  if (!(c.slice.extent >= 2.0 * c.region_radius)) v.emplace_back("[output] slice_extent must cover the target region");
  if (std::abs(c.slice.offset) > c.region_radius) v.emplace_back("[output] slice plane misses the target region");
  if (c.threads < 1) v.emplace_back("[output] threads must be at least 1");
  if (c.directory.empty()) v.emplace_back("[output] directory must not be empty");
  if (c.points_per_shell > 0) {
    for (auto& s : validate(to_scenario(c, {c.frequency}))) v.push_back(std::move(s));
  }
  return v;
}

}  // namespace sfsep
