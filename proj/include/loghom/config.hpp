#pragma once

// Experiment configuration: a key = value text format with [sections],
// a canonical serialization and its 64-bit FNV-1a hash.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "loghom/covariance.hpp"
#include "loghom/errors.hpp"
#include "loghom/pde.hpp"

namespace loghom {

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k = {"sample-field", "correctors",   "radii",    "clt-scaling",  "corrector-growth",
                                             "commutator",   "pathwise",     "two-scale", "hole-filling", "mean-value"};
  return k;
}

struct ExperimentConfig {
  std::string kind = "correctors";
  // grid; zero means the per-dimension default
  int dim = 2;
  int n = 0;
  double length = 0.0;
  CovarianceSpec cov{};
  std::optional<double> trunc_M = std::exp(4.0);
  EdgeRule edge_rule = EdgeRule::Geometric;
  double tol = 1e-10;
  int max_iter = 0;
  // radii
  double C_d = 2.0;
  double C_star = 10.0;
  double C_spade = 10.0;
  double eps_club = 0.5;
  int center_stride = 0;  // 0: side/16 sites
  // observables
  std::vector<double> scales;  // R, |x|, eps or r lists depending on kind; empty means default
  double outer_radius = 0.0;   // hole-filling / mean-value R; 0 means side_length/4
  int pilot_replicas = 8;
  // run
  int replicas = 10;
  std::uint64_t seed = 1;
  std::string out = "out";
  int threads = 1;
  bool write_fields = false;

  int grid_n() const {
    if (n > 0) return n;
    return dim == 1 ? 4096 : dim == 2 ? 128 : 32;
  }
  double grid_length() const { return length > 0.0 ? length : static_cast<double>(grid_n()); }
  int stride() const { return center_stride > 0 ? center_stride : std::max(1, grid_n() / 16); }
  double outer() const { return outer_radius > 0.0 ? outer_radius : grid_length() / 4.0; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigError, "invalid number for " + key + ": '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigError, "invalid integer for " + key + ": '" + v + "'");
  }
}

/// Accepts plain numbers and reciprocals written as 1/k.
inline double parse_scale(const std::string& key, const std::string& v) {
  const auto slash = v.find('/');
  if (slash == std::string::npos) return parse_double(key, v);
  return parse_double(key, trim(v.substr(0, slash))) / parse_double(key, trim(v.substr(slash + 1)));
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

/// Sets one "section.key" (or bare key) to a string value.
inline void set_config_value(ExperimentConfig& c, const std::string& raw_key, const std::string& raw_value) {
  std::string key = detail::trim(raw_key);
  if (const auto dot = key.find('.'); dot != std::string::npos) key = key.substr(dot + 1);
  for (char& ch : key) {
    if (ch == '-') ch = '_';
  }
  const std::string v = detail::trim(raw_value);
  using detail::parse_double;
  using detail::parse_int;
  if (key == "kind" || key == "experiment") {
    c.kind = v;
  } else if (key == "dim") {
    c.dim = static_cast<int>(parse_int(key, v));
  } else if (key == "n") {
    c.n = static_cast<int>(parse_int(key, v));
  } else if (key == "length") {
    c.length = parse_double(key, v);
  } else if (key == "cov_family" || key == "family") {
    try {
      c.cov.family = parse_covariance_family(v);
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigError, e.what());
    }
  } else if (key == "amplitude") {
    c.cov.amplitude = parse_double(key, v);
  } else if (key == "corr_length") {
    c.cov.corr_length = parse_double(key, v);
  } else if (key == "holder_gamma") {
    c.cov.holder_gamma = parse_double(key, v);
  } else if (key == "trunc_M") {
    if (v == "none" || v == "off") {
      c.trunc_M.reset();
    } else if (v.rfind("e^", 0) == 0) {
      c.trunc_M = std::exp(parse_double(key, v.substr(2)));
    } else {
      c.trunc_M = parse_double(key, v);
    }
  } else if (key == "edge_rule") {
    try {
      c.edge_rule = parse_edge_rule(v);
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigError, e.what());
    }
  } else if (key == "tol") {
    c.tol = parse_double(key, v);
  } else if (key == "max_iter") {
    c.max_iter = static_cast<int>(parse_int(key, v));
  } else if (key == "C_d") {
    c.C_d = parse_double(key, v);
  } else if (key == "C_star") {
    c.C_star = parse_double(key, v);
  } else if (key == "C_spade") {
    c.C_spade = parse_double(key, v);
  } else if (key == "eps_club") {
    c.eps_club = parse_double(key, v);
  } else if (key == "center_stride") {
    c.center_stride = static_cast<int>(parse_int(key, v));
  } else if (key == "scales") {
    c.scales.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (!item.empty()) c.scales.push_back(detail::parse_scale(key, item));
    }
  } else if (key == "outer_radius") {
    c.outer_radius = parse_double(key, v);
  } else if (key == "pilot_replicas") {
    c.pilot_replicas = static_cast<int>(parse_int(key, v));
  } else if (key == "replicas") {
    c.replicas = static_cast<int>(parse_int(key, v));
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(parse_int(key, v));
  } else if (key == "out") {
    c.out = v;
  } else if (key == "threads") {
    c.threads = static_cast<int>(parse_int(key, v));
  } else if (key == "write_fields") {
    c.write_fields = (v == "1" || v == "true" || v == "yes");
  } else {
    throw Error(ErrorKind::ConfigError, "unknown config key '" + raw_key + "'");
  }
}

inline void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::ConfigError, m); };
  bool known = false;
  for (const auto& k : experiment_kinds()) known = known || k == c.kind;
  if (!known) fail("unknown experiment kind '" + c.kind + "'");
  if (c.dim < 1 || c.dim > 3) fail("dim must be 1, 2 or 3");
  const int n = c.grid_n();
  if (n < 2 || (n & (n - 1)) != 0) fail("n must be a power of two >= 2");
  if (!(c.grid_length() > 0.0)) fail("length must be positive");
  if (c.cov.amplitude < 0.0 || !(c.cov.corr_length > 0.0)) fail("covariance parameters must be positive");
  if (c.trunc_M && *c.trunc_M < 1.0) fail("trunc_M must be >= 1");
  if (!(c.tol > 0.0)) fail("tol must be positive");
  if (c.max_iter < 0) fail("max_iter must be >= 0");
  if (!(c.C_d > 1.0) || !(c.C_star > 0.0) || !(c.C_spade > 0.0)) fail("radius constants must be positive (C_d > 1)");
  if (!(c.eps_club > 0.0 && c.eps_club <= 1.0)) fail("eps_club must lie in (0, 1]");
  if (c.center_stride < 0 || (c.center_stride > 0 && n % c.center_stride != 0)) fail("center_stride must divide n");
  for (double s : c.scales) {
    if (!(s > 0.0)) fail("scales must be positive");
  }
  if (c.replicas < 0) fail("replicas must be >= 0");
  if (c.pilot_replicas < 2) fail("pilot_replicas must be >= 2");
  if (c.threads < 1) fail("threads must be >= 1");
}

/// Canonical "section.key = value" lines (the hashed form).
inline std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
  using detail::format_double;
  std::string scales;
  for (std::size_t i = 0; i < c.scales.size(); ++i) scales += (i ? "," : "") + format_double(c.scales[i]);
  return {
      {"experiment.kind", c.kind},
      {"grid.dim", std::to_string(c.dim)},
      {"grid.n", std::to_string(c.grid_n())},
      {"grid.length", format_double(c.grid_length())},
      {"covariance.family", to_string(c.cov.family)},
      {"covariance.amplitude", format_double(c.cov.amplitude)},
      {"covariance.corr_length", format_double(c.cov.corr_length)},
      {"covariance.holder_gamma", format_double(c.cov.holder_gamma)},
      {"coefficient.trunc_M", c.trunc_M ? format_double(*c.trunc_M) : std::string("none")},
      {"coefficient.edge_rule", to_string(c.edge_rule)},
      {"solver.tol", format_double(c.tol)},
      {"solver.max_iter", std::to_string(c.max_iter)},
      {"radii.C_d", format_double(c.C_d)},
      {"radii.C_star", format_double(c.C_star)},
      {"radii.C_spade", format_double(c.C_spade)},
      {"radii.eps_club", format_double(c.eps_club)},
      {"radii.center_stride", std::to_string(c.stride())},
      {"observables.scales", scales},
      {"observables.outer_radius", format_double(c.outer())},
      {"observables.pilot_replicas", std::to_string(c.pilot_replicas)},
      {"run.replicas", std::to_string(c.replicas)},
      {"run.seed", std::to_string(c.seed)},
  };
}

inline std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  std::string section;
  for (const auto& [k, v] : config_entries(c)) {
    const auto dot = k.find('.');
    const std::string s = k.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += k.substr(dot + 1) + " = " + v + "\n";
  }
  return out;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the physical configuration; output location and thread count excluded.
inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a64(serialize_config(c)); }

inline ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig c = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find_first_of("#;"); h != std::string::npos) line = line.substr(0, h);
    line = detail::trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(c, line.substr(0, eq), line.substr(eq + 1));
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig c = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(c));
}

}  // namespace loghom
