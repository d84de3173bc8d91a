#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "simdim/common.hpp"
#include "simdim/exact_semigroup.hpp"
#include "simdim/measure.hpp"
#include "simdim/quad_field.hpp"
#include "simdim/sim_group.hpp"

namespace simdim {

// TOML-style value: scalars, arrays and arrays of arrays are all the config
// format needs.
struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<bool, std::int64_t, double, std::string, Array> v;
  int line = 0;

  bool is_number() const { return std::holds_alternative<std::int64_t>(v) || std::holds_alternative<double>(v); }
  double as_double(const std::string& what) const {
    if (std::holds_alternative<std::int64_t>(v)) return static_cast<double>(std::get<std::int64_t>(v));
    if (std::holds_alternative<double>(v)) return std::get<double>(v);
    throw ConfigError(what + ": expected a number (line " + std::to_string(line) + ")");
  }
  std::int64_t as_int(const std::string& what) const {
    if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
    throw ConfigError(what + ": expected an integer (line " + std::to_string(line) + ")");
  }
  bool as_bool(const std::string& what) const {
    if (std::holds_alternative<bool>(v)) return std::get<bool>(v);
    throw ConfigError(what + ": expected true/false (line " + std::to_string(line) + ")");
  }
  const std::string& as_string(const std::string& what) const {
    if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
    throw ConfigError(what + ": expected a string (line " + std::to_string(line) + ")");
  }
  const Array& as_array(const std::string& what) const {
    if (std::holds_alternative<Array>(v)) return std::get<Array>(v);
    throw ConfigError(what + ": expected an array (line " + std::to_string(line) + ")");
  }
};

using ConfigTable = std::map<std::string, ConfigValue>;

struct ParsedConfig {
  ConfigTable root;
  std::map<std::string, ConfigTable> tables;      // [section]
  std::vector<ConfigTable> atoms;                 // [[atom]]
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline ConfigValue parse_value(const std::string& raw, int line);

inline ConfigValue parse_array(const std::string& raw, int line) {
  ConfigValue out;
  out.line = line;
  ConfigValue::Array items;
  int depth = 0;
  std::string cur;
  bool closed = false;
  for (std::size_t i = 1; i < raw.size(); ++i) {
    const char c = raw[i];
    if (c == '[') {
      ++depth;
      cur += c;
    } else if (c == ']') {
      if (depth == 0) {
        closed = true;
        break;
      }
      --depth;
      cur += c;
    } else if (c == ',' && depth == 0) {
      if (!trim(cur).empty()) items.push_back(parse_value(trim(cur), line));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!closed) throw ConfigError("unterminated array (line " + std::to_string(line) + ")");
  if (!trim(cur).empty()) items.push_back(parse_value(trim(cur), line));
  out.v = std::move(items);
  return out;
}

inline ConfigValue parse_value(const std::string& raw, int line) {
  ConfigValue out;
  out.line = line;
  if (raw.empty()) throw ConfigError("empty value (line " + std::to_string(line) + ")");
  if (raw.front() == '[') return parse_array(raw, line);
  if (raw.front() == '"') {
    const auto close = raw.find('"', 1);
    if (close == std::string::npos) throw ConfigError("unterminated string (line " + std::to_string(line) + ")");
    out.v = raw.substr(1, close - 1);
    return out;
  }
  if (raw == "true" || raw == "false") {
    out.v = (raw == "true");
    return out;
  }
  try {
    std::size_t pos = 0;
    if (raw.find_first_of(".eE") == std::string::npos) {
      const std::int64_t i = std::stoll(raw, &pos);
      if (pos == raw.size()) {
        out.v = i;
        return out;
      }
    }
    const double d = std::stod(raw, &pos);
    if (pos == raw.size()) {
      out.v = d;
      return out;
    }
  } catch (...) {
  }
  throw ConfigError("cannot parse value '" + raw + "' (line " + std::to_string(line) + ")");
}

}  // namespace detail

inline ParsedConfig parse_config_text(const std::string& text) {
  ParsedConfig cfg;
  ConfigTable* target = &cfg.root;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line;
    bool in_string = false;
    for (char c : raw) {
      if (c == '"') in_string = !in_string;
      if (c == '#' && !in_string) break;
      line += c;
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.rfind("[[", 0) == 0) {
      const auto close = line.find("]]");
      if (close == std::string::npos) throw ConfigError("bad table header (line " + std::to_string(line_no) + ")");
      const std::string name = detail::trim(line.substr(2, close - 2));
      if (name != "atom") throw ConfigError("unknown array table '" + name + "' (line " + std::to_string(line_no) + ")");
      cfg.atoms.emplace_back();
      target = &cfg.atoms.back();
      continue;
    }
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) throw ConfigError("bad section header (line " + std::to_string(line_no) + ")");
      const std::string name = detail::trim(line.substr(1, close - 1));
      target = &cfg.tables[name];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value (line " + std::to_string(line_no) + ")");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key (line " + std::to_string(line_no) + ")");
    (*target)[key] = detail::parse_value(value, line_no);
  }
  return cfg;
}

// Exact scalar: integers, "p/q" fractions and the literal "golden"
// (lambda = 1/phi). Used by the exact d=1 arithmetic mode.
inline Quad parse_exact_scalar(const ConfigValue& value, const std::string& what) {
  if (std::holds_alternative<std::int64_t>(value.v)) return Quad::from_int(std::get<std::int64_t>(value.v));
  if (std::holds_alternative<std::string>(value.v)) {
    const std::string& s = std::get<std::string>(value.v);
    if (s == "golden") return Quad::golden_lambda();
    const auto slash = s.find('/');
    try {
      if (slash != std::string::npos) {
        return Quad::from_fraction(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
      }
      return Quad::from_int(std::stoll(s));
    } catch (const ExactOverflow&) {
      throw;
    } catch (...) {
      throw ConfigError(what + ": cannot parse exact value '" + s + "' (line " +
                        std::to_string(value.line) + ")");
    }
  }
  throw ConfigError(what + ": exact mode needs integers, \"p/q\" fractions or \"golden\" (line " +
                    std::to_string(value.line) + ")");
}

inline double parse_numeric_or_exact(const ConfigValue& value, const std::string& what) {
  if (value.is_number()) return value.as_double(what);
  return parse_exact_scalar(value, what).to_double();
}

struct AnalyzeConfig {
  int n_max = 8;
  double dedup_tol = 1e-9;
  double eps = 0.1;
};

struct DimensionConfig {
  std::size_t samples = 1'000'000;
  double kappa = 1e-9;
  double r_min = 1.0 / 512.0;
  double r_max = 1.0 / 16.0;
  int scales = 6;
  std::size_t anchors = 256;
  std::vector<double> local_radii;
  bool write_samples = false;
};

struct DecomposeConfig {
  int blocks = 3;
  int K = 4;
  double A = 2.0;
  double r = 0.5;
  double grid_step = 1.0;
  int paths = 100;
  int taylor_trials = 2000;
  double gauss_C = 10.0;
  double cell_mult = 64.0;
};

struct SystemConfig {
  int dimension = 1;
  bool exact = false;
  std::uint64_t seed = 1;
  int threads = 1;
  std::size_t budget = 20'000'000;
  std::vector<SimElement> atoms;
  std::vector<double> weights;
  std::optional<ExactMeasure> exact_measure;
  AnalyzeConfig analyze;
  DimensionConfig dimension_cfg;
  DecomposeConfig decompose;
  std::string raw_text;
};

namespace detail {

inline Mat rotation_from_angles(int d, const std::vector<double>& angles, int line) {
  if (d == 1) {
    if (!angles.empty()) throw ConfigError("rotation_angles: d=1 has no angles (line " + std::to_string(line) + ")");
    return Mat::Identity(1, 1);
  }
  if (d == 2) {
    if (angles.size() != 1)
      throw ConfigError("rotation_angles: d=2 needs exactly one angle (line " + std::to_string(line) + ")");
    return SimElement::rotation2d(angles[0]);
  }
  if (d == 3) {
    if (angles.size() != 3)
      throw ConfigError("rotation_angles: d=3 needs three angles (line " + std::to_string(line) + ")");
    auto rot3 = [](int axis, double t) {
      Mat m = Mat::Identity(3, 3);
      const int a = (axis + 1) % 3, b = (axis + 2) % 3;
      m(a, a) = std::cos(t);
      m(b, b) = std::cos(t);
      m(a, b) = -std::sin(t);
      m(b, a) = std::sin(t);
      return m;
    };
    return rot3(2, angles[0]) * rot3(1, angles[1]) * rot3(0, angles[2]);
  }
  throw ConfigError("rotation_angles: only d <= 3 supported; give rotation_matrix instead (line " +
                    std::to_string(line) + ")");
}

}  // namespace detail

inline SystemConfig load_system_config(const std::string& text) {
  const ParsedConfig cfg = parse_config_text(text);
  SystemConfig sys;
  sys.raw_text = text;

  auto root_get = [&](const char* key) -> const ConfigValue* {
    auto it = cfg.root.find(key);
    return it == cfg.root.end() ? nullptr : &it->second;
  };
  if (const auto* v = root_get("dimension")) sys.dimension = static_cast<int>(v->as_int("dimension"));
  if (sys.dimension < 1) throw ConfigError("dimension must be >= 1");
  if (const auto* v = root_get("arithmetic")) {
    const std::string& mode = v->as_string("arithmetic");
    if (mode == "exact") {
      sys.exact = true;
    } else if (mode != "float") {
      throw ConfigError("arithmetic must be \"float\" or \"exact\" (line " + std::to_string(v->line) + ")");
    }
  }
  if (const auto* v = root_get("seed")) sys.seed = static_cast<std::uint64_t>(v->as_int("seed"));
  if (const auto* v = root_get("threads")) sys.threads = static_cast<int>(v->as_int("threads"));
  if (const auto* v = root_get("budget")) sys.budget = static_cast<std::size_t>(v->as_int("budget"));

  if (cfg.atoms.empty()) throw ConfigError("config needs at least one [[atom]]");
  if (sys.exact && sys.dimension != 1) throw ConfigError("exact arithmetic mode requires dimension = 1");

  ExactMeasure exact;
  std::vector<std::pair<std::int64_t, std::int64_t>> weight_fractions;
  const int d = sys.dimension;
  for (const auto& atom : cfg.atoms) {
    auto get = [&](const char* key) -> const ConfigValue* {
      auto it = atom.find(key);
      return it == atom.end() ? nullptr : &it->second;
    };
    const auto* rho_v = get("rho");
    const auto* weight_v = get("weight");
    if (!rho_v || !weight_v) throw ConfigError("each [[atom]] needs rho and weight");
    const auto* trans_v = get("translation");
    if (!trans_v) throw ConfigError("each [[atom]] needs a translation array");
    const auto& trans_arr = trans_v->as_array("translation");
    if (static_cast<int>(trans_arr.size()) != d)
      throw ConfigError("translation length must match dimension (line " + std::to_string(trans_v->line) + ")");

    const double rho = parse_numeric_or_exact(*rho_v, "rho");
    if (!(rho > 0.0)) throw ConfigError("rho must be positive (line " + std::to_string(rho_v->line) + ")");
    Vec b(d);
    for (int k = 0; k < d; ++k) b[k] = parse_numeric_or_exact(trans_arr[k], "translation");

    Mat rot;
    const auto* mat_v = get("rotation_matrix");
    const auto* ang_v = get("rotation_angles");
    const bool reflect = get("reflect") ? get("reflect")->as_bool("reflect") : false;
    if (mat_v) {
      const auto& rows = mat_v->as_array("rotation_matrix");
      if (static_cast<int>(rows.size()) != d)
        throw ConfigError("rotation_matrix must have d rows (line " + std::to_string(mat_v->line) + ")");
      rot = Mat::Zero(d, d);
      for (int i = 0; i < d; ++i) {
        const auto& row = rows[i].as_array("rotation_matrix row");
        if (static_cast<int>(row.size()) != d)
          throw ConfigError("rotation_matrix rows must have d entries (line " + std::to_string(mat_v->line) + ")");
        for (int j = 0; j < d; ++j) rot(i, j) = row[j].as_double("rotation_matrix entry");
      }
    } else if (ang_v) {
      std::vector<double> angles;
      for (const auto& a : ang_v->as_array("rotation_angles")) angles.push_back(a.as_double("rotation angle"));
      rot = detail::rotation_from_angles(d, angles, ang_v->line);
    } else {
      rot = Mat::Identity(d, d);
    }
    if (reflect) {
      if (d != 1) throw ConfigError("reflect is only available for d = 1");
      rot(0, 0) = -rot(0, 0);
    }
    try {
      sys.atoms.emplace_back(rho, rot, b);
    } catch (const ConstructionError& e) {
      throw ConfigError(std::string("atom: ") + e.what());
    }
    const double w = parse_numeric_or_exact(*weight_v, "weight");
    if (!(w > 0.0)) throw ConfigError("weights must be positive (line " + std::to_string(weight_v->line) + ")");
    sys.weights.push_back(w);

    if (sys.exact) {
      ExactElement e;
      e.rho = parse_exact_scalar(*rho_v, "rho");
      e.b = parse_exact_scalar(trans_arr[0], "translation");
      e.sign = reflect ? -1 : 1;
      exact.atoms.push_back(e);
      const Quad wq = std::holds_alternative<std::string>(weight_v->v) || std::holds_alternative<std::int64_t>(weight_v->v)
                          ? parse_exact_scalar(*weight_v, "weight")
                          : Quad();
      if (wq.b != 0 || wq.c == 0)
        throw ConfigError("exact weights must be rational (line " + std::to_string(weight_v->line) + ")");
      if (wq.a == 0 && wq.c == 1)
        throw ConfigError("exact mode needs rational weights like \"1/2\" (line " +
                          std::to_string(weight_v->line) + ")");
      weight_fractions.emplace_back(wq.a, wq.c);
    }
  }

  if (sys.exact) {
    std::int64_t den = 1;
    for (const auto& [num, d0] : weight_fractions) den = std::lcm(den, d0);
    std::int64_t total = 0;
    for (const auto& [num, d0] : weight_fractions) {
      exact.weight_num.push_back(num * (den / d0));
      total += exact.weight_num.back();
    }
    if (total != den) throw ConfigError("exact weights must sum to one");
    exact.weight_den = den;
    sys.exact_measure = std::move(exact);
  }

  if (auto it = cfg.tables.find("analyze"); it != cfg.tables.end()) {
    const auto& t = it->second;
    if (auto f = t.find("n_max"); f != t.end()) sys.analyze.n_max = static_cast<int>(f->second.as_int("n_max"));
    if (auto f = t.find("dedup_tol"); f != t.end()) sys.analyze.dedup_tol = f->second.as_double("dedup_tol");
    if (auto f = t.find("eps"); f != t.end()) sys.analyze.eps = f->second.as_double("eps");
  }
  if (auto it = cfg.tables.find("dimension"); it != cfg.tables.end()) {
    const auto& t = it->second;
    auto& dc = sys.dimension_cfg;
    if (auto f = t.find("samples"); f != t.end()) dc.samples = static_cast<std::size_t>(f->second.as_int("samples"));
    if (auto f = t.find("kappa"); f != t.end()) dc.kappa = f->second.as_double("kappa");
    if (auto f = t.find("r_min"); f != t.end()) dc.r_min = f->second.as_double("r_min");
    if (auto f = t.find("r_max"); f != t.end()) dc.r_max = f->second.as_double("r_max");
    if (auto f = t.find("scales"); f != t.end()) dc.scales = static_cast<int>(f->second.as_int("scales"));
    if (auto f = t.find("anchors"); f != t.end()) dc.anchors = static_cast<std::size_t>(f->second.as_int("anchors"));
    if (auto f = t.find("write_samples"); f != t.end()) dc.write_samples = f->second.as_bool("write_samples");
    if (auto f = t.find("local_radii"); f != t.end())
      for (const auto& v : f->second.as_array("local_radii")) dc.local_radii.push_back(v.as_double("local radius"));
  }
  if (auto it = cfg.tables.find("decompose"); it != cfg.tables.end()) {
    const auto& t = it->second;
    auto& dc = sys.decompose;
    if (auto f = t.find("blocks"); f != t.end()) dc.blocks = static_cast<int>(f->second.as_int("blocks"));
    if (auto f = t.find("K"); f != t.end()) dc.K = static_cast<int>(f->second.as_int("K"));
    if (auto f = t.find("A"); f != t.end()) dc.A = f->second.as_double("A");
    if (auto f = t.find("r"); f != t.end()) dc.r = f->second.as_double("r");
    if (auto f = t.find("grid_step"); f != t.end()) dc.grid_step = f->second.as_double("grid_step");
    if (auto f = t.find("paths"); f != t.end()) dc.paths = static_cast<int>(f->second.as_int("paths"));
    if (auto f = t.find("taylor_trials"); f != t.end())
      dc.taylor_trials = static_cast<int>(f->second.as_int("taylor_trials"));
    if (auto f = t.find("gauss_C"); f != t.end()) dc.gauss_C = f->second.as_double("gauss_C");
    if (auto f = t.find("cell_mult"); f != t.end()) dc.cell_mult = f->second.as_double("cell_mult");
  }
  return sys;
}

inline FiniteMeasure config_measure(const SystemConfig& sys) {
  return FiniteMeasure(sys.atoms, sys.weights, sys.analyze.dedup_tol);
}

}  // namespace simdim
