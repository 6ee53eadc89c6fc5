#pragma once

// Flat run configuration:
//
//   # comment
//   model.g = 1
//   bath.gamma = 5
//   sim.method = qsd
//
// One `section.key = value` per line.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cqsd/algebra.hpp"
#include "cqsd/coeffs.hpp"
#include "cqsd/model.hpp"

namespace cqsd {

enum class Method { qsd, oracle, closed, quadrature };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::qsd: return "qsd";
    case Method::oracle: return "oracle";
    case Method::closed: return "closed";
    case Method::quadrature: return "quadrature";
  }
  return "?";
}

inline std::optional<Method> method_from_string(std::string_view s) {
  for (auto m : {Method::qsd, Method::oracle, Method::closed, Method::quadrature})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct SweepSpec {
  std::string parameter;  // g, gamma, Gamma, omega_s
  std::vector<double> values;
};

struct RunConfig {
  ParameterSet params;
  Method method = Method::qsd;
  std::optional<SweepSpec> sweep;
  std::string output_path = "result.csv";
  std::size_t quadrature_nodes = 20;
  std::string fields_cache;  // directory for solved fields; empty disables caching
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline const std::vector<std::string>& required_config_keys() {
  static const std::vector<std::string> keys = {
      "model.g",      "model.kappa1", "model.kappa2", "model.omega_s",  "bath.Gamma",         "bath.gamma",
      "sim.t_max",    "sim.dt",       "sim.n_traj",   "sim.seed",       "sim.initial_state",  "sim.method"};
  return keys;
}

inline const std::vector<std::string>& optional_config_keys() {
  static const std::vector<std::string> keys = {
      "model.omega_cavity", "model.omega_a", "model.omega_b", "sim.eom_variant", "sim.amplitudes",
      "sim.quadrature_nodes", "oracle.fock_cutoff_cavity", "oracle.fock_cutoff_pseudomode", "sweep.parameter",
      "sweep.values", "output.path", "output.fields_cache"};
  return keys;
}

inline bool is_sweepable(std::string_view name) {
  return name == "g" || name == "gamma" || name == "Gamma" || name == "omega_s";
}

/// Sets the named sweep parameter on `p`.
inline void apply_sweep_value(ParameterSet& p, std::string_view name, double v) {
  if (name == "g") p.g = v;
  else if (name == "gamma") p.gamma = v;
  else if (name == "Gamma") p.Gamma = v;
  else if (name == "omega_s") p.omega_s = v;
  else throw ConfigError("unknown sweep parameter '" + std::string(name) + "'");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
  s = trim(s);
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Entry {
  std::string value;
  int line = 0;
};

}  // namespace detail

inline RunConfig parse_config(std::string_view text) {
  std::map<std::string, detail::Entry> kv;
  const auto& req = required_config_keys();
  const auto& opt = optional_config_keys();
  int line_no = 0;
  for (std::string_view line : detail::split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    auto err = [&](const std::string& what) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + what);
    };
    if (eq == std::string_view::npos) err("expected 'section.key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty() || key.find('.') == std::string::npos || key.find(' ') != std::string::npos)
      err("malformed key '" + key + "'");
    if (value.empty()) err("missing value for '" + key + "'");
    if (std::find(req.begin(), req.end(), key) == req.end() && std::find(opt.begin(), opt.end(), key) == opt.end())
      err("unknown key '" + key + "'");
    if (kv.count(key)) err("duplicate key '" + key + "' (first set on line " + std::to_string(kv[key].line) + ")");
    kv[key] = {value, line_no};
  }

  std::vector<std::string> missing;
  for (const auto& k : req)
    if (!kv.count(k)) missing.push_back(k);
  if (!missing.empty()) {
    std::string msg = "missing required keys:";
    for (const auto& k : missing) msg += " " + k;
    throw ConfigError(msg);
  }

  auto where = [&](const std::string& key) {
    return "line " + std::to_string(kv.at(key).line) + ": " + key;
  };
  auto num = [&](const std::string& key) {
    const auto v = detail::parse_double(kv.at(key).value);
    if (!v || !std::isfinite(*v)) throw ConfigError(where(key) + ": expected a finite number");
    return *v;
  };
  auto domain = [&](const std::string& key, bool ok, const char* rule) {
    if (!ok) throw ConfigError(where(key) + ": " + rule);
  };

  RunConfig c;
  ParameterSet& p = c.params;
  p.g = num("model.g");
  domain("model.g", p.g >= 0.0, "must be >= 0");
  p.kappa1 = num("model.kappa1");
  p.kappa2 = num("model.kappa2");
  p.omega_s = num("model.omega_s");
  if (kv.count("model.omega_cavity")) p.omega_c = num("model.omega_cavity");
  if (kv.count("model.omega_a")) p.omega_a = num("model.omega_a");
  if (kv.count("model.omega_b")) p.omega_b = num("model.omega_b");
  p.Gamma = num("bath.Gamma");
  domain("bath.Gamma", p.Gamma >= 0.0, "must be >= 0");
  p.gamma = num("bath.gamma");
  domain("bath.gamma", p.gamma >= 0.0, "must be >= 0");
  domain("bath.gamma", !(p.Gamma > 0.0) || p.gamma > 0.0, "must be > 0 when bath.Gamma > 0");
  p.dt = num("sim.dt");
  domain("sim.dt", p.dt > 0.0, "must be > 0");
  p.t_max = num("sim.t_max");
  domain("sim.t_max", p.t_max >= p.dt, "must be >= sim.dt");
  {
    const auto n = detail::parse_int<std::int64_t>(kv.at("sim.n_traj").value);
    if (!n) throw ConfigError(where("sim.n_traj") + ": expected an integer");
    p.n_traj = *n;
    domain("sim.n_traj", p.n_traj >= 1, "must be >= 1");
  }
  {
    const auto s = detail::parse_int<std::uint64_t>(kv.at("sim.seed").value);
    if (!s) throw ConfigError(where("sim.seed") + ": expected an unsigned 64-bit integer");
    p.seed = *s;
  }
  {
    const auto k = initial_state_from_string(kv.at("sim.initial_state").value);
    if (!k) throw ConfigError(where("sim.initial_state") + ": expected bell_psi_plus, bell_phi_plus, ket_ee, ket_gg or custom");
    p.initial_state = *k;
  }
  if (kv.count("sim.amplitudes")) {
    const auto parts = detail::split(kv.at("sim.amplitudes").value, ',');
    if (parts.size() != 8) throw ConfigError(where("sim.amplitudes") + ": expected 8 numbers (re, im of 4 amplitudes)");
    for (int q = 0; q < 4; ++q) {
      const auto re = detail::parse_double(parts[2 * q]), im = detail::parse_double(parts[2 * q + 1]);
      if (!re || !im) throw ConfigError(where("sim.amplitudes") + ": expected numbers");
      p.custom_amplitudes[q] = cplx(*re, *im);
    }
  }
  if (p.initial_state == InitialStateKind::custom) {
    if (!kv.count("sim.amplitudes")) throw ConfigError("sim.amplitudes is required when sim.initial_state = custom");
    double n2 = 0.0;
    for (auto a : p.custom_amplitudes) n2 += std::norm(a);
    domain("sim.amplitudes", std::abs(n2 - 1.0) <= 1e-12, "amplitudes must have unit norm");
  }
  {
    const auto m = method_from_string(kv.at("sim.method").value);
    if (!m) throw ConfigError(where("sim.method") + ": expected qsd, oracle, closed or quadrature");
    c.method = *m;
  }
  if (kv.count("sim.eom_variant")) {
    const auto v = eom_variant_from_string(kv.at("sim.eom_variant").value);
    if (!v) throw ConfigError(where("sim.eom_variant") + ": expected as_printed, symmetrized or consistent");
    p.eom_variant = *v;
  }
  if (kv.count("sim.quadrature_nodes")) {
    const auto n = detail::parse_int<std::size_t>(kv.at("sim.quadrature_nodes").value);
    if (!n || *n < 1 || *n > 64) throw ConfigError(where("sim.quadrature_nodes") + ": expected an integer in 1..64");
    c.quadrature_nodes = *n;
  }
  for (const char* key : {"oracle.fock_cutoff_cavity", "oracle.fock_cutoff_pseudomode"}) {
    if (!kv.count(key)) continue;
    const auto n = detail::parse_int<int>(kv.at(key).value);
    if (!n || *n < 0 || *n > 8) throw ConfigError(where(key) + ": expected an integer in 0..8");
    (std::string_view(key).ends_with("cavity") ? p.fock_cutoff_cavity : p.fock_cutoff_pseudomode) = *n;
  }
  if (kv.count("sweep.parameter") != kv.count("sweep.values"))
    throw ConfigError("sweep.parameter and sweep.values must be given together");
  if (kv.count("sweep.parameter")) {
    SweepSpec s;
    s.parameter = kv.at("sweep.parameter").value;
    domain("sweep.parameter", is_sweepable(s.parameter), "expected g, gamma, Gamma or omega_s");
    for (auto part : detail::split(kv.at("sweep.values").value, ',')) {
      const auto v = detail::parse_double(part);
      if (!v || !std::isfinite(*v)) throw ConfigError(where("sweep.values") + ": expected finite numbers");
      ParameterSet probe = p;
      apply_sweep_value(probe, s.parameter, *v);
      try {
        validate(probe);
      } catch (const Error& e) {
        throw ConfigError(where("sweep.values") + ": value " + detail::fmt_double(*v) + " rejected (" + e.what() + ")");
      }
      s.values.push_back(*v);
    }
    c.sweep = std::move(s);
  }
  if (kv.count("output.path")) c.output_path = kv.at("output.path").value;
  if (kv.count("output.fields_cache")) c.fields_cache = kv.at("output.fields_cache").value;
  try {
    validate(p);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

/// Canonical text form; parse_config(dump_config(c)) reproduces c.
inline std::string dump_config(const RunConfig& c) {
  const ParameterSet& p = c.params;
  using detail::fmt_double;
  std::ostringstream os;
  os << "model.omega_s = " << fmt_double(p.omega_s) << '\n';
  if (p.omega_a) os << "model.omega_a = " << fmt_double(*p.omega_a) << '\n';
  if (p.omega_b) os << "model.omega_b = " << fmt_double(*p.omega_b) << '\n';
  os << "model.omega_cavity = " << fmt_double(p.omega_c) << '\n'
     << "model.g = " << fmt_double(p.g) << '\n'
     << "model.kappa1 = " << fmt_double(p.kappa1) << '\n'
     << "model.kappa2 = " << fmt_double(p.kappa2) << '\n'
     << "bath.Gamma = " << fmt_double(p.Gamma) << '\n'
     << "bath.gamma = " << fmt_double(p.gamma) << '\n'
     << "sim.t_max = " << fmt_double(p.t_max) << '\n'
     << "sim.dt = " << fmt_double(p.dt) << '\n'
     << "sim.n_traj = " << p.n_traj << '\n'
     << "sim.seed = " << p.seed << '\n'
     << "sim.initial_state = " << to_string(p.initial_state) << '\n';
  if (p.initial_state == InitialStateKind::custom) {
    os << "sim.amplitudes = ";
    for (int q = 0; q < 4; ++q)
      os << (q ? ", " : "") << fmt_double(p.custom_amplitudes[q].real()) << ", "
         << fmt_double(p.custom_amplitudes[q].imag());
    os << '\n';
  }
  os << "sim.method = " << to_string(c.method) << '\n'
     << "sim.eom_variant = " << to_string(p.eom_variant) << '\n'
     << "sim.quadrature_nodes = " << c.quadrature_nodes << '\n'
     << "oracle.fock_cutoff_cavity = " << p.fock_cutoff_cavity << '\n'
     << "oracle.fock_cutoff_pseudomode = " << p.fock_cutoff_pseudomode << '\n';
  if (c.sweep) {
    os << "sweep.parameter = " << c.sweep->parameter << '\n' << "sweep.values = ";
    for (std::size_t k = 0; k < c.sweep->values.size(); ++k) os << (k ? ", " : "") << fmt_double(c.sweep->values[k]);
    os << '\n';
  }
  os << "output.path = " << c.output_path << '\n';
  if (!c.fields_cache.empty()) os << "output.fields_cache = " << c.fields_cache << '\n';
  return os.str();
}

/// Hash of the canonical physical parameters, recorded in output provenance.
inline std::uint64_t parameter_hash(const ParameterSet& p) {
  RunConfig c;
  c.params = p;
  c.output_path = "-";
  return fnv1a(dump_config(c));
}

}  // namespace cqsd
