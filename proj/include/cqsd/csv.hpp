#pragma once

// RESULT CSV: `#` provenance lines, a header row, then one row per time:
//   t, rho_re_i_j, rho_im_i_j (0 <= i <= j <= 3), trace_raw, concurrence,
//   concurrence_stderr, min_eig
// Numbers use %.17g so that reading back is bit-exact.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cqsd/algebra.hpp"
#include "cqsd/config.hpp"
#include "cqsd/observables.hpp"
#include "cqsd/result.hpp"

namespace cqsd {

inline constexpr const char* artifact_version = "1.0.0";

inline std::vector<std::string> result_columns() {
  std::vector<std::string> cols{"t"};
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) {
      cols.push_back("rho_re_" + std::to_string(i) + "_" + std::to_string(j));
      cols.push_back("rho_im_" + std::to_string(i) + "_" + std::to_string(j));
    }
  for (const char* c : {"trace_raw", "concurrence", "concurrence_stderr", "min_eig"}) cols.emplace_back(c);
  return cols;
}

namespace detail {

inline void put(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

inline void write_header_row(std::ostream& os, const std::vector<std::string>& cols) {
  for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << cols[k];
  os << '\n';
}

inline std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char ch = line[k];
    if (quoted) {
      if (ch == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline double to_double(const std::string& s, int line) {
  const auto v = parse_double(s);
  if (v) return *v;
  if (s == "nan" || s == "-nan") return std::nan("");
  throw Error("csv line " + std::to_string(line) + ": not a number: '" + s + "'");
}

}  // namespace detail

inline void write_provenance(std::ostream& os, const Provenance& p) {
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016" PRIx64, p.parameter_hash);
  os << "# cascade-qsd " << artifact_version << '\n'
     << "# method=" << p.method << " parameter_hash=" << hash << " seed=" << p.seed << " n_traj=" << p.n_traj
     << " eom_variant=" << p.eom_variant << " flagged=" << p.flagged << '\n';
}

inline void write_result_csv(std::ostream& os, const SimulationResult& r) {
  write_provenance(os, r.provenance);
  detail::write_header_row(os, result_columns());
  for (std::size_t k = 0; k < r.size(); ++k) {
    detail::put(os, r.times[k]);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i; j < 4; ++j) {
        os << ',';
        detail::put(os, r.rho[k](i, j).real());
        os << ',';
        detail::put(os, r.rho[k](i, j).imag());
      }
    for (double v : {r.trace_raw[k], r.concurrence[k], r.concurrence_stderr[k], r.min_eig[k]}) {
      os << ',';
      detail::put(os, v);
    }
    os << '\n';
  }
}

/// Reads a RESULT CSV. Provenance is restored from the `#` header where present.
inline SimulationResult read_result_csv(std::istream& is) {
  SimulationResult r;
  const auto cols = result_columns();
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "method") r.provenance.method = val;
        else if (key == "eom_variant") r.provenance.eom_variant = val;
        else if (key == "parameter_hash") r.provenance.parameter_hash = std::stoull(val, nullptr, 16);
        else if (key == "seed") r.provenance.seed = std::stoull(val);
        else if (key == "n_traj") r.provenance.n_traj = std::stoll(val);
        else if (key == "flagged") r.provenance.flagged = std::stoll(val);
      }
      continue;
    }
    const auto fields = detail::split_row(line);
    if (!have_header) {
      if (fields != cols) throw Error("csv line " + std::to_string(line_no) + ": unexpected header");
      have_header = true;
      continue;
    }
    if (fields.size() != cols.size())
      throw Error("csv line " + std::to_string(line_no) + ": expected " + std::to_string(cols.size()) + " fields");
    std::size_t f = 0;
    r.times.push_back(detail::to_double(fields[f++], line_no));
    ComplexMatrix rho(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i; j < 4; ++j) {
        const double re = detail::to_double(fields[f++], line_no);
        const double im = detail::to_double(fields[f++], line_no);
        rho(i, j) = cplx(re, im);
        if (i != j) rho(j, i) = cplx(re, -im);
      }
    r.rho.push_back(std::move(rho));
    r.trace_raw.push_back(detail::to_double(fields[f++], line_no));
    r.concurrence.push_back(detail::to_double(fields[f++], line_no));
    r.concurrence_stderr.push_back(detail::to_double(fields[f++], line_no));
    r.min_eig.push_back(detail::to_double(fields[f++], line_no));
    r.trace_stderr.push_back(0.0);
  }
  if (!have_header) throw Error("csv: no header row");
  return r;
}

inline std::vector<std::string> sweep_columns() {
  return {"sweep_value", "t", "concurrence", "concurrence_stderr", "trace_raw"};
}

inline void write_sweep_rows(std::ostream& os, double value, const SimulationResult& r) {
  for (std::size_t k = 0; k < r.size(); ++k) {
    detail::put(os, value);
    for (double v : {r.times[k], r.concurrence[k], r.concurrence_stderr[k], r.trace_raw[k]}) {
      os << ',';
      detail::put(os, v);
    }
    os << '\n';
  }
}

struct CompareReport {
  double max_trace_distance = 0.0;
  double mean_trace_distance = 0.0;
  double max_concurrence_diff = 0.0;
  double worst_time = 0.0;
};

/// Trace-distance comparison on the common time points. One grid may refine
/// the other; every time of the coarser result must appear in the finer one.
inline CompareReport compare_results(const SimulationResult& a, const SimulationResult& b) {
  const bool swap = a.size() > b.size();
  const SimulationResult& coarse = swap ? b : a;
  const SimulationResult& fine = swap ? a : b;
  CompareReport rep;
  if (coarse.size() == 0) return rep;
  std::size_t f = 0;
  for (std::size_t k = 0; k < coarse.size(); ++k) {
    const double t = coarse.times[k];
    const double tol = 1e-9 * std::max(1.0, std::abs(t));
    while (f < fine.size() && fine.times[f] < t - tol) ++f;
    if (f == fine.size() || std::abs(fine.times[f] - t) > tol)
      throw Error("compare: time grids differ (t=" + std::to_string(t) + " has no counterpart)");
    const double d = trace_distance(coarse.rho[k], fine.rho[f]);
    rep.mean_trace_distance += d;
    if (d > rep.max_trace_distance) {
      rep.max_trace_distance = d;
      rep.worst_time = t;
    }
    const double dc = std::abs(coarse.concurrence[k] - fine.concurrence[f]);
    if (!std::isnan(dc)) rep.max_concurrence_diff = std::max(rep.max_concurrence_diff, dc);
  }
  rep.mean_trace_distance /= static_cast<double>(coarse.size());
  return rep;
}

}  // namespace cqsd
