#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cqsd/coeffs.hpp"
#include "cqsd/config.hpp"
#include "cqsd/noise.hpp"
#include "cqsd/oracle.hpp"
#include "cqsd/trajectory.hpp"

namespace cqsd {

using WarningSink = std::function<void(const std::string&)>;

/// Solved fields for (p, grid), reusing a dump from `cache_dir` when one matches.
inline CoefficientFields fields_for(const ParameterSet& p, const TimeGrid& grid, const std::string& cache_dir,
                                    const WarningSink& warn = {}) {
  std::string path;
  if (!cache_dir.empty()) {
    char name[40];
    std::snprintf(name, sizeof name, "fields_%016llx.bin", static_cast<unsigned long long>(fields_key(p, grid)));
    path = (std::filesystem::path(cache_dir) / name).string();
    if (std::filesystem::exists(path)) {
      try {
        return load_fields(path, p, grid);
      } catch (const Error& e) {
        if (warn) warn(std::string("ignoring field cache: ") + e.what());
      }
    }
  }
  CoefficientFields f = solve_coefficients(p, grid);
  if (warn)
    for (const auto& w : f.warnings) warn(w);
  if (!path.empty()) {
    std::filesystem::create_directories(cache_dir);
    save_fields(f, path);
  }
  return f;
}

/// Runs the configured method for parameters `p` (the config's own, or a sweep point).
inline SimulationResult run_method(const RunConfig& c, const ParameterSet& p, const WarningSink& warn = {}) {
  validate(p);
  const TimeGrid grid = TimeGrid::from(p);
  SimulationResult r;
  switch (c.method) {
    case Method::qsd: r = run_ensemble(p, fields_for(p, grid, c.fields_cache, warn)); break;
    case Method::quadrature:
      if (p.Gamma != 0.0) throw Error("quadrature method requires bath.Gamma = 0");
      r = quadrature_ensemble(p, fields_for(p, grid, c.fields_cache, warn), c.quadrature_nodes);
      break;
    case Method::oracle: r = pseudomode_lindblad(p, grid); break;
    case Method::closed: r = closed_system(p, grid); break;
  }
  r.provenance.parameter_hash = parameter_hash(p);
  if (c.method == Method::oracle || c.method == Method::closed) {
    r.provenance.seed = 0;
    r.provenance.n_traj = 0;
  }
  if (r.provenance.flagged > 0 && warn)
    warn(std::to_string(r.provenance.flagged) + " trajectories exceeded the blow-up norm and were excluded");
  return r;
}

inline SimulationResult run_method(const RunConfig& c, const WarningSink& warn = {}) {
  return run_method(c, c.params, warn);
}

/// Noise paths 0..n-1 exactly as run_ensemble draws them.
inline std::vector<NoiseRealization> ensemble_noise(const ParameterSet& p, const TimeGrid& grid, std::size_t n) {
  const BetaFactor factor(grid, p);
  std::vector<NoiseRealization> paths(n);
  parallel_for(n, worker_count(), [&](std::size_t k) { paths[k] = sample_noise(p.seed, k, grid, p, factor); });
  return paths;
}

}  // namespace cqsd
