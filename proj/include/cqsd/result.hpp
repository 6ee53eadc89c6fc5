#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cqsd/algebra.hpp"
#include "cqsd/model.hpp"
#include "cqsd/observables.hpp"

namespace cqsd {

struct Provenance {
  std::string method;  // qsd, quadrature, oracle, closed
  std::uint64_t parameter_hash = 0;
  std::uint64_t seed = 0;
  std::int64_t n_traj = 0;
  std::string eom_variant;
  std::int64_t flagged = 0;  // trajectories excluded after blowing up
};

/// Reduced two-qubit dynamics on a time grid.
struct SimulationResult {
  std::vector<double> times;
  std::vector<ComplexMatrix> rho;  // trace-normalized
  std::vector<double> trace_raw;
  std::vector<double> concurrence;
  std::vector<double> concurrence_stderr;
  std::vector<double> min_eig;
  std::vector<double> trace_stderr;  // batch estimate of the raw trace error, ensembles only
  Provenance provenance;

  std::size_t size() const { return times.size(); }

  /// Appends one time point: normalizes `raw` and fills the derived scalars.
  void push(double t, const ComplexMatrix& raw, double c_stderr = 0.0, double tr_stderr = 0.0) {
    const double tr = raw.trace().real();
    ComplexMatrix r = (1.0 / tr) * raw;
    r = 0.5 * (r + r.adjoint());
    times.push_back(t);
    trace_raw.push_back(tr);
    double me = 0.0;
    clamp_to_state(r, &me, std::numeric_limits<double>::infinity());
    min_eig.push_back(me);
    concurrence.push_back(me < -ensemble_negativity_floor ? std::nan("") : cqsd::concurrence(r));
    concurrence_stderr.push_back(c_stderr);
    trace_stderr.push_back(tr_stderr);
    rho.push_back(std::move(r));
  }
};

}  // namespace cqsd
