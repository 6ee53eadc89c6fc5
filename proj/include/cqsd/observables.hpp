#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>

#include "cqsd/algebra.hpp"
#include "cqsd/model.hpp"

namespace cqsd {

/// Clamp threshold for slightly negative eigenvalues of ensemble estimates.
inline constexpr double ensemble_negativity_floor = 0.02;

/// Nearest physical state: negative eigenvalues down to -floor are set to zero
/// and the trace restored to one. Returns the raw minimum eigenvalue via `min_eig`.
inline ComplexMatrix clamp_to_state(const ComplexMatrix& rho, double* min_eig = nullptr,
                                    double floor = ensemble_negativity_floor) {
  const HermEig e = herm_eig(rho);
  if (min_eig) *min_eig = e.values.front();
  if (e.values.front() < -floor) throw Error("clamp_to_state: eigenvalue below the negativity floor");
  if (e.values.front() >= 0.0) return rho;
  double tr = 0.0;
  for (double v : e.values) tr += std::max(v, 0.0);
  return spectral_map(e, [tr](double v) { return cplx(std::max(v, 0.0) / tr); });
}

/// Wootters concurrence, evaluated through the Hermitian form sqrt(rho) rho~ sqrt(rho),
/// which has the same spectrum as rho rho~.
inline double concurrence(const ComplexMatrix& rho_in) {
  if (rho_in.rows() != 4 || rho_in.cols() != 4) throw Error("concurrence: expects a 4x4 density matrix");
  require_hermitian(rho_in, "concurrence", 1e-10);
  const ComplexMatrix rho = clamp_to_state(rho_in);
  const auto yy = kron(pauli::sigma_y(), pauli::sigma_y());
  const ComplexMatrix tilde = yy * rho.conj() * yy;
  const ComplexMatrix root = sqrt_psd(rho);
  ComplexMatrix r = root * tilde * root;
  // re-symmetrize rounding so the Hermitian eigensolver accepts it
  r = 0.5 * (r + r.adjoint());
  const HermEig e = herm_eig(r);
  std::array<double, 4> s{};
  for (int k = 0; k < 4; ++k) s[k] = std::sqrt(std::max(e.values[3 - k], 0.0));
  return std::max(0.0, s[0] - s[1] - s[2] - s[3]);
}

/// Concurrence of a noisy estimate (e.g. a sub-batch mean): always clamped, never rejected.
inline double concurrence_of_estimate(const ComplexMatrix& rho) {
  return concurrence(clamp_to_state(rho, nullptr, std::numeric_limits<double>::infinity()));
}

inline double trace_distance(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error("trace_distance: dimension mismatch");
  ComplexMatrix d = a - b;
  d = 0.5 * (d + d.adjoint());
  const HermEig e = herm_eig(d);
  double s = 0.0;
  for (double v : e.values) s += std::abs(v);
  return 0.5 * s;
}

struct StateScalars {
  std::array<double, 4> populations{};
  double coherence_l1 = 0.0;
};

inline StateScalars state_scalars(const ComplexMatrix& rho) {
  StateScalars s;
  for (std::size_t i = 0; i < 4; ++i) {
    s.populations[i] = rho(i, i).real();
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) s.coherence_l1 += std::abs(rho(i, j));
  }
  return s;
}

/// <phi|rho|phi> for a pure target.
inline double fidelity_to(const ComplexMatrix& rho, std::span<const cplx> phi) {
  const auto v = rho.apply(phi);
  cplx f = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) f += std::conj(phi[i]) * v[i];
  return f.real();
}

inline ComplexMatrix pure_state(std::span<const cplx> psi) { return ComplexMatrix::outer(psi, psi); }

/// Partial trace of a (4*env) x (4*env) operator over the trailing factor.
inline ComplexMatrix trace_out_environment(const ComplexMatrix& full, std::size_t env_dim) {
  if (full.rows() != 4 * env_dim) throw Error("trace_out_environment: dimension mismatch");
  ComplexMatrix r(4, 4);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) {
      cplx s = 0.0;
      for (std::size_t e = 0; e < env_dim; ++e) s += full(a * env_dim + e, b * env_dim + e);
      r(a, b) = s;
    }
  return r;
}

}  // namespace cqsd
