#pragma once

// Exact references. The OU bath is replaced by a damped pseudomode c (frequency 0,
// decay 2*gamma) coupled to the cavity a with lambda = g*sqrt(Gamma*gamma/2):
//
//   H = H_s + w_c a^dag a + g (L a^dag + L^dag a) + lambda (a c^dag + a^dag c)
//   d rho/dt = -i[H, rho] + 2 gamma (c rho c^dag - {c^dag c, rho}/2)
//
// Hilbert space ordering: qubits (x) cavity (x) pseudomode.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "cqsd/algebra.hpp"
#include "cqsd/model.hpp"
#include "cqsd/noise.hpp"
#include "cqsd/observables.hpp"
#include "cqsd/result.hpp"

namespace cqsd {

inline constexpr double oracle_leakage_tol = 1e-8;
inline constexpr double oracle_monotone_tol = 1e-8;
inline constexpr double oracle_trace_tol = 1e-9;
// RK4 truncation shows up at first order in the zero eigenvalues of a pure start
// state; this bound matches the self-convergence target of the oracle.
inline constexpr double oracle_min_eig_tol = 1e-6;
inline constexpr int oracle_substeps = 4;

namespace detail {

inline ComplexMatrix annihilation(std::size_t levels) {
  ComplexMatrix a(levels, levels);
  for (std::size_t n = 1; n < levels; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

inline ComplexMatrix number_op(std::size_t levels) {
  ComplexMatrix n(levels, levels);
  for (std::size_t k = 0; k < levels; ++k) n(k, k) = static_cast<double>(k);
  return n;
}

/// rows of a dense matrix as (column, value) lists; zero entries dropped
struct RowList {
  std::vector<std::vector<std::pair<std::size_t, cplx>>> rows;
  explicit RowList(const ComplexMatrix& m) : rows(m.rows()) {
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j)
        if (m(i, j) != cplx{}) rows[i].emplace_back(j, m(i, j));
  }
};

}  // namespace detail

/// Operators of the extended qubits (x) cavity (x) pseudomode model.
struct ExtendedModel {
  std::size_t n_cav = 3;  // Fock levels kept
  std::size_t n_pm = 3;
  ComplexMatrix H;          // full Hamiltonian
  ComplexMatrix c;          // pseudomode annihilation
  ComplexMatrix excitation; // total excitation number
  double decay = 0.0;       // pseudomode decay rate 2*gamma

  std::size_t dim() const { return 4 * n_cav * n_pm; }
  std::size_t env_dim() const { return n_cav * n_pm; }
};

/// Excitation count carried by an initial qubit state.
inline int initial_excitations(const ParameterSet& p) { return max_excitations(initial_state(p)); }

inline ExtendedModel build_extended(const ParameterSet& p, bool with_pseudomode) {
  const int need = initial_excitations(p);
  ExtendedModel m;
  m.n_cav = static_cast<std::size_t>(std::max(p.fock_cutoff_cavity, need)) + 1;
  m.n_pm = with_pseudomode ? static_cast<std::size_t>(std::max(p.fock_cutoff_pseudomode, need)) + 1 : 1;
  const OperatorSet ops = build_operators(p);
  const auto Iq = ComplexMatrix::identity(4);
  const auto Ic = ComplexMatrix::identity(m.n_cav);
  const auto Ip = ComplexMatrix::identity(m.n_pm);
  const auto a1 = detail::annihilation(m.n_cav);
  const auto c1 = detail::annihilation(m.n_pm);
  const auto a = kron(kron(Iq, a1), Ip);
  m.c = kron(kron(Iq, Ic), c1);
  const auto L = kron(kron(ops.L, Ic), Ip);
  const double lambda = p.g * std::sqrt(p.Gamma * p.gamma / 2.0);
  m.H = kron(kron(ops.H_s, Ic), Ip) + p.omega_c * kron(kron(Iq, detail::number_op(m.n_cav)), Ip) +
        p.g * (L * a.adjoint() + L.adjoint() * a);
  if (with_pseudomode) m.H += lambda * (a * m.c.adjoint() + a.adjoint() * m.c);
  m.decay = with_pseudomode ? 2.0 * p.gamma : 0.0;
  const auto sp = pauli::sigma_plus(), sm = pauli::sigma_minus(), i2 = pauli::id2();
  const auto nq = kron(sp * sm, i2) + kron(i2, sp * sm);
  m.excitation = kron(kron(nq, Ic), Ip) + kron(kron(Iq, detail::number_op(m.n_cav)), Ip) +
                 kron(kron(Iq, Ic), detail::number_op(m.n_pm));
  return m;
}

inline std::vector<cplx> embed_vacuum(const Amplitudes& psi, std::size_t env_dim) {
  std::vector<cplx> v(4 * env_dim);
  for (std::size_t q = 0; q < 4; ++q) v[q * env_dim] = psi[q];
  return v;
}

/// Population in basis states carrying more than `max_exc` excitations.
inline double leakage(const ComplexMatrix& rho, const ExtendedModel& m, int max_exc) {
  double s = 0.0;
  for (std::size_t i = 0; i < rho.rows(); ++i)
    if (m.excitation(i, i).real() > max_exc + 0.5) s += rho(i, i).real();
  return s;
}

/// Pseudomode Lindblad evolution (RK4 at dt/4), reduced to the qubits.
inline SimulationResult pseudomode_lindblad(const ParameterSet& p, const TimeGrid& grid) {
  validate(p);
  const ExtendedModel m = build_extended(p, true);
  const std::size_t d = m.dim();
  const int exc0 = initial_excitations(p);
  // H_eff = H - (i/2) decay c^dag c ;  drho = -i(H_eff rho - rho H_eff^dag) + decay c rho c^dag
  const ComplexMatrix Heff = m.H - (0.5 * m.decay) * I * (m.c.adjoint() * m.c);
  const detail::RowList hrow(-I * Heff);
  const detail::RowList crow(m.c);

  auto rhs = [&](const ComplexMatrix& rho) {
    ComplexMatrix out(d, d);
    // A rho + rho A^dag with A = -i H_eff
    for (std::size_t i = 0; i < d; ++i)
      for (const auto& [k, v] : hrow.rows[i])
        for (std::size_t j = 0; j < d; ++j) out(i, j) += v * rho(k, j);
    for (std::size_t j = 0; j < d; ++j)
      for (const auto& [k, v] : hrow.rows[j]) {
        const cplx w = std::conj(v);
        for (std::size_t i = 0; i < d; ++i) out(i, j) += rho(i, k) * w;
      }
    if (m.decay != 0.0)
      for (std::size_t i = 0; i < d; ++i)
        for (const auto& [k, v] : crow.rows[i])
          for (std::size_t j = 0; j < d; ++j)
            for (const auto& [l, w] : crow.rows[j]) out(i, j) += m.decay * v * rho(k, l) * std::conj(w);
    return out;
  };

  const auto v0 = embed_vacuum(initial_state(p), m.env_dim());
  ComplexMatrix rho = ComplexMatrix::outer(v0, v0);
  const double h = grid.dt / oracle_substeps;
  const std::size_t eig_stride = std::max<std::size_t>(1, grid.n_steps / 20);
  double exc_prev = (m.excitation * rho).trace().real();

  SimulationResult r;
  auto check = [&](std::size_t step) {
    const double t = grid.t(step);
    auto fail = [&](const char* what, double value) {
      std::ostringstream os;
      os << "pseudomode_lindblad: " << what << " at t=" << t << " (" << value << ")";
      throw Error(os.str());
    };
    const double tr = rho.trace().real();
    if (!std::isfinite(tr)) fail("non-finite state", tr);
    if (std::abs(tr - 1.0) > oracle_trace_tol) fail("trace drift", tr - 1.0);
    const double leak = leakage(rho, m, exc0);
    if (leak > oracle_leakage_tol) fail("population leaked above the Fock cutoff", leak);
    const double exc = (m.excitation * rho).trace().real();
    if (exc > exc_prev + oracle_monotone_tol) fail("excitation number increased", exc - exc_prev);
    exc_prev = exc;
    if (step % eig_stride == 0 || step == grid.n_steps) {
      ComplexMatrix hs = 0.5 * (rho + rho.adjoint());
      const double me = herm_eig(hs).values.front();
      if (me < -oracle_min_eig_tol) fail("negative eigenvalue", me);
    }
  };

  for (std::size_t step = 0;; ++step) {
    check(step);
    r.push(grid.t(step), trace_out_environment(rho, m.env_dim()));
    if (step == grid.n_steps) break;
    for (int s = 0; s < oracle_substeps; ++s) {
      const auto k1 = rhs(rho);
      const auto k2 = rhs(rho + (0.5 * h) * k1);
      const auto k3 = rhs(rho + (0.5 * h) * k2);
      const auto k4 = rhs(rho + h * k3);
      rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  r.provenance.method = "oracle";
  r.provenance.eom_variant = std::string(to_string(p.eom_variant));
  return r;
}

inline SimulationResult pseudomode_lindblad(const ParameterSet& p) { return pseudomode_lindblad(p, TimeGrid::from(p)); }

/// Exact unitary evolution of qubits (x) cavity for Gamma = 0.
inline SimulationResult closed_system(const ParameterSet& p, const TimeGrid& grid) {
  validate(p);
  if (p.Gamma != 0.0) throw Error("closed_system: requires Gamma = 0");
  const ExtendedModel m = build_extended(p, false);
  const HermEig e = herm_eig(m.H);
  const auto v0 = embed_vacuum(initial_state(p), m.env_dim());
  const std::size_t d = m.dim();
  std::vector<cplx> coef(d);
  for (std::size_t k = 0; k < d; ++k) {
    cplx s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += std::conj(e.vectors(i, k)) * v0[i];
    coef[k] = s;
  }
  const ComplexMatrix H = m.H;
  double energy0 = 0.0;
  SimulationResult r;
  std::vector<cplx> v(d);
  for (std::size_t step = 0; step <= grid.n_steps; ++step) {
    const double t = grid.t(step);
    std::fill(v.begin(), v.end(), cplx{});
    for (std::size_t k = 0; k < d; ++k) {
      const cplx ck = coef[k] * std::exp(-I * (e.values[k] * t));
      for (std::size_t i = 0; i < d; ++i) v[i] += e.vectors(i, k) * ck;
    }
    const auto hv = H.apply(v);
    double energy = 0.0;
    for (std::size_t i = 0; i < d; ++i) energy += (std::conj(v[i]) * hv[i]).real();
    if (step == 0) energy0 = energy;
    if (std::abs(energy - energy0) > 1e-10 * std::max(1.0, std::abs(energy0))) {
      std::ostringstream os;
      os << "closed_system: energy drift " << energy - energy0 << " at t=" << t;
      throw Error(os.str());
    }
    r.push(t, trace_out_environment(ComplexMatrix::outer(v, v), m.env_dim()));
  }
  r.provenance.method = "closed";
  return r;
}

inline SimulationResult closed_system(const ParameterSet& p) { return closed_system(p, TimeGrid::from(p)); }

}  // namespace cqsd
