#pragma once

// Two qubits (A, B) sharing one cavity mode that leaks into an Ornstein-Uhlenbeck
// bath. Global basis order of the two-qubit space: 0=|ee>, 1=|eg>, 2=|ge>, 3=|gg>,
// first letter is qubit A. "1" in the usual |10>, |11> notation means excited.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "cqsd/algebra.hpp"

namespace cqsd {

enum class InitialStateKind { bell_psi_plus, bell_phi_plus, ket_ee, ket_gg, custom };

/// Which transcription of the coefficient equations to integrate.
///  - as_printed: the equations exactly as published, including the halved
///    rotation rates of n3, n4, m3, m4 and N5/6 carrying a leading factor i.
///  - symmetrized: as_printed with the n3/n4/m3/m4 rotation rates set to the free
///    rotation of O3 = sz_A s-_B and O4 = s-_A sz_B under H_s.
///  - consistent: symmetrized, with N5/6 read as the bare kernel integrals and the
///    s'=t boundary values re-derived from the consistency condition (all four
///    panels pick up their commutator bracket). This is the variant that matches
///    the pseudomode reference in the two-excitation sector.
enum class EomVariant { as_printed, symmetrized, consistent };

using Amplitudes = std::array<cplx, 4>;

struct ParameterSet {
  double omega_s = 2.0;
  std::optional<double> omega_a;  // defaults to omega_s
  std::optional<double> omega_b;  // defaults to omega_s
  double omega_c = 1.0;
  double g = 1.0;
  double kappa1 = 1.0;
  double kappa2 = 1.0;
  double Gamma = 1.0;
  double gamma = 5.0;
  double t_max = 5.0;
  double dt = 0.01;
  std::int64_t n_traj = 1000;
  std::uint64_t seed = 1;
  InitialStateKind initial_state = InitialStateKind::bell_psi_plus;
  Amplitudes custom_amplitudes{};
  EomVariant eom_variant = EomVariant::consistent;
  int fock_cutoff_cavity = 2;
  int fock_cutoff_pseudomode = 2;

  double freq_a() const { return omega_a.value_or(omega_s); }
  double freq_b() const { return omega_b.value_or(omega_s); }
};

inline std::string_view to_string(InitialStateKind k) {
  switch (k) {
    case InitialStateKind::bell_psi_plus: return "bell_psi_plus";
    case InitialStateKind::bell_phi_plus: return "bell_phi_plus";
    case InitialStateKind::ket_ee: return "ket_ee";
    case InitialStateKind::ket_gg: return "ket_gg";
    case InitialStateKind::custom: return "custom";
  }
  return "?";
}

inline std::optional<InitialStateKind> initial_state_from_string(std::string_view s) {
  for (auto k : {InitialStateKind::bell_psi_plus, InitialStateKind::bell_phi_plus, InitialStateKind::ket_ee,
                 InitialStateKind::ket_gg, InitialStateKind::custom})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::string_view to_string(EomVariant v) {
  switch (v) {
    case EomVariant::as_printed: return "as_printed";
    case EomVariant::symmetrized: return "symmetrized";
    case EomVariant::consistent: return "consistent";
  }
  return "?";
}

inline std::optional<EomVariant> eom_variant_from_string(std::string_view s) {
  for (auto v : {EomVariant::as_printed, EomVariant::symmetrized, EomVariant::consistent})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Throws Error naming the first violated constraint.
inline void validate(const ParameterSet& p) {
  auto fail = [](const std::string& what) { throw Error("invalid parameters: " + what); };
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(p.omega_s) || !finite(p.omega_c) || !finite(p.freq_a()) || !finite(p.freq_b()))
    fail("frequencies must be finite");
  if (!finite(p.g) || p.g < 0.0) fail("g must be >= 0");
  if (!finite(p.kappa1) || !finite(p.kappa2)) fail("kappa1/kappa2 must be finite");
  if (!finite(p.Gamma) || p.Gamma < 0.0) fail("Gamma must be >= 0");
  if (!finite(p.gamma) || p.gamma < 0.0) fail("gamma must be >= 0");
  if (p.Gamma > 0.0 && !(p.gamma > 0.0)) fail("gamma must be > 0 when Gamma > 0");
  if (!finite(p.dt) || !(p.dt > 0.0)) fail("dt must be > 0");
  if (!finite(p.t_max) || p.t_max < p.dt) fail("t_max must be >= dt");
  if (p.n_traj < 1) fail("n_traj must be >= 1");
  if (p.fock_cutoff_cavity < 0 || p.fock_cutoff_pseudomode < 0) fail("Fock cutoffs must be >= 0");
  if (p.initial_state == InitialStateKind::custom) {
    double norm2 = 0.0;
    for (const auto& a : p.custom_amplitudes) norm2 += std::norm(a);
    if (std::abs(norm2 - 1.0) > 1e-12) fail("custom initial amplitudes must have unit norm");
  }
}

namespace pauli {
inline ComplexMatrix sigma_minus() { return {{0.0, 0.0}, {1.0, 0.0}}; }  // |g><e| with e=0, g=1
inline ComplexMatrix sigma_plus() { return {{0.0, 1.0}, {0.0, 0.0}}; }
inline ComplexMatrix sigma_z() { return ComplexMatrix::diagonal({1.0, -1.0}); }
inline ComplexMatrix sigma_y() { return {{0.0, -I}, {I, 0.0}}; }
inline ComplexMatrix id2() { return ComplexMatrix::identity(2); }
}  // namespace pauli

struct OperatorSet {
  std::array<ComplexMatrix, 5> O;  // O[0]..O[4] hold O1..O5
  ComplexMatrix L;
  ComplexMatrix L_dag;
  ComplexMatrix H_s;
};

inline OperatorSet build_operators(const ParameterSet& p) {
  using namespace pauli;
  const auto smA = kron(sigma_minus(), id2());
  const auto smB = kron(id2(), sigma_minus());
  const auto szA = kron(sigma_z(), id2());
  const auto szB = kron(id2(), sigma_z());
  OperatorSet ops;
  ops.O = {smA, smB, szA * smB, smA * szB, smA * smB};
  ops.L = cplx(p.kappa1) * smA + cplx(p.kappa2) * smB;
  ops.L_dag = ops.L.adjoint();
  ops.H_s = cplx(0.5 * p.freq_a()) * szA + cplx(0.5 * p.freq_b()) * szB;
  return ops;
}

inline Amplitudes initial_state(const ParameterSet& p) {
  const double r = 1.0 / std::sqrt(2.0);
  switch (p.initial_state) {
    case InitialStateKind::bell_psi_plus: return {0.0, r, r, 0.0};
    case InitialStateKind::bell_phi_plus: return {r, 0.0, 0.0, r};
    case InitialStateKind::ket_ee: return {1.0, 0.0, 0.0, 0.0};
    case InitialStateKind::ket_gg: return {0.0, 0.0, 0.0, 1.0};
    case InitialStateKind::custom: {
      double norm2 = 0.0;
      for (const auto& a : p.custom_amplitudes) norm2 += std::norm(a);
      if (std::abs(norm2 - 1.0) > 1e-12) throw Error("initial_state: custom amplitudes are not normalized");
      return p.custom_amplitudes;
    }
  }
  throw Error("initial_state: unknown kind");
}

/// Number of excitations of each basis state |ee>, |eg>, |ge>, |gg>.
inline constexpr std::array<int, 4> qubit_excitations{2, 1, 1, 0};

inline int max_excitations(const Amplitudes& psi) {
  int m = 0;
  for (std::size_t i = 0; i < 4; ++i)
    if (std::abs(psi[i]) > 0.0) m = std::max(m, qubit_excitations[i]);
  return m;
}

}  // namespace cqsd
