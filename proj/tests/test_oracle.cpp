#include <cmath>
#include <cstdio>

#include "cqsd/csv.hpp"
#include "cqsd/oracle.hpp"
#include "support.hpp"

using namespace cqsd;

namespace {

ParameterSet collapse_revival(double gamma) {
  ParameterSet p;
  p.omega_s = 2.0;
  p.omega_c = 1.0;
  p.g = 1.0;
  p.kappa1 = p.kappa2 = 1.0;
  p.Gamma = 1.0;
  p.gamma = gamma;
  p.t_max = 5.0;
  p.dt = 0.01;
  p.initial_state = InitialStateKind::bell_psi_plus;
  return p;
}

double max_td(const SimulationResult& a, const SimulationResult& b) { return compare_results(a, b).max_trace_distance; }

ComplexMatrix free_evolution(const ParameterSet& p, double t) {
  const auto ops = build_operators(p);
  const auto psi0 = initial_state(p);
  std::vector<cplx> v(4);
  for (int q = 0; q < 4; ++q) v[q] = std::exp(-I * (ops.H_s(q, q) * t)) * psi0[q];
  return pure_state(v);
}

}  // namespace

TEST(PseudomodeLindblad, TracePreserved) {
  const auto r = pseudomode_lindblad(collapse_revival(0.5));
  ASSERT_EQ(r.size(), 501u);
  for (double tr : r.trace_raw) EXPECT_NEAR(tr, 1.0, 1e-9);
  EXPECT_EQ(r.provenance.method, "oracle");
}

TEST(PseudomodeLindblad, DecoupledQubitsEvolveFreely) {
  ParameterSet p = collapse_revival(5.0);
  p.g = 0.0;
  p.t_max = 2.0;
  p.omega_a = 1.4;
  const auto r = pseudomode_lindblad(p);
  for (std::size_t k = 0; k < r.size(); k += 20) {
    EXPECT_LE(cqsd::testing::max_diff(r.rho[k], free_evolution(p, r.times[k])), 1e-10);
    EXPECT_NEAR(r.concurrence[k], 1.0, 1e-8);
  }
}

TEST(PseudomodeLindblad, ZeroBathMatchesClosedSystem) {
  for (auto init : {InitialStateKind::bell_psi_plus, InitialStateKind::ket_ee}) {
    ParameterSet p = collapse_revival(5.0);
    p.Gamma = 0.0;
    p.initial_state = init;
    EXPECT_LE(max_td(pseudomode_lindblad(p), closed_system(p)), 1e-6) << to_string(init);
  }
}

TEST(PseudomodeLindblad, FourthOrderInDt) {
  const ParameterSet p = collapse_revival(5.0);
  const auto a = pseudomode_lindblad(p, TimeGrid::from(5.0, 0.04));
  const auto b = pseudomode_lindblad(p, TimeGrid::from(5.0, 0.02));
  const auto c = pseudomode_lindblad(p, TimeGrid::from(5.0, 0.01));
  const double q = max_td(a, b) / max_td(b, c);
  std::printf("oracle dt-halving ratio %.3f\n", q);
  EXPECT_GT(q, 12.0);
  EXPECT_LT(q, 20.0);
}

TEST(PseudomodeLindblad, HalvingProductionStepIsNegligible) {
  const ParameterSet p = collapse_revival(5.0);
  EXPECT_LE(max_td(pseudomode_lindblad(p, TimeGrid::from(5.0, 0.01)), pseudomode_lindblad(p, TimeGrid::from(5.0, 0.005))),
            1e-6);
}

TEST(PseudomodeLindblad, CutoffsRaisedToInitialExcitations) {
  ParameterSet p = collapse_revival(0.5);
  p.fock_cutoff_cavity = 1;
  p.fock_cutoff_pseudomode = 0;
  p.initial_state = InitialStateKind::ket_ee;
  const auto m = build_extended(p, true);
  EXPECT_EQ(m.n_cav, 3u);
  EXPECT_EQ(m.n_pm, 3u);
  p.initial_state = InitialStateKind::bell_psi_plus;
  const auto m1 = build_extended(p, true);
  EXPECT_EQ(m1.n_cav, 2u);
  EXPECT_EQ(m1.n_pm, 2u);
}

TEST(PseudomodeLindblad, SmallerCutoffsStillExactBelowExcitationBound) {
  // one excitation never reaches Fock level 2, so cutoff 1 and cutoff 2 agree
  ParameterSet p = collapse_revival(0.5);
  p.t_max = 2.0;
  const auto big = pseudomode_lindblad(p);
  p.fock_cutoff_cavity = p.fock_cutoff_pseudomode = 1;
  EXPECT_LE(max_td(big, pseudomode_lindblad(p)), 1e-12);
}

TEST(Leakage, CountsPopulationAboveBound) {
  ParameterSet p = collapse_revival(0.5);
  const auto m = build_extended(p, true);
  ComplexMatrix rho(m.dim(), m.dim());
  // |gg> (x) |2>_cav (x) |0>_pm has two excitations
  const std::size_t idx = 3 * m.env_dim() + 2 * m.n_pm;
  rho(idx, idx) = 0.25;
  rho(3 * m.env_dim(), 3 * m.env_dim()) = 0.75;  // ground state
  EXPECT_DOUBLE_EQ(leakage(rho, m, 2), 0.0);
  EXPECT_DOUBLE_EQ(leakage(rho, m, 1), 0.25);
}

TEST(ClosedSystem, VacuumRabiOscillation) {
  ParameterSet p;
  p.Gamma = 0.0;
  p.gamma = 0.0;
  p.kappa1 = 1.0;
  p.kappa2 = 0.0;
  p.omega_a = 1.0;
  p.omega_b = 3.7;
  p.omega_c = 1.0;
  p.g = 1.0;
  p.t_max = 2.0 * M_PI;
  p.dt = 2.0 * M_PI / 400.0;
  p.initial_state = InitialStateKind::custom;
  p.custom_amplitudes = {0.0, 1.0, 0.0, 0.0};
  const auto r = closed_system(p);
  double worst = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double pa = (r.rho[k](0, 0) + r.rho[k](1, 1)).real();
    worst = std::max(worst, std::abs(pa - std::pow(std::cos(r.times[k]), 2)));
  }
  EXPECT_LE(worst, 1e-6);
  EXPECT_NEAR((r.rho[200](0, 0) + r.rho[200](1, 1)).real(), 1.0, 1e-6);  // t = pi
}

TEST(ClosedSystem, DecoupledQubitsOnlyAcquirePhases) {
  ParameterSet p = collapse_revival(5.0);
  p.Gamma = 0.0;
  p.g = 0.0;
  p.initial_state = InitialStateKind::bell_phi_plus;
  const auto r = closed_system(p);
  for (std::size_t k = 0; k < r.size(); k += 50)
    EXPECT_LE(cqsd::testing::max_diff(r.rho[k], free_evolution(p, r.times[k])), 1e-12);
}

TEST(ClosedSystem, RejectsBath) { EXPECT_THROW(closed_system(collapse_revival(5.0)), Error); }
