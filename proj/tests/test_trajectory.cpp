#include <cmath>
#include <cstdlib>

#include "cqsd/csv.hpp"
#include "cqsd/oracle.hpp"
#include "cqsd/trajectory.hpp"
#include "support.hpp"

using namespace cqsd;

namespace {

ParameterSet base(double gamma_strength, InitialStateKind init, double t_max, double dt) {
  ParameterSet p;
  p.omega_s = 2.0;
  p.omega_c = 1.0;
  p.g = 1.0;
  p.kappa1 = p.kappa2 = 1.0;
  p.Gamma = gamma_strength;
  p.gamma = 5.0;
  p.t_max = t_max;
  p.dt = dt;
  p.initial_state = init;
  p.eom_variant = EomVariant::consistent;
  return p;
}

double max_td(const SimulationResult& a, const SimulationResult& b) { return compare_results(a, b).max_trace_distance; }

class ScopedThreads {
 public:
  explicit ScopedThreads(const char* value) {
    if (const char* old = std::getenv("CASCADE_QSD_THREADS")) old_ = old;
    setenv("CASCADE_QSD_THREADS", value, 1);
  }
  ~ScopedThreads() {
    if (old_.empty())
      unsetenv("CASCADE_QSD_THREADS");
    else
      setenv("CASCADE_QSD_THREADS", old_.c_str(), 1);
  }

 private:
  std::string old_;
};

}  // namespace

TEST(Propagate, UncoupledQubitsOnlyAcquirePhases) {
  ParameterSet p = base(0.0, InitialStateKind::bell_psi_plus, 3.0, 0.01);
  p.g = 0.0;
  p.omega_a = 1.3;
  p.omega_b = 2.9;
  p.n_traj = 20;
  const auto r = run_ensemble(p);
  const auto ops = build_operators(p);
  const auto psi0 = initial_state(p);
  for (std::size_t k = 0; k < r.size(); k += 50) {
    std::vector<cplx> v(4);
    for (int q = 0; q < 4; ++q) v[q] = std::exp(-I * (ops.H_s(q, q) * r.times[k])) * psi0[q];
    EXPECT_LE(cqsd::testing::max_diff(r.rho[k], pure_state(v)), 1e-10) << "t=" << r.times[k];
    EXPECT_NEAR(r.concurrence[k], 1.0, 1e-8);
  }
}

TEST(Propagate, SecondOrderInDtForFixedNoise) {
  // fixed z0, y = 0: the trajectory is a deterministic ODE solution
  const ParameterSet p = base(0.0, InitialStateKind::bell_phi_plus, 2.0, 0.01);
  const cplx z0(0.7, -0.4);
  Amplitudes end[3];
  const double dts[3] = {0.04, 0.02, 0.01};
  for (int r = 0; r < 3; ++r) {
    const auto grid = TimeGrid::from(p.t_max, dts[r]);
    const auto f = solve_coefficients(p, grid);
    const NoiseRealization noise{z_star_from(z0, grid, p), std::vector<cplx>(grid.size()), z0};
    end[r] = propagate(initial_state(p), f, noise, build_operators(p)).psi.back();
  }
  double d01 = 0.0, d12 = 0.0;
  for (int q = 0; q < 4; ++q) {
    d01 = std::max(d01, std::abs(end[0][q] - end[1][q]));
    d12 = std::max(d12, std::abs(end[1][q] - end[2][q]));
  }
  EXPECT_GT(d01 / d12, 3.0);
  EXPECT_LT(d01 / d12, 5.0);
}

TEST(Propagate, RejectsNoiseOnAnotherGrid) {
  const ParameterSet p = base(0.0, InitialStateKind::bell_psi_plus, 0.5, 0.01);
  const auto f = solve_coefficients(p, TimeGrid::from(p));
  const NoiseRealization noise{std::vector<cplx>(10), std::vector<cplx>(10), {}};
  EXPECT_THROW(propagate(initial_state(p), f, noise, build_operators(p)), Error);
}

TEST(Propagate, FlagsBlownUpTrajectories) {
  // a huge Bargmann draw drives the linear equation far off unit norm (L is nilpotent, so growth is polynomial in z0)
  const ParameterSet p = base(0.0, InitialStateKind::ket_ee, 2.0, 0.01);
  const auto grid = TimeGrid::from(p);
  const auto f = solve_coefficients(p, grid);
  const cplx z0(5000.0, 0.0);
  const NoiseRealization noise{z_star_from(z0, grid, p), std::vector<cplx>(grid.size()), z0};
  const auto tr = propagate(initial_state(p), f, noise, build_operators(p));
  EXPECT_TRUE(tr.flagged);
  EnsembleAccumulator acc(grid.size());
  acc.absorb(0, tr);
  EXPECT_EQ(acc.flagged(), 1u);
  EXPECT_EQ(acc.count(), 0u);
}

TEST(RunEnsemble, DeterministicAndSingleTrajectory) {
  ParameterSet p = base(1.0, InitialStateKind::bell_psi_plus, 1.0, 0.01);
  p.n_traj = 1;
  const auto a = run_ensemble(p), b = run_ensemble(p);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a.rho[k], b.rho[k]);
    EXPECT_TRUE(std::isnan(a.concurrence_stderr[k]));
  }
  EXPECT_EQ(a.provenance.method, "qsd");
  EXPECT_EQ(a.provenance.n_traj, 1);
}

TEST(RunEnsemble, IndependentOfWorkerCount) {
  ParameterSet p = base(1.0, InitialStateKind::bell_psi_plus, 1.0, 0.01);
  p.n_traj = 300;
  const auto f = solve_coefficients(p, TimeGrid::from(p));
  SimulationResult one, four;
  {
    ScopedThreads t("1");
    one = run_ensemble(p, f);
  }
  {
    ScopedThreads t("4");
    four = run_ensemble(p, f);
  }
  for (std::size_t k = 0; k < one.size(); ++k) {
    EXPECT_EQ(one.rho[k], four.rho[k]);
    EXPECT_EQ(one.concurrence_stderr[k], four.concurrence_stderr[k]);
  }
}

TEST(RunEnsemble, MeanTraceIsOneWithinErrors) {
  ParameterSet p = base(1.0, InitialStateKind::bell_psi_plus, 3.0, 0.01);
  p.n_traj = 2000;
  const auto r = run_ensemble(p);
  for (std::size_t k = 1; k < r.size(); k += 25)
    EXPECT_LE(std::abs(r.trace_raw[k] - 1.0), 5.0 * r.trace_stderr[k]) << "t=" << r.times[k];
}

TEST(Quadrature, GaussHermiteIntegratesMoments) {
  const auto gh = gauss_hermite(20);
  double m0 = 0, m2 = 0, m4 = 0;
  for (std::size_t k = 0; k < 20; ++k) {
    const double x = gh.nodes[k], w = gh.weights[k];
    m0 += w;
    m2 += w * x * x;
    m4 += w * x * x * x * x;
  }
  EXPECT_NEAR(m0, std::sqrt(M_PI), 1e-12);
  EXPECT_NEAR(m2, std::sqrt(M_PI) / 2.0, 1e-12);
  EXPECT_NEAR(m4, 3.0 * std::sqrt(M_PI) / 4.0, 1e-12);
}

TEST(Quadrature, RejectsBath) {
  const ParameterSet p = base(0.5, InitialStateKind::bell_psi_plus, 1.0, 0.01);
  EXPECT_THROW(quadrature_ensemble(p), Error);
}

TEST(Quadrature, NodeCountConverged) {
  const ParameterSet p = base(0.0, InitialStateKind::ket_ee, 3.0, 0.01);
  const auto f = solve_coefficients(p, TimeGrid::from(p));
  EXPECT_LE(max_td(quadrature_ensemble(p, f, 20), quadrature_ensemble(p, f, 30)), 1e-6);
}

TEST(Quadrature, AgreesWithMonteCarloWithinErrors) {
  ParameterSet p = base(0.0, InitialStateKind::bell_psi_plus, 2.0, 0.01);
  p.n_traj = 4000;
  const auto f = solve_coefficients(p, TimeGrid::from(p));
  const auto mc = run_ensemble(p, f);
  const auto q = quadrature_ensemble(p, f);
  for (std::size_t k = 20; k < mc.size(); k += 20)
    EXPECT_LE(std::abs(mc.concurrence[k] - q.concurrence[k]), 4.0 * mc.concurrence_stderr[k]) << "t=" << mc.times[k];
}

TEST(Quadrature, MatchesClosedSystemForAllInitialStates) {
  // second-order discretization error at dt = 0.01
  for (auto init : {InitialStateKind::bell_psi_plus, InitialStateKind::bell_phi_plus, InitialStateKind::ket_ee}) {
    const ParameterSet p = base(0.0, init, 3.0, 0.01);
    EXPECT_LE(max_td(quadrature_ensemble(p), closed_system(p)), 2e-3) << to_string(init);
  }
}

TEST(Quadrature, OnlyTheConsistentVariantMatchesForTwoExcitations) {
  ParameterSet p = base(0.0, InitialStateKind::ket_ee, 3.0, 0.01);
  p.eom_variant = EomVariant::symmetrized;
  EXPECT_GT(max_td(quadrature_ensemble(p), closed_system(p)), 0.1);
}
