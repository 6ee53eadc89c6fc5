#include <cmath>

#include "cqsd/model.hpp"
#include "support.hpp"

using namespace cqsd;

namespace {

std::vector<cplx> basis(std::size_t k) {
  std::vector<cplx> v(4);
  v[k] = 1.0;
  return v;
}

enum : std::size_t { ee = 0, eg = 1, ge = 2, gg = 3 };

}  // namespace

TEST(BuildOperators, LoweringOperatorAction) {
  ParameterSet p;
  p.kappa1 = p.kappa2 = 1.0;
  const auto ops = build_operators(p);
  const auto l_ee = ops.L.apply(basis(ee));
  EXPECT_EQ(l_ee, (std::vector<cplx>{0.0, 1.0, 1.0, 0.0}));
  EXPECT_EQ(ops.L.apply(basis(eg)), basis(gg));
  EXPECT_EQ(ops.L.apply(basis(ge)), basis(gg));
  EXPECT_EQ(ops.L.apply(basis(gg)), std::vector<cplx>(4));
}

TEST(BuildOperators, O3SignBookkeeping) {
  const auto ops = build_operators(ParameterSet{});
  EXPECT_EQ(ops.O[2].apply(basis(ee)), basis(eg));
  auto minus_gg = basis(gg);
  minus_gg[gg] = -1.0;
  EXPECT_EQ(ops.O[2].apply(basis(ge)), minus_gg);
}

TEST(BuildOperators, FreeHamiltonianDiagonal) {
  ParameterSet p;
  p.omega_a = 2.0;
  p.omega_b = 2.0;
  EXPECT_EQ(build_operators(p).H_s, ComplexMatrix::diagonal({2.0, 0.0, 0.0, -2.0}));
}

TEST(BuildOperators, StructuralIdentities) {
  ParameterSet p;
  p.kappa1 = 0.7;
  p.kappa2 = -1.3;
  p.omega_a = 1.5;
  p.omega_b = 2.5;
  const auto ops = build_operators(p);
  EXPECT_EQ(ops.O[4], ops.O[0] * ops.O[1]);
  EXPECT_EQ(ops.L, cplx(p.kappa1) * ops.O[0] + cplx(p.kappa2) * ops.O[1]);
  EXPECT_EQ(ops.L_dag, ops.L.adjoint());
  EXPECT_TRUE(is_hermitian(ops.H_s));
  const auto n = ops.O[0].adjoint() * ops.O[0] + ops.O[1].adjoint() * ops.O[1];
  EXPECT_EQ(commutator(ops.H_s, n).max_abs(), 0.0);
}

TEST(BuildOperators, Deterministic) {
  ParameterSet p;
  p.kappa1 = 0.3;
  const auto a = build_operators(p), b = build_operators(p);
  for (int j = 0; j < 5; ++j) EXPECT_EQ(a.O[j], b.O[j]);
  EXPECT_EQ(a.L, b.L);
  EXPECT_EQ(a.H_s, b.H_s);
}

TEST(InitialState, BellPsiPlus) {
  ParameterSet p;
  p.initial_state = InitialStateKind::bell_psi_plus;
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_EQ(initial_state(p), (Amplitudes{0.0, r, r, 0.0}));
}

TEST(InitialState, OtherKinds) {
  ParameterSet p;
  const double r = 1.0 / std::sqrt(2.0);
  p.initial_state = InitialStateKind::ket_ee;
  EXPECT_EQ(initial_state(p), (Amplitudes{1.0, 0.0, 0.0, 0.0}));
  p.initial_state = InitialStateKind::ket_gg;
  EXPECT_EQ(initial_state(p), (Amplitudes{0.0, 0.0, 0.0, 1.0}));
  p.initial_state = InitialStateKind::bell_phi_plus;
  EXPECT_EQ(initial_state(p), (Amplitudes{r, 0.0, 0.0, r}));
}

TEST(InitialState, CustomMatchesNamedAndRejectsBadNorm) {
  ParameterSet p;
  p.initial_state = InitialStateKind::custom;
  p.custom_amplitudes = {1.0, 0.0, 0.0, 0.0};
  ParameterSet q;
  q.initial_state = InitialStateKind::ket_ee;
  EXPECT_EQ(initial_state(p), initial_state(q));
  p.custom_amplitudes = {1.0, 1.0, 0.0, 0.0};
  EXPECT_THROW(initial_state(p), Error);
  EXPECT_THROW(validate(p), Error);
}

TEST(Validate, DomainRules) {
  auto bad = [](auto mutate) {
    ParameterSet p;
    mutate(p);
    return [p] { validate(p); };
  };
  EXPECT_NO_THROW(validate(ParameterSet{}));
  EXPECT_THROW(bad([](ParameterSet& p) { p.dt = 0.0; })(), Error);
  EXPECT_THROW(bad([](ParameterSet& p) { p.t_max = 0.001; })(), Error);
  EXPECT_THROW(bad([](ParameterSet& p) { p.n_traj = 0; })(), Error);
  EXPECT_THROW(bad([](ParameterSet& p) { p.g = -1.0; })(), Error);
  EXPECT_THROW(bad([](ParameterSet& p) { p.Gamma = -1.0; })(), Error);
  EXPECT_THROW(bad([](ParameterSet& p) { p.gamma = 0.0; })(), Error);
  EXPECT_NO_THROW(bad([](ParameterSet& p) {
    p.Gamma = 0.0;
    p.gamma = 0.0;
  })());
}

TEST(Excitations, CountsPerBasisState) {
  EXPECT_EQ(max_excitations({1.0, 0.0, 0.0, 0.0}), 2);
  EXPECT_EQ(max_excitations({0.0, 0.6, 0.8, 0.0}), 1);
  EXPECT_EQ(max_excitations({0.0, 0.0, 0.0, 1.0}), 0);
}
