#pragma once

// Coefficient hierarchy of the two O-operators
//
//   O_z(t,s) = sum_{j<=4} n_j(t,s) O_j + i int_0^t ds' [n5(t,s,s') z*_{s'} + n6(t,s,s') y*_{s'}] O5
//   O_y(t,s) = sum_{j<=4} m_j(t,s) O_j + i int_0^t ds' [m5(t,s,s') z*_{s'} + m6(t,s,s') y*_{s'}] O5
//
// and of their kernel-weighted integrals. Internally the solver keeps the bare
// integrals
//
//   N_j(t) = int_0^t alpha(t,s) n_j(t,s) ds        M_j(t) = int_0^t beta(t,s) m_j(t,s) ds
//   Nt5(t,s') = int_0^t alpha(t,s) n5(t,s,s') ds   Mt5(t,s') = int_0^t beta(t,s) m5(t,s,s') ds
//
// (likewise Nt6, Mt6), so that Obar_z = sum N_j O_j + i int ds' [Nt5 z* + Nt6 y*] O5.
// How the evolution equations consume Nt5/6 depends on EomVariant: the printed
// equations attach an extra factor i to them, the consistent variant does not.
//
// Time marching: Heun in t on the full triangle (s, s' <= t), with the constant
// free rotations integrated exactly (integrating factor). After every stage
// the new s=t row comes from the initial conditions and the new s'=t column from
// the boundary conditions; the endpoint self-references of the trapezoid
// quadratures are solved in closed form.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cqsd/algebra.hpp"
#include "cqsd/model.hpp"
#include "cqsd/noise.hpp"

namespace cqsd {

/// Relative change of a field value within one step (beyond its free rotation)
/// above which the grid is reported as too coarse.
inline constexpr double step_change_warning = 1.0;

inline std::size_t tri_index(std::size_t i, std::size_t k) { return i * (i + 1) / 2 + k; }

struct CoefficientFields {
  ParameterSet params;
  TimeGrid grid;
  // two-index fields n_j(t_i, s_k), m_j(t_i, s_k), k <= i, packed by tri_index
  std::array<std::vector<cplx>, 4> n;
  std::array<std::vector<cplx>, 4> m;
  // N_j(t_i), M_j(t_i)
  std::array<std::vector<cplx>, 4> N;
  std::array<std::vector<cplx>, 4> M;
  // bare panel integrals: N56[0]=Nt5, N56[1]=Nt6, M56[0]=Mt5, M56[1]=Mt6 at (t_i, s'_l), l <= i
  std::array<std::vector<cplx>, 2> N56;
  std::array<std::vector<cplx>, 2> M56;
  std::vector<std::string> warnings;

  std::size_t steps() const { return grid.n_steps; }
  cplx n_at(int j, std::size_t i, std::size_t k) const { return n[j][tri_index(i, k)]; }
  cplx m_at(int j, std::size_t i, std::size_t k) const { return m[j][tri_index(i, k)]; }
  cplx N5(std::size_t i, std::size_t l) const { return N56[0][tri_index(i, l)]; }
  cplx N6(std::size_t i, std::size_t l) const { return N56[1][tri_index(i, l)]; }
  cplx M5(std::size_t i, std::size_t l) const { return M56[0][tri_index(i, l)]; }
  cplx M6(std::size_t i, std::size_t l) const { return M56[1][tri_index(i, l)]; }
};

/// Read-only view of the solver after a completed step, handed to observers.
struct SolverSnapshot {
  std::size_t index;  // current time index i, t = i*dt
  std::size_t stride;
  const ParameterSet* params;
  const TimeGrid* grid;
  // panels n5, n6, m5, m6 at (t_i, s_k, s'_l) = panel[f][k*stride + l], k,l <= i
  std::array<const cplx*, 4> panel;
  std::array<const cplx*, 4> n;  // n_j(t_i, s_k), k <= i
  std::array<const cplx*, 4> m;
  std::array<cplx, 4> N;
  std::array<cplx, 4> M;
  std::array<const cplx*, 2> N56;  // Nt5/Nt6(t_i, s'_l)
  std::array<const cplx*, 2> M56;
};

using SolverObserver = std::function<void(const SolverSnapshot&)>;

namespace detail {

struct VariantRules {
  bool half_rotation;    // n3, n4, m3, m4 rotate at i*omega/2
  cplx panel_factor;     // factor multiplying Nt5/6, Mt5/6 wherever the PDEs use N5/6, M5/6
  bool full_brackets;    // n6 and m5 boundaries carry their commutator bracket
};

inline VariantRules rules_for(EomVariant v) {
  switch (v) {
    case EomVariant::as_printed: return {true, I, false};
    case EomVariant::symmetrized: return {false, I, false};
    case EomVariant::consistent: return {false, 1.0, true};
  }
  return {false, 1.0, true};
}

/// Right-hand sides of the evolution equations, pointwise.
struct Rates {
  VariantRules rules;
  double wa = 0, wb = 0, k1 = 0, k2 = 0;

  explicit Rates(const ParameterSet& p)
      : rules(rules_for(p.eom_variant)), wa(p.freq_a()), wb(p.freq_b()), k1(p.kappa1), k2(p.kappa2) {}

  // free rotation rate of O1..O4 (j = 0..3)
  cplx rot(int j) const {
    const double w = (j == 0 || j == 3) ? wa : wb;
    const bool halved = rules.half_rotation && (j == 2 || j == 3);
    return I * (halved ? 0.5 * w : w);
  }
  cplx panel_rot() const { return I * (wa + wb); }

  // d/dt of the four two-index coefficients of one O-operator (x = n or m).
  // X is the (variant-scaled) N5 or N6 value at (t, s).
  void two_index(const cplx* x, const std::array<cplx, 4>& N, cplx X, cplx* dx, bool with_rotation = true) const {
    const cplx x1 = x[0], x2 = x[1], x3 = x[2], x4 = x[3];
    const cplx N1 = N[0], N2 = N[1], N3 = N[2], N4 = N[3];
    const cplx src = -0.5 * I * X;
    dx[0] = k1 * N1 * x1 + k1 * N4 * x4 - k2 * N1 * x3 + k2 * N3 * x1 + k2 * N3 * x4 + k2 * N4 * x3 + src * k2;
    dx[1] = -k1 * N2 * x4 + k1 * N3 * x4 + k1 * N4 * x2 + k1 * N4 * x3 + k2 * N2 * x2 + k2 * N3 * x3 + src * k1;
    dx[2] = -k1 * N2 * x1 + k1 * N3 * x1 + k1 * N4 * x2 + k1 * N4 * x3 + k2 * N2 * x3 + k2 * N3 * x2 + src * k1;
    dx[3] = k1 * N1 * x4 + k1 * N4 * x1 - k2 * N1 * x2 + k2 * N3 * x1 + k2 * N3 * x4 + k2 * N4 * x2 + src * k2;
    if (with_rotation)
      for (int j = 0; j < 4; ++j) dx[j] += rot(j) * x[j];
  }

  // d/dt of a panel value p = n5/n6 (x = n) or m5/m6 (x = m) at (t, s, s');
  // X is the scaled N5 or N6 at (t, s'), x the two-index coefficients at (t, s).
  cplx panel(cplx p, const std::array<cplx, 4>& N, cplx X, const cplx* x, bool with_rotation = true) const {
    return (panel_diag(N) + (with_rotation ? panel_rot() : cplx{})) * p + X * bracket(x);
  }
  cplx panel_diag(const std::array<cplx, 4>& N) const { return k1 * (N[0] + N[3]) + k2 * (N[1] + N[2]); }
  cplx bracket(const cplx* x) const { return k1 * (x[0] - x[3]) + k2 * (x[1] - x[2]); }
};

enum Panel { P_n5 = 0, P_n6 = 1, P_m5 = 2, P_m6 = 3 };

class HierarchySolver {
 public:
  HierarchySolver(const ParameterSet& p, const TimeGrid& grid)
      : p_(p), grid_(grid), T_(grid.n_steps), W_(grid.n_steps + 1), rules_(rules_for(p.eom_variant)), rates_(p) {
    wa_ = p.freq_a();
    wb_ = p.freq_b();
    k1_ = p.kappa1;
    k2_ = p.kappa2;
    for (int j = 0; j < 4; ++j) erot_[j] = std::exp(rates_.rot(j) * grid.dt);
    epanel_ = std::exp(rates_.panel_rot() * grid.dt);
    for (auto* s : {&cur_, &prd_}) {
      for (auto& f : s->two) f.assign(W_, 0.0);
      for (auto& f : s->panel) f.assign(W_ * W_, 0.0);
      for (auto& f : s->P) f.assign(W_, 0.0);
      for (auto& f : s->Q) f.assign(W_, 0.0);
    }
    out_.params = p;
    out_.grid = grid;
    const std::size_t tri = W_ * (W_ + 1) / 2;
    for (int j = 0; j < 4; ++j) {
      out_.n[j].assign(tri, 0.0);
      out_.m[j].assign(tri, 0.0);
      out_.N[j].assign(W_, 0.0);
      out_.M[j].assign(W_, 0.0);
    }
    for (int f = 0; f < 2; ++f) {
      out_.N56[f].assign(tri, 0.0);
      out_.M56[f].assign(tri, 0.0);
    }
  }

  CoefficientFields solve(const SolverObserver& observer) {
    complete(cur_, 0);
    record(0, observer);
    const double h = grid_.dt;
    for (std::size_t i = 0; i < T_; ++i) {
      const double t = grid_.t(i);
      // predictor: prd = E (cur + h R(cur)), E the exact free rotation over one step
      rhs_apply(cur_, i, t, [&](std::size_t idx, cplx f, cplx E, const std::vector<cplx>& src,
                                std::vector<cplx>& dst) { dst[idx] = E * (src[idx] + h * f); }, prd_);
      complete(prd_, i + 1);
      // corrector: cur = (E cur + prd)/2 + h/2 R(prd)
      track_change_begin(i + 1);
      rhs_apply(prd_, i, grid_.t(i + 1),
                [&](std::size_t idx, cplx f, cplx E, const std::vector<cplx>& src, std::vector<cplx>& dst) {
                  const cplx old = dst[idx];
                  dst[idx] = 0.5 * (E * old + src[idx]) + 0.5 * h * f;
                  max_change_ = std::max(max_change_, std::abs(dst[idx] - E * old) / std::max(1.0, std::abs(old)));
                }, cur_);
      complete(cur_, i + 1);
      check_finite(i + 1);
      record(i + 1, observer);
    }
    if (max_step_change_ > step_change_warning) {
      std::ostringstream os;
      os << "coefficient fields change by up to " << max_step_change_ << " (relative) per step at t=" << worst_time_
         << "; consider dt <= " << grid_.dt * step_change_warning / max_step_change_;
      out_.warnings.push_back(os.str());
    }
    return std::move(out_);
  }

 private:
  struct State {
    std::array<std::vector<cplx>, 8> two;     // n1..n4, m1..m4 over s_k, k <= i
    std::array<std::vector<cplx>, 4> panel;   // n5, n6, m5, m6 over (s_k, s'_l)
    std::array<cplx, 4> N{}, M{};
    std::array<std::vector<cplx>, 2> P;       // Nt5, Nt6 over s'_l
    std::array<std::vector<cplx>, 2> Q;       // Mt5, Mt6 over s'_l
  };

  // Applies `op(index, derivative, src_field, dst_field)` to every interior node
  // (s, s' <= t_i) with derivatives evaluated on state `s` at time t.
  template <class Op>
  void rhs_apply(State& s, std::size_t i, double /*t*/, Op&& op, State& dst) {
    const cplx c = rules_.panel_factor;
    // two-index fields
    for (std::size_t k = 0; k <= i; ++k) {
      cplx xn[4], xm[4], dn[4], dm[4];
      for (int j = 0; j < 4; ++j) {
        xn[j] = s.two[j][k];
        xm[j] = s.two[4 + j][k];
      }
      rates_.two_index(xn, s.N, c * s.P[0][k], dn, false);
      rates_.two_index(xm, s.N, c * s.P[1][k], dm, false);
      for (int j = 0; j < 4; ++j) {
        op(k, dn[j], erot_[j], s.two[j], dst.two[j]);
        op(k, dm[j], erot_[j], s.two[4 + j], dst.two[4 + j]);
      }
    }
    // three-index panels
    const cplx diag = rates_.panel_diag(s.N);
    const cplx E = epanel_;
    for (std::size_t k = 0; k <= i; ++k) {
      const cplx xn[4] = {s.two[0][k], s.two[1][k], s.two[2][k], s.two[3][k]};
      const cplx xm[4] = {s.two[4][k], s.two[5][k], s.two[6][k], s.two[7][k]};
      const cplx bn = rates_.bracket(xn), bm = rates_.bracket(xm);
      const std::size_t row = k * W_;
      for (std::size_t l = 0; l <= i; ++l) {
        const std::size_t idx = row + l;
        const cplx X5 = c * s.P[0][l];
        const cplx X6 = c * s.P[1][l];
        op(idx, diag * s.panel[P_n5][idx] + X5 * bn, E, s.panel[P_n5], dst.panel[P_n5]);
        op(idx, diag * s.panel[P_n6][idx] + X6 * bn, E, s.panel[P_n6], dst.panel[P_n6]);
        op(idx, diag * s.panel[P_m5][idx] + X5 * bm, E, s.panel[P_m5], dst.panel[P_m5]);
        op(idx, diag * s.panel[P_m6][idx] + X6 * bm, E, s.panel[P_m6], dst.panel[P_m6]);
      }
    }
  }

  // Fills the s=t row and s'=t column at index i and all integrals at t_i.
  // Interior nodes (< i) must already hold their values at t_i.
  void complete(State& s, std::size_t i) {
    const double t = grid_.t(i);
    const double h = grid_.dt;
    wal_.assign(i + 1, 0.0);
    wbe_.assign(i + 1, 0.0);
    if (i > 0) {
      for (std::size_t k = 0; k <= i; ++k) {
        const double w = (k == 0 || k == i) ? 0.5 * h : h;
        wal_[k] = w * alpha(t, grid_.t(k), p_);
        wbe_[k] = w * beta(t, grid_.t(k), p_);
      }
    }
    const cplx a = wal_[i];  // endpoint weight of the alpha quadrature
    const cplx b = wbe_[i];

    // -- two-index diagonal: n_j(t,t) = kappa_j - i M_j, m_j(t,t) = -i N_j
    const double kap[4] = {k1_, k2_, 0.0, 0.0};
    for (int j = 0; j < 4; ++j) {
      cplx Nint = 0.0, Mint = 0.0;
      for (std::size_t k = 0; k < i; ++k) {
        Nint += wal_[k] * s.two[j][k];
        Mint += wbe_[k] * s.two[4 + j][k];
      }
      const cplx Nj = (Nint + a * kap[j] - I * a * Mint) / (1.0 + a * b);
      const cplx Mj = Mint - I * b * Nj;
      s.N[j] = Nj;
      s.M[j] = Mj;
      s.two[j][i] = kap[j] - I * Mj;
      s.two[4 + j][i] = -I * Nj;
    }

    const cplx c = rules_.panel_factor;
    const cplx u = -I * c;  // s=t row: n5 = u Mt5, n6 = u Mt6, m5 = u Nt5, m6 = u Nt6

    // -- panel integrals over interior rows for every column l <= i
    std::array<std::vector<cplx>, 4>& acc = acc_;
    for (auto& v : acc) v.assign(i + 1, 0.0);
    for (std::size_t k = 0; k < i; ++k) {
      const std::size_t row = k * W_;
      const cplx wa = wal_[k], wb = wbe_[k];
      const cplx* n5 = &s.panel[P_n5][row];
      const cplx* n6 = &s.panel[P_n6][row];
      const cplx* m5 = &s.panel[P_m5][row];
      const cplx* m6 = &s.panel[P_m6][row];
      for (std::size_t l = 0; l < i; ++l) {
        acc[P_n5][l] += wa * n5[l];
        acc[P_n6][l] += wa * n6[l];
        acc[P_m5][l] += wb * m5[l];
        acc[P_m6][l] += wb * m6[l];
      }
    }

    // -- s=t row for columns l < i, coupled through the endpoint weights
    const cplx den = 1.0 - a * b * u * u;
    for (std::size_t l = 0; l < i; ++l) {
      const cplx Nt5 = (acc[P_n5][l] + a * u * acc[P_m5][l]) / den;
      const cplx Mt5 = acc[P_m5][l] + b * u * Nt5;
      const cplx Nt6 = (acc[P_n6][l] + a * u * acc[P_m6][l]) / den;
      const cplx Mt6 = acc[P_m6][l] + b * u * Nt6;
      s.P[0][l] = Nt5;
      s.P[1][l] = Nt6;
      s.Q[0][l] = Mt5;
      s.Q[1][l] = Mt6;
      const std::size_t idx = i * W_ + l;
      s.panel[P_n5][idx] = u * Mt5;
      s.panel[P_n6][idx] = u * Mt6;
      s.panel[P_m5][idx] = u * Nt5;
      s.panel[P_m6][idx] = u * Nt6;
    }

    // -- s'=t column for rows k < i from the boundary conditions
    for (std::size_t k = 0; k < i; ++k) {
      const auto bc = boundary(s, k);
      const std::size_t idx = k * W_ + i;
      s.panel[P_n5][idx] = bc[P_n5] - I * c * s.Q[0][k];
      s.panel[P_n6][idx] = bc[P_n6] - I * c * s.P[0][k];
      s.panel[P_m5][idx] = bc[P_m5] - I * c * s.Q[1][k];
      s.panel[P_m6][idx] = bc[P_m6] - I * c * s.P[1][k];
    }

    // -- corner (t,t,t) and the integrals of column i
    cplx An5 = 0.0, An6 = 0.0, Am5 = 0.0, Am6 = 0.0;
    for (std::size_t k = 0; k < i; ++k) {
      const std::size_t idx = k * W_ + i;
      An5 += wal_[k] * s.panel[P_n5][idx];
      An6 += wal_[k] * s.panel[P_n6][idx];
      Am5 += wbe_[k] * s.panel[P_m5][idx];
      Am6 += wbe_[k] * s.panel[P_m6][idx];
    }
    const auto bc = boundary(s, i);
    // corner values follow the boundary rule: n5 = B + u Mt5, n6 = B + u Nt5,
    // m5 = B + u Mt6, m6 = B + u Nt6 (all integrals taken at s'=t)
    const cplx c1 = An5 + a * bc[P_n5];
    const cplx c2 = Am5 + b * bc[P_m5];
    const cplx c3 = Am6 + b * bc[P_m6];
    const cplx c4 = An6 + a * bc[P_n6];
    const cplx au = a * u, bu = b * u;
    const cplx Nt5 = (c1 + au * c2 + au * bu * c3 + au * bu * bu * c4) / (1.0 - au * bu * bu * au);
    const cplx Nt6 = c4 + au * Nt5;
    const cplx Mt6 = c3 + bu * Nt6;
    const cplx Mt5 = c2 + bu * Mt6;
    s.P[0][i] = Nt5;
    s.P[1][i] = Nt6;
    s.Q[0][i] = Mt5;
    s.Q[1][i] = Mt6;
    const std::size_t corner = i * W_ + i;
    s.panel[P_n5][corner] = bc[P_n5] + u * Mt5;
    s.panel[P_n6][corner] = bc[P_n6] + u * Nt5;
    s.panel[P_m5][corner] = bc[P_m5] + u * Mt6;
    s.panel[P_m6][corner] = bc[P_m6] + u * Nt6;
  }

  // Local part of the s'=t boundary values at row k (everything except the
  // -i * (scaled) panel-integral term).
  std::array<cplx, 4> boundary(const State& s, std::size_t k) const {
    const cplx n1 = s.two[0][k], n2 = s.two[1][k], n3 = s.two[2][k], n4 = s.two[3][k];
    const cplx m1 = s.two[4][k], m2 = s.two[5][k], m3 = s.two[6][k], m4 = s.two[7][k];
    const auto& N = s.N;
    const auto& M = s.M;
    auto bracket = [](const std::array<cplx, 4>& K, cplx x1, cplx x2, cplx x3, cplx x4) {
      return K[0] * x3 - K[2] * x1 + K[1] * x4 - K[3] * x2;
    };
    std::array<cplx, 4> r{};
    r[P_n5] = -2.0 * I * (k1_ * n3 + k2_ * n4) - 2.0 * bracket(M, n1, n2, n3, n4);
    r[P_m5] = -2.0 * I * (k1_ * m3 + k2_ * m4);
    r[P_n6] = 0.0;
    r[P_m6] = -2.0 * bracket(N, m1, m2, m3, m4);
    if (rules_.full_brackets) {
      r[P_n6] += -2.0 * bracket(N, n1, n2, n3, n4);
      r[P_m5] += -2.0 * bracket(M, m1, m2, m3, m4);
    }
    return r;
  }

  void track_change_begin(std::size_t) { max_change_ = 0.0; }

  void check_finite(std::size_t i) {
    auto bad = [](cplx x) { return !std::isfinite(x.real()) || !std::isfinite(x.imag()); };
    for (int f = 0; f < 8; ++f)
      for (std::size_t k = 0; k <= i; ++k)
        if (bad(cur_.two[f][k])) fail_nonfinite(i, k, std::nullopt);
    for (int f = 0; f < 4; ++f)
      for (std::size_t k = 0; k <= i; ++k)
        for (std::size_t l = 0; l <= i; ++l)
          if (bad(cur_.panel[f][k * W_ + l])) fail_nonfinite(i, k, l);
    if (max_change_ > max_step_change_) {
      max_step_change_ = max_change_;
      worst_time_ = grid_.t(i);
    }
  }

  [[noreturn]] void fail_nonfinite(std::size_t i, std::size_t k, std::optional<std::size_t> l) const {
    std::ostringstream os;
    os << "solve_coefficients: non-finite value at t=" << grid_.t(i) << ", s=" << grid_.t(k);
    if (l) os << ", s'=" << grid_.t(*l);
    throw Error(os.str());
  }

  void record(std::size_t i, const SolverObserver& observer) {
    for (int j = 0; j < 4; ++j) {
      out_.N[j][i] = cur_.N[j];
      out_.M[j][i] = cur_.M[j];
      for (std::size_t k = 0; k <= i; ++k) {
        out_.n[j][tri_index(i, k)] = cur_.two[j][k];
        out_.m[j][tri_index(i, k)] = cur_.two[4 + j][k];
      }
    }
    for (int f = 0; f < 2; ++f)
      for (std::size_t l = 0; l <= i; ++l) {
        out_.N56[f][tri_index(i, l)] = cur_.P[f][l];
        out_.M56[f][tri_index(i, l)] = cur_.Q[f][l];
      }
    if (observer) {
      SolverSnapshot snap{i, W_, &p_, &grid_, {}, {}, {}, cur_.N, cur_.M, {}, {}};
      for (int f = 0; f < 4; ++f) {
        snap.panel[f] = cur_.panel[f].data();
        snap.n[f] = cur_.two[f].data();
        snap.m[f] = cur_.two[4 + f].data();
      }
      for (int f = 0; f < 2; ++f) {
        snap.N56[f] = cur_.P[f].data();
        snap.M56[f] = cur_.Q[f].data();
      }
      observer(snap);
    }
  }

  ParameterSet p_;
  TimeGrid grid_;
  std::size_t T_;
  std::size_t W_;
  VariantRules rules_;
  Rates rates_;
  double wa_ = 0, wb_ = 0, k1_ = 0, k2_ = 0;
  std::array<cplx, 4> erot_{};
  cplx epanel_{};
  State cur_, prd_;
  std::vector<cplx> wal_;
  std::vector<double> wbe_;
  std::array<std::vector<cplx>, 4> acc_;
  double max_change_ = 0.0;
  double max_step_change_ = 0.0;
  double worst_time_ = 0.0;
  CoefficientFields out_;
};

}  // namespace detail

/// Solves the twelve coefficient equations on `grid` for parameters `p`.
/// `observer`, when set, sees the full solver state after every completed step.
inline CoefficientFields solve_coefficients(const ParameterSet& p, const TimeGrid& grid,
                                            const SolverObserver& observer = {}) {
  validate(p);
  return detail::HierarchySolver(p, grid).solve(observer);
}

// ---------------------------------------------------------------------------
// Obar assembly

/// Coefficients of Obar_z and Obar_y on the basis O1..O5.
struct ObarCoefficients {
  std::array<cplx, 5> z{};
  std::array<cplx, 5> y{};
};

inline ComplexMatrix expand(const std::array<cplx, 5>& c, const OperatorSet& ops) {
  ComplexMatrix r(4, 4);
  for (int j = 0; j < 5; ++j) r.add_scaled(c[j], ops.O[j]);
  return r;
}

/// Obar coefficients at grid index i for one noise realization. The O5 entry is
/// i * int_0^t ds' [Nt5(t,s') z*_{s'} + Nt6(t,s') y*_{s'}] by the trapezoid rule.
inline ObarCoefficients obar_coefficients(const CoefficientFields& f, std::span<const cplx> z_star,
                                          std::span<const cplx> y_star, std::size_t i) {
  if (i > f.steps()) throw Error("assemble_obar: time index beyond solved range");
  if (z_star.size() != f.grid.size() || y_star.size() != f.grid.size())
    throw Error("assemble_obar: noise is not on the coefficient grid");
  ObarCoefficients r;
  for (int j = 0; j < 4; ++j) {
    r.z[j] = f.N[j][i];
    r.y[j] = f.M[j][i];
  }
  if (i == 0) return r;
  const double h = f.grid.dt;
  const std::size_t base = tri_index(i, 0);
  const cplx* n5 = &f.N56[0][base];
  const cplx* n6 = &f.N56[1][base];
  const cplx* m5 = &f.M56[0][base];
  const cplx* m6 = &f.M56[1][base];
  cplx sz = 0.0, sy = 0.0;
  for (std::size_t l = 0; l <= i; ++l) {
    const double w = (l == 0 || l == i) ? 0.5 * h : h;
    sz += w * (n5[l] * z_star[l] + n6[l] * y_star[l]);
    sy += w * (m5[l] * z_star[l] + m6[l] * y_star[l]);
  }
  r.z[4] = I * sz;
  r.y[4] = I * sy;
  return r;
}

struct ObarPair {
  ComplexMatrix z;
  ComplexMatrix y;
};

inline ObarPair assemble_obar(const CoefficientFields& f, const NoiseRealization& noise, std::size_t t_index,
                              const OperatorSet& ops) {
  const auto c = obar_coefficients(f, noise.z_star, noise.y_star, t_index);
  return {expand(c.z, ops), expand(c.y, ops)};
}

// ---------------------------------------------------------------------------
// Binary dump / load
//
// Layout (little-endian): 8-byte magic "CQSDFLD1", uint64 key, uint64 n_steps,
// then doubles dt, omega_a, omega_b, omega_c, g, kappa1, kappa2, Gamma, gamma,
// uint64 eom_variant, then the arrays n[4], m[4] (triangular), N[4], M[4],
// N56[2], M56[2] (triangular) as interleaved (re, im) doubles.

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Hash of everything the coefficient fields depend on.
inline std::uint64_t fields_key(const ParameterSet& p, const TimeGrid& grid) {
  std::ostringstream os;
  os.precision(17);
  os << p.freq_a() << ' ' << p.freq_b() << ' ' << p.omega_c << ' ' << p.g << ' ' << p.kappa1 << ' ' << p.kappa2
     << ' ' << p.Gamma << ' ' << p.gamma << ' ' << grid.dt << ' ' << grid.n_steps << ' '
     << to_string(p.eom_variant);
  return fnv1a(os.str());
}

namespace detail {
static_assert(std::endian::native == std::endian::little, "field dumps assume a little-endian host");
inline constexpr char fields_magic[8] = {'C', 'Q', 'S', 'D', 'F', 'L', 'D', '1'};
}  // namespace detail

inline void save_fields(const CoefficientFields& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("save_fields: cannot open " + path);
  auto u64 = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
  auto dbl = [&](double v) { os.write(reinterpret_cast<const char*>(&v), 8); };
  auto arr = [&](const std::vector<cplx>& v) { os.write(reinterpret_cast<const char*>(v.data()), v.size() * 16); };
  const auto& p = f.params;
  os.write(detail::fields_magic, 8);
  u64(fields_key(p, f.grid));
  u64(f.grid.n_steps);
  for (double v : {f.grid.dt, p.freq_a(), p.freq_b(), p.omega_c, p.g, p.kappa1, p.kappa2, p.Gamma, p.gamma}) dbl(v);
  u64(static_cast<std::uint64_t>(p.eom_variant));
  for (const auto& v : f.n) arr(v);
  for (const auto& v : f.m) arr(v);
  for (const auto& v : f.N) arr(v);
  for (const auto& v : f.M) arr(v);
  for (const auto& v : f.N56) arr(v);
  for (const auto& v : f.M56) arr(v);
  if (!os) throw Error("save_fields: write failed for " + path);
}

/// Loads a dump and checks it was produced for exactly (p, grid).
inline CoefficientFields load_fields(const std::string& path, const ParameterSet& p, const TimeGrid& grid) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("load_fields: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::fields_magic, 8) != 0) throw Error("load_fields: bad magic in " + path);
  auto u64 = [&] {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto dbl = [&] {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  const std::uint64_t key = u64();
  const std::uint64_t steps = u64();
  if (key != fields_key(p, grid) || steps != grid.n_steps)
    throw Error("load_fields: " + path + " was written for different parameters");
  for (int k = 0; k < 9; ++k) dbl();
  u64();
  CoefficientFields f;
  f.params = p;
  f.grid = grid;
  const std::size_t W = grid.size();
  const std::size_t tri = W * (W + 1) / 2;
  auto arr = [&](std::vector<cplx>& v, std::size_t n) {
    v.resize(n);
    is.read(reinterpret_cast<char*>(v.data()), n * 16);
  };
  for (auto& v : f.n) arr(v, tri);
  for (auto& v : f.m) arr(v, tri);
  for (auto& v : f.N) arr(v, W);
  for (auto& v : f.M) arr(v, W);
  for (auto& v : f.N56) arr(v, tri);
  for (auto& v : f.M56) arr(v, tri);
  if (!is) throw Error("load_fields: truncated file " + path);
  return f;
}

}  // namespace cqsd
