#pragma once

// Linear two-noise QSD trajectories
//
//   d/dt psi = [ -i H_s + L z*_t - (L^dag + i y*_t) Obar_z - i z*_t Obar_y ] psi
//
// and the ensemble average rho_t = E[|psi_t><psi_t|] over both noises.

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include "cqsd/algebra.hpp"
#include "cqsd/coeffs.hpp"
#include "cqsd/model.hpp"
#include "cqsd/noise.hpp"
#include "cqsd/parallel.hpp"
#include "cqsd/result.hpp"

namespace cqsd {

inline constexpr double blowup_norm = 1e6;
inline constexpr std::size_t n_batches = 10;

namespace detail {

using Mat4 = std::array<cplx, 16>;

inline Mat4 to_mat4(const ComplexMatrix& m) {
  Mat4 r{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) r[i * 4 + j] = m(i, j);
  return r;
}

/// Precomputed operator pieces of the trajectory generator.
struct Generator {
  Mat4 minus_iH{};
  Mat4 L{};
  std::array<Mat4, 5> O{};
  std::array<Mat4, 5> LdagO{};

  explicit Generator(const OperatorSet& ops) {
    minus_iH = to_mat4(-I * ops.H_s);
    L = to_mat4(ops.L);
    for (int j = 0; j < 5; ++j) {
      O[j] = to_mat4(ops.O[j]);
      LdagO[j] = to_mat4(ops.L_dag * ops.O[j]);
    }
  }

  Mat4 at(const ObarCoefficients& c, cplx z, cplx y) const {
    Mat4 g = minus_iH;
    for (int k = 0; k < 16; ++k) g[k] += z * L[k];
    for (int j = 0; j < 5; ++j) {
      const cplx cz = c.z[j], cy = c.y[j];
      if (cz == cplx{} && cy == cplx{}) continue;
      const cplx a = -I * y * cz - I * z * cy;
      for (int k = 0; k < 16; ++k) g[k] += -cz * LdagO[j][k] + a * O[j][k];
    }
    return g;
  }
};

inline Amplitudes apply(const Mat4& g, const Amplitudes& v) {
  Amplitudes r{};
  for (int i = 0; i < 4; ++i) r[i] = g[i * 4] * v[0] + g[i * 4 + 1] * v[1] + g[i * 4 + 2] * v[2] + g[i * 4 + 3] * v[3];
  return r;
}

inline ObarCoefficients midpoint(const ObarCoefficients& a, const ObarCoefficients& b) {
  ObarCoefficients r;
  for (int j = 0; j < 5; ++j) {
    r.z[j] = 0.5 * (a.z[j] + b.z[j]);
    r.y[j] = 0.5 * (a.y[j] + b.y[j]);
  }
  return r;
}

}  // namespace detail

struct Trajectory {
  std::vector<Amplitudes> psi;  // one state per grid node
  bool flagged = false;         // norm exceeded blowup_norm
};

/// RK4 integration of one trajectory. Half-step generators use linearly
/// interpolated noise and Obar coefficients.
inline Trajectory propagate(const Amplitudes& psi0, const CoefficientFields& fields, const NoiseRealization& noise,
                            const OperatorSet& ops) {
  const TimeGrid& grid = fields.grid;
  const std::size_t n = grid.size();
  if (noise.z_star.size() != n || noise.y_star.size() != n) throw Error("propagate: noise is not on the field grid");
  const detail::Generator gen(ops);
  std::vector<ObarCoefficients> ob(n);
  for (std::size_t i = 0; i < n; ++i) ob[i] = obar_coefficients(fields, noise.z_star, noise.y_star, i);

  Trajectory tr;
  tr.psi.resize(n);
  tr.psi[0] = psi0;
  const double h = grid.dt;
  auto axpy = [](const Amplitudes& x, cplx a, const Amplitudes& k) {
    Amplitudes r;
    for (int q = 0; q < 4; ++q) r[q] = x[q] + a * k[q];
    return r;
  };
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto& x = tr.psi[i];
    const auto g0 = gen.at(ob[i], noise.z_star[i], noise.y_star[i]);
    const auto gm = gen.at(detail::midpoint(ob[i], ob[i + 1]), 0.5 * (noise.z_star[i] + noise.z_star[i + 1]),
                           0.5 * (noise.y_star[i] + noise.y_star[i + 1]));
    const auto g1 = gen.at(ob[i + 1], noise.z_star[i + 1], noise.y_star[i + 1]);
    const auto k1 = detail::apply(g0, x);
    const auto k2 = detail::apply(gm, axpy(x, 0.5 * h, k1));
    const auto k3 = detail::apply(gm, axpy(x, 0.5 * h, k2));
    const auto k4 = detail::apply(g1, axpy(x, h, k3));
    Amplitudes next;
    double norm2 = 0.0;
    for (int q = 0; q < 4; ++q) {
      next[q] = x[q] + (h / 6.0) * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
      norm2 += std::norm(next[q]);
    }
    if (!std::isfinite(norm2)) {
      std::ostringstream os;
      os << "propagate: non-finite state at t=" << grid.t(i + 1);
      throw Error(os.str());
    }
    tr.psi[i + 1] = next;
    if (norm2 > blowup_norm * blowup_norm) {
      tr.flagged = true;
      for (std::size_t k = i + 2; k < n; ++k) tr.psi[k] = next;
      break;
    }
  }
  return tr;
}

/// Weighted sums of |psi><psi| per output time, split into fixed batches.
/// Trajectories must be absorbed in index order for bit-reproducible results.
class EnsembleAccumulator {
 public:
  EnsembleAccumulator(std::size_t n_times, std::size_t batches = n_batches)
      : n_times_(n_times), sums_(batches, std::vector<cplx>(n_times * 16)), weights_(batches, 0.0),
        counts_(batches, 0) {}

  void absorb(std::size_t index, const Trajectory& tr, double weight = 1.0) {
    if (tr.flagged) {
      ++flagged_;
      return;
    }
    const std::size_t b = index % sums_.size();
    auto& s = sums_[b];
    for (std::size_t t = 0; t < n_times_; ++t) {
      const auto& v = tr.psi[t];
      cplx* out = &s[t * 16];
      for (int i = 0; i < 4; ++i) {
        const cplx wi = weight * v[i];
        for (int j = 0; j < 4; ++j) out[i * 4 + j] += wi * std::conj(v[j]);
      }
    }
    weights_[b] += weight;
    ++counts_[b];
  }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto x : counts_) c += x;
    return c;
  }
  std::size_t flagged() const { return flagged_; }
  std::size_t batches() const { return sums_.size(); }
  std::size_t batch_count(std::size_t b) const { return counts_[b]; }

  /// Weighted mean of |psi><psi| at output time t over all batches.
  ComplexMatrix mean(std::size_t t) const {
    ComplexMatrix r(4, 4);
    double w = 0.0;
    for (std::size_t b = 0; b < sums_.size(); ++b) {
      for (int k = 0; k < 16; ++k) r.data()[k] += sums_[b][t * 16 + k];
      w += weights_[b];
    }
    return (1.0 / w) * r;
  }
  std::optional<ComplexMatrix> batch_mean(std::size_t b, std::size_t t) const {
    if (counts_[b] == 0) return std::nullopt;
    ComplexMatrix r(4, 4);
    for (int k = 0; k < 16; ++k) r.data()[k] = sums_[b][t * 16 + k];
    return (1.0 / weights_[b]) * r;
  }

 private:
  std::size_t n_times_;
  std::vector<std::vector<cplx>> sums_;
  std::vector<double> weights_;
  std::vector<std::size_t> counts_;
  std::size_t flagged_ = 0;
};

namespace detail {

inline double sample_stddev(const std::vector<double>& x) {
  if (x.size() < 2) return std::nan("");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

/// Runs trajectories 0..n-1 in blocks on the worker pool and folds them into
/// `acc` strictly in index order.
template <class NoiseFor, class WeightFor>
void run_trajectories(std::size_t n, const Amplitudes& psi0, const CoefficientFields& fields, const OperatorSet& ops,
                      NoiseFor&& noise_for, WeightFor&& weight_for, EnsembleAccumulator& acc) {
  const unsigned workers = worker_count();
  const std::size_t block = std::max<std::size_t>(32, 16 * workers);
  std::vector<Trajectory> slot(block);
  for (std::size_t start = 0; start < n; start += block) {
    const std::size_t len = std::min(block, n - start);
    parallel_for(len, workers, [&](std::size_t j) {
      slot[j] = propagate(psi0, fields, noise_for(start + j), ops);
    });
    for (std::size_t j = 0; j < len; ++j) acc.absorb(start + j, slot[j], weight_for(start + j));
  }
}

inline SimulationResult finish(const EnsembleAccumulator& acc, const TimeGrid& grid, bool with_errors) {
  if (acc.count() == 0) throw Error("ensemble: every trajectory was flagged as blown up");
  SimulationResult r;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double c_err = 0.0, tr_err = 0.0;
    if (with_errors) {
      std::vector<double> cs, trs;
      for (std::size_t b = 0; b < acc.batches(); ++b) {
        auto m = acc.batch_mean(b, t);
        if (!m) continue;
        const double tr = m->trace().real();
        trs.push_back(tr);
        ComplexMatrix nb = (1.0 / tr) * *m;
        nb = 0.5 * (nb + nb.adjoint());
        cs.push_back(concurrence_of_estimate(nb));
      }
      c_err = sample_stddev(cs) / std::sqrt(static_cast<double>(cs.size()));
      tr_err = sample_stddev(trs) / std::sqrt(static_cast<double>(trs.size()));
    }
    r.push(grid.t(t), acc.mean(t), c_err, tr_err);
  }
  r.provenance.flagged = static_cast<std::int64_t>(acc.flagged());
  return r;
}

}  // namespace detail

inline SimulationResult run_ensemble(const ParameterSet& p, const CoefficientFields& fields) {
  validate(p);
  const TimeGrid& grid = fields.grid;
  const OperatorSet ops = build_operators(p);
  const Amplitudes psi0 = initial_state(p);
  const BetaFactor factor(grid, p);
  EnsembleAccumulator acc(grid.size());
  detail::run_trajectories(
      static_cast<std::size_t>(p.n_traj), psi0, fields, ops,
      [&](std::size_t k) { return sample_noise(p.seed, k, grid, p, factor); }, [](std::size_t) { return 1.0; }, acc);
  SimulationResult r = detail::finish(acc, grid, true);
  r.provenance.method = "qsd";
  r.provenance.seed = p.seed;
  r.provenance.n_traj = p.n_traj;
  r.provenance.eom_variant = std::string(to_string(p.eom_variant));
  return r;
}

inline SimulationResult run_ensemble(const ParameterSet& p) {
  const TimeGrid grid = TimeGrid::from(p);
  return run_ensemble(p, solve_coefficients(p, grid));
}

struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;  // for int e^{-x^2} f(x) dx
};

/// Golub-Welsch: nodes are the eigenvalues of the Hermite Jacobi matrix.
inline GaussHermite gauss_hermite(std::size_t n) {
  if (n == 0 || n > 64) throw Error("gauss_hermite: node count must be in 1..64");
  ComplexMatrix j(n, n);
  for (std::size_t k = 1; k < n; ++k) {
    const double b = std::sqrt(0.5 * static_cast<double>(k));
    j(k - 1, k) = b;
    j(k, k - 1) = b;
  }
  const HermEig e = herm_eig(j);
  GaussHermite gh;
  for (std::size_t k = 0; k < n; ++k) {
    gh.nodes.push_back(e.values[k]);
    gh.weights.push_back(std::sqrt(M_PI) * std::norm(e.vectors(0, k)));
  }
  return gh;
}

/// Deterministic average over z0 by a tensor Gauss-Hermite rule. Only valid
/// when Gamma = 0, where z0 is the sole source of randomness.
inline SimulationResult quadrature_ensemble(const ParameterSet& p, const CoefficientFields& fields,
                                            std::size_t nodes = 20) {
  validate(p);
  if (p.Gamma != 0.0) throw Error("quadrature_ensemble: requires Gamma = 0");
  const TimeGrid& grid = fields.grid;
  const OperatorSet ops = build_operators(p);
  const Amplitudes psi0 = initial_state(p);
  const GaussHermite gh = gauss_hermite(nodes);
  // Re z0, Im z0 ~ N(0, 1/2): E f = (1/pi) sum w_a w_b f(x_a + i x_b)
  const std::vector<cplx> zero(grid.size());
  EnsembleAccumulator acc(grid.size(), 1);
  detail::run_trajectories(
      nodes * nodes, psi0, fields, ops,
      [&](std::size_t k) {
        const cplx z0(gh.nodes[k / nodes], gh.nodes[k % nodes]);
        return NoiseRealization{z_star_from(z0, grid, p), zero, z0};
      },
      [&](std::size_t k) { return gh.weights[k / nodes] * gh.weights[k % nodes] / M_PI; }, acc);
  SimulationResult r = detail::finish(acc, grid, false);
  r.provenance.method = "quadrature";
  r.provenance.n_traj = static_cast<std::int64_t>(nodes * nodes);
  r.provenance.eom_variant = std::string(to_string(p.eom_variant));
  return r;
}

inline SimulationResult quadrature_ensemble(const ParameterSet& p, std::size_t nodes = 20) {
  if (p.Gamma != 0.0) throw Error("quadrature_ensemble: requires Gamma = 0");
  const TimeGrid grid = TimeGrid::from(p);
  return quadrature_ensemble(p, solve_coefficients(p, grid), nodes);
}

}  // namespace cqsd
