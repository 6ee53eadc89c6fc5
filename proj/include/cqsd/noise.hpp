#pragma once

// Correlation kernels of the two noises and their samplers.
//
//   z*_t = -i g conj(z0) e^{i w_c t}           (single cavity mode, z0 ~ CN(0,1))
//   E[z_t conj(z_s)] = alpha(t,s) = g^2 e^{-i w_c (t-s)}
//   E[y_t conj(y_s)] = beta(t,s)  = (Gamma gamma / 2) e^{-gamma |t-s|},  E[y_t y_s] = 0
//
// Every trajectory k owns two streams derived from (seed, k, tag); nothing is
// shared between trajectories, so ensembles are reproducible for any worker count.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cqsd/algebra.hpp"
#include "cqsd/model.hpp"

namespace cqsd {

struct TimeGrid {
  double dt = 0.01;
  std::size_t n_steps = 0;

  static TimeGrid from(double t_max, double dt) {
    if (!(dt > 0.0) || !(t_max >= dt)) throw Error("TimeGrid: need dt > 0 and t_max >= dt");
    const double steps = std::round(t_max / dt);
    if (std::abs(steps * dt - t_max) > 1e-9 * std::max(1.0, t_max))
      throw Error("TimeGrid: t_max is not an integer multiple of dt");
    return {dt, static_cast<std::size_t>(steps)};
  }
  static TimeGrid from(const ParameterSet& p) { return from(p.t_max, p.dt); }

  double t(std::size_t k) const { return static_cast<double>(k) * dt; }
  std::size_t size() const { return n_steps + 1; }
  double t_max() const { return t(n_steps); }
};

inline cplx alpha(double t, double s, const ParameterSet& p) {
  return p.g * p.g * std::exp(-I * (p.omega_c * (t - s)));
}

inline double beta(double t, double s, const ParameterSet& p) {
  if (p.Gamma == 0.0) return 0.0;
  return 0.5 * p.Gamma * p.gamma * std::exp(-p.gamma * std::abs(t - s));
}

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

enum class StreamTag : std::uint64_t { z = 0x7a, y = 0x79 };

/// Independent generator for trajectory `index`, noise `tag`, under master `seed`.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index, StreamTag tag) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ index);
  h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

/// Standard complex normal: E|x|^2 = 1, E x^2 = 0.
inline cplx complex_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

// ---------------------------------------------------------------------------
// Samplers

struct NoiseRealization {
  std::vector<cplx> z_star;
  std::vector<cplx> y_star;
  cplx z0{};
};

/// Fills z*_t on the grid for a given Bargmann draw z0.
inline std::vector<cplx> z_star_from(cplx z0, const TimeGrid& grid, const ParameterSet& p) {
  std::vector<cplx> z(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k)
    z[k] = -I * p.g * std::conj(z0) * std::exp(I * (p.omega_c * grid.t(k)));
  return z;
}

inline std::vector<cplx> sample_z(std::mt19937_64& rng, const TimeGrid& grid, const ParameterSet& p,
                                  cplx* z0_out = nullptr) {
  const cplx z0 = complex_normal(rng);
  if (z0_out) *z0_out = z0;
  return z_star_from(z0, grid, p);
}

/// Lower-triangular Cholesky factor of C[k][l] = beta(t_k, t_l), packed row-wise.
/// Computed once per (grid, Gamma, gamma) and shared read-only by all samplers.
class BetaFactor {
 public:
  BetaFactor() = default;
  BetaFactor(const TimeGrid& grid, const ParameterSet& p) : n_(grid.size()), zero_(p.Gamma == 0.0) {
    if (zero_) return;
    if (p.Gamma < 0.0) throw Error("BetaFactor: Gamma must be >= 0");
    l_.assign(n_ * (n_ + 1) / 2, 0.0);
    std::vector<double> c(n_);
    for (std::size_t k = 0; k < n_; ++k) c[k] = beta(grid.t(k), 0.0, p);  // stationary kernel on a uniform grid
    for (std::size_t i = 0; i < n_; ++i) {
      double* li = &l_[row(i)];
      for (std::size_t j = 0; j <= i; ++j) {
        const double* lj = &l_[row(j)];
        double s = c[i - j];
        for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
        if (i == j) {
          if (!(s > 0.0)) {
            std::ostringstream os;
            os << "BetaFactor: Cholesky pivot " << i << " is " << s << " (covariance not positive definite)";
            throw Error(os.str());
          }
          li[i] = std::sqrt(s);
        } else {
          li[j] = s / lj[j];
        }
      }
    }
  }

  std::size_t size() const { return n_; }
  bool zero() const { return zero_; }
  double operator()(std::size_t i, std::size_t j) const { return j <= i && !zero_ ? l_[row(i) + j] : 0.0; }

  /// y*_k = conj((Lambda xi)_k) for a complex standard normal vector xi.
  std::vector<cplx> sample(std::mt19937_64& rng) const {
    std::vector<cplx> y(n_);
    if (zero_) return y;
    std::vector<cplx> xi(n_);
    for (auto& x : xi) x = complex_normal(rng);
    for (std::size_t i = 0; i < n_; ++i) {
      const double* li = &l_[row(i)];
      cplx acc = 0.0;
      for (std::size_t k = 0; k <= i; ++k) acc += li[k] * xi[k];
      y[i] = std::conj(acc);
    }
    return y;
  }

 private:
  static std::size_t row(std::size_t i) { return i * (i + 1) / 2; }

  std::size_t n_ = 0;
  bool zero_ = true;
  std::vector<double> l_;
};

inline std::vector<cplx> sample_y(std::mt19937_64& rng, const BetaFactor& factor) { return factor.sample(rng); }

inline std::vector<cplx> sample_y(std::mt19937_64& rng, const TimeGrid& grid, const ParameterSet& p) {
  return BetaFactor(grid, p).sample(rng);
}

/// The realization used by trajectory `index` of an ensemble.
inline NoiseRealization sample_noise(std::uint64_t seed, std::uint64_t index, const TimeGrid& grid,
                                     const ParameterSet& p, const BetaFactor& factor) {
  NoiseRealization r;
  auto zs = make_stream(seed, index, StreamTag::z);
  r.z_star = sample_z(zs, grid, p, &r.z0);
  auto ys = make_stream(seed, index, StreamTag::y);
  r.y_star = factor.sample(ys);
  return r;
}

// ---------------------------------------------------------------------------
// Statistical self-check

struct NoiseStatistic {
  std::string name;
  double max_deviation = 0.0;  // in units of the kernel scale
  double scale = 0.0;          // 1/sqrt(N)
  double threshold = 0.0;      // 6/sqrt(N)
  bool flagged = false;
};

struct NoiseReport {
  std::size_t n_paths = 0;
  std::vector<NoiseStatistic> stats;
  bool any_flagged() const {
    for (const auto& s : stats)
      if (s.flagged) return true;
    return false;
  }
};

/// Compares empirical moments of `paths` with (0, alpha, beta) and the
/// pseudo-covariances with 0. Deviations are measured relative to the natural
/// scale of each entry (sqrt(K(t,t) K(s,s)) for second moments), so a conforming
/// ensemble stays below 6/sqrt(N) whatever g, Gamma, gamma are.
inline NoiseReport validate_noise(const std::vector<NoiseRealization>& paths, const ParameterSet& p,
                                  const TimeGrid& grid, std::size_t n_probe_times = 21) {
  if (paths.size() < 100) throw Error("validate_noise: need at least 100 paths");
  const std::size_t n = grid.size();
  for (const auto& r : paths)
    if (r.z_star.size() != n || r.y_star.size() != n) throw Error("validate_noise: path length does not match grid");

  std::vector<std::size_t> probe;
  const std::size_t m = std::min(n_probe_times, n);
  for (std::size_t i = 0; i < m; ++i) probe.push_back(m == 1 ? 0 : i * (n - 1) / (m - 1));

  const double N = static_cast<double>(paths.size());
  const double inv_sqrt_n = 1.0 / std::sqrt(N);
  const double az = p.g * p.g;
  const double ay = beta(0.0, 0.0, p);

  // noise values conjugated back to z_t, y_t
  auto zt = [&](const NoiseRealization& r, std::size_t k) { return std::conj(r.z_star[k]); };
  auto yt = [&](const NoiseRealization& r, std::size_t k) { return std::conj(r.y_star[k]); };

  double dev_mean_z = 0, dev_mean_y = 0, dev_cov_z = 0, dev_cov_y = 0, dev_pcov_z = 0, dev_pcov_y = 0, dev_cross = 0;
  for (std::size_t a : probe) {
    cplx mz = 0, my = 0;
    for (const auto& r : paths) {
      mz += zt(r, a);
      my += yt(r, a);
    }
    if (az > 0) dev_mean_z = std::max(dev_mean_z, std::abs(mz / N) / std::sqrt(az));
    if (ay > 0) dev_mean_y = std::max(dev_mean_y, std::abs(my / N) / std::sqrt(ay));
    for (std::size_t b : probe) {
      cplx cz = 0, cy = 0, pz = 0, py = 0, xzy = 0;
      for (const auto& r : paths) {
        const cplx za = zt(r, a), zb = zt(r, b), ya = yt(r, a), yb = yt(r, b);
        cz += za * std::conj(zb);
        cy += ya * std::conj(yb);
        pz += za * zb;
        py += ya * yb;
        xzy += za * std::conj(yb);
      }
      const double ta = grid.t(a), tb = grid.t(b);
      if (az > 0) {
        dev_cov_z = std::max(dev_cov_z, std::abs(cz / N - alpha(ta, tb, p)) / az);
        dev_pcov_z = std::max(dev_pcov_z, std::abs(pz / N) / az);
      }
      if (ay > 0) {
        dev_cov_y = std::max(dev_cov_y, std::abs(cy / N - beta(ta, tb, p)) / ay);
        dev_pcov_y = std::max(dev_pcov_y, std::abs(py / N) / ay);
      }
      if (az > 0 && ay > 0) dev_cross = std::max(dev_cross, std::abs(xzy / N) / std::sqrt(az * ay));
    }
  }

  NoiseReport rep;
  rep.n_paths = paths.size();
  auto add = [&](const char* name, double dev) {
    rep.stats.push_back({name, dev, inv_sqrt_n, 6.0 * inv_sqrt_n, dev > 6.0 * inv_sqrt_n});
  };
  add("mean_z", dev_mean_z);
  add("mean_y", dev_mean_y);
  add("cov_z_vs_alpha", dev_cov_z);
  add("cov_y_vs_beta", dev_cov_y);
  add("pseudo_cov_z", dev_pcov_z);
  add("pseudo_cov_y", dev_pcov_y);
  add("cross_cov_zy", dev_cross);
  return rep;
}

}  // namespace cqsd
