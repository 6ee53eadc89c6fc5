#pragma once

// Small dense complex linear algebra: enough for 4x4 reduced states and the
// few-dozen-dimensional oracle spaces. Row-major storage throughout.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cqsd {

using cplx = std::complex<double>;
inline constexpr cplx I{0.0, 1.0};

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  ComplexMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_) throw Error("ComplexMatrix: entry count does not match shape");
  }
  ComplexMatrix(std::initializer_list<std::initializer_list<cplx>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw Error("ComplexMatrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static ComplexMatrix identity(std::size_t n) {
    ComplexMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static ComplexMatrix diagonal(std::span<const double> d) {
    ComplexMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }
  static ComplexMatrix diagonal(std::initializer_list<double> d) {
    return diagonal(std::span<const double>(d.begin(), d.size()));
  }
  static ComplexMatrix outer(std::span<const cplx> a, std::span<const cplx> b) {
    ComplexMatrix m(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) m(i, j) = a[i] * std::conj(b[j]);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  cplx& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<cplx> data() { return data_; }
  std::span<const cplx> data() const { return data_; }

  ComplexMatrix adjoint() const {
    ComplexMatrix r(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) r(j, i) = std::conj((*this)(i, j));
    return r;
  }
  ComplexMatrix transpose() const {
    ComplexMatrix r(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) r(j, i) = (*this)(i, j);
    return r;
  }
  ComplexMatrix conj() const {
    ComplexMatrix r = *this;
    for (auto& x : r.data_) x = std::conj(x);
    return r;
  }

  cplx trace() const {
    cplx t = 0.0;
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
    return t;
  }
  double max_abs() const {
    double m = 0.0;
    for (const auto& x : data_) m = std::max(m, std::abs(x));
    return m;
  }
  double frobenius() const {
    double s = 0.0;
    for (const auto& x : data_) s += std::norm(x);
    return std::sqrt(s);
  }

  ComplexMatrix& operator+=(const ComplexMatrix& o) {
    check_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  ComplexMatrix& operator-=(const ComplexMatrix& o) {
    check_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  ComplexMatrix& operator*=(cplx s) {
    for (auto& x : data_) x *= s;
    return *this;
  }

  /// this += s * o, without a temporary.
  void add_scaled(cplx s, const ComplexMatrix& o) {
    check_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += s * o.data_[k];
  }

  friend ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b) { return a += b; }
  friend ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b) { return a -= b; }
  friend ComplexMatrix operator*(cplx s, ComplexMatrix a) { return a *= s; }
  friend ComplexMatrix operator*(ComplexMatrix a, cplx s) { return a *= s; }
  friend ComplexMatrix operator-(ComplexMatrix a) { return a *= -1.0; }

  friend ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols_ != b.rows_) throw Error("ComplexMatrix: inner dimensions differ in product");
    ComplexMatrix r(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const cplx aik = a(i, k);
        if (aik == cplx{}) continue;
        const cplx* brow = &b.data_[k * b.cols_];
        cplx* rrow = &r.data_[i * r.cols_];
        for (std::size_t j = 0; j < b.cols_; ++j) rrow[j] += aik * brow[j];
      }
    return r;
  }

  std::vector<cplx> apply(std::span<const cplx> v) const {
    if (v.size() != cols_) throw Error("ComplexMatrix: vector length does not match columns");
    std::vector<cplx> r(rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
      cplx acc = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) acc += (*this)(i, j) * v[j];
      r[i] = acc;
    }
    return r;
  }

  friend bool operator==(const ComplexMatrix&, const ComplexMatrix&) = default;

 private:
  void check_same_shape(const ComplexMatrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw Error("ComplexMatrix: shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

inline ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) { return a * b - b * a; }

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix r(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const cplx aij = a(i, j);
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l) r(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return r;
}

/// Largest |A(i,j) - conj(A(j,i))| together with where it occurs.
struct HermiticityDefect {
  double magnitude = 0.0;
  std::size_t row = 0;
  std::size_t col = 0;
};

inline HermiticityDefect hermiticity_defect(const ComplexMatrix& a) {
  HermiticityDefect d;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i; j < a.cols(); ++j) {
      const double v = std::abs(a(i, j) - std::conj(a(j, i)));
      if (v > d.magnitude) d = {v, i, j};
    }
  return d;
}

inline bool is_hermitian(const ComplexMatrix& a, double rel_tol = 1e-12) {
  return a.square() && hermiticity_defect(a).magnitude <= rel_tol * std::max(a.max_abs(), 1e-300);
}

inline void require_hermitian(const ComplexMatrix& a, const char* who, double rel_tol = 1e-12) {
  if (!a.square()) throw Error(std::string(who) + ": matrix is not square");
  const auto d = hermiticity_defect(a);
  if (d.magnitude > rel_tol * std::max(a.max_abs(), 1e-300)) {
    std::ostringstream os;
    os << who << ": matrix is not Hermitian, |A(" << d.row << "," << d.col << ") - conj(A(" << d.col << ","
       << d.row << "))| = " << d.magnitude;
    throw Error(os.str());
  }
}

struct HermEig {
  std::vector<double> values;  // ascending
  ComplexMatrix vectors;       // column k pairs with values[k]
};

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
///
/// Each rotation first removes the phase of the pivot A(p,q) and then applies
/// the real symmetric Jacobi rotation, so the pivot is annihilated exactly.
/// Sweeps stop once the off-diagonal Frobenius norm falls below 1e-13 * ||A||.
inline HermEig herm_eig(const ComplexMatrix& input) {
  require_hermitian(input, "herm_eig");
  const std::size_t n = input.rows();
  if (n > 64) throw Error("herm_eig: dimension above 64 is not supported");

  ComplexMatrix a = input;
  // Symmetrize exactly so rounding in the input does not bias the result.
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = a(i, i).real();
    for (std::size_t j = i + 1; j < n; ++j) {
      const cplx avg = 0.5 * (a(i, j) + std::conj(a(j, i)));
      a(i, j) = avg;
      a(j, i) = std::conj(avg);
    }
  }
  ComplexMatrix v = ComplexMatrix::identity(n);
  const double scale = a.frobenius();

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += std::norm(a(i, j));
    return std::sqrt(s);
  };

  constexpr int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps && scale > 0.0; ++sweep) {
    if (off_norm() <= 1e-13 * scale) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double mag = std::abs(a(p, q));
        if (mag <= 1e-300) continue;
        const cplx phase = a(p, q) / mag;  // e^{i phi}
        const double app = a(p, p).real();
        const double aqq = a(q, q).real();
        const double theta = 0.5 * std::atan2(2.0 * mag, aqq - app);
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        // U restricted to (p,q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
        const cplx upp = c, upq = s, uqp = -s * std::conj(phase), uqq = c * std::conj(phase);
        for (std::size_t k = 0; k < n; ++k) {
          const cplx akp = a(k, p), akq = a(k, q);
          a(k, p) = akp * upp + akq * uqp;
          a(k, q) = akp * upq + akq * uqq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const cplx apk = a(p, k), aqk = a(q, k);
          a(p, k) = std::conj(upp) * apk + std::conj(uqp) * aqk;
          a(q, k) = std::conj(upq) * apk + std::conj(uqq) * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
        for (std::size_t k = 0; k < n; ++k) {
          const cplx vkp = v(k, p), vkq = v(k, q);
          v(k, p) = vkp * upp + vkq * uqp;
          v(k, q) = vkp * upq + vkq * uqq;
        }
      }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x).real() < a(y, y).real(); });
  HermEig out{std::vector<double>(n), ComplexMatrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]).real();
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

/// V diag(f(lambda)) V^dagger for a Hermitian spectral decomposition.
template <class F>
ComplexMatrix spectral_map(const HermEig& e, F&& f) {
  const std::size_t n = e.values.size();
  ComplexMatrix r(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const cplx fk = f(e.values[k]);
    if (fk == cplx{}) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const cplx vik = fk * e.vectors(i, k);
      for (std::size_t j = 0; j < n; ++j) r(i, j) += vik * std::conj(e.vectors(j, k));
    }
  }
  return r;
}

inline constexpr double psd_clamp_threshold = 1e-10;

/// Principal square root of a Hermitian positive semidefinite matrix.
/// Eigenvalues in [-1e-10, 0) are clamped to zero; anything lower is rejected.
inline ComplexMatrix sqrt_psd(const ComplexMatrix& a) {
  const HermEig e = herm_eig(a);
  const double tol = psd_clamp_threshold * std::max(1.0, a.max_abs());
  if (!e.values.empty() && e.values.front() < -tol) {
    std::ostringstream os;
    os << "sqrt_psd: matrix is not positive semidefinite, smallest eigenvalue " << e.values.front();
    throw Error(os.str());
  }
  return spectral_map(e, [](double x) { return cplx(std::sqrt(std::max(x, 0.0))); });
}

}  // namespace cqsd
