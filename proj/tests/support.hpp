#pragma once

#include <gtest/gtest.h>

#include <random>

#include "cqsd/algebra.hpp"

namespace cqsd::testing {

inline ComplexMatrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexMatrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = cplx(n(rng), n(rng));
  return m;
}

inline ComplexMatrix random_hermitian(std::mt19937_64& rng, std::size_t d) {
  const auto m = random_matrix(rng, d, d);
  return 0.5 * (m + m.adjoint());
}

inline ComplexMatrix random_density(std::mt19937_64& rng, std::size_t d = 4) {
  const auto m = random_matrix(rng, d, d);
  ComplexMatrix r = m * m.adjoint();
  r = (1.0 / r.trace().real()) * r;
  return 0.5 * (r + r.adjoint());
}

/// Haar-ish random unitary from the eigenvectors of a random Hermitian matrix.
inline ComplexMatrix random_unitary(std::mt19937_64& rng, std::size_t d) {
  return herm_eig(random_hermitian(rng, d)).vectors;
}

inline double max_diff(const ComplexMatrix& a, const ComplexMatrix& b) { return (a - b).max_abs(); }

}  // namespace cqsd::testing
