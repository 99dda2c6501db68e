#pragma once

#include "coosci/detspace/detset.hpp"
#include "coosci/detspace/slater_condon.hpp"
#include "coosci/hamio/integrals.hpp"
#include "coosci/solver/davidson.hpp"

#include <Eigen/Dense>
#include <lapacke.h>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace coosci {

class DenseLimitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DenseResult {
  double energy = 0.0;
  std::vector<double> coeffs;
};

inline Eigen::MatrixXd dense_hamiltonian(const DetSet& s, const IntegralSet& ints) {
  const std::size_t n = s.size();
  Eigen::MatrixXd h(n, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = j; i < n; ++i) {
      const double v = matrix_element(s[j], s[i], ints);
      h(i, j) = v;
      h(j, i) = v;
    }
  return h;
}

// Lowest eigenpair of a symmetric matrix (lower triangle referenced).
inline std::pair<double, Eigen::VectorXd> lowest_eigenpair(Eigen::MatrixXd a) {
  const auto n = static_cast<lapack_int>(a.rows());
  if (n == 0) throw std::invalid_argument("empty matrix");
  lapack_int found = 0;
  Eigen::VectorXd w(n);
  Eigen::MatrixXd z(n, 1);
  std::vector<lapack_int> support(2);
  const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, a.data(), n, 0.0, 0.0, 1, 1, 0.0,
                                         &found, w.data(), z.data(), n, support.data());
  if (info != 0 || found != 1) throw std::runtime_error("dsyevr failed");
  return {w(0), z.col(0)};
}

namespace detail {

struct FlipOrbit {
  std::size_t first;
  std::size_t second;  // == first for a flip-invariant determinant
};

// Orbits of alpha<->beta exchange, or empty if the set is not closed under it.
inline std::vector<FlipOrbit> flip_orbits(const DetSet& s) {
  std::vector<FlipOrbit> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].alpha.count() != s[i].beta.count()) return {};
    const auto j = s.find({s[i].beta, s[i].alpha});
    if (!j) return {};
    if (*j >= i) out.push_back({i, *j});
  }
  return out;
}

}  // namespace detail

// Exact ground state by dense diagonalization. Sets closed under exchanging
// the alpha and beta strings are split into the two eigenspaces of that
// exchange, which commutes with any spin-free Hamiltonian.
inline DenseResult dense_ground_state(const DetSet& s, const IntegralSet& ints, std::size_t limit = 10'000) {
  if (s.empty()) throw std::invalid_argument("empty determinant space");
  if (s.size() > limit) throw DenseLimitError("space exceeds the dense diagonalization limit");
  DenseResult res;
  const auto orbits = detail::flip_orbits(s);
  if (orbits.empty() || s.size() < 64) {
    auto [e, v] = lowest_eigenpair(dense_hamiltonian(s, ints));
    res.energy = e;
    res.coeffs.assign(v.data(), v.data() + v.size());
    fix_phase(res.coeffs);
    return res;
  }
  // Exchange maps |a,b> to (-1)^(na*nb) |b,a>.
  const int ne = s[0].alpha.count();
  const double phase = (ne * ne) % 2 ? -1.0 : 1.0;
  const double r = 1.0 / std::sqrt(2.0);
  bool have = false;
  for (double sector : {1.0, -1.0}) {
    // Basis vectors as (row, weight) lists.
    std::vector<std::vector<std::pair<std::size_t, double>>> basis;
    for (const auto& o : orbits) {
      if (o.first == o.second) {
        if (sector == phase) basis.push_back({{o.first, 1.0}});
      } else {
        basis.push_back({{o.first, r}, {o.second, sector * phase * r}});
      }
    }
    const std::size_t m = basis.size();
    if (m == 0) continue;
    Eigen::MatrixXd h(m, m);
    for (std::size_t q = 0; q < m; ++q)
      for (std::size_t p = q; p < m; ++p) {
        double v = 0.0;
        for (const auto& [i, ci] : basis[p])
          for (const auto& [j, cj] : basis[q]) v += ci * cj * matrix_element(s[i], s[j], ints);
        h(p, q) = v;
      }
    auto [e, y] = lowest_eigenpair(std::move(h));
    if (!have || e < res.energy - 1e-12) {
      have = true;
      res.energy = e;
      res.coeffs.assign(s.size(), 0.0);
      for (std::size_t p = 0; p < m; ++p)
        for (const auto& [i, ci] : basis[p]) res.coeffs[i] += ci * y(p);
    }
  }
  fix_phase(res.coeffs);
  return res;
}

}  // namespace coosci
