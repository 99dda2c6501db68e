#pragma once

#include "coosci/coo/kappa.hpp"
#include "coosci/hamio/integrals.hpp"
#include "coosci/obsrv/rdm.hpp"

#include <stdexcept>
#include <vector>

namespace coosci {

// F(p,q) = sum_r h(p,r) g(q,r) + sum_rst (pr|st) G(q,r,s,t)
inline Eigen::MatrixXd generalized_fock(const Rdm1& g1, const Rdm2& g2, const IntegralSet& ints) {
  const std::size_t n = ints.n_orb();
  if (static_cast<std::size_t>(g1.rows()) != n || g2.n_orb() != n) {
    throw std::invalid_argument("density matrices do not match the integral dimension");
  }
  Eigen::MatrixXd f = ints.h() * g1.transpose();
  const auto v = ints.dense_v();
  const std::size_t n3 = n * n * n;
  const double* gd = g2.data().data();
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q) {
      // (pr|st) with r,s,t flattened matches G(q, r, s, t) flattened.
      const double* vp = &v[p * n3];
      const double* gq = gd + q * n3;
      double acc = 0.0;
      for (std::size_t k = 0; k < n3; ++k) acc += vp[k] * gq[k];
      f(p, q) += acc;
    }
  return f;
}

// dE/dkappa(a,i) at kappa = 0 for fixed CI coefficients, with h' = U^T h U.
inline std::vector<double> orbital_gradient(const Rdm1& g1, const Rdm2& g2, const IntegralSet& ints) {
  const Eigen::MatrixXd f = generalized_fock(g1, g2, ints);
  const std::size_t n = ints.n_orb();
  std::vector<double> g(n * (n - 1) / 2);
  for (std::size_t a = 1; a < n; ++a)
    for (std::size_t i = 0; i < a; ++i) g[Kappa::index(a, i)] = 2.0 * (f(a, i) - f(i, a));
  return g;
}

}  // namespace coosci
