#pragma once

#include "coosci/hamio/integrals.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace coosci {

inline bool is_orthogonal(const Eigen::MatrixXd& u, double tol = 1e-10) {
  if (u.rows() != u.cols()) return false;
  const Eigen::MatrixXd err = u.transpose() * u - Eigen::MatrixXd::Identity(u.rows(), u.cols());
  return err.cwiseAbs().maxCoeff() <= tol;
}

// h' = u^T h u and (pq|rs)' = sum u_ap u_bq u_cr u_ds (ab|cd), one index at a time.
inline IntegralSet rotate_integrals(const IntegralSet& ints, const Eigen::MatrixXd& u) {
  const std::size_t n = ints.n_orb();
  if (static_cast<std::size_t>(u.rows()) != n || !is_orthogonal(u)) {
    throw std::invalid_argument("rotation must be an orthogonal n_orb x n_orb matrix");
  }
  IntegralSet out(n, ints.n_alpha(), ints.n_beta(), ints.e_core());
  const Eigen::MatrixXd h = u.transpose() * ints.h() * u;
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q <= p; ++q) out.set_h(p, q, 0.5 * (h(p, q) + h(q, p)));

  const std::size_t n2 = n * n;
  std::vector<double> a = ints.dense_v();
  std::vector<double> b(a.size(), 0.0);
  // Each pass transforms the leading index and cycles it to the back:
  // b[q,r,s,p'] = sum_p u(p,p') a[p,q,r,s].
  for (int pass = 0; pass < 4; ++pass) {
    std::fill(b.begin(), b.end(), 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      const double* src = &a[p * n2 * n];
      for (std::size_t qrs = 0; qrs < n2 * n; ++qrs) {
        const double x = src[qrs];
        if (x == 0.0) continue;
        double* dst = &b[qrs * n];
        for (std::size_t pp = 0; pp < n; ++pp) dst[pp] += u(p, pp) * x;
      }
    }
    a.swap(b);
  }
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q <= p; ++q)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t s = 0; s <= r; ++s) {
          if (p * (p + 1) / 2 + q < r * (r + 1) / 2 + s) continue;
          out.set_v(p, q, r, s, a[((p * n + q) * n + r) * n + s]);
        }
  return out;
}

}  // namespace coosci
