#pragma once

#include "coosci/detspace/detset.hpp"
#include "coosci/hamio/integrals.hpp"
#include "coosci/solver/hamiltonian.hpp"

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace coosci {

struct DavidsonConfig {
  double energy_tol = 1e-8;
  // Also stop once the residual norm drops below this; lets an exact warm
  // start finish on its first iteration.
  double residual_tol = 1e-10;
  std::size_t max_subspace = 8;
  std::size_t max_iters = 500;
  std::optional<std::vector<double>> warm_start;
  // H applied to warm_start, when already known (resume from a checkpoint).
  std::optional<std::vector<double>> warm_start_hv;
  bool use_cache = true;
  std::size_t cache_budget_entries = 200'000'000;

  void validate() const {
    if (!(energy_tol > 0.0)) throw std::invalid_argument("energy_tol must be positive");
    if (max_subspace < 2) throw std::invalid_argument("max_subspace must be at least 2");
  }
};

struct DavidsonResult {
  double energy = 0.0;
  std::vector<double> coeffs;
  double residual_norm = 0.0;
  std::size_t iterations = 0;
  std::size_t matvecs = 0;
  bool converged = false;
  std::vector<double> ritz_history;
};

struct DavidsonProgress {
  std::size_t iteration;
  std::size_t matvecs;
  double energy;
  double residual_norm;
  std::span<const double> ritz_vector;
  std::span<const double> ritz_hv;
};

// Single-process reduction: nothing to combine.
struct LocalComm {
  int rank() const { return 0; }
  int size() const { return 1; }
  void allreduce(std::span<double>) {}
};

class InMemoryBasis {
 public:
  std::size_t size() const { return v_.size(); }
  void clear() {
    v_.clear();
    hv_.clear();
  }
  void append(std::span<const double> v, std::span<const double> hv) {
    v_.emplace_back(v.begin(), v.end());
    hv_.emplace_back(hv.begin(), hv.end());
  }
  void read_v(std::size_t k, std::span<double> out) const { std::copy(v_[k].begin(), v_[k].end(), out.begin()); }
  void read_hv(std::size_t k, std::span<double> out) const { std::copy(hv_[k].begin(), hv_[k].end(), out.begin()); }

 private:
  std::vector<std::vector<double>> v_, hv_;
};

namespace detail {

inline double local_dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// Lowest eigenpair by Davidson with a diagonal preconditioner and
// single-vector restart. Vectors are shard-local; every global scalar goes
// through comm.allreduce so that all shards take identical steps.
template <class Op, class Basis, class Comm>
DavidsonResult davidson_solve(Op& op, Basis& basis, Comm& comm, const DavidsonConfig& cfg,
                              const std::function<void(const DavidsonProgress&)>& on_iteration = {},
                              std::size_t matvec_offset = 0) {
  cfg.validate();
  const std::size_t n = op.size();
  const auto diag = op.diagonal();
  std::vector<double> scratch(1, static_cast<double>(n));
  comm.allreduce(scratch);
  const auto n_global = static_cast<std::size_t>(std::llround(scratch[0]));
  if (n_global == 0) throw std::invalid_argument("Davidson needs a non-empty space");

  DavidsonResult res;
  res.matvecs = matvec_offset;
  std::vector<double> x(n, 0.0), hx(n, 0.0), r(n), t(n), ht(n), tmp(n);

  bool have_hv = false;
  if (cfg.warm_start) {
    if (cfg.warm_start->size() != n) throw std::invalid_argument("warm start has the wrong length");
    x = *cfg.warm_start;
    if (cfg.warm_start_hv && cfg.warm_start_hv->size() == n) {
      hx = *cfg.warm_start_hv;
      have_hv = true;
    }
  }
  std::vector<double> nrm{detail::local_dot(x, x)};
  comm.allreduce(nrm);
  if (!(nrm[0] > 0.0)) {
    // Unit vector on the lowest diagonal entry, lowest global index on ties.
    std::vector<double> mins(static_cast<std::size_t>(comm.size()), 0.0);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (diag[i] < diag[arg]) arg = i;
    std::vector<double> has(static_cast<std::size_t>(comm.size()), 0.0);
    if (n > 0) {
      mins[comm.rank()] = diag[arg];
      has[comm.rank()] = 1.0;
    }
    comm.allreduce(mins);
    comm.allreduce(has);
    int owner = -1;
    for (int a = 0; a < comm.size(); ++a)
      if (has[a] > 0.0 && (owner < 0 || mins[a] < mins[owner])) owner = a;
    std::fill(x.begin(), x.end(), 0.0);
    if (owner == comm.rank()) x[arg] = 1.0;
    nrm[0] = 1.0;
    have_hv = false;
  }
  const double inv = 1.0 / std::sqrt(nrm[0]);
  for (double& v : x) v *= inv;
  if (have_hv) {
    for (double& v : hx) v *= inv;
  } else {
    op.apply(std::span<const double>(x), std::span<double>(hx));
    ++res.matvecs;
  }
  basis.clear();
  basis.append(x, hx);

  const std::size_t m = cfg.max_subspace;
  Eigen::MatrixXd hk = Eigen::MatrixXd::Zero(m, m);
  std::vector<double> d1{detail::local_dot(x, hx)};
  comm.allreduce(d1);
  hk(0, 0) = d1[0];

  double prev = 0.0;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const std::size_t k = basis.size();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hk.topLeftCorner(k, k));
    const double theta = es.eigenvalues()(0);
    const Eigen::VectorXd y = es.eigenvectors().col(0);

    std::fill(x.begin(), x.end(), 0.0);
    std::fill(hx.begin(), hx.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      basis.read_v(i, tmp);
      for (std::size_t p = 0; p < n; ++p) x[p] += y(i) * tmp[p];
      basis.read_hv(i, tmp);
      for (std::size_t p = 0; p < n; ++p) hx[p] += y(i) * tmp[p];
    }
    for (std::size_t p = 0; p < n; ++p) r[p] = hx[p] - theta * x[p];
    std::vector<double> rr{detail::local_dot(r, r)};
    comm.allreduce(rr);
    const double rnorm = std::sqrt(rr[0]);

    res.ritz_history.push_back(theta);
    res.energy = theta;
    res.residual_norm = rnorm;
    res.iterations = it + 1;
    if (on_iteration) on_iteration({it, res.matvecs, theta, rnorm, x, hx});

    if ((it > 0 && std::abs(theta - prev) < cfg.energy_tol) || rnorm < cfg.residual_tol || k >= n_global) {
      res.converged = true;
      break;
    }
    prev = theta;

    for (std::size_t p = 0; p < n; ++p) {
      double den = theta - diag[p];
      if (std::abs(den) < 1e-8) den = den < 0.0 ? -1e-8 : 1e-8;
      t[p] = r[p] / den;
    }

    std::size_t kk = k;
    if (k >= m) {
      std::vector<double> xx{detail::local_dot(x, x)};
      comm.allreduce(xx);
      const double s = 1.0 / std::sqrt(xx[0]);
      for (std::size_t p = 0; p < n; ++p) {
        x[p] *= s;
        hx[p] *= s;
      }
      basis.clear();
      basis.append(x, hx);
      hk.setZero();
      hk(0, 0) = theta;
      kk = 1;
    }

    // Classical Gram-Schmidt, second pass when the first leaves overlap.
    double tnorm = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<double> dots(kk + 1);
      for (std::size_t i = 0; i < kk; ++i) {
        basis.read_v(i, tmp);
        dots[i] = detail::local_dot(tmp, t);
      }
      dots[kk] = detail::local_dot(t, t);
      comm.allreduce(dots);
      double worst = 0.0;
      for (std::size_t i = 0; i < kk; ++i) worst = std::max(worst, std::abs(dots[i]) / std::sqrt(std::max(dots[kk], 1e-300)));
      if (pass == 1 && worst <= 1e-10) {
        tnorm = std::sqrt(dots[kk]);
        break;
      }
      for (std::size_t i = 0; i < kk; ++i) {
        basis.read_v(i, tmp);
        for (std::size_t p = 0; p < n; ++p) t[p] -= dots[i] * tmp[p];
      }
      if (pass == 1) {
        std::vector<double> tt{detail::local_dot(t, t)};
        comm.allreduce(tt);
        tnorm = std::sqrt(tt[0]);
      }
    }
    if (!(tnorm > 1e-14)) {
      // Correction lies in the current subspace: the Ritz pair is exact.
      res.converged = true;
      break;
    }
    for (double& v : t) v /= tnorm;
    op.apply(std::span<const double>(t), std::span<double>(ht));
    ++res.matvecs;
    basis.append(t, ht);
    std::vector<double> row(kk + 1);
    for (std::size_t i = 0; i < kk; ++i) {
      basis.read_v(i, tmp);
      row[i] = detail::local_dot(tmp, ht);
    }
    row[kk] = detail::local_dot(t, ht);
    comm.allreduce(row);
    for (std::size_t i = 0; i <= kk; ++i) {
      hk(i, kk) = row[i];
      hk(kk, i) = row[i];
    }
  }

  std::vector<double> xx{detail::local_dot(x, x)};
  comm.allreduce(xx);
  const double s = 1.0 / std::sqrt(xx[0]);
  for (double& v : x) v *= s;
  res.coeffs = std::move(x);
  if (!res.converged) spdlog::warn("Davidson stopped after {} iterations without converging", res.iterations);
  return res;
}

// Largest-|c| component made positive, so results are sign-stable.
inline void fix_phase(std::span<double> c) {
  if (c.empty()) return;
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.size(); ++i)
    if (std::abs(c[i]) > std::abs(c[best]) + 1e-14) best = i;
  if (c[best] < 0.0)
    for (double& v : c) v = -v;
}

class CachedOperator {
 public:
  explicit CachedOperator(const ConnectionCache& c) : c_(&c) {}
  std::size_t size() const { return c_->size(); }
  std::span<const double> diagonal() const { return c_->diagonal(); }
  void apply(std::span<const double> x, std::span<double> y) const { c_->apply(x, y); }

 private:
  const ConnectionCache* c_;
};

inline DavidsonResult davidson_with_cache(const ConnectionCache& cache, const DavidsonConfig& cfg) {
  CachedOperator op(cache);
  InMemoryBasis basis;
  LocalComm comm;
  auto res = davidson_solve(op, basis, comm, cfg);
  fix_phase(res.coeffs);
  return res;
}

inline DavidsonResult davidson_lowest(const DetSet& space, const IntegralSet& ints, const DavidsonConfig& cfg = {}) {
  if (space.empty()) throw std::invalid_argument("Davidson needs a non-empty space");
  InMemoryBasis basis;
  LocalComm comm;
  if (cfg.use_cache) {
    try {
      const auto cache = ConnectionCache::build(space, ints, cfg.cache_budget_entries);
      CachedOperator op(cache);
      auto res = davidson_solve(op, basis, comm, cfg);
      fix_phase(res.coeffs);
      return res;
    } catch (const CacheBudgetError&) {
      spdlog::info("connection cache over budget; using direct matvec");
    }
  }
  DirectHamiltonian op(space, ints);
  auto res = davidson_solve(op, basis, comm, cfg);
  fix_phase(res.coeffs);
  return res;
}

}  // namespace coosci
