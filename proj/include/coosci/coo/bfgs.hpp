#pragma once

#include "coosci/coo/gradient.hpp"
#include "coosci/coo/kappa.hpp"
#include "coosci/detspace/connections.hpp"
#include "coosci/hamio/rotate.hpp"
#include "coosci/obsrv/rdm.hpp"
#include "coosci/solver/davidson.hpp"

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace coosci {

struct BfgsConfig {
  std::size_t max_iter = 100;
  double ftol = 1e-8;
  double davidson_tol = 1e-7;
  double delta_tol = 0.0;
  std::size_t max_line_search = 10;
  double ridge = 1e-3;
  double curvature_floor = 1e-6;
  double hessian_probe = 1e-4;
  double hessian_floor = 1e-4;
  std::size_t max_subspace = 8;
};

struct BfgsState {
  Eigen::MatrixXd hessian;
  std::vector<double> gradient;
  std::size_t iteration = 0;
};

struct BfgsStep {
  double energy;
  double gradient_norm;
  double step_length;
  std::size_t trials;
};

struct BfgsResult {
  Kappa kappa;                 // generator of the cumulative rotation
  Eigen::MatrixXd rotation;    // cumulative U, columns are the new orbitals
  IntegralSet integrals;       // integrals in the optimized basis
  double initial_energy = 0.0;
  double energy = 0.0;
  std::vector<double> coeffs;  // CI vector on the core, optimized basis
  std::vector<BfgsStep> history;
  std::size_t iterations = 0;
  bool converged = false;
};

// Context for repeated projected solves on a fixed core.
class CoreSolver {
 public:
  CoreSolver(const DetSet& core, std::size_t max_subspace) : core_(&core), pattern_(build_connection_pattern(core)) {
    dav_.max_subspace = max_subspace;
  }

  const ConnectionPattern& pattern() const { return pattern_; }

  DavidsonResult solve(const IntegralSet& ints, double tol, const std::vector<double>* warm) {
    const auto cache = ConnectionCache::build(*core_, pattern_, ints);
    DavidsonConfig cfg = dav_;
    cfg.energy_tol = tol;
    if (warm) cfg.warm_start = *warm;
    return davidson_with_cache(cache, cfg);
  }

  Rdms rdms(const std::vector<double>& coeffs, std::size_t n_orb) const {
    Wavefunction w{*core_, coeffs};
    Rdms r{Rdm1::Zero(n_orb, n_orb), Rdm2(n_orb)};
    detail::accumulate(w, pattern_, {&r.one, &r.two});
    return r;
  }

 private:
  const DetSet* core_;
  ConnectionPattern pattern_;
  DavidsonConfig dav_;
};

// Diagonal of the orbital Hessian (fixed CI vector) by forward differences
// of the gradient along each coordinate.
inline Eigen::VectorXd hessian_diagonal(const Rdms& r, const IntegralSet& ints, const std::vector<double>& g0,
                                        double step) {
  const std::size_t n = ints.n_orb();
  Eigen::VectorXd d(static_cast<Eigen::Index>(g0.size()));
  Kappa k = Kappa::zero(n);
  for (std::size_t p = 0; p < g0.size(); ++p) {
    k.params[p] = step;
    const auto g = orbital_gradient(r.one, r.two, rotate_integrals(ints, expm_antisymmetric(k)));
    d(static_cast<Eigen::Index>(p)) = (g[p] - g0[p]) / step;
    k.params[p] = 0.0;
  }
  return d;
}

inline double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Quasi-Newton orbital optimization on a fixed determinant core. Each
// accepted step rotates the integrals and re-anchors kappa at zero.
inline BfgsResult bfgs_orbital_opt(const DetSet& core, const IntegralSet& ints, const BfgsConfig& cfg,
                                   const std::vector<double>* warm = nullptr,
                                   const std::function<void(const BfgsStep&)>& on_step = {}) {
  const std::size_t n = ints.n_orb();
  const std::size_t np = n * (n - 1) / 2;
  CoreSolver solver(core, cfg.max_subspace);

  BfgsResult res;
  res.rotation = Eigen::MatrixXd::Identity(n, n);
  res.integrals = ints;
  auto cur = solver.solve(ints, cfg.davidson_tol, warm);
  res.initial_energy = cur.energy;
  res.energy = cur.energy;
  res.coeffs = cur.coeffs;
  if (np == 0) {
    res.kappa = Kappa::zero(n);
    res.converged = true;
    return res;
  }

  auto rd = solver.rdms(cur.coeffs, n);
  BfgsState st;
  st.gradient = orbital_gradient(rd.one, rd.two, res.integrals);
  const Eigen::VectorXd d0 = hessian_diagonal(rd, res.integrals, st.gradient, cfg.hessian_probe);
  st.hessian = Eigen::MatrixXd::Zero(np, np);
  for (std::size_t p = 0; p < np; ++p) st.hessian(p, p) = std::max(std::abs(d0(p)), cfg.hessian_floor);

  for (; st.iteration < cfg.max_iter; ++st.iteration) {
    const Eigen::Map<const Eigen::VectorXd> g(st.gradient.data(), static_cast<Eigen::Index>(np));
    const Eigen::MatrixXd reg = st.hessian + cfg.ridge * Eigen::MatrixXd::Identity(np, np);
    const Eigen::VectorXd dir = -reg.ldlt().solve(g);

    const double e_prev = res.energy;
    const double delta = std::max(cfg.delta_tol, 1e-12 * std::abs(e_prev));
    double step = 1.0;
    bool accepted = false;
    std::size_t trials = 0;
    Eigen::MatrixXd u_try;
    IntegralSet ints_try;
    DavidsonResult sol;
    for (; trials < cfg.max_line_search; ++trials, step *= 0.5) {
      Kappa k{n, std::vector<double>(np)};
      for (std::size_t p = 0; p < np; ++p) k.params[p] = step * dir(static_cast<Eigen::Index>(p));
      u_try = expm_antisymmetric(k);
      ints_try = rotate_integrals(res.integrals, u_try);
      sol = solver.solve(ints_try, cfg.davidson_tol, &res.coeffs);
      if (sol.energy <= e_prev + delta) {
        accepted = true;
        ++trials;
        break;
      }
    }
    if (!accepted) {
      spdlog::debug("orbital line search exhausted after {} trials", trials);
      break;
    }
    res.integrals = std::move(ints_try);
    res.rotation = res.rotation * u_try;
    res.energy = sol.energy;
    res.coeffs = sol.coeffs;
    rd = solver.rdms(res.coeffs, n);
    auto g_new = orbital_gradient(rd.one, rd.two, res.integrals);

    Eigen::VectorXd s = step * dir;
    Eigen::VectorXd y(static_cast<Eigen::Index>(np));
    for (std::size_t p = 0; p < np; ++p) y(static_cast<Eigen::Index>(p)) = g_new[p] - st.gradient[p];
    const double ys = y.dot(s);
    if (ys > cfg.curvature_floor) {
      const Eigen::VectorXd bs = st.hessian * s;
      st.hessian += (y * y.transpose()) / ys - (bs * bs.transpose()) / s.dot(bs);
    }
    st.gradient = std::move(g_new);

    BfgsStep rec{res.energy, vec_norm(st.gradient), step, trials};
    res.history.push_back(rec);
    if (on_step) on_step(rec);
    if (std::abs(e_prev - res.energy) < cfg.ftol) {
      res.converged = true;
      ++st.iteration;
      break;
    }
  }
  res.iterations = st.iteration;
  res.kappa = kappa_from_rotation(res.rotation);
  return res;
}

}  // namespace coosci
