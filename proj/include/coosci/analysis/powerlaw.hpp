#pragma once

#include "coosci/util/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace coosci {

struct FitPoint {
  double n = 0.0;
  double e = 0.0;
};

struct PowerLawFit {
  double e_extrap = 0.0;
  double a = 0.0;
  double alpha_exp = 0.0;
  double r2 = 0.0;
  double bootstrap_sigma = 0.0;
  std::pair<double, double> ci90{0.0, 0.0};
  double alpha_sigma = 0.0;
  double a_sigma = 0.0;
  std::size_t bootstrap_samples = 0;
  bool degenerate = false;
};

struct PowerLawOptions {
  std::size_t n_candidates = 5000;
  std::size_t n_bootstrap = 500;
  std::uint64_t seed = 0;
  bool refine = true;
};

namespace detail {

struct LogFit {
  double log_a = 0.0;
  double slope = 0.0;
  double r2 = -std::numeric_limits<double>::infinity();
};

inline LogFit loglog_fit(const std::vector<FitPoint>& pts, double e_extrap) {
  const double k = static_cast<double>(pts.size());
  double sx = 0, sy = 0;
  for (const auto& p : pts) {
    const double d = p.e - e_extrap;
    if (!(d > 0.0)) return {};
    sx += std::log(p.n);
    sy += std::log(d);
  }
  const double mx = sx / k, my = sy / k;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : pts) {
    const double dx = std::log(p.n) - mx, dy = std::log(p.e - e_extrap) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {};
  LogFit f;
  f.slope = sxy / sxx;
  f.log_a = my - f.slope * mx;
  double ss_res = 0.0;
  for (const auto& p : pts) {
    const double r = std::log(p.e - e_extrap) - f.log_a - f.slope * std::log(p.n);
    ss_res += r * r;
  }
  f.r2 = 1.0 - ss_res / syy;
  return f;
}

struct ScanResult {
  double e_extrap = 0.0;
  LogFit fit;
  bool ok = false;
};

inline ScanResult r2_scan(const std::vector<FitPoint>& pts, const PowerLawOptions& opt) {
  double e_min = std::numeric_limits<double>::infinity(), e_max = -e_min;
  for (const auto& p : pts) {
    e_min = std::min(e_min, p.e);
    e_max = std::max(e_max, p.e);
  }
  const double span = e_max - e_min;
  if (!(span > 0.0)) return {};
  const double lo = e_min - 10.0 * span;
  const double hi = e_min - 1e-9 * std::max(std::abs(e_min), 1e-300);
  const std::size_t m = std::max<std::size_t>(opt.n_candidates, 2);
  const double step = (hi - lo) / static_cast<double>(m - 1);
  ScanResult best;
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double c = lo + step * static_cast<double>(k);
    const LogFit f = loglog_fit(pts, c);
    if (f.r2 > best.fit.r2) {
      best = {c, f, true};
      best_k = k;
    }
  }
  if (!best.ok || !opt.refine) return best;
  // Golden-section polish inside the bracketing grid cells.
  double a = lo + step * static_cast<double>(best_k == 0 ? 0 : best_k - 1);
  double b = std::min(hi, lo + step * static_cast<double>(best_k + 1));
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = loglog_fit(pts, x1).r2, f2 = loglog_fit(pts, x2).r2;
  for (int it = 0; it < 200 && (b - a) > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = loglog_fit(pts, x1).r2;
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = loglog_fit(pts, x2).r2;
    }
  }
  const double c = 0.5 * (a + b);
  const LogFit f = loglog_fit(pts, c);
  if (f.r2 >= best.fit.r2) best = {c, f, true};
  return best;
}

inline std::size_t distinct_n(const std::vector<FitPoint>& pts) {
  std::vector<double> n;
  for (const auto& p : pts) n.push_back(p.n);
  std::sort(n.begin(), n.end());
  return static_cast<std::size_t>(std::unique(n.begin(), n.end()) - n.begin());
}

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double t = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1.0 - t) + v[i + 1] * t : v[i];
}

inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// E(N) = e_extrap + a N^-alpha by maximal R^2 over a grid of e_extrap
// candidates, with a nonparametric bootstrap of the whole procedure.
inline PowerLawFit powerlaw_fit(const std::vector<FitPoint>& points, const PowerLawOptions& opt = {}) {
  if (points.size() < 4) throw std::invalid_argument("power-law fit needs at least 4 points");
  for (const auto& p : points)
    if (!(p.n > 0.0) || !std::isfinite(p.e)) throw std::invalid_argument("fit points need positive N and finite E");
  PowerLawFit out;
  const auto scan = detail::r2_scan(points, opt);
  if (!scan.ok || detail::distinct_n(points) < 3) {
    out.degenerate = true;
    return out;
  }
  out.e_extrap = scan.e_extrap;
  out.a = std::exp(scan.fit.log_a);
  out.alpha_exp = -scan.fit.slope;
  out.r2 = scan.fit.r2;
  if (out.alpha_exp <= 0.0) out.degenerate = true;

  Rng rng(opt.seed);
  std::vector<double> es, alphas, amps;
  std::vector<FitPoint> sample(points.size());
  for (std::size_t b = 0; b < opt.n_bootstrap; ++b) {
    for (auto& s : sample) s = points[rng.below(points.size())];
    if (detail::distinct_n(sample) < 3) continue;
    const auto r = detail::r2_scan(sample, opt);
    if (!r.ok) continue;
    es.push_back(r.e_extrap);
    alphas.push_back(-r.fit.slope);
    amps.push_back(std::exp(r.fit.log_a));
  }
  out.bootstrap_samples = es.size();
  if (!es.empty()) {
    out.bootstrap_sigma = detail::stddev(es);
    out.alpha_sigma = detail::stddev(alphas);
    out.a_sigma = detail::stddev(amps);
    out.ci90 = {detail::percentile(es, 0.05), detail::percentile(es, 0.95)};
  }
  return out;
}

struct CrossingResult {
  double n_match = 0.0;
  bool extrapolated = false;
};

// Smallest N at which the trajectory reaches target_e. Between samples the
// crossing is linear in log N; outside them a power law in |E - e_ref|
// through the two nearest points is used, with e_ref defaulting to the
// fitted extrapolate.
inline CrossingResult crossing_interpolate(std::vector<FitPoint> traj, double target_e,
                                           std::optional<double> e_ref = std::nullopt) {
  if (traj.empty()) throw std::invalid_argument("empty trajectory");
  std::sort(traj.begin(), traj.end(), [](const FitPoint& x, const FitPoint& y) { return x.n < y.n; });
  std::size_t k = 0;
  while (k < traj.size() && traj[k].e > target_e) ++k;
  if (k < traj.size() && traj[k].e == target_e) return {traj[k].n, false};
  if (k > 0 && k < traj.size()) {
    const FitPoint& p = traj[k - 1];
    const FitPoint& q = traj[k];
    const double t = (p.e - target_e) / (p.e - q.e);
    return {std::exp(std::log(p.n) + t * (std::log(q.n) - std::log(p.n))), false};
  }
  if (traj.size() < 2) throw std::invalid_argument("extrapolation needs at least two points");
  if (!e_ref) {
    const auto fit = powerlaw_fit(traj, {.n_bootstrap = 0});
    if (fit.degenerate) throw std::runtime_error("cannot extrapolate: degenerate power-law fit");
    e_ref = fit.e_extrap;
  }
  const FitPoint& p = k == 0 ? traj[0] : traj[traj.size() - 2];
  const FitPoint& q = k == 0 ? traj[1] : traj[traj.size() - 1];
  const double dp = p.e - *e_ref, dq = q.e - *e_ref, dt = target_e - *e_ref;
  if (!(dp > 0.0 && dq > 0.0 && dt > 0.0) || dp == dq) throw std::runtime_error("cannot extrapolate to target");
  const double alpha = -std::log(dq / dp) / std::log(q.n / p.n);
  return {p.n * std::pow(dt / dp, -1.0 / alpha), true};
}

// Nominal MPS parameter count with local dimension 4.
inline std::uint64_t mps_param_count(std::uint64_t sites, std::uint64_t bond_dim) { return 4 * sites * bond_dim * bond_dim; }

}  // namespace coosci
