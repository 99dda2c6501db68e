#pragma once

#include "coosci/detspace/wavefunction.hpp"
#include "coosci/solver/hamiltonian.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <vector>

namespace coosci {

struct Pt2Config {
  double eps_hc = 1e-8;
  double deterministic_mass = 0.99;
  // Sum couplings from every variational det, not only the top block.
  bool full_coverage = true;
  bool adaptive = false;
  double adaptive_tighten = 0.03;
  int max_tighten_rounds = 12;
  std::size_t n_chunks = 4;
  unsigned threads = 1;
  std::optional<double> e_var{};

  void validate() const {
    if (!(deterministic_mass > 0.0 && deterministic_mass <= 1.0))
      throw std::invalid_argument("deterministic_mass must lie in (0, 1]");
    if (!(eps_hc >= 0.0)) throw std::invalid_argument("eps_hc must be non-negative");
    if (!(adaptive_tighten > 0.0)) throw std::invalid_argument("adaptive_tighten must be positive");
    if (n_chunks == 0) throw std::invalid_argument("n_chunks must be positive");
  }
};

struct Pt2Result {
  double energy = 0.0;
  double e_var = 0.0;
  double eps_hc = 0.0;
  std::size_t sources = 0;
  std::size_t externals = 0;
  std::size_t skipped_denominators = 0;
  int rounds = 1;
  std::vector<std::pair<double, double>> schedule;  // (eps_hc, energy) per round
};

inline double rayleigh_quotient(const Wavefunction& w, const IntegralSet& ints) {
  DirectHamiltonian h(w.space, ints);
  std::vector<double> hv(w.size());
  h.apply(w.coeffs, hv);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    num += w.coeffs[i] * hv[i];
    den += w.coeffs[i] * w.coeffs[i];
  }
  return num / den;
}

// Rows whose couplings feed the external numerators.
inline std::vector<std::size_t> pt2_sources(const Wavefunction& w, const Pt2Config& cfg) {
  const auto ranked = w.ranked_rows();
  double total = 0.0;
  for (double c : w.coeffs) total += c * c;
  std::vector<std::size_t> out;
  double acc = 0.0;
  for (std::size_t r : ranked) {
    if (!cfg.full_coverage && acc >= cfg.deterministic_mass * total) break;
    out.push_back(r);
    acc += w.coeffs[r] * w.coeffs[r];
  }
  return out;
}

namespace detail {

struct Pt2Partial {
  double energy = 0.0;
  std::size_t externals = 0;
  std::size_t skipped = 0;
};

struct ExternalTerm {
  double numerator = 0.0;
  bool admitted = false;
};

// One hash partition of the external space. A det enters once some coupling
// passes the screen; its numerator then collects every source coupling.
inline Pt2Partial pt2_chunk(const Wavefunction& w, const IntegralSet& ints, const std::vector<std::size_t>& sources,
                            double e_var, double eps, std::size_t chunk, std::size_t n_chunks) {
  std::unordered_map<Determinant, ExternalTerm, DeterminantHash> terms;
  const DeterminantHash hasher;
  const int n = static_cast<int>(ints.n_orb());
  for (std::size_t row : sources) {
    const double c = w.coeffs[row];
    if (c == 0.0) continue;
    const Determinant& src = w.space[row];
    for_each_connected(src, n, [&](const Determinant& a) {
      if (n_chunks > 1 && hasher(a) % n_chunks != chunk) return;
      if (w.space.contains(a)) return;
      const double hc = matrix_element(a, src, ints) * c;
      if (hc == 0.0) return;
      auto& t = terms[a];
      t.numerator += hc;
      if (std::abs(hc) >= eps) t.admitted = true;
    });
  }
  // Deterministic accumulation order independent of hash-map layout.
  std::vector<std::pair<Determinant, double>> admitted;
  for (const auto& [d, t] : terms)
    if (t.admitted) admitted.emplace_back(d, t.numerator);
  std::sort(admitted.begin(), admitted.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  Pt2Partial out;
  for (const auto& [d, num] : admitted) {
    const double denom = e_var - diagonal_energy(d, ints);
    if (std::abs(denom) < 1e-12) {
      ++out.skipped;
      continue;
    }
    out.energy += num * num / denom;
    ++out.externals;
  }
  return out;
}

inline Pt2Result pt2_once(const Wavefunction& w, const IntegralSet& ints, const Pt2Config& cfg, double e_var,
                          double eps) {
  const auto sources = pt2_sources(w, cfg);
  std::vector<Pt2Partial> parts(cfg.n_chunks);
  const unsigned n_threads = std::max(1U, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.n_chunks)));
  auto run = [&](unsigned t) {
    for (std::size_t k = t; k < cfg.n_chunks; k += n_threads)
      parts[k] = pt2_chunk(w, ints, sources, e_var, eps, k, cfg.n_chunks);
  };
  if (n_threads == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(run, t);
  }
  Pt2Result r;
  r.e_var = e_var;
  r.eps_hc = eps;
  r.sources = sources.size();
  for (const auto& p : parts) {
    r.energy += p.energy;
    r.externals += p.externals;
    r.skipped_denominators += p.skipped;
  }
  return r;
}

}  // namespace detail

// Epstein-Nesbet second-order correction over singles and doubles outside w.space.
inline Pt2Result pt2_correction(const Wavefunction& w, const IntegralSet& ints, const Pt2Config& cfg = {}) {
  cfg.validate();
  const double e_var = cfg.e_var ? *cfg.e_var : rayleigh_quotient(w, ints);
  double eps = cfg.eps_hc;
  Pt2Result r = detail::pt2_once(w, ints, cfg, e_var, eps);
  r.schedule.emplace_back(eps, r.energy);
  if (cfg.adaptive) {
    for (int round = 1; round < cfg.max_tighten_rounds; ++round) {
      eps *= 0.5;
      Pt2Result next = detail::pt2_once(w, ints, cfg, e_var, eps);
      next.schedule = std::move(r.schedule);
      next.schedule.emplace_back(eps, next.energy);
      next.rounds = round + 1;
      const double change = std::abs(next.energy - r.energy);
      r = std::move(next);
      if (change <= cfg.adaptive_tighten * std::abs(r.energy)) break;
    }
  }
  if (r.skipped_denominators > 0)
    spdlog::warn("pt2: skipped {} near-degenerate denominators", r.skipped_denominators);
  return r;
}

}  // namespace coosci
