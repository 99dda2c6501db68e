#pragma once

#include "coosci/detspace/excitations.hpp"
#include "coosci/detspace/wavefunction.hpp"
#include "coosci/obsrv/centers.hpp"
#include "coosci/solver/davidson.hpp"
#include "coosci/solver/dense.hpp"
#include "coosci/trimci/config.hpp"
#include "coosci/util/rng.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace coosci {

struct CoreResult {
  Wavefunction wf;
  double energy = 0.0;
  std::size_t index = 0;  // cycle or round
  std::string basin;
  std::uint64_t seed = 0;
  std::optional<double> e_pt2;
};

namespace detail {

inline constexpr std::size_t kDenseSolveLimit = 300;

// Lowest eigenpair of the projected Hamiltonian; small spaces go dense.
inline std::pair<double, std::vector<double>> solve_projected(const DetSet& space, const IntegralSet& ints, double tol,
                                                              const std::vector<double>* warm = nullptr,
                                                              bool use_cache = true) {
  if (space.size() <= kDenseSolveLimit) {
    auto [e, v] = lowest_eigenpair(dense_hamiltonian(space, ints));
    std::vector<double> c(v.data(), v.data() + v.size());
    fix_phase(c);
    return {e, std::move(c)};
  }
  DavidsonConfig cfg;
  cfg.energy_tol = tol;
  cfg.use_cache = use_cache;
  if (warm) cfg.warm_start = *warm;
  auto r = davidson_lowest(space, ints, cfg);
  return {r.energy, std::move(r.coeffs)};
}

// Coefficients of `from` carried onto the rows of `to` (zeros elsewhere).
inline std::vector<double> transfer(const Wavefunction& from, const DetSet& to) {
  std::vector<double> out(to.size(), 0.0);
  for (std::size_t i = 0; i < from.size(); ++i)
    if (auto j = to.find(from.space[i])) out[*j] = from.coeffs[i];
  return out;
}

inline std::vector<Determinant> top_dets(const Wavefunction& w, std::size_t k) {
  const auto order = w.ranked_rows();
  std::vector<Determinant> out;
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) out.push_back(w.space[order[r]]);
  return out;
}

struct Candidate {
  Determinant det;
  double amplitude;  // first-order estimate |sum_j H_aj c_j / (E - H_aa)|
};

// Heat-bath expansion from `w`: hops outward through couplings with
// |H_aj c_j| > theta, using first-order amplitudes for later hops. Stops
// once `want` new determinants are found or after max_hops hops.
inline std::vector<Candidate> heat_bath_pool(const Wavefunction& w, double energy, const IntegralSet& ints,
                                             double theta, std::size_t max_hops, std::size_t want) {
  const int n = static_cast<int>(ints.n_orb());
  std::unordered_set<Determinant, DeterminantHash> known(w.space.dets().begin(), w.space.dets().end());
  std::vector<Candidate> pool;
  std::vector<std::pair<Determinant, double>> frontier;
  for (std::size_t i = 0; i < w.size(); ++i) frontier.emplace_back(w.space[i], w.coeffs[i]);
  for (std::size_t hop = 0; hop < max_hops && !frontier.empty() && pool.size() < want; ++hop) {
    struct Acc {
      double num = 0.0;
      bool admitted = false;
    };
    std::unordered_map<Determinant, Acc, DeterminantHash> acc;
    for (const auto& [src, c] : frontier) {
      if (c == 0.0) continue;
      for_each_connected(src, n, [&](const Determinant& a) {
        if (known.count(a)) return;
        const double hc = matrix_element(a, src, ints) * c;
        if (hc == 0.0) return;
        auto& e = acc[a];
        e.num += hc;
        if (std::abs(hc) > theta) e.admitted = true;
      });
    }
    std::vector<Candidate> found;
    for (const auto& [d, e] : acc) {
      if (!e.admitted) continue;
      const double denom = energy - diagonal_energy(d, ints);
      const double amp = std::abs(denom) < 1e-12 ? std::abs(e.num) * 1e12 : std::abs(e.num / denom);
      found.push_back({d, amp});
    }
    std::sort(found.begin(), found.end(), [](const Candidate& x, const Candidate& y) {
      return x.amplitude != y.amplitude ? x.amplitude > y.amplitude : x.det < y.det;
    });
    frontier.clear();
    for (const auto& cand : found) {
      known.insert(cand.det);
      pool.push_back(cand);
      frontier.emplace_back(cand.det, cand.amplitude);
    }
  }
  return pool;
}

// Pool of at least `want` candidates when the space allows, relaxing theta
// geometrically; the strongest `want` are returned.
inline std::vector<Candidate> build_pool(const Wavefunction& w, double energy, const IntegralSet& ints, double theta,
                                         std::size_t max_hops, std::size_t want) {
  std::vector<Candidate> pool;
  for (;;) {
    pool = heat_bath_pool(w, energy, ints, theta, max_hops, want);
    if (pool.size() >= want || theta < 1e-12) break;
    theta *= 0.5;
  }
  std::sort(pool.begin(), pool.end(), [](const Candidate& x, const Candidate& y) {
    return x.amplitude != y.amplitude ? x.amplitude > y.amplitude : x.det < y.det;
  });
  if (pool.size() > want) pool.resize(want);
  return pool;
}

struct Trimmed {
  Wavefunction wf;
  double energy;
};

// Local trim over randomized sub-blocks of the pool, each solved together
// with the core, then a global trim of the survivors to `keep`.
inline Trimmed trim(const std::vector<Determinant>& core, std::vector<Determinant> pool, std::size_t keep,
                    const Phase0Config& cfg, const IntegralSet& ints, Rng& rng) {
  std::unordered_set<Determinant, DeterminantHash> survivors(core.begin(), core.end());
  if (!pool.empty()) {
    rng.shuffle(std::span<Determinant>(pool));
    const std::size_t groups = std::min(cfg.num_groups, pool.size());
    const auto local_keep =
        static_cast<std::size_t>(std::ceil(cfg.local_trim_keep_ratio * static_cast<double>(std::max<std::size_t>(keep, 1))));
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<Determinant> block = core;
      for (std::size_t i = g; i < pool.size(); i += groups) block.push_back(pool[i]);
      if (block.size() <= local_keep) {
        survivors.insert(block.begin(), block.end());
        continue;
      }
      const auto space = build_groups(std::move(block));
      auto [e, c] = solve_projected(space, ints, 1e-6);
      for (const auto& d : top_dets(Wavefunction{space, std::move(c)}, local_keep)) survivors.insert(d);
    }
  }
  auto space = build_groups(std::vector<Determinant>(survivors.begin(), survivors.end()));
  if (space.size() > keep) {
    auto [e, c] = solve_projected(space, ints, 1e-6);
    space = build_groups(top_dets(Wavefunction{space, std::move(c)}, keep));
  }
  auto [e, c] = solve_projected(space, ints, cfg.davidson_tol);
  return {Wavefunction{std::move(space), std::move(c)}, e};
}

}  // namespace detail

inline std::string basin_label(const Wavefunction& w, const CenterMap* centers) {
  return centers ? spin_pattern(w, *centers) : std::string{};
}

// One TrimCI core search: expand through strong couplings, trim locally and
// globally, grow the core by a random factor from core_set_ratio per round.
inline CoreResult trimci_run(const IntegralSet& ints, const Phase0Config& cfg, std::uint64_t seed,
                             const std::vector<Determinant>* seed_dets = nullptr, const CenterMap* centers = nullptr) {
  cfg.validate();
  Rng rng(seed);
  const int n = static_cast<int>(ints.n_orb());
  const int na = ints.n_alpha(), nb = ints.n_beta();

  std::vector<Determinant> start;
  if (seed_dets && !seed_dets->empty()) {
    start = *seed_dets;
    if (cfg.initial_hf > 0 &&
        std::find(start.begin(), start.end(), reference_determinant(na, nb)) == start.end())
      start.push_back(reference_determinant(na, nb));
  } else {
    start = initial_determinants(n, na, nb, cfg.initial_random, rng);
    if (cfg.initial_hf == 0) std::erase(start, reference_determinant(na, nb));
  }

  std::size_t k = std::min(cfg.first_cycle_keep_size, cfg.max_final_dets);
  auto cur = detail::trim({}, std::move(start), k, cfg, ints, rng);
  const std::size_t max_iterations = 10 * cfg.max_final_dets + 100;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    if (cur.wf.size() >= cfg.max_final_dets && it > 0) break;
    const double ratio = rng.uniform(cfg.core_set_ratio.first, cfg.core_set_ratio.second);
    const std::size_t next =
        std::min(cfg.max_final_dets, static_cast<std::size_t>(std::ceil(static_cast<double>(cur.wf.size()) * ratio)));
    const auto want = static_cast<std::size_t>(std::ceil(cfg.pool_core_ratio * static_cast<double>(cur.wf.size())));
    const auto cands = detail::build_pool(cur.wf, cur.energy, ints, cfg.threshold, cfg.max_rounds, want);
    if (cands.empty()) break;
    std::vector<Determinant> pool;
    for (const auto& cnd : cands) pool.push_back(cnd.det);
    const auto& core = cur.wf.space.dets();
    auto trimmed = detail::trim({core.begin(), core.end()}, std::move(pool), next, cfg, ints, rng);
    cur = std::move(trimmed);
  }
  CoreResult out;
  out.energy = cur.energy;
  out.wf = std::move(cur.wf);
  out.basin = basin_label(out.wf, centers);
  out.seed = seed;
  return out;
}

}  // namespace coosci
