#pragma once

#include "coosci/analysis/pt2.hpp"
#include "coosci/coo/bfgs.hpp"
#include "coosci/coo/kappa.hpp"
#include "coosci/hamio/hubbard.hpp"
#include "coosci/hamio/rotate.hpp"
#include "coosci/trimci/trimci.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace coosci {

struct Phase0Cycle {
  std::size_t cycle = 0;
  std::optional<double> e_bfgs;  // previous core after this cycle's orbital step
  double e_ci = 0.0;             // re-searched core in this cycle's basis
  std::vector<double> run_energies;
  std::string basin;
  Eigen::MatrixXd rotation;      // cumulative orbitals used for the search
  std::vector<BfgsStep> bfgs_steps;
  double bfgs_initial_energy = 0.0;
};

struct Phase0Result {
  CoreResult best;
  Kappa kappa;
  Eigen::MatrixXd rotation;
  IntegralSet integrals;
  std::vector<Phase0Cycle> cycles;
};

namespace detail {

inline std::vector<Determinant> tracked_seed(const CoreResult& prev, const IntegralSet& ints, double randomness,
                                             Rng& rng) {
  auto dets = top_dets(prev.wf, prev.wf.size());
  const auto n_replace = static_cast<std::size_t>(std::llround(randomness * static_cast<double>(dets.size())));
  if (n_replace == 0) return dets;
  // Replace the weakest entries by fresh random determinants.
  std::unordered_set<Determinant, DeterminantHash> have(dets.begin(), dets.end() - static_cast<std::ptrdiff_t>(n_replace));
  dets.resize(dets.size() - n_replace);
  const int n = static_cast<int>(ints.n_orb());
  const double dim = space_dimension(n, ints.n_alpha(), ints.n_beta());
  std::size_t tries = 0;
  while (dets.size() < prev.wf.size() && static_cast<double>(have.size()) < dim && tries++ < 100 * prev.wf.size()) {
    Determinant d{random_string(rng, n, ints.n_alpha()), random_string(rng, n, ints.n_beta())};
    if (have.insert(d).second) dets.push_back(d);
  }
  return dets;
}

// Best run of one cycle; basin filter first when requested.
inline std::optional<CoreResult> best_of_runs(const IntegralSet& ints, const Phase0Config& cfg, std::size_t cycle,
                                              const std::vector<Determinant>* seed_dets, const CenterMap* centers,
                                              std::vector<double>& energies) {
  std::optional<CoreResult> best;
  for (std::size_t r = 0; r < cfg.num_runs; ++r) {
    auto res = trimci_run(ints, cfg, derive_seed(cfg.seed, cycle, r), seed_dets, centers);
    energies.push_back(res.energy);
    if (!cfg.basin.empty() && centers && rhd(res.basin, cfg.basin) != 0) continue;
    if (!best || res.energy < best->energy) best = std::move(res);
  }
  return best;
}

}  // namespace detail

// Alternates best-of-num_runs TrimCI core searches with BFGS orbital
// rotation; returns the lowest-energy (core, orbitals) state met.
inline Phase0Result phase0(const IntegralSet& ints, const Phase0Config& cfg, const BfgsConfig& coo_cfg,
                           const CenterSets* center_sets = nullptr,
                           const std::function<void(const Phase0Cycle&)>& on_cycle = {}) {
  cfg.validate();
  const std::size_t n = ints.n_orb();
  Phase0Result out;
  Eigen::MatrixXd rotation = Eigen::MatrixXd::Identity(n, n);
  IntegralSet cur_ints = ints;
  std::optional<CoreResult> prev;
  double best_e = std::numeric_limits<double>::infinity();
  Rng track_rng(derive_seed(cfg.seed, 0xbeef));

  auto consider = [&](const CoreResult& core, const IntegralSet& basis_ints, const Eigen::MatrixXd& rot) {
    if (core.energy < best_e) {
      best_e = core.energy;
      out.best = core;
      out.rotation = rot;
      out.integrals = basis_ints;
    }
  };

  const std::size_t last = cfg.orbital_optimization ? cfg.cycles : 0;
  for (std::size_t c = 0; c <= last; ++c) {
    Phase0Cycle rec;
    rec.cycle = c;
    if (c > 0) {
      const auto bf = bfgs_orbital_opt(prev->wf.space, cur_ints, coo_cfg, &prev->wf.coeffs);
      rotation = rotation * bf.rotation;
      cur_ints = bf.integrals;
      rec.e_bfgs = bf.energy;
      rec.bfgs_steps = bf.history;
      rec.bfgs_initial_energy = bf.initial_energy;
      CoreResult moved{Wavefunction{prev->wf.space, bf.coeffs}, bf.energy, c, {}, prev->seed, {}};
      consider(moved, cur_ints, rotation);
    }
    std::optional<CenterMap> centers;
    if (center_sets) centers = label_centers(rotation, *center_sets);
    std::vector<Determinant> seeds;
    if (cfg.tracking_dets && prev) seeds = detail::tracked_seed(*prev, cur_ints, cfg.loaded_dets_randomness, track_rng);
    auto best = detail::best_of_runs(cur_ints, cfg, c, seeds.empty() ? nullptr : &seeds,
                                     centers ? &*centers : nullptr, rec.run_energies);
    if (!best) {
      // No run landed in the requested basin: fall back to the lowest run.
      Phase0Config any = cfg;
      any.basin.clear();
      rec.run_energies.clear();
      best = detail::best_of_runs(cur_ints, any, c, seeds.empty() ? nullptr : &seeds, centers ? &*centers : nullptr,
                                  rec.run_energies);
      spdlog::warn("phase0 cycle {}: no run matched basin {}", c, cfg.basin);
    }
    best->index = c;
    rec.e_ci = best->energy;
    rec.basin = best->basin;
    rec.rotation = rotation;
    consider(*best, cur_ints, rotation);
    spdlog::info("phase0 cycle {}: E_CI {:.8f}{}", c, rec.e_ci,
                 rec.e_bfgs ? fmt::format(", E_BFGS {:.8f}", *rec.e_bfgs) : std::string{});
    if (on_cycle) on_cycle(rec);
    out.cycles.push_back(std::move(rec));
    prev = std::move(best);
  }
  out.kappa = kappa_from_rotation(out.rotation);
  return out;
}

struct ExpandRound {
  CoreResult state;
  Eigen::MatrixXd rotation;  // cumulative, relative to the integrals passed in
};

struct ExpandResult {
  std::vector<ExpandRound> rounds;
  IntegralSet integrals;
  Eigen::MatrixXd rotation;
};

namespace detail {

inline std::vector<Determinant> grow_candidates(const CoreResult& cur, const IntegralSet& ints, double theta,
                                                std::size_t want) {
  std::vector<Determinant> out;
  for (const auto& c : build_pool(cur.wf, cur.energy, ints, theta, 1, want)) out.push_back(c.det);
  return out;
}

}  // namespace detail

// Rounds of expand (heat-bath, oversampled) -> solve -> trim to the grown
// budget, with optional per-round orbital optimization and PT2. The
// callback may stop the expansion by returning false.
inline ExpandResult phase_expand(const CoreResult& start, const IntegralSet& ints, const PhaseGrowthConfig& cfg,
                                 const std::optional<BfgsConfig>& coo_cfg = std::nullopt,
                                 const std::function<bool(const ExpandRound&)>& on_round = {}) {
  cfg.validate();
  if (start.wf.size() == 0) throw std::invalid_argument("phase_expand needs a non-empty start");
  const std::size_t n = ints.n_orb();
  const double dim = space_dimension(static_cast<int>(n), ints.n_alpha(), ints.n_beta());
  ExpandResult out;
  out.integrals = ints;
  out.rotation = Eigen::MatrixXd::Identity(n, n);
  CoreResult cur = start;
  for (std::size_t round = 1; round <= cfg.max_rounds; ++round) {
    const auto size = cur.wf.size();
    const std::size_t budget = std::min<std::size_t>(
        {cfg.max_n_dets, static_cast<std::size_t>(std::ceil(static_cast<double>(size) * cfg.growth_factor - 1e-9)),
         static_cast<std::size_t>(dim)});
    CoreResult next = cur;
    if (budget > size) {
      const auto need = budget - size;
      const auto want = static_cast<std::size_t>(std::ceil(cfg.oversample * static_cast<double>(need)));
      auto cands = detail::grow_candidates(cur, out.integrals, cfg.threshold, want);
      if (!cands.empty()) {
        std::vector<Determinant> all(cur.wf.space.dets().begin(), cur.wf.space.dets().end());
        const std::vector<Determinant> added(cands.begin(), cands.end());
        all.insert(all.end(), cands.begin(), cands.end());
        const auto superset = build_groups(std::move(all));
        auto warm = detail::transfer(cur.wf, superset);
        auto [e_sup, c_sup] = detail::solve_projected(superset, out.integrals, cfg.energy_tol, &warm, cfg.use_connection_cache);
        const Wavefunction wsup{superset, std::move(c_sup)};
        auto trimmed = build_groups(detail::top_dets(wsup, budget));
        auto warm_t = detail::transfer(wsup, trimmed);
        auto [e_t, c_t] = detail::solve_projected(trimmed, out.integrals, cfg.energy_tol, &warm_t, cfg.use_connection_cache);
        if (e_t > cur.energy + 1e-12) {
          // Re-selection lost ground; keep the old core plus the strongest new dets.
          std::vector<Determinant> keep(cur.wf.space.dets().begin(), cur.wf.space.dets().end());
          std::vector<std::pair<double, Determinant>> fresh;
          for (const auto& d : added) fresh.emplace_back(std::abs(wsup.coeffs[*superset.find(d)]), d);
          std::stable_sort(fresh.begin(), fresh.end(), [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first > y.first : x.second < y.second;
          });
          for (std::size_t i = 0; i < std::min(need, fresh.size()); ++i) keep.push_back(fresh[i].second);
          trimmed = build_groups(std::move(keep));
          warm_t = detail::transfer(wsup, trimmed);
          std::tie(e_t, c_t) = detail::solve_projected(trimmed, out.integrals, cfg.energy_tol, &warm_t, cfg.use_connection_cache);
        }
        next.wf = Wavefunction{std::move(trimmed), std::move(c_t)};
        next.energy = e_t;
      }
    }
    if (cfg.orbital_optimization && coo_cfg) {
      BfgsConfig bc = *coo_cfg;
      bc.max_iter = cfg.orbital_opt_max_iter;
      const auto bf = bfgs_orbital_opt(next.wf.space, out.integrals, bc, &next.wf.coeffs);
      out.integrals = bf.integrals;
      out.rotation = out.rotation * bf.rotation;
      next.wf.coeffs = bf.coeffs;
      next.energy = bf.energy;
    }
    next.index = round;
    next.e_pt2.reset();
    if (cfg.pt2_correction) {
      Pt2Config pc;
      pc.eps_hc = cfg.pt2_eps_hc;
      pc.e_var = next.energy;
      next.e_pt2 = pt2_correction(next.wf, out.integrals, pc).energy;
    }
    const bool grew = next.wf.size() > size;
    cur = std::move(next);
    ExpandRound rec{cur, out.rotation};
    out.rounds.push_back(rec);
    spdlog::debug("expand round {}: N {} E {:.10f}", round, cur.wf.size(), cur.energy);
    if (on_round && !on_round(rec)) break;
    if (cur.wf.size() >= cfg.max_n_dets || static_cast<double>(cur.wf.size()) >= dim) break;
    if (!grew && !(cfg.orbital_optimization && coo_cfg) && budget > size) break;  // pool exhausted
    if (budget <= size && !(cfg.orbital_optimization && coo_cfg) && cfg.growth_factor == 1.0) break;
  }
  return out;
}

inline void write_trajectory_csv(std::ostream& out, const std::vector<CoreResult>& traj) {
  out << "round,N_det,E_var,E_pt2\n";
  char buf[128];
  for (const auto& r : traj) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.12f,", r.index, r.wf.size(), r.energy);
    out << buf;
    if (r.e_pt2) {
      std::snprintf(buf, sizeof buf, "%.12f", *r.e_pt2);
      out << buf;
    }
    out << '\n';
  }
}

inline std::vector<CoreResult> trajectory_of(const CoreResult& start, const ExpandResult& e) {
  std::vector<CoreResult> out{start};
  for (const auto& r : e.rounds) out.push_back(r.state);
  return out;
}

// First crossing of dE < target, log-log interpolated between samples.
struct Crossing {
  double n = 0.0;
  bool censored = true;
};

inline Crossing first_crossing(const std::vector<std::pair<double, double>>& n_de, double target) {
  for (std::size_t k = 0; k < n_de.size(); ++k) {
    if (n_de[k].second >= target) continue;
    if (k == 0) return {n_de[0].first, false};
    const auto [n0, d0] = n_de[k - 1];
    const auto [n1, d1] = n_de[k];
    if (d1 <= 0.0) {
      // Exact hit: fall back to linear in log N.
      const double t = (d0 - target) / (d0 - d1);
      return {std::exp(std::log(n0) + t * (std::log(n1) - std::log(n0))), false};
    }
    const double t = (std::log(d0) - std::log(target)) / (std::log(d0) - std::log(d1));
    return {std::exp(std::log(n0) + t * (std::log(n1) - std::log(n0))), false};
  }
  return {};
}

struct ScanConfig {
  std::size_t L = 8;
  double U = 4.0;
  std::vector<double> alphas{0.0, 0.4, 0.7, 1.0};
  std::uint64_t model_seed = 0;
  double target = 0.1;
  Phase0Config phase0;
  BfgsConfig coo;
  PhaseGrowthConfig growth;
  bool early_stop = true;
};

struct ScanMethod {
  Crossing crossing;
  std::vector<std::pair<double, double>> trajectory;  // (N_det, dE)
  double phase0_energy = 0.0;
};

struct ScanRow {
  double alpha = 0.0;
  double e_fci = 0.0;
  ScanMethod coo, no_coo;
  double ratio() const {
    if (coo.crossing.censored || no_coo.crossing.censored) return std::numeric_limits<double>::quiet_NaN();
    return no_coo.crossing.n / coo.crossing.n;
  }
};

inline ScanMethod scan_method(const IntegralSet& ints, double e_fci, const ScanConfig& cfg, bool coo) {
  Phase0Config p0 = cfg.phase0;
  p0.orbital_optimization = coo;
  PhaseGrowthConfig g = cfg.growth;
  g.orbital_optimization = coo;
  ScanMethod m;
  const auto start = phase0(ints, p0, cfg.coo);
  m.phase0_energy = start.best.energy;
  m.trajectory.emplace_back(static_cast<double>(start.best.wf.size()), start.best.energy - e_fci);
  bool crossed = start.best.energy - e_fci < cfg.target;
  if (!crossed) {
    phase_expand(start.best, start.integrals, g, coo ? std::optional<BfgsConfig>(cfg.coo) : std::nullopt,
                 [&](const ExpandRound& r) {
                   m.trajectory.emplace_back(static_cast<double>(r.state.wf.size()), r.state.energy - e_fci);
                   return !(cfg.early_stop && r.state.energy - e_fci < cfg.target);
                 });
  }
  m.crossing = first_crossing(m.trajectory, cfg.target);
  return m;
}

// Determinant count at which COO and site-basis TrimCI first reach
// dE < target on the Hubbard graph, per alpha.
inline std::vector<ScanRow> topology_scan(const ScanConfig& cfg,
                                          const std::function<void(const ScanRow&)>& on_row = {}) {
  if (!(cfg.target > 0.0)) throw std::invalid_argument("accuracy target must be positive");
  std::vector<ScanRow> rows;
  for (double alpha : cfg.alphas) {
    GraphModelSpec spec;
    spec.L = cfg.L;
    spec.U = cfg.U;
    spec.alpha = alpha;
    spec.seed = cfg.model_seed;
    const auto ints = build_hubbard_graph(spec);
    const auto full = build_groups(full_space(static_cast<int>(ints.n_orb()), ints.n_alpha(), ints.n_beta()));
    ScanRow row;
    row.alpha = alpha;
    row.e_fci = full.size() <= 10'000 ? dense_ground_state(full, ints).energy : davidson_lowest(full, ints).energy;
    row.coo = scan_method(ints, row.e_fci, cfg, true);
    row.no_coo = scan_method(ints, row.e_fci, cfg, false);
    spdlog::info("scan alpha {}: N_COO {} N_noCOO {}", alpha, row.coo.crossing.n, row.no_coo.crossing.n);
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

struct GainCurve {
  std::vector<std::pair<double, double>> points;  // (N_det, E - e_ref)
};

// Frozen-orbital expansions from cores re-searched in each snapshot basis.
inline std::vector<GainCurve> gain_transfer_experiment(const std::vector<Kappa>& snapshots,
                                                       const std::vector<std::uint64_t>& core_seeds,
                                                       const IntegralSet& ints, const Phase0Config& core_cfg,
                                                       PhaseGrowthConfig expand_cfg, double e_ref) {
  if (core_seeds.empty()) throw std::invalid_argument("gain transfer needs at least one core seed");
  expand_cfg.orbital_optimization = false;
  std::vector<GainCurve> out;
  for (const auto& k : snapshots) {
    const auto basis = rotate_integrals(ints, expm_antisymmetric(k));
    std::optional<CoreResult> best;
    for (auto s : core_seeds) {
      auto r = trimci_run(basis, core_cfg, s);
      if (!best || r.energy < best->energy) best = std::move(r);
    }
    GainCurve curve;
    curve.points.emplace_back(static_cast<double>(best->wf.size()), best->energy - e_ref);
    const auto ex = phase_expand(*best, basis, expand_cfg);
    for (const auto& r : ex.rounds) curve.points.emplace_back(static_cast<double>(r.state.wf.size()), r.state.energy - e_ref);
    out.push_back(std::move(curve));
  }
  return out;
}

}  // namespace coosci
