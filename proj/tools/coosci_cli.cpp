#include "coosci/analysis/powerlaw.hpp"
#include "coosci/analysis/pt2.hpp"
#include "coosci/analysis/report.hpp"
#include "coosci/cli/manifest.hpp"
#include "coosci/coo/bfgs.hpp"
#include "coosci/coo/kappa.hpp"
#include "coosci/detspace/excitations.hpp"
#include "coosci/detspace/wavefunction.hpp"
#include "coosci/distmv/checkpoint.hpp"
#include "coosci/distmv/factory.hpp"
#include "coosci/distmv/worker.hpp"
#include "coosci/hamio/fcidump.hpp"
#include "coosci/hamio/hubbard.hpp"
#include "coosci/obsrv/centers.hpp"
#include "coosci/obsrv/entanglement.hpp"
#include "coosci/obsrv/ordering.hpp"
#include "coosci/obsrv/rdm.hpp"
#include "coosci/solver/davidson.hpp"
#include "coosci/solver/dense.hpp"
#include "coosci/trimci/config.hpp"
#include "coosci/trimci/workflow.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace coosci;

namespace {

// Settings shared by every subcommand. Model and algorithm parameters all
// end up in one key/value table so the manifest can snapshot them.
struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out_dir = ".";
  std::string config;
  std::vector<std::string> sets;
  std::string replay;
  std::string log_level = "info";
  std::string fcidump;
  std::optional<std::size_t> L;
  std::optional<double> U, t, alpha;
  std::optional<std::uint64_t> model_seed;
};

class Run {
 public:
  Run(std::string command, const Globals& g, std::vector<std::string> argv) : g_(g) {
    m_.command = std::move(command);
    m_.argv = std::move(argv);
    if (!g.config.empty()) {
      kv_ = KeyValueConfig::parse_file(g.config);
      m_.add_input(g.config);
    }
    for (const auto& s : g.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + s);
      kv_.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!g.fcidump.empty()) kv_.set("fcidump", g.fcidump);
    if (g.L) kv_.set("L", std::to_string(*g.L));
    if (g.U) kv_.set("U", fmt::format("{}", *g.U));
    if (g.t) kv_.set("t", fmt::format("{}", *g.t));
    if (g.alpha) kv_.set("alpha", fmt::format("{}", *g.alpha));
    if (g.model_seed) kv_.set("model_seed", std::to_string(*g.model_seed));
    kv_.set("seed", std::to_string(g.seed));
    m_.seeds["seed"] = g.seed;
    fs::create_directories(g.out_dir);
  }

  KeyValueConfig& kv() { return kv_; }
  const Globals& globals() const { return g_; }

  fs::path out(const std::string& name) {
    m_.outputs.push_back(name);
    return fs::path(g_.out_dir) / name;
  }
  void input(const std::string& path) { m_.add_input(path); }

  IntegralSet model() {
    if (kv_.has("fcidump")) {
      const auto path = kv_.get("fcidump", std::string{});
      input(path);
      return read_fcidump(path);
    }
    GraphModelSpec spec;
    spec.L = kv_.get("L", spec.L);
    spec.U = kv_.get("U", spec.U);
    spec.t = kv_.get("t", spec.t);
    spec.alpha = kv_.get("alpha", spec.alpha);
    spec.seed = kv_.get("model_seed", static_cast<std::size_t>(spec.seed));
    if (kv_.has("n_alpha")) spec.n_alpha = static_cast<int>(kv_.get("n_alpha", std::size_t{0}));
    if (kv_.has("n_beta")) spec.n_beta = static_cast<int>(kv_.get("n_beta", std::size_t{0}));
    m_.seeds["model_seed"] = spec.seed;
    return build_hubbard_graph(spec);
  }

  WavefunctionFile wavefunction(const std::string& path) {
    input(path);
    return read_wavefunction(path);
  }

  void finish(double wall) {
    for (const auto& k : kv_.unused())
      if (k != "seed") spdlog::warn("config key '{}' was not used", k);
    m_.config = kv_.values();
    m_.wall_time_s = wall;
    write_manifest(fs::path(g_.out_dir) / "manifest.json", m_);
  }

 private:
  const Globals& g_;
  KeyValueConfig kv_;
  RunManifest m_;
};

void check_electrons(const WavefunctionFile& f, const IntegralSet& ints) {
  if (f.n_orb != ints.n_orb() || f.n_alpha != ints.n_alpha() || f.n_beta != ints.n_beta())
    throw std::invalid_argument(fmt::format("wavefunction ({} orbitals, {}a {}b) does not match integrals ({}, {}a {}b)",
                                            f.n_orb, f.n_alpha, f.n_beta, ints.n_orb(), ints.n_alpha(), ints.n_beta()));
}

void write_wf(const fs::path& p, const Wavefunction& w, const IntegralSet& ints) {
  write_wavefunction(p.string(), w, ints.n_orb(), ints.n_alpha(), ints.n_beta());
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

std::string num(double x) { return fmt::format("{:.12f}", x); }

// Projected ground state of a fixed determinant space, warm-started from w.
CoreResult solve_in_space(const Wavefunction& w, const IntegralSet& ints) {
  DavidsonConfig dc;
  dc.warm_start = w.coeffs;
  auto r = davidson_lowest(w.space, ints, dc);
  CoreResult c;
  c.wf = Wavefunction{w.space, std::move(r.coeffs)};
  c.energy = r.energy;
  return c;
}

// fci -------------------------------------------------------------------

struct FciOpts {
  std::string method = "auto";
};

int cmd_fci(Run& run, const FciOpts& o) {
  const auto ints = run.model();
  const auto space = build_groups(full_space(static_cast<int>(ints.n_orb()), ints.n_alpha(), ints.n_beta()));
  const bool dense = o.method == "dense" || (o.method == "auto" && space.size() <= 2000);
  double energy = 0.0;
  std::vector<double> coeffs;
  nlohmann::json j;
  if (dense) {
    auto r = dense_ground_state(space, ints);
    energy = r.energy;
    coeffs = std::move(r.coeffs);
  } else {
    auto r = davidson_lowest(space, ints);
    energy = r.energy;
    coeffs = std::move(r.coeffs);
    j["iterations"] = r.iterations;
    j["matvecs"] = r.matvecs;
    j["converged"] = r.converged;
  }
  j["method"] = dense ? "dense" : "davidson";
  j["energy"] = energy;
  j["n_det"] = space.size();
  j["n_alpha_groups"] = space.n_alpha_groups();
  j["e_core"] = ints.e_core();
  write_json(run.out("fci.json"), j);
  write_wf(run.out("fci.wf"), Wavefunction{space, std::move(coeffs)}, ints);
  std::printf("energy %s\n", num(energy).c_str());
  return 0;
}

// trimci ----------------------------------------------------------------

int cmd_trimci(Run& run) {
  auto& kv = run.kv();
  const auto ints = run.model();
  const auto p0 = phase0_from(kv);
  const auto bc = bfgs_from(kv);
  const auto growth = growth_from(kv, "phase1.", phase1_defaults());
  const bool expand = kv.get("expand", true);
  std::optional<CenterSets> centers;
  if (kv.has("centers")) {
    const auto path = kv.get("centers", std::string{});
    run.input(path);
    centers = read_center_sets(path);
  }

  auto cycles_out = open_out(run.out("phase0.csv"));
  cycles_out << "cycle,e_bfgs,e_ci,best_run,basin\n";
  const auto p = phase0(ints, p0, bc, centers ? &*centers : nullptr, [&](const Phase0Cycle& c) {
    const double best_run = c.run_energies.empty() ? c.e_ci : *std::min_element(c.run_energies.begin(), c.run_energies.end());
    cycles_out << c.cycle << ',' << (c.e_bfgs ? num(*c.e_bfgs) : "") << ',' << num(c.e_ci) << ',' << num(best_run) << ','
               << c.basin << '\n';
  });
  write_wf(run.out("core.wf"), p.best.wf, ints);
  write_kappa(run.out("kappa.bin").string(), p.kappa);
  write_fcidump(run.out("core.fcidump").string(), p.integrals);

  nlohmann::json j{{"phase0_energy", p.best.energy}, {"phase0_n_det", p.best.wf.size()}, {"basin", p.best.basin}};
  std::vector<CoreResult> traj{p.best};
  if (expand) {
    const auto e = phase_expand(p.best, p.integrals, growth,
                                growth.orbital_optimization ? std::optional<BfgsConfig>(bc) : std::nullopt);
    traj = trajectory_of(p.best, e);
    write_wf(run.out("final.wf"), traj.back().wf, ints);
    write_fcidump(run.out("final.fcidump").string(), e.integrals);
  }
  auto t = open_out(run.out("trajectory.csv"));
  write_trajectory_csv(t, traj);
  j["final_energy"] = traj.back().energy;
  j["final_n_det"] = traj.back().wf.size();
  j["rounds"] = traj.size() - 1;
  write_json(run.out("trimci.json"), j);
  std::printf("phase0 %s (%zu dets)\nfinal %s (%zu dets)\n", num(p.best.energy).c_str(), p.best.wf.size(),
              num(traj.back().energy).c_str(), traj.back().wf.size());
  return 0;
}

// coo -------------------------------------------------------------------

struct WfOpts {
  std::string wf;
};

int cmd_coo(Run& run, const WfOpts& o) {
  const auto ints = run.model();
  const auto f = run.wavefunction(o.wf);
  check_electrons(f, ints);
  const auto bc = bfgs_from(run.kv());
  auto hist = open_out(run.out("bfgs.csv"));
  hist << "step,energy,gradient_norm,step_length,trials\n";
  std::size_t step = 0;
  const auto r = bfgs_orbital_opt(f.wf.space, ints, bc, &f.wf.coeffs, [&](const BfgsStep& s) {
    hist << step++ << ',' << num(s.energy) << ',' << fmt::format("{:.6e}", s.gradient_norm) << ','
         << fmt::format("{:.6e}", s.step_length) << ',' << s.trials << '\n';
  });
  write_kappa(run.out("kappa.bin").string(), r.kappa);
  write_fcidump(run.out("rotated.fcidump").string(), r.integrals);
  write_wf(run.out("coo.wf"), Wavefunction{f.wf.space, r.coeffs}, ints);
  write_json(run.out("coo.json"), {{"initial_energy", r.initial_energy},
                                   {"energy", r.energy},
                                   {"iterations", r.iterations},
                                   {"converged", r.converged}});
  std::printf("initial %s\nfinal %s\n", num(r.initial_energy).c_str(), num(r.energy).c_str());
  return 0;
}

// expand ----------------------------------------------------------------

struct ExpandOpts {
  std::string wf;
  int phase = 1;
};

int cmd_expand(Run& run, const ExpandOpts& o) {
  const auto ints = run.model();
  const auto f = run.wavefunction(o.wf);
  check_electrons(f, ints);
  const auto growth = growth_from(run.kv(), "phase" + std::to_string(o.phase) + ".",
                                  o.phase == 2 ? phase2_defaults() : phase1_defaults());
  const auto bc = bfgs_from(run.kv());
  const auto start = solve_in_space(f.wf, ints);
  const auto e = phase_expand(start, ints, growth,
                              growth.orbital_optimization ? std::optional<BfgsConfig>(bc) : std::nullopt);
  const auto traj = trajectory_of(start, e);
  auto t = open_out(run.out("trajectory.csv"));
  write_trajectory_csv(t, traj);
  write_wf(run.out("expanded.wf"), traj.back().wf, ints);
  if (growth.orbital_optimization) write_fcidump(run.out("expanded.fcidump").string(), e.integrals);
  nlohmann::json j{{"start_energy", start.energy}, {"final_energy", traj.back().energy},
                   {"final_n_det", traj.back().wf.size()}, {"rounds", e.rounds.size()}};
  if (traj.back().e_pt2) j["final_e_pt2"] = *traj.back().e_pt2;
  write_json(run.out("expand.json"), j);
  std::printf("final %s (%zu dets)\n", num(traj.back().energy).c_str(), traj.back().wf.size());
  return 0;
}

// scan ------------------------------------------------------------------

int cmd_scan(Run& run) {
  auto& kv = run.kv();
  ScanConfig sc;
  sc.L = kv.get("L", sc.L);
  sc.U = kv.get("U", sc.U);
  if (kv.has("alphas")) sc.alphas = kv.get_list("alphas");
  sc.model_seed = kv.get("model_seed", static_cast<std::size_t>(sc.model_seed));
  sc.target = kv.get("target", sc.target);
  sc.early_stop = kv.get("early_stop", sc.early_stop);
  sc.phase0 = phase0_from(kv);
  sc.coo = bfgs_from(kv);
  sc.growth = growth_from(kv, "phase1.", phase1_defaults());

  auto csv = open_out(run.out("scan.csv"));
  auto tcsv = open_out(run.out("scan_trajectories.csv"));
  csv << "alpha,e_fci,e0_coo,e0_nocoo,n_coo,n_nocoo,censored_coo,censored_nocoo,ratio\n";
  tcsv << "alpha,method,n_det,dE\n";
  nlohmann::json rows = nlohmann::json::array();
  topology_scan(sc, [&](const ScanRow& r) {
    csv << r.alpha << ',' << num(r.e_fci) << ',' << num(r.coo.phase0_energy) << ',' << num(r.no_coo.phase0_energy) << ','
        << r.coo.crossing.n << ',' << r.no_coo.crossing.n << ',' << r.coo.crossing.censored << ','
        << r.no_coo.crossing.censored << ',' << r.ratio() << '\n';
    for (const auto& [name, m] : {std::pair{"coo", &r.coo}, std::pair{"nocoo", &r.no_coo}})
      for (const auto& [n, de] : m->trajectory) tcsv << r.alpha << ',' << name << ',' << n << ',' << num(de) << '\n';
    nlohmann::json row{{"alpha", r.alpha}, {"e_fci", r.e_fci}, {"n_coo", r.coo.crossing.n},
                       {"n_nocoo", r.no_coo.crossing.n}};
    if (!std::isnan(r.ratio())) row["ratio"] = r.ratio();
    rows.push_back(row);
    std::printf("alpha %g: N_COO %g N_noCOO %g\n", r.alpha, r.coo.crossing.n, r.no_coo.crossing.n);
    std::fflush(stdout);
  });
  write_json(run.out("scan.json"), {{"target", sc.target}, {"rows", rows}});
  return 0;
}

// analyze ---------------------------------------------------------------

struct AnalyzeOpts {
  std::string wf;
  std::string centers;
  std::string kappa;
};

int cmd_analyze(Run& run, const AnalyzeOpts& o) {
  const auto ints = run.model();
  const auto f = run.wavefunction(o.wf);
  check_electrons(f, ints);
  const std::size_t n = f.n_orb;
  const auto mi = mutual_information(f.wf, n);
  {
    auto csv = open_out(run.out("mi.csv"));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) csv << (k ? "," : "") << fmt::format("{:.12e}", mi(i, k));
      csv << '\n';
    }
  }
  std::vector<std::size_t> site(n);
  std::iota(site.begin(), site.end(), 0);
  const auto order = fiedler_order(mi);
  const auto rdms = compute_rdms(f.wf, build_connection_pattern(f.wf.space), n);
  nlohmann::json j{{"n_det", f.wf.size()},
                   {"mi_max", mi.maxCoeff()},
                   {"mi_total", mi.sum() / 2.0},
                   {"fiedler_order", order},
                   {"k95_site", k95_bandwidth(mi, site)},
                   {"k95_fiedler", k95_bandwidth(mi, order)},
                   {"rdm_energy", rdm_energy(rdms.one, rdms.two, ints)},
                   {"rayleigh_energy", rayleigh_quotient(f.wf, ints)}};
  if (!o.centers.empty()) {
    run.input(o.centers);
    Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    if (!o.kappa.empty()) {
      run.input(o.kappa);
      rot = expm_antisymmetric(read_kappa(o.kappa));
    }
    const auto cmap = label_centers(rot, read_center_sets(o.centers));
    const auto h = multicenter_histogram(f.wf, cmap);
    auto csv = open_out(run.out("multicenter.csv"));
    csv << "touched,dets,pct_dets,pct_weight,pct_excitation_weight\n";
    for (const auto& r : h.rows)
      csv << r.touched << ',' << r.dets << ',' << num(r.pct_dets) << ',' << num(r.pct_weight) << ','
          << (std::isnan(r.pct_excitation_weight) ? std::string{} : num(r.pct_excitation_weight)) << '\n';
    j["multi_center_excitation_weight"] = h.multi_center_excitation_weight;
    j["center_labels"] = cmap.label;
    j["center_names"] = cmap.names;
  }
  write_json(run.out("analyze.json"), j);
  std::printf("k95 site %zu fiedler %zu\n", j["k95_site"].get<std::size_t>(), j["k95_fiedler"].get<std::size_t>());
  return 0;
}

// fit -------------------------------------------------------------------

struct FitOpts {
  std::string csv;
  std::optional<double> target;
  std::size_t bootstrap = 500;
};

int cmd_fit(Run& run, const FitOpts& o) {
  run.input(o.csv);
  const auto pts = read_points_csv(o.csv);
  const auto f = powerlaw_fit(pts, {.n_bootstrap = o.bootstrap, .seed = run.globals().seed});
  auto j = to_json(f);
  if (o.target) {
    const auto c = crossing_interpolate(pts, *o.target, f.e_extrap);
    j["target"] = *o.target;
    j["n_match"] = c.n_match;
    j["n_match_extrapolated"] = c.extrapolated;
  }
  write_json(run.out("fit.json"), j);
  auto csv = open_out(run.out("fit.csv"));
  write_fit_csv(csv, pts, f);
  std::printf("e_extrap %s alpha %.4f r2 %.5f\n", num(f.e_extrap).c_str(), f.alpha_exp, f.r2);
  return 0;
}

// pt2 -------------------------------------------------------------------

struct Pt2Opts {
  std::string wf;
  double eps = 1e-8;
  bool adaptive = false;
};

int cmd_pt2(Run& run, const Pt2Opts& o) {
  const auto ints = run.model();
  const auto f = run.wavefunction(o.wf);
  check_electrons(f, ints);
  Pt2Config pc;
  pc.eps_hc = o.eps;
  pc.adaptive = o.adaptive;
  pc.threads = run.globals().threads;
  const auto r = pt2_correction(f.wf, ints, pc);
  write_json(run.out("pt2.json"), to_json(r));
  std::printf("e_var %s\ne_pt2 %s\ntotal %s\n", num(r.e_var).c_str(), num(r.energy).c_str(),
              num(r.e_var + r.energy).c_str());
  return 0;
}

// factory / worker ------------------------------------------------------

struct FactoryOpts {
  std::string wf;
  std::size_t rank = 0;
  std::size_t shards = 1;
  std::string coordinator;
  std::string host = "127.0.0.1";
  int port = 0;
  std::string port_file;
  std::string work_dir;
  bool resume = false;
  std::size_t c_max = 100;
  std::size_t b_max = 7;
  std::size_t chunk_rows = 4096;
  long lease_ms = 120'000;
  double energy_tol = 1e-8;
  double residual_tol = 1e-10;
  std::size_t max_subspace = 8;
  std::size_t local_workers = 0;
  std::optional<std::size_t> kill_after;
};

int cmd_factory(Run& run, const FactoryOpts& o) {
  const auto ints = run.model();
  DetSet space;
  if (o.wf.empty()) {
    space = build_groups(full_space(static_cast<int>(ints.n_orb()), ints.n_alpha(), ints.n_beta()));
  } else {
    auto f = run.wavefunction(o.wf);
    check_electrons(f, ints);
    space = std::move(f.wf.space);
  }
  FactoryConfig fc;
  fc.rank = o.rank;
  if (o.shards > 1) fc.shards = even_shards(space.size(), o.shards);
  fc.coordinator = o.coordinator;
  fc.host = o.host;
  fc.port = o.port;
  fc.work_dir = o.work_dir;
  fc.resume = o.resume;
  fc.c_max = o.c_max;
  fc.b_max = o.b_max;
  fc.chunk_rows = o.chunk_rows;
  fc.lease_timeout = Millis(o.lease_ms);
  fc.davidson.energy_tol = o.energy_tol;
  fc.davidson.residual_tol = o.residual_tol;
  fc.davidson.max_subspace = o.max_subspace;
  fc.kill_after_matvecs = o.kill_after;

  std::vector<std::jthread> workers;
  fc.on_listening = [&](int port) {
    spdlog::info("factory {} listening on {}:{}", o.rank, o.host, port);
    if (!o.port_file.empty()) {
      std::ofstream(o.port_file + ".tmp") << port << '\n';
      fs::rename(o.port_file + ".tmp", o.port_file);
    }
    if (o.rank != 0 && o.local_workers > 0) spdlog::warn("local workers start only on factory 0");
    if (o.rank != 0) return;
    for (std::size_t w = 0; w < o.local_workers; ++w)
      workers.emplace_back([port, w, host = o.host](std::stop_token st) {
        WorkerConfig wc;
        wc.factories = {host + ":" + std::to_string(port)};
        wc.name = "local-" + std::to_string(w);
        worker_loop(wc, st);
      });
  };
  const auto r = factory_serve(space, ints, fc, {});
  workers.clear();
  nlohmann::json j{{"energy", r.energy},
                   {"residual", r.residual},
                   {"converged", r.converged},
                   {"killed", r.killed},
                   {"resumed", r.resumed},
                   {"matvecs", r.matvecs},
                   {"iterations", r.iterations},
                   {"row_begin", r.row_begin},
                   {"row_end", r.row_end},
                   {"bundles_per_matvec", r.bundles_per_matvec},
                   {"leases", r.leases},
                   {"re_leases", r.re_leases},
                   {"checkpoints_written", r.checkpoints_written},
                   {"config_hash", r.config_hash}};
  write_json(run.out("factory-" + std::to_string(o.rank) + ".json"), j);
  if (r.killed) {
    std::fprintf(stderr, "factory stopped by fault injection after %zu matvecs\n", r.matvecs);
    return 4;
  }
  if (o.shards <= 1) write_wf(run.out("factory.wf"), Wavefunction{space, r.coeffs}, ints);
  std::printf("energy %s\n", num(r.energy).c_str());
  return r.converged ? 0 : 5;
}

struct WorkerOpts {
  std::vector<std::string> factories;
  std::string scratch;
  std::size_t lease_size = 1;
  long retry_ms = 30'000;
  long max_idle_ms = 0;
  std::string name = "worker";
};

int cmd_worker(Run& run, const WorkerOpts& o) {
  WorkerConfig wc;
  wc.factories = o.factories;
  wc.scratch_dir = o.scratch;
  wc.lease_size = o.lease_size;
  wc.retry_deadline = Millis(o.retry_ms);
  wc.max_idle = Millis(o.max_idle_ms);
  wc.name = o.name;
  const auto s = worker_loop(wc);
  write_json(run.out("worker.json"), {{"bundles_done", s.bundles_done},
                                      {"bundles_aborted", s.bundles_aborted},
                                      {"cache_hits", s.cache_hits},
                                      {"finished", s.finished}});
  std::printf("bundles %zu\n", s.bundles_done);
  if (!s.finished) {
    std::fprintf(stderr, "worker gave up before the run finished\n");
    return 3;
  }
  return 0;
}

// checkpoint-inspect ----------------------------------------------------

int cmd_checkpoint_inspect(Run& run, const std::string& dir) {
  const auto meta = read_checkpoint_meta(dir);
  std::printf("%s\n", to_json(meta).dump(2).c_str());
  try {
    const auto c = read_checkpoint(dir);
    std::printf("vectors ok (%zu rows)\n", c.v.size());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "checkpoint corrupt: %s\n", e.what());
    write_json(run.out("inspect.json"), {{"meta", to_json(meta)}, {"ok", false}});
    return 2;
  }
  write_json(run.out("inspect.json"), {{"meta", to_json(meta)}, {"ok", true}});
  return 0;
}

// driver ----------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, bool allow_replay);

int replay(const Globals& g, bool out_dir_given) {
  const auto m = read_manifest(g.replay);
  if (const auto changed = changed_inputs(m); !changed.empty())
    throw std::runtime_error("input changed since the manifest was written: " + changed.front());
  std::vector<std::string> args;
  for (std::size_t i = 0; i < m.argv.size(); ++i) {
    const auto& a = m.argv[i];
    if (out_dir_given && a == "--out-dir") {
      ++i;
      continue;
    }
    if (out_dir_given && a.starts_with("--out-dir=")) continue;
    args.push_back(a);
  }
  if (out_dir_given) args.insert(args.begin(), {"--out-dir", g.out_dir});
  return run_cli(args, false);
}

int run_cli(const std::vector<std::string>& args, bool allow_replay) {
  CLI::App app{"Selected CI with orbital optimization and distributed matvecs", "coosci"};
  app.require_subcommand(allow_replay ? 0 : 1, 1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master random seed");
  app.add_option("--threads", g.threads, "Threads for PT2 and local workers")->check(CLI::PositiveNumber);
  auto* out_opt = app.add_option("--out-dir", g.out_dir, "Directory for outputs and manifest.json");
  app.add_option("--config", g.config, "key = value parameter file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Override one config key (key=value)");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off");
  app.add_option("--fcidump", g.fcidump, "Integrals file; overrides the Hubbard model")->check(CLI::ExistingFile);
  app.add_option("--L", g.L, "Hubbard sites");
  app.add_option("--U", g.U, "Hubbard U in units of t");
  app.add_option("--t", g.t, "Hopping");
  app.add_option("--alpha", g.alpha, "Long-range hopping strength");
  app.add_option("--model-seed", g.model_seed, "Seed of the long-range couplings");
  if (allow_replay) app.add_option("--replay", g.replay, "Re-run the command recorded in a manifest")->check(CLI::ExistingFile);

  FciOpts fci;
  auto* s_fci = app.add_subcommand("fci", "Exact ground state in the full space");
  s_fci->add_option("--method", fci.method)->check(CLI::IsMember({"auto", "dense", "davidson"}));

  auto* s_trimci = app.add_subcommand("trimci", "Phase 0 core search followed by expansion");

  WfOpts coo;
  auto* s_coo = app.add_subcommand("coo", "BFGS orbital optimization of a fixed determinant space");
  s_coo->add_option("--wf", coo.wf, "Wavefunction file")->required()->check(CLI::ExistingFile);

  ExpandOpts ex;
  auto* s_expand = app.add_subcommand("expand", "Grow a wavefunction by heat-bath rounds");
  s_expand->add_option("--wf", ex.wf, "Starting wavefunction")->required()->check(CLI::ExistingFile);
  s_expand->add_option("--phase", ex.phase, "Growth defaults and key prefix")->check(CLI::IsMember({1, 2}));

  auto* s_scan = app.add_subcommand("scan", "COO vs site-basis determinant counts across alpha");

  AnalyzeOpts an;
  auto* s_analyze = app.add_subcommand("analyze", "Mutual information, orderings, RDM energy");
  s_analyze->add_option("--wf", an.wf)->required()->check(CLI::ExistingFile);
  s_analyze->add_option("--centers", an.centers, "Center definition file")->check(CLI::ExistingFile);
  s_analyze->add_option("--kappa", an.kappa, "Orbital rotation for center labels")->check(CLI::ExistingFile);

  FitOpts fit;
  auto* s_fit = app.add_subcommand("fit", "Power-law extrapolation of E(N_det)");
  s_fit->add_option("--csv", fit.csv, "n_det,e rows")->required()->check(CLI::ExistingFile);
  s_fit->add_option("--target", fit.target, "Energy whose crossing N is wanted");
  s_fit->add_option("--bootstrap", fit.bootstrap, "Bootstrap resamples");

  Pt2Opts pt2;
  auto* s_pt2 = app.add_subcommand("pt2", "Epstein-Nesbet PT2 correction");
  s_pt2->add_option("--wf", pt2.wf)->required()->check(CLI::ExistingFile);
  s_pt2->add_option("--eps", pt2.eps, "Heat-bath screening threshold");
  s_pt2->add_flag("--adaptive", pt2.adaptive, "Tighten eps until the correction settles");

  FactoryOpts fo;
  auto* s_factory = app.add_subcommand("factory", "Serve bundle matvecs and drive Davidson");
  s_factory->add_option("--wf", fo.wf, "Take the determinant space from this file")->check(CLI::ExistingFile);
  s_factory->add_option("--rank", fo.rank);
  s_factory->add_option("--shards", fo.shards, "Number of factories")->check(CLI::PositiveNumber);
  s_factory->add_option("--coordinator", fo.coordinator, "host:port of factory 0");
  s_factory->add_option("--host", fo.host);
  s_factory->add_option("--port", fo.port);
  s_factory->add_option("--port-file", fo.port_file, "Write the bound port here");
  s_factory->add_option("--work-dir", fo.work_dir, "Krylov store and checkpoints");
  s_factory->add_flag("--resume", fo.resume, "Continue from the checkpoint in --work-dir");
  s_factory->add_option("--C", fo.c_max, "Channels per mini-task");
  s_factory->add_option("--B", fo.b_max, "Mini-tasks per bundle");
  s_factory->add_option("--chunk-rows", fo.chunk_rows);
  s_factory->add_option("--lease-ms", fo.lease_ms);
  s_factory->add_option("--energy-tol", fo.energy_tol);
  s_factory->add_option("--residual-tol", fo.residual_tol);
  s_factory->add_option("--max-subspace", fo.max_subspace);
  s_factory->add_option("--local-workers", fo.local_workers, "Worker threads inside this process");
  s_factory->add_option("--kill-after", fo.kill_after, "Stop abruptly after this many matvecs");

  WorkerOpts wo;
  auto* s_worker = app.add_subcommand("worker", "Execute bundles leased from factories");
  s_worker->add_option("--factory", wo.factories, "host:port; the first is factory 0")->required();
  s_worker->add_option("--scratch", wo.scratch, "Cache for static payloads");
  s_worker->add_option("--lease-size", wo.lease_size)->check(CLI::PositiveNumber);
  s_worker->add_option("--retry-ms", wo.retry_ms, "Give up after factory 0 is unreachable this long");
  s_worker->add_option("--max-idle-ms", wo.max_idle_ms);
  s_worker->add_option("--name", wo.name);

  std::string ckpt_dir;
  auto* s_ckpt = app.add_subcommand("checkpoint-inspect", "Print and verify a Ritz checkpoint");
  s_ckpt->add_option("dir", ckpt_dir)->required()->check(CLI::ExistingDirectory);

  std::vector<const char*> cargs{"coosci"};
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  if (!g.replay.empty()) return replay(g, out_opt->count() > 0);
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 1;
  }

  const auto* sub = app.get_subcommands().front();
  Run run(sub->get_name(), g, args);
  const auto t0 = std::chrono::steady_clock::now();
  int rc = 0;
  if (sub == s_fci) rc = cmd_fci(run, fci);
  else if (sub == s_trimci) rc = cmd_trimci(run);
  else if (sub == s_coo) rc = cmd_coo(run, coo);
  else if (sub == s_expand) rc = cmd_expand(run, ex);
  else if (sub == s_scan) rc = cmd_scan(run);
  else if (sub == s_analyze) rc = cmd_analyze(run, an);
  else if (sub == s_fit) rc = cmd_fit(run, fit);
  else if (sub == s_pt2) rc = cmd_pt2(run, pt2);
  else if (sub == s_factory) rc = cmd_factory(run, fo);
  else if (sub == s_worker) rc = cmd_worker(run, wo);
  else if (sub == s_ckpt) rc = cmd_checkpoint_inspect(run, ckpt_dir);
  run.finish(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("coosci"));
  try {
    return run_cli(std::vector<std::string>(argv + 1, argv + argc), true);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
