#include <catch_amalgamated.hpp>

#include "coosci/coo/bfgs.hpp"
#include "coosci/coo/gradient.hpp"
#include "coosci/coo/kappa.hpp"
#include "coosci/detspace/excitations.hpp"
#include "coosci/hamio/hubbard.hpp"
#include "coosci/solver/dense.hpp"
#include "oracles/random_integrals.hpp"

#include <filesystem>
#include <numbers>

using namespace coosci;
using Catch::Matchers::WithinAbs;

namespace {

Kappa random_kappa(std::size_t n, std::uint64_t seed, double scale) {
  Rng rng(seed);
  Kappa k = Kappa::zero(n);
  for (double& p : k.params) p = rng.uniform(-scale, scale);
  return k;
}

Wavefunction random_wavefunction(std::size_t n, int na, int nb, std::uint64_t seed, double keep = 0.5) {
  Rng rng(seed);
  std::vector<Determinant> pick;
  for (const auto& d : full_space(static_cast<int>(n), na, nb))
    if (pick.empty() || rng.uniform() < keep) pick.push_back(d);
  Wavefunction w{build_groups(pick), {}};
  for (std::size_t i = 0; i < w.space.size(); ++i) w.coeffs.push_back(rng.uniform(-1.0, 1.0));
  w.normalize();
  return w;
}

double fixed_ci_energy(const Rdms& r, const IntegralSet& ints, const Kappa& k) {
  return rdm_energy(r.one, r.two, rotate_integrals(ints, expm_antisymmetric(k)));
}

}  // namespace

TEST_CASE("matrix exponential of antisymmetric generators") {
  CHECK(expm_antisymmetric(Kappa::zero(4)).isApprox(Eigen::MatrixXd::Identity(4, 4), 0.0));
  Kappa q = Kappa::zero(2);
  q.params[0] = std::numbers::pi / 2;
  const auto u = expm_antisymmetric(q);
  CHECK_THAT(u(0, 0), WithinAbs(0.0, 1e-14));
  CHECK_THAT(u(0, 1), WithinAbs(-1.0, 1e-14));
  CHECK_THAT(u(1, 0), WithinAbs(1.0, 1e-14));
  CHECK_THAT(u(1, 1), WithinAbs(0.0, 1e-14));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto k = random_kappa(7, seed, 2.0);
    const auto r = expm_antisymmetric(k);
    CHECK((r.transpose() * r - Eigen::MatrixXd::Identity(7, 7)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THAT(r.determinant(), WithinAbs(1.0, 1e-12));
    Kappa neg = k;
    for (double& p : neg.params) p = -p;
    CHECK((r * expm_antisymmetric(neg) - Eigen::MatrixXd::Identity(7, 7)).cwiseAbs().maxCoeff() < 1e-12);
    const auto back = kappa_from_rotation(expm_antisymmetric(random_kappa(7, seed, 0.3)));
    const auto ref = random_kappa(7, seed, 0.3);
    for (std::size_t p = 0; p < ref.params.size(); ++p) CHECK_THAT(back.params[p], WithinAbs(ref.params[p], 1e-10));
  }
  const auto km = random_kappa(5, 3, 1.0).matrix();
  CHECK((km + km.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kappa snapshot round trip") {
  const auto k = random_kappa(6, 4, 1.0);
  const auto path = (std::filesystem::temp_directory_path() / "coosci_kappa_test.bin").string();
  write_kappa(path, k);
  const auto back = read_kappa(path);
  CHECK(back.n_orb == 6);
  CHECK(back.params == k.params);
  CHECK(std::filesystem::file_size(path) == 8 + 15 * 8);
  std::filesystem::remove(path);
}

TEST_CASE("gradient matches central differences") {
  struct Case {
    std::size_t n;
    int na, nb;
    std::uint64_t seed;
  };
  for (const auto& c : {Case{4, 2, 2, 1}, Case{5, 2, 3, 2}, Case{6, 3, 2, 3}, Case{7, 3, 3, 4}, Case{8, 2, 2, 5}}) {
    const auto ints = rotate_integrals(oracle::random_integrals(c.n, c.na, c.nb, 10 + c.seed),
                                       oracle::random_orthogonal(c.n, 20 + c.seed));
    const auto w = random_wavefunction(c.n, c.na, c.nb, 30 + c.seed, 0.3);
    const auto r = compute_rdms(w, build_connection_pattern(w.space), c.n);
    const auto g = orbital_gradient(r.one, r.two, ints);
    const double h = 1e-5;
    for (std::size_t p = 0; p < g.size(); ++p) {
      Kappa k = Kappa::zero(c.n);
      k.params[p] = h;
      const double ep = fixed_ci_energy(r, ints, k);
      k.params[p] = -h;
      const double em = fixed_ci_energy(r, ints, k);
      const double fd = (ep - em) / (2 * h);
      INFO("n=" << c.n << " param " << p);
      CHECK(std::abs(fd - g[p]) <= 1e-6 * std::max(1.0, std::abs(g[p])));
    }
  }
}

TEST_CASE("gradient vanishes for full-space eigenvectors and zero Hamiltonians") {
  const auto ints = oracle::random_integrals(5, 2, 2, 40);
  const auto space = build_groups(full_space(5, 2, 2));
  const auto gs = dense_ground_state(space, ints);
  const Wavefunction w{space, gs.coeffs};
  const auto r = compute_rdms(w, build_connection_pattern(space), 5);
  for (double x : orbital_gradient(r.one, r.two, ints)) CHECK(std::abs(x) < 1e-8);

  const IntegralSet zero(5, 2, 2);
  const auto w2 = random_wavefunction(5, 2, 2, 41);
  const auto r2 = compute_rdms(w2, build_connection_pattern(w2.space), 5);
  for (double x : orbital_gradient(r2.one, r2.two, zero)) CHECK(x == 0.0);
}

TEST_CASE("first-order energy change follows the gradient") {
  const auto ints = oracle::random_integrals(5, 2, 2, 50);
  const auto w = random_wavefunction(5, 2, 2, 51);
  const auto r = compute_rdms(w, build_connection_pattern(w.space), 5);
  const auto g = orbital_gradient(r.one, r.two, ints);
  const auto dir = random_kappa(5, 52, 1.0);
  const double e0 = fixed_ci_energy(r, ints, Kappa::zero(5));
  auto err = [&](double eps) {
    Kappa k = dir;
    double lin = 0.0;
    for (std::size_t p = 0; p < k.params.size(); ++p) {
      k.params[p] *= eps;
      lin += g[p] * k.params[p];
    }
    return std::abs(fixed_ci_energy(r, ints, k) - e0 - lin);
  };
  const double e1 = err(1e-3), e2 = err(5e-4);
  CHECK(e2 / e1 == Catch::Approx(0.25).margin(0.03));
}

TEST_CASE("dimer single determinant gradient") {
  GraphModelSpec spec;
  spec.L = 2;
  const auto base = build_hubbard_graph(spec);
  Kappa k = Kappa::zero(2);
  k.params[0] = 0.3;
  const auto ints = rotate_integrals(base, expm_antisymmetric(k));
  const Wavefunction w{build_groups({reference_determinant(1, 1)}), {1.0}};
  const auto r = compute_rdms(w, build_connection_pattern(w.space), 2);
  const auto g = orbital_gradient(r.one, r.two, ints);
  Kappa d = Kappa::zero(2);
  d.params[0] = 1e-5;
  const double ep = fixed_ci_energy(r, ints, d);
  d.params[0] = -1e-5;
  const double em = fixed_ci_energy(r, ints, d);
  CHECK(std::abs((ep - em) / 2e-5 - g[0]) < 1e-6 * std::max(1.0, std::abs(g[0])));
  CHECK(std::abs(g[0]) > 1e-3);
}

TEST_CASE("orbital optimization on the full space changes nothing") {
  const auto ints = oracle::random_integrals(4, 2, 2, 60);
  const auto space = build_groups(full_space(4, 2, 2));
  BfgsConfig cfg;
  cfg.davidson_tol = 1e-12;
  const auto res = bfgs_orbital_opt(space, ints, cfg);
  for (const auto& s : res.history) CHECK_THAT(s.energy, WithinAbs(res.initial_energy, 1e-10));
  CHECK_THAT(res.energy, WithinAbs(res.initial_energy, 1e-10));
}

TEST_CASE("orbital optimization lowers a small Hubbard core") {
  GraphModelSpec spec;
  spec.L = 8;
  spec.alpha = 1.0;
  spec.seed = 7;
  const auto ints = build_hubbard_graph(spec);
  const auto full = build_groups(full_space(8, 4, 4));
  const auto exact = dense_ground_state(full, ints);
  Wavefunction w{full, exact.coeffs};
  std::vector<Determinant> top;
  for (std::size_t i : w.ranked_rows()) {
    top.push_back(full[i]);
    if (top.size() == 100) break;
  }
  // A deliberately poor core: the 100 dets ranked 200..299.
  std::vector<Determinant> poor;
  const auto ranked = w.ranked_rows();
  for (std::size_t k = 200; k < 300; ++k) poor.push_back(full[ranked[k]]);
  const auto core = build_groups(poor);
  BfgsConfig cfg;
  cfg.max_iter = 40;
  const auto res = bfgs_orbital_opt(core, ints, cfg);
  CHECK(res.energy < res.initial_energy - 0.01);
  double prev = res.initial_energy;
  for (const auto& s : res.history) {
    CHECK(s.energy <= prev + std::max(0.0, 1e-12 * std::abs(prev)));
    prev = s.energy;
  }
  // Reported energy is the Rayleigh quotient in the rotated basis.
  const auto cache = ConnectionCache::build(core, res.integrals);
  std::vector<double> hc(core.size());
  cache.apply(res.coeffs, hc);
  double rq = 0.0;
  for (std::size_t i = 0; i < hc.size(); ++i) rq += res.coeffs[i] * hc[i];
  CHECK_THAT(rq, WithinAbs(res.energy, 1e-10));
  CHECK(is_orthogonal(res.rotation, 1e-10));
  CHECK((expm_antisymmetric(res.kappa) - res.rotation).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(res.energy >= exact.energy - 1e-9);
}
