#include <catch_amalgamated.hpp>

#include "coosci/detspace/excitations.hpp"
#include "coosci/hamio/hubbard.hpp"
#include "coosci/obsrv/centers.hpp"
#include "coosci/obsrv/entanglement.hpp"
#include "coosci/obsrv/ordering.hpp"
#include "coosci/obsrv/rdm.hpp"
#include "coosci/solver/dense.hpp"
#include "oracles/fock_space.hpp"
#include "oracles/random_integrals.hpp"

#include <cmath>
#include <map>
#include <sstream>

using namespace coosci;
using Catch::Matchers::WithinAbs;

namespace {

Determinant det(std::uint64_t a, std::uint64_t b) { return {OrbString::from_u64(a), OrbString::from_u64(b)}; }

Wavefunction random_wavefunction(int n, int na, int nb, std::uint64_t seed, double keep = 0.6) {
  Rng rng(seed);
  std::vector<Determinant> pick;
  for (const auto& d : full_space(n, na, nb))
    if (pick.empty() || rng.uniform() < keep) pick.push_back(d);
  Wavefunction w{build_groups(pick), {}};
  for (std::size_t i = 0; i < w.space.size(); ++i) w.coeffs.push_back(rng.uniform(-1.0, 1.0));
  w.normalize();
  return w;
}

double rayleigh(const Wavefunction& w, const IntegralSet& ints) {
  const auto h = dense_hamiltonian(w.space, ints);
  const Eigen::Map<const Eigen::VectorXd> c(w.coeffs.data(), w.coeffs.size());
  return c.dot(h * c);
}

// Two-orbital density from Fock-space operator algebra: rho(s, s') =
// <phi_s'|phi_s>, phi_s = P0 C_s^+ |Psi>, local creators ordered
// p-up, p-down, q-up, q-down.
Eigen::MatrixXd fock_two_orbital_rdm(const Wavefunction& w, int n, int p, int q) {
  const std::uint32_t dim = 1U << (2 * n);
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < w.space.size(); ++i) psi(oracle::fock_index(w.space[i], n)) = w.coeffs[i];
  const int modes[4] = {p, n + p, q, n + q};
  const std::uint32_t local_mask = (1U << modes[0]) | (1U << modes[1]) | (1U << modes[2]) | (1U << modes[3]);
  std::vector<Eigen::VectorXd> phi(16, Eigen::VectorXd::Zero(dim));
  for (int s = 0; s < 16; ++s) {
    const int sp = s % 4, sq = s / 4;
    const bool occ[4] = {(sp & 1) != 0, (sp & 2) != 0, (sq & 1) != 0, (sq & 2) != 0};
    for (std::uint32_t st = 0; st < dim; ++st) {
      if (psi(st) == 0.0) continue;
      std::optional<oracle::Ket> k = oracle::Ket{st, psi(st)};
      for (int m = 0; m < 4 && k; ++m)
        if (occ[m]) k = oracle::annihilate(modes[m], *k);
      if (k && (k->state & local_mask) == 0) phi[s](k->state) += k->amp;
    }
  }
  Eigen::MatrixXd rho(16, 16);
  for (int s = 0; s < 16; ++s)
    for (int t = 0; t < 16; ++t) rho(s, t) = phi[t].dot(phi[s]);
  return rho;
}

}  // namespace

TEST_CASE("one-body density of a single determinant") {
  const Wavefunction w{build_groups({det(0b0101, 0b0110)}), {1.0}};
  const auto g = compute_rdm1(w, 4);
  CHECK(g(0, 0) == 1.0);
  CHECK(g(1, 1) == 1.0);
  CHECK(g(2, 2) == 2.0);
  CHECK(g(3, 3) == 0.0);
  CHECK(g.trace() == 4.0);
}

TEST_CASE("densities reproduce the Rayleigh quotient") {
  SECTION("dimer eigenvector") {
    GraphModelSpec spec;
    spec.L = 2;
    const auto ints = build_hubbard_graph(spec);
    const auto space = build_groups(full_space(2, 1, 1));
    const Wavefunction w{space, dense_ground_state(space, ints).coeffs};
    const auto r = compute_rdms(w, build_connection_pattern(space), 2);
    CHECK_THAT(rdm_energy(r.one, r.two, ints), WithinAbs(rayleigh(w, ints), 1e-10));
  }
  SECTION("four-site graph, random vectors and random integrals") {
    GraphModelSpec spec;
    spec.L = 4;
    spec.alpha = 0.7;
    spec.seed = 3;
    const auto hub = build_hubbard_graph(spec);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto w = random_wavefunction(4, 2, 2, seed);
      const auto r = compute_rdms(w, build_connection_pattern(w.space), 4);
      CHECK_THAT(rdm_energy(r.one, r.two, hub), WithinAbs(rayleigh(w, hub), 1e-10));
      const auto ints = oracle::random_integrals(4, 2, 2, 90 + seed, 0.3);
      CHECK_THAT(rdm_energy(r.one, r.two, ints), WithinAbs(rayleigh(w, ints), 1e-10));
      const auto w2 = random_wavefunction(5, 3, 1, 40 + seed);
      const auto ints2 = oracle::random_integrals(5, 3, 1, 70 + seed);
      const auto r2 = compute_rdms(w2, build_connection_pattern(w2.space), 5);
      CHECK_THAT(rdm_energy(r2.one, r2.two, ints2), WithinAbs(rayleigh(w2, ints2), 1e-10));
    }
  }
}

TEST_CASE("density invariants") {
  const auto w = random_wavefunction(5, 2, 2, 17);
  const auto r = compute_rdms(w, build_connection_pattern(w.space), 5);
  CHECK((r.one - r.one.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THAT(r.one.trace(), WithinAbs(4.0, 1e-10));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.one);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
  CHECK(es.eigenvalues().maxCoeff() < 2.0 + 1e-12);
  for (int p = 0; p < 5; ++p)
    for (int q = 0; q < 5; ++q) {
      double tr = 0.0;
      for (int k = 0; k < 5; ++k) tr += r.two(p, q, k, k);
      CHECK_THAT(tr, WithinAbs(3.0 * r.one(p, q), 1e-12));
      for (int s = 0; s < 5; ++s)
        for (int t = 0; t < 5; ++t) CHECK_THAT(r.two(p, q, s, t), WithinAbs(r.two(s, t, p, q), 1e-12));
    }
  // Same-spin pairs vanish when both creators hit one orbital.
  const auto wa = random_wavefunction(5, 3, 0, 18);
  const auto ra = compute_rdms(wa, build_connection_pattern(wa.space), 5);
  for (int p = 0; p < 5; ++p)
    for (int q = 0; q < 5; ++q) CHECK_THAT(ra.two(p, q, p, q), WithinAbs(0.0, 1e-12));
}

TEST_CASE("two electrons: pair density fixes the one-body density") {
  const auto w = random_wavefunction(4, 1, 1, 5, 1.0);
  const auto r = compute_rdms(w, build_connection_pattern(w.space), 4);
  for (int p = 0; p < 4; ++p)
    for (int q = 0; q < 4; ++q) {
      double tr = 0.0;
      for (int k = 0; k < 4; ++k) tr += r.two(p, q, k, k);
      CHECK_THAT(tr, WithinAbs(r.one(p, q), 1e-12));
    }
}

TEST_CASE("one-orbital densities") {
  CHECK(one_orbital_rdm(Wavefunction{build_groups({det(0b01, 0b01)}), {1.0}}, 0) == std::array{0.0, 0.0, 0.0, 1.0});
  const Wavefunction mix{build_groups({det(0b01, 0b10), det(0b10, 0b01)}), {std::sqrt(0.5), std::sqrt(0.5)}};
  const auto rho = one_orbital_rdm(mix, 0);
  CHECK_THAT(rho[1], WithinAbs(0.5, 1e-15));
  CHECK_THAT(rho[2], WithinAbs(0.5, 1e-15));
  const auto w = random_wavefunction(6, 3, 2, 9);
  for (int p = 0; p < 6; ++p) {
    const auto r = one_orbital_rdm(w, p);
    CHECK_THAT(r[0] + r[1] + r[2] + r[3], WithinAbs(1.0, 1e-14));
  }
}

TEST_CASE("two-orbital density matches the Fock-space partial trace") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto w = random_wavefunction(4, 2, 1 + static_cast<int>(seed % 2), 60 + seed);
    for (int p = 0; p < 4; ++p)
      for (int q = 0; q < 4; ++q) {
        if (p == q) continue;
        const Eigen::MatrixXd mine = two_orbital_rdm(w, p, q);
        const Eigen::MatrixXd ref = fock_two_orbital_rdm(w, 4, p, q);
        CHECK((mine - ref).cwiseAbs().maxCoeff() < 1e-12);
        CHECK_THAT(mine.trace(), WithinAbs(1.0, 1e-12));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mine);
        CHECK(es.eigenvalues().minCoeff() > -1e-12);
      }
  }
  CHECK_THROWS(two_orbital_rdm(random_wavefunction(3, 1, 1, 1), 1, 1));
}

TEST_CASE("mutual information on analytic states") {
  SECTION("singlet pair") {
    const Wavefunction w{build_groups({det(0b01, 0b10), det(0b10, 0b01)}), {std::sqrt(0.5), -std::sqrt(0.5)}};
    CHECK_THAT(entropy_bits(one_orbital_rdm(w, 0)), WithinAbs(1.0, 1e-12));
    CHECK_THAT(two_orbital_entropy(two_orbital_rdm(w, 0, 1)), WithinAbs(0.0, 1e-12));
    const auto mi = mutual_information(w, 2);
    CHECK_THAT(mi(0, 1), WithinAbs(2.0, 1e-12));
  }
  SECTION("singlet pair embedded among spectators") {
    // Orbitals 0 and 1 share one up and one down electron, 2 is doubly occupied, 3 is empty.
    const Wavefunction w{build_groups({det(0b0101, 0b0110), det(0b0110, 0b0101)}), {std::sqrt(0.5), std::sqrt(0.5)}};
    const auto mi = mutual_information(w, 4);
    CHECK_THAT(mi(0, 1), WithinAbs(2.0, 1e-12));
    CHECK_THAT(mi(0, 2), WithinAbs(0.0, 1e-12));
    CHECK_THAT(mi(2, 3), WithinAbs(0.0, 1e-12));
  }
  SECTION("single determinant") {
    const Wavefunction w{build_groups({det(0b0011, 0b0101)}), {1.0}};
    CHECK(mutual_information(w, 4).cwiseAbs().maxCoeff() < 1e-14);
  }
  SECTION("product state factorizes") {
    // Singlet on orbitals 0 and 1 times a frozen up electron on orbital 2.
    const Wavefunction w{build_groups({det(0b101, 0b010), det(0b110, 0b001)}), {std::sqrt(0.5), -std::sqrt(0.5)}};
    const auto r = two_orbital_rdm(w, 0, 2);
    const auto r0 = one_orbital_rdm(w, 0), r2 = one_orbital_rdm(w, 2);
    for (int s = 0; s < 16; ++s)
      for (int t = 0; t < 16; ++t)
        CHECK_THAT(r(s, t), WithinAbs(s == t ? r0[s % 4] * r2[s / 4] : 0.0, 1e-14));
    const auto mi = mutual_information(w, 3);
    CHECK_THAT(mi(0, 2), WithinAbs(0.0, 1e-12));
    CHECK_THAT(mi(1, 2), WithinAbs(0.0, 1e-12));
    CHECK_THAT(mi(0, 1), WithinAbs(2.0, 1e-12));
  }
  SECTION("random states") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto w = random_wavefunction(5, 2, 2, 80 + seed);
      const auto mi = mutual_information(w, 5);
      CHECK((mi - mi.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(mi.minCoeff() >= -1e-12);
      for (double& c : w.coeffs) c = -c;
      CHECK((mutual_information(w, 5) - mi).cwiseAbs().maxCoeff() < 1e-12);
      for (int p = 0; p < 5; ++p)
        for (int q = p + 1; q < 5; ++q)
          CHECK(two_orbital_entropy(two_orbital_rdm(w, p, q)) <=
                entropy_bits(one_orbital_rdm(w, p)) + entropy_bits(one_orbital_rdm(w, q)) + 1e-10);
    }
  }
}

TEST_CASE("Fiedler order and bandwidth") {
  SECTION("shuffled path") {
    const std::vector<std::size_t> path{3, 0, 5, 1, 4, 2, 6};
    Eigen::MatrixXd mi = Eigen::MatrixXd::Zero(7, 7);
    for (std::size_t k = 0; k + 1 < path.size(); ++k) mi(path[k], path[k + 1]) = mi(path[k + 1], path[k]) = 1.0;
    const auto order = fiedler_order(mi);
    auto rev = order;
    std::reverse(rev.begin(), rev.end());
    CHECK((order == path || rev == path));
    CHECK(k95_bandwidth(mi, order) == 1);
    std::vector<std::size_t> ident(7);
    std::iota(ident.begin(), ident.end(), 0);
    CHECK(k95_bandwidth(mi, ident) > 1);
  }
  SECTION("zero information") {
    const auto order = fiedler_order(Eigen::MatrixXd::Zero(5, 5));
    CHECK(order == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK(k95_bandwidth(Eigen::MatrixXd::Zero(5, 5), order) == 0);
  }
  SECTION("disconnected components") {
    Eigen::MatrixXd mi = Eigen::MatrixXd::Zero(6, 6);
    mi(0, 5) = mi(5, 0) = 1.0;
    mi(1, 3) = mi(3, 1) = 1.0;
    mi(3, 4) = mi(4, 3) = 0.5;
    auto order = fiedler_order(mi);
    CHECK(std::set<std::size_t>(order.begin(), order.begin() + 3) == std::set<std::size_t>{1, 3, 4});
    CHECK(order[1] == 3);
    CHECK(order[3] == 0);
    CHECK(order[4] == 5);
    CHECK(order[5] == 2);
    std::sort(order.begin(), order.end());
    CHECK(order == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  }
  SECTION("band widths") {
    std::vector<std::size_t> ident(12);
    std::iota(ident.begin(), ident.end(), 0);
    Eigen::MatrixXd far = Eigen::MatrixXd::Zero(12, 12);
    for (int i = 0; i + 5 < 12; ++i) far(i, i + 5) = far(i + 5, i) = 0.3;
    CHECK(k95_bandwidth(far, ident) == 5);
    Eigen::MatrixXd band = Eigen::MatrixXd::Zero(12, 12);
    Rng rng(2);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j)
        if (i != j && std::abs(i - j) <= 3) band(i, j) = band(j, i) = rng.uniform(0.1, 1.0);
    CHECK(k95_bandwidth(band, ident, 1.0) == 3);
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(12, 12);
      for (int i = 0; i < 12; ++i)
        for (int j = i + 1; j < 12; ++j) m(i, j) = m(j, i) = rng.uniform() * std::exp(-0.5 * (j - i));
      CHECK(k95_bandwidth(m, ident, 0.99) >= k95_bandwidth(m, ident, 0.95));
    }
  }
}

TEST_CASE("spin patterns") {
  CHECK(rhd("UUDD", "DDUU") == 0);
  CHECK(rhd("UUDD", "UDUD") == 2);
  CHECK(rhd("U0D", "D0U") == 0);
  const auto map = label_centers(Eigen::MatrixXd::Identity(4, 4), site_centers(4));
  const Wavefunction closed{build_groups({det(0b0011, 0b0011)}), {1.0}};
  CHECK(spin_pattern(closed, map) == "0000");
  // Rows sort as (0011,0011) then (0101,1010).
  const Wavefunction afm{build_groups({det(0b0101, 0b1010), det(0b0011, 0b0011)}), {0.1, 0.9}};
  CHECK(spin_pattern(afm, map) == "UDUD");
}

TEST_CASE("center labels") {
  CenterSets sets;
  sets.centers = {{"Fe1", {0, 1}}, {"Fe2", {2, 3}}};
  const auto ident = label_centers(Eigen::MatrixXd::Identity(6, 6), sets);
  CHECK(ident.label == std::vector<int>{0, 0, 1, 1, 2, 2});
  CHECK(ident.names[2] == "S");

  // Orbital 0 spread 0.39 on Fe1, 0.31 on Fe2, 0.30 on the ligand.
  Eigen::MatrixXd u = Eigen::MatrixXd::Identity(6, 6);
  Eigen::VectorXd col = Eigen::VectorXd::Zero(6);
  col(0) = std::sqrt(0.39);
  col(2) = std::sqrt(0.31);
  col(4) = std::sqrt(0.30);
  u.col(0) = col;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(u);
  Eigen::MatrixXd q = qr.householderQ();
  if (q(0, 0) * col(0) < 0) q = -q;
  const auto m = label_centers(q, sets);
  CHECK_THAT(m.weights(0, 0), WithinAbs(0.39, 1e-12));
  CHECK(m.label[0] == m.fallback());
  const auto rot = oracle::random_orthogonal(6, 4);
  const auto mr = label_centers(rot, sets);
  for (int p = 0; p < 6; ++p) CHECK_THAT(mr.weights.row(p).sum(), WithinAbs(1.0, 1e-12));

  std::istringstream cfg("# four irons\nFe1 = [2:6]\nFe2: 7 8 9\nfallback = L\n");
  const auto parsed = read_center_sets(cfg);
  REQUIRE(parsed.centers.size() == 2);
  CHECK(parsed.centers[0].second == std::vector<int>{2, 3, 4, 5, 6});
  CHECK(parsed.centers[1].second == std::vector<int>{7, 8, 9});
  CHECK(parsed.fallback == "L");
}

TEST_CASE("multicenter histogram") {
  const auto map = label_centers(Eigen::MatrixXd::Identity(4, 4), site_centers(4));
  SECTION("single determinant") {
    const Wavefunction w{build_groups({det(0b0011, 0b0101)}), {1.0}};
    const auto h = multicenter_histogram(w, map);
    CHECK(h.rows[0].pct_weight == 100.0);
    CHECK(std::isnan(h.rows[0].pct_excitation_weight));
  }
  SECTION("normalizations") {
    const auto w = random_wavefunction(4, 2, 2, 33, 0.8);
    const auto h = multicenter_histogram(w, map);
    double d = 0, wt = 0, ex = 0;
    for (const auto& r : h.rows) {
      d += r.pct_dets;
      wt += r.pct_weight;
      if (r.touched > 0) ex += r.pct_excitation_weight;
    }
    CHECK_THAT(d, WithinAbs(100.0, 1e-9));
    CHECK_THAT(wt, WithinAbs(100.0, 1e-9));
    CHECK_THAT(ex, WithinAbs(100.0, 1e-9));
    CHECK(h.rows[0].dets == 1);
    CHECK(h.rows[1].dets == 0);  // one moved electron always touches two sites
    const auto top = multicenter_histogram(w, map, 3);
    CHECK(top.analysed == 3);
  }
}
