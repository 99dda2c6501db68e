#include <catch_amalgamated.hpp>

#include "coosci/detspace/excitations.hpp"
#include "coosci/hamio/hubbard.hpp"
#include "coosci/hamio/rotate.hpp"
#include "coosci/solver/davidson.hpp"
#include "coosci/solver/dense.hpp"
#include "oracles/fock_space.hpp"
#include "oracles/random_integrals.hpp"

#include <chrono>

using namespace coosci;
using Catch::Matchers::WithinAbs;

namespace {

IntegralSet hubbard(std::size_t L, double alpha, double U = 4.0, std::uint64_t seed = 1) {
  GraphModelSpec spec;
  spec.L = L;
  spec.alpha = alpha;
  spec.U = U;
  spec.seed = seed;
  return build_hubbard_graph(spec);
}

DavidsonConfig tight() {
  DavidsonConfig cfg;
  cfg.energy_tol = 1e-12;
  return cfg;
}

}  // namespace

TEST_CASE("two-determinant model") {
  IntegralSet ints(2, 1, 0);
  ints.set_h(0, 1, 1.0);
  const auto space = build_groups(full_space(2, 1, 0));
  const auto r = davidson_lowest(space, ints, tight());
  CHECK_THAT(r.energy, WithinAbs(-1.0, 1e-12));
  CHECK(r.converged);
  CHECK_THAT(dense_ground_state(space, ints).energy, WithinAbs(-1.0, 1e-12));
}

TEST_CASE("hubbard dimer closed form") {
  const double U = 4.0;
  const double exact = (U - std::sqrt(U * U + 16.0)) / 2.0;
  const auto ints = hubbard(2, 0.0, U);
  const auto space = build_groups(full_space(2, 1, 1));
  CHECK_THAT(davidson_lowest(space, ints, tight()).energy, WithinAbs(exact, 1e-12));
  CHECK_THAT(dense_ground_state(space, ints).energy, WithinAbs(exact, 1e-12));
  CHECK_THAT(exact, WithinAbs(-0.828427, 1e-6));
}

TEST_CASE("connection cache contents") {
  SECTION("one determinant") {
    const auto ints = hubbard(2, 0.0);
    const auto space = build_groups({reference_determinant(1, 1)});
    const auto c = ConnectionCache::build(space, ints);
    CHECK(c.entries() == 1);
    CHECK(c.off_diagonal_entries() == 0);
  }
  SECTION("dimer") {
    const auto ints = hubbard(2, 0.0);
    const auto space = build_groups(full_space(2, 1, 1));
    const auto c = ConnectionCache::build(space, ints);
    CHECK(c.size() == 4);
    CHECK(c.off_diagonal_entries() == 8);
  }
  SECTION("symmetric storage") {
    const auto ints = oracle::random_integrals(6, 3, 3, 8);
    const auto space = build_groups(full_space(6, 3, 3));
    const auto c = ConnectionCache::build(space, ints);
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto cols = c.row_cols(i);
      const auto vals = c.row_vals(i);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const auto back = c.row_cols(cols[k]);
        const auto it = std::lower_bound(back.begin(), back.end(), i);
        REQUIRE(it != back.end());
        CHECK(c.row_vals(cols[k])[it - back.begin()] == vals[k]);
      }
    }
  }
  SECTION("budget") {
    const auto ints = hubbard(4, 0.0);
    const auto space = build_groups(full_space(4, 2, 2));
    CHECK_THROWS_AS(ConnectionCache::build(space, ints, 5), CacheBudgetError);
  }
}

TEST_CASE("cached and direct matvec agree") {
  const auto ints = hubbard(6, 1.0, 4.0, 3);
  const auto space = build_groups(full_space(6, 3, 3));
  const auto c = ConnectionCache::build(space, ints);
  DirectHamiltonian d(space, ints);
  Rng rng(5);
  std::vector<double> x(space.size()), y1(space.size()), y2(space.size());
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  c.apply(x, y1);
  d.apply(x, y2);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK_THAT(y1[i], WithinAbs(y2[i], 1e-14));
  const auto h = dense_hamiltonian(space, ints);
  const Eigen::VectorXd ref = h * Eigen::Map<Eigen::VectorXd>(x.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK_THAT(y1[i], WithinAbs(ref(i), 1e-12));
}

TEST_CASE("Davidson matches dense diagonalization on random subspaces") {
  Rng rng(12);
  for (int trial = 0; trial < 6; ++trial) {
    const auto ints = oracle::random_integrals(6, 3, 2, 300 + trial, 2.0);
    std::vector<Determinant> pick;
    for (const auto& d : full_space(6, 3, 2))
      if (rng.uniform() < 0.5) pick.push_back(d);
    const auto space = build_groups(pick);
    const auto dense = dense_ground_state(space, ints);
    const auto dav = davidson_lowest(space, ints, tight());
    CHECK(dav.converged);
    CHECK_THAT(dav.energy, WithinAbs(dense.energy, 1e-9));
    CHECK(dav.energy >= dense.energy - 1e-9);
  }
}

TEST_CASE("dense oracle with and without the exchange split") {
  const auto ints = hubbard(6, 1.0, 4.0, 9);
  const auto space = build_groups(full_space(6, 3, 3));
  const auto split = dense_ground_state(space, ints);
  const auto plain = lowest_eigenpair(dense_hamiltonian(space, ints));
  CHECK_THAT(split.energy, WithinAbs(plain.first, 1e-10));
  const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(split.coeffs.data(), split.coeffs.size());
  const auto h = dense_hamiltonian(space, ints);
  CHECK((h * c - split.energy * c).norm() < 1e-9);
  CHECK_THAT(c.norm(), WithinAbs(1.0, 1e-12));
}

TEST_CASE("Davidson Ritz values never rise within a restart window") {
  const auto ints = hubbard(8, 1.0, 4.0, 2);
  const auto space = build_groups(full_space(8, 4, 4));
  auto cfg = tight();
  cfg.max_subspace = 8;
  const auto r = davidson_lowest(space, ints, cfg);
  // A restart keeps the current Ritz value, so the whole sequence is monotone.
  for (std::size_t i = 1; i < r.ritz_history.size(); ++i) CHECK(r.ritz_history[i] <= r.ritz_history[i - 1] + 1e-12);
  CHECK(r.residual_norm < 1e-4);
}

TEST_CASE("warm start from the eigenvector converges immediately") {
  const auto ints = hubbard(6, 0.5, 4.0, 4);
  const auto space = build_groups(full_space(6, 3, 3));
  const auto exact = dense_ground_state(space, ints);
  auto cfg = tight();
  cfg.warm_start = exact.coeffs;
  const auto r = davidson_lowest(space, ints, cfg);
  CHECK(r.iterations == 1);
  CHECK(r.matvecs == 1);
  CHECK_THAT(r.energy, WithinAbs(exact.energy, 1e-12));
}

TEST_CASE("eight-site chain at U = 4t") {
  const auto ints = hubbard(8, 0.0);
  const auto space = build_groups(full_space(8, 4, 4));
  const auto t0 = std::chrono::steady_clock::now();
  const auto dense = dense_ground_state(space, ints);
  const auto dav = davidson_lowest(space, ints, tight());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK_THAT(dense.energy, WithinAbs(-4.23581, 1e-4));
  CHECK_THAT(dav.energy, WithinAbs(dense.energy, 1e-9));
  INFO("seconds " << secs);
  CHECK(secs < 10.0);
}

TEST_CASE("solver argument errors") {
  const auto ints = hubbard(2, 0.0);
  CHECK_THROWS(davidson_lowest(DetSet{}, ints));
  DavidsonConfig bad;
  bad.max_subspace = 1;
  CHECK_THROWS(davidson_lowest(build_groups(full_space(2, 1, 1)), ints, bad));
  CHECK_THROWS_AS(dense_ground_state(build_groups(full_space(2, 1, 1)), ints, 3), DenseLimitError);
  const auto one = build_groups({reference_determinant(1, 1)});
  CHECK(dense_ground_state(one, ints).energy == diagonal_energy(one[0], ints));
}
