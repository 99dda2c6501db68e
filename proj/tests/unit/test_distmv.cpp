#include <catch_amalgamated.hpp>

#include "coosci/detspace/excitations.hpp"
#include "coosci/distmv/checkpoint.hpp"
#include "coosci/distmv/factory.hpp"
#include "coosci/distmv/worker.hpp"
#include "coosci/hamio/hubbard.hpp"
#include "coosci/solver/dense.hpp"
#include "coosci/util/rng.hpp"
#include "oracles/published.hpp"
#include "oracles/random_integrals.hpp"
#include "support/cluster.hpp"

#include <bit>
#include <filesystem>
#include <future>
#include <set>
#include <thread>

#include <unistd.h>

using namespace coosci;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

IntegralSet hubbard(std::size_t L, double alpha = 0.0) {
  GraphModelSpec spec;
  spec.L = L;
  spec.alpha = alpha;
  spec.seed = 7;
  return build_hubbard_graph(spec);
}

DetSet full(const IntegralSet& ints) {
  return build_groups(full_space(static_cast<int>(ints.n_orb()), ints.n_alpha(), ints.n_beta()));
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

std::filesystem::path fresh_dir(const std::string& tag) {
  auto d = std::filesystem::temp_directory_path() / ("coosci-distmv-" + tag + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

// Channels by direct enumeration over all group pairs.
std::size_t brute_force_channel_count(const DetSet& s) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    total += 2;
    for (std::size_t g = 0; g < s.n_alpha_groups(); ++g)
      if ((s[i].alpha ^ s.alpha_string(g)).count() == 2) ++total;
  }
  return total;
}

// y_i = sum_j H_ij v_j over every pair, no group structure.
std::vector<double> pairwise_matvec(const DetSet& s, const IntegralSet& ints, std::span<const double> v) {
  std::vector<double> y(s.size(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if ((s[i].alpha ^ s[j].alpha).count() + (s[i].beta ^ s[j].beta).count() > 4) continue;
      y[i] += matrix_element(s[i], s[j], ints) * v[j];
    }
  return y;
}

DavidsonConfig tight() {
  DavidsonConfig c;
  c.energy_tol = 1e-11;
  c.residual_tol = 1e-7;
  return c;
}

using support::Cluster;
using support::run_cluster;

double cluster_energy(const Cluster& c) {
  const double e = c.factories.front().energy;
  for (const auto& f : c.factories) REQUIRE(f.energy == e);
  return e;
}

}  // namespace

TEST_CASE("channel census on tiny spaces", "[distmv]") {
  const auto one = build_groups({Determinant{OrbString::from_u64(0b011), OrbString::from_u64(0b101)}});
  const auto chans = build_channels(one);
  CHECK(chans.size() == 2);
  CHECK(channel_census(one).total() == 2);
  CHECK(channel_census(one).mean_degree() == 0.0);
  for (const auto& c : chans) CHECK_FALSE(c.g_prime.has_value());
}

TEST_CASE("channel census equals brute-force enumeration", "[distmv]") {
  for (std::size_t L : {4u, 6u}) {
    const auto s = full(hubbard(L));
    const auto chans = build_channels(s);
    const auto census = channel_census(s);
    CHECK(chans.size() == brute_force_channel_count(s));
    CHECK(census.total() == chans.size());
    CHECK(census.a == s.size());
    CHECK(census.b == s.size());
    CHECK_THAT(static_cast<double>(census.total()),
               WithinAbs(static_cast<double>(s.size()) * (2.0 + s.mean_alpha_degree()), 1e-6));
    const auto counted = channel_census(chans, s.size());
    CHECK(counted.a == census.a);
    CHECK(counted.m == census.m);
    for (const auto& c : chans) CHECK(c.g_prime.has_value() == (c.ctype == ChannelKind::M));
  }
}

TEST_CASE("production-scale channel and bundle counts", "[distmv]") {
  for (const auto& row : oracle::bundle_count_table()) {
    // Type (m) is N times the mean adjacency, which stays near 220.
    CHECK_THAT(row.type_m / row.n_det, WithinAbs(220.0, 2.0));
    const auto counts = pack_counts(static_cast<std::uint64_t>(row.type_a), static_cast<std::uint64_t>(row.type_b),
                                    static_cast<std::uint64_t>(row.type_m), 100'000, 243);
    CHECK_THAT(static_cast<double>(counts.minitasks), WithinRel(row.minitasks, 0.05));
    CHECK_THAT(static_cast<double>(counts.bundles), WithinRel(row.bundles, 0.05));
    // Printed mini-task counts imply the printed bundle counts.
    CHECK_THAT(std::ceil(row.minitasks / 243.0), WithinRel(row.bundles, 0.005));
  }
}

TEST_CASE("greedy packing closes mini-tasks at C and at type changes", "[distmv]") {
  std::vector<Channel> ten;
  for (std::size_t r = 0; r < 10; ++r) ten.push_back({ChannelKind::A, 0, std::nullopt, r});
  auto tasks = pack_minitasks(ten, 3);
  REQUIRE(tasks.size() == 4);
  CHECK(tasks[0].channels.size() == 3);
  CHECK(tasks[1].channels.size() == 3);
  CHECK(tasks[2].channels.size() == 3);
  CHECK(tasks[3].channels.size() == 1);

  std::vector<Channel> mixed;
  for (std::size_t r = 0; r < 4; ++r) mixed.push_back({ChannelKind::A, 0, std::nullopt, r});
  for (std::size_t r = 0; r < 5; ++r) mixed.push_back({ChannelKind::B, 0, std::nullopt, r});
  tasks = pack_minitasks(mixed, 3);
  std::vector<std::size_t> sizes;
  for (const auto& t : tasks) {
    sizes.push_back(t.channels.size());
    for (const auto& c : t.channels) CHECK(c.ctype == t.ctype);
  }
  CHECK(sizes == std::vector<std::size_t>{3, 1, 3, 2});
  CHECK_THROWS(pack_minitasks(mixed, 0));
}

TEST_CASE("bundles partition the channels and list what they read", "[distmv]") {
  const auto ints = hubbard(8);
  const auto s = full(ints);
  const auto chans = build_channels(s);
  const auto bundles = pack(s, chans, 100, 7);
  const auto counts = pack_counts(channel_census(s), 100, 7);
  std::size_t n_tasks = 0;
  std::multiset<Channel> seen;
  for (std::size_t k = 0; k < bundles.size(); ++k) {
    const auto& b = bundles[k];
    CHECK(b.id == k);
    CHECK(b.minitasks.size() <= 7);
    n_tasks += b.minitasks.size();
    for (const auto& t : b.minitasks) {
      CHECK(t.channels.size() <= 100);
      for (const auto& c : t.channels) {
        CHECK(c.ctype == t.ctype);
        seen.insert(c);
        // Every source row the channel reads is inside a listed slice.
        const std::size_t i = destination_row(s, c);
        auto covered = [&](std::size_t j) {
          bool hit = false;
          for (const auto& r : b.manifest.v_ranges) hit = hit || (j >= r.begin && j < r.end);
          CHECK(hit);
        };
        if (c.ctype == ChannelKind::A) {
          CHECK(std::binary_search(b.manifest.alpha_groups.begin(), b.manifest.alpha_groups.end(), c.g));
          scan_same_alpha(s, i, covered);
        } else if (c.ctype == ChannelKind::B) {
          CHECK(std::binary_search(b.manifest.beta_groups.begin(), b.manifest.beta_groups.end(), s.row_beta_group(i)));
          scan_same_beta(s, i, covered);
        } else {
          CHECK(std::binary_search(b.manifest.alpha_groups.begin(), b.manifest.alpha_groups.end(), *c.g_prime));
          scan_adjacent_alpha(s, i, *c.g_prime, covered);
        }
      }
    }
  }
  CHECK(n_tasks == counts.minitasks);
  CHECK(bundles.size() == counts.bundles);
  CHECK(bundles.size() == (n_tasks + 6) / 7);
  CHECK(seen == std::multiset<Channel>(chans.begin(), chans.end()));
}

TEST_CASE("bundle pipeline matches the dense matvec", "[distmv]") {
  SECTION("Hubbard L=6 against the dense matrix") {
    const auto ints = hubbard(6, 1.0);
    const auto s = full(ints);
    const auto v = random_vector(s.size(), 11);
    const auto h = dense_hamiltonian(s, ints);
    const Eigen::VectorXd want = h * Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
    const auto got = bundle_matvec(s, ints, v, 100, 7);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK_THAT(got[i], WithinAbs(want(i), 1e-12));
  }
  SECTION("Hubbard L=8 against a pairwise sum") {
    const auto ints = hubbard(8, 1.0);
    const auto s = full(ints);
    const auto v = random_vector(s.size(), 12);
    const auto want = pairwise_matvec(s, ints, v);
    const auto got = bundle_matvec(s, ints, v, 100, 7);
    double worst = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    CHECK(worst < 1e-12);
  }
  SECTION("random integrals exercise double excitations") {
    const auto ints = oracle::random_integrals(6, 3, 2, 5);
    const auto s = full(ints);
    const auto v = random_vector(s.size(), 13);
    const auto h = dense_hamiltonian(s, ints);
    const Eigen::VectorXd want = h * Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
    for (std::size_t c : {1u, 7u, 100u}) {
      const auto got = bundle_matvec(s, ints, v, c, 3);
      for (std::size_t i = 0; i < s.size(); ++i) CHECK_THAT(got[i], WithinAbs(want(i), 1e-12));
    }
  }
}

TEST_CASE("execute_bundle is a pure function of its inputs", "[distmv]") {
  const auto ints = hubbard(6);
  const auto s = full(ints);
  const auto bundles = pack(s, build_channels(s), 50, 2);
  const auto v = random_vector(s.size(), 3);
  SliceMap vm;
  vm.insert(0, v);
  SliceMap zero;
  zero.insert(0, std::vector<double>(s.size(), 0.0));
  for (const auto& b : bundles) {
    const auto first = execute_bundle(b, s, ints, vm);
    CHECK(first == execute_bundle(b, s, ints, vm));
    for (std::size_t k = 1; k < first.size(); ++k) CHECK(first[k - 1].row < first[k].row);
    for (const auto& c : execute_bundle(b, s, ints, zero)) CHECK(c.value == 0.0);
  }
  SliceMap partial;
  partial.insert(0, std::vector<double>(v.begin(), v.begin() + 10));
  CHECK_THROWS_AS(execute_bundle(bundles.back(), s, ints, partial), ManifestError);
}

TEST_CASE("aggregation is exactly-once and independent of arrival order", "[distmv]") {
  const auto ints = hubbard(6, 1.0);
  const auto s = full(ints);
  const auto bundles = pack(s, build_channels(s), 100, 3);
  const auto v = random_vector(s.size(), 4);
  SliceMap vm;
  vm.insert(0, v);
  std::vector<std::vector<Contribution>> parts;
  for (const auto& b : bundles) parts.push_back(execute_bundle(b, s, ints, vm));
  const auto diag = diagonal_slice(s, ints, 0, s.size());

  SigmaAggregator forward(0, s.size()), backward(0, s.size());
  for (std::size_t k = 0; k < parts.size(); ++k) CHECK(forward.add(k, parts[k]));
  for (std::size_t k = parts.size(); k-- > 0;) {
    CHECK(backward.add(k, parts[k]));
    CHECK_FALSE(backward.add(k, parts[k]));
  }
  CHECK(backward.received() == parts.size());
  std::vector<double> a(s.size()), b(s.size());
  forward.finish(diag, v, a);
  backward.finish(diag, v, b);
  CHECK(a == b);
  CHECK(a == bundle_matvec(s, ints, v, 100, 3));
  SigmaAggregator narrow(0, 5);
  CHECK_THROWS(narrow.add(0, {{7, 1.0}}));
}

TEST_CASE("distributed dot equals the single-process dot", "[distmv]") {
  const auto x = random_vector(4900, 21);
  const auto y = random_vector(4900, 22);
  double serial = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) serial += x[i] * y[i];
  for (std::size_t k : {1u, 2u, 4u}) {
    const auto shards = even_shards(x.size(), k);
    CHECK_THAT(distributed_dot(x, y, shards), WithinAbs(serial, 1e-12));
    // Same reduction through the rendezvous, one thread per shard.
    ReduceHub hub(k);
    std::vector<double> got(k);
    {
      std::vector<std::jthread> ranks;
      for (std::size_t a = 0; a < k; ++a)
        ranks.emplace_back([&, a] {
          double part = 0.0;
          for (std::size_t i = shards.begin(a); i < shards.end(a); ++i) part += x[i] * y[i];
          got[a] = hub.contribute(0, a, {part}, Millis(5000)).at(0);
        });
    }
    for (double g : got) {
      CHECK_THAT(g, WithinAbs(serial, 1e-12));
      CHECK(g == got[0]);
    }
  }
  ReduceHub lonely(2);
  CHECK_THROWS_AS(lonely.contribute(0, 0, {1.0}, Millis(50)), PeerTimeout);
}

TEST_CASE("wire encodings round-trip", "[distmv]") {
  const auto ints = hubbard(6, 1.0);
  const auto s = full(ints);
  for (const auto& b : pack(s, build_channels(s), 40, 3)) {
    const auto back = bundle_from_json(nlohmann::json::parse(bundle_to_json(b).dump()));
    CHECK(back.id == b.id);
    REQUIRE(back.minitasks.size() == b.minitasks.size());
    for (std::size_t t = 0; t < b.minitasks.size(); ++t) {
      CHECK(back.minitasks[t].ctype == b.minitasks[t].ctype);
      CHECK(back.minitasks[t].channels == b.minitasks[t].channels);
    }
    CHECK(back.manifest.v_ranges == b.manifest.v_ranges);
    CHECK(back.manifest.alpha_groups == b.manifest.alpha_groups);
  }
  const std::vector<Contribution> c{{0, 1.5}, {7, -0.0}, {1ULL << 40, 1e-300}};
  const auto wire = encode_contributions(c);
  CHECK(wire.size() == 48);
  const auto back = decode_contributions(wire);
  REQUIRE(back.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back[k].row == c[k].row);
    CHECK(std::bit_cast<std::uint64_t>(back[k].value) == std::bit_cast<std::uint64_t>(c[k].value));
  }
  CHECK_THROWS(decode_contributions(wire.substr(0, 20)));
}

TEST_CASE("out-of-core Krylov store", "[distmv]") {
  const auto dir = fresh_dir("ooc");
  SECTION("round trip is bit-exact and the footprint is layer-sized") {
    OocStore store(dir, 100);
    std::vector<std::vector<double>> vs, hvs;
    for (int k = 0; k < 5; ++k) {
      vs.push_back(random_vector(100, 100 + k));
      hvs.push_back(random_vector(100, 200 + k));
      store.append(vs.back(), hvs.back());
    }
    std::vector<double> buf(100);
    for (int k = 0; k < 5; ++k) {
      store.read_v(k, buf);
      CHECK(buf == vs[k]);
      store.read_hv(k, buf);
      CHECK(buf == hvs[k]);
    }
    CHECK(store.disk_bytes() == 5 * (ooc_layer_bytes(100) + 16));
    CHECK_THROWS(store.read_v(5, buf));
    CHECK_THROWS(store.append(std::vector<double>(99), std::vector<double>(99)));
    std::filesystem::resize_file(store.v_path(), 500);
    CHECK_THROWS_AS(store.read_v(0, buf), IntegrityError);
  }
  SECTION("Davidson restarts leave exactly one V and one HV layer") {
    struct Spy {
      OocStore store;
      std::size_t peak = 0;
      std::vector<std::size_t> after_restart;
      bool cleared = false;
      std::size_t size() const { return store.size(); }
      void clear() {
        store.clear();
        cleared = true;
      }
      void append(std::span<const double> v, std::span<const double> hv) {
        store.append(v, hv);
        peak = std::max(peak, store.size());
        if (cleared) after_restart.push_back(store.disk_bytes());
        cleared = false;
      }
      void read_v(std::size_t k, std::span<double> o) const { store.read_v(k, o); }
      void read_hv(std::size_t k, std::span<double> o) const { store.read_hv(k, o); }
    };
    const auto ints = hubbard(6, 1.0);
    const auto s = full(ints);
    Spy spy{OocStore(dir, s.size()), 0, {}, false};
    DirectHamiltonian op(s, ints);
    LocalComm comm;
    DavidsonConfig cfg = tight();
    cfg.max_subspace = 8;
    const auto res = davidson_solve(op, spy, comm, cfg);
    CHECK(spy.peak <= 8);
    REQUIRE(spy.after_restart.size() >= 2);
    for (auto bytes : spy.after_restart) CHECK(bytes == ooc_layer_bytes(s.size()) + 16);
    CHECK_THAT(res.energy, WithinAbs(davidson_lowest(s, ints, tight()).energy, 1e-10));
  }
  SECTION("per-layer size at the production point") {
    CHECK(ooc_layer_bytes(5'120'000'000ULL) == 81'920'000'000ULL);
    CHECK_THAT(static_cast<double>(ooc_layer_bytes(5'120'000'000ULL)) / 1e9, WithinAbs(81.9, 0.05));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("Ritz checkpoints", "[distmv]") {
  const auto dir = fresh_dir("ckpt");
  const auto ints = hubbard(6, 1.0);
  const auto s = full(ints);
  const auto hash = run_config_hash(s, ints, "test");
  CHECK(hash == run_config_hash(s, ints, "test"));
  CHECK(hash != run_config_hash(s, ints, "other"));

  auto v = random_vector(s.size(), 31);
  double nv = 0.0;
  for (double x : v) nv += x * x;
  for (double& x : v) x /= std::sqrt(nv);
  DirectHamiltonian h(s, ints);
  std::vector<double> hv(s.size());
  h.apply(v, hv);
  RitzCheckpoint c{v, hv, {detail::local_dot(v, hv), 0.5, 17, s.size(), hash, 0, s.size(), {}, {}}};
  {
    CheckpointWriter w(dir);
    w.submit(c);
    w.flush();
    CHECK(w.written() == 1);
  }
  const auto back = read_checkpoint(dir);
  CHECK(back.v == v);
  CHECK(back.hv == hv);
  CHECK(back.meta.matvec_iter == 17);
  CHECK(back.meta.n_det == s.size());
  CHECK_THAT(back.meta.energy, WithinAbs(detail::local_dot(back.v, back.hv) / detail::local_dot(back.v, back.v), 1e-12));
  CHECK_NOTHROW(resume_checkpoint(dir, hash, 0, s.size()));
  CHECK_THROWS_AS(resume_checkpoint(dir, "0000000000000000", 0, s.size()), CheckpointMismatch);
  CHECK_THROWS_AS(resume_checkpoint(dir, hash, 0, s.size() - 1), CheckpointMismatch);

  auto bytes = read_vector_file(dir / "ritz_v.bin");
  bytes[3] += 1.0;
  write_vector_file(dir / "ritz_v.bin", bytes);
  CHECK_THROWS_AS(read_checkpoint(dir), IntegrityError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("localhost factories and workers reproduce the in-process solve", "[distmv][net]") {
  const auto ints = hubbard(6, 1.0);
  const auto s = full(ints);
  const double reference = davidson_lowest(s, ints, tight()).energy;
  FactoryConfig base;
  base.davidson = tight();
  base.chunk_rows = 128;
  base.linger = Millis(100);

  SECTION("K=1, Z=1") {
    const auto c = run_cluster(s, ints, 1, base, {WorkerConfig{}});
    CHECK_THAT(cluster_energy(c), WithinAbs(reference, 1e-10));
    CHECK(c.factories[0].converged);
    CHECK(c.workers[0].bundles_done == c.factories[0].bundles_per_matvec * c.factories[0].matvecs);
  }
  SECTION("K=2, Z=2 with the Krylov store on disk") {
    const auto dir = fresh_dir("k2");
    base.work_dir = dir;
    const auto c = run_cluster(s, ints, 2, base, {WorkerConfig{}, WorkerConfig{}});
    CHECK_THAT(cluster_energy(c), WithinAbs(reference, 1e-10));
    CHECK(c.factories[0].row_end == c.factories[1].row_begin);
    std::vector<double> whole = c.factories[0].coeffs;
    whole.insert(whole.end(), c.factories[1].coeffs.begin(), c.factories[1].coeffs.end());
    std::vector<double> hv(s.size());
    DirectHamiltonian(s, ints).apply(whole, hv);
    CHECK_THAT(detail::local_dot(whole, hv) / detail::local_dot(whole, whole), WithinAbs(reference, 1e-10));
    CHECK(c.factories[0].checkpoints_written > 0);
    CHECK(std::filesystem::exists(dir / "checkpoint-1" / "meta.json"));
    std::filesystem::remove_all(dir);
  }
  SECTION("a worker that dies holding a lease, replaced by a fresh one") {
    base.lease_timeout = Millis(300);
    WorkerConfig quitter;
    quitter.abandon_after = 3;
    const auto c = run_cluster(s, ints, 1, base, {quitter, WorkerConfig{}}, {Millis(0), Millis(400)});
    CHECK(c.workers[0].abandoned);
    CHECK(c.factories[0].re_leases >= 1);
    CHECK_THAT(cluster_energy(c), WithinAbs(reference, 1e-10));
  }
  SECTION("faster workers take more of the queue") {
    WorkerConfig slow;
    slow.delay_per_bundle = Millis(15);
    const auto c = run_cluster(s, ints, 1, base, {slow, WorkerConfig{}});
    CHECK(c.workers[1].bundles_done > c.workers[0].bundles_done);
    CHECK_THAT(cluster_energy(c), WithinAbs(reference, 1e-10));
  }
  SECTION("repeated chunks come from the worker cache") {
    const auto c = run_cluster(s, ints, 1, base, {WorkerConfig{}});
    const auto& st = c.workers[0];
    CHECK(st.cache_hits > 0);
    std::set<std::string> unique(st.fetch_log.begin(), st.fetch_log.end());
    CHECK(unique.size() == st.fetch_log.size());
    CHECK(std::count(st.fetch_log.begin(), st.fetch_log.end(), "space") == 1);
  }
}

TEST_CASE("duplicate result posts are ignored", "[distmv][net]") {
  const auto ints = hubbard(4, 1.0);
  const auto s = full(ints);
  FactoryConfig cfg;
  cfg.davidson = tight();
  cfg.linger = Millis(100);
  std::promise<int> port;
  auto fut = port.get_future();
  cfg.on_listening = [&](int p) { port.set_value(p); };
  FactoryResult res;
  std::jthread factory([&] { res = factory_serve(s, ints, cfg); });
  const std::string addr = "127.0.0.1:" + std::to_string(fut.get());
  std::size_t posted = 0, rejected = 0;
  while (true) {
    auto cli = make_client(addr, Millis(5000));
    auto r = cli->Get("/bundle/next");
    if (!r || r->status == 410) break;
    if (r->status == 204) {
      std::this_thread::sleep_for(Millis(2));
      continue;
    }
    const auto j = nlohmann::json::parse(r->body);
    const std::uint64_t epoch = j.at("epoch");
    auto vr = cli->Get("/files/v." + std::to_string(epoch) + "?offset=0&len=" + std::to_string(s.size()));
    if (!vr || vr->status != 200) continue;
    SliceMap vm;
    vm.insert(0, decode_doubles(vr->body));
    for (const auto& bj : j.at("bundles")) {
      const auto b = bundle_from_json(bj);
      const auto body = encode_contributions(execute_bundle(b, s, ints, vm));
      const std::string tag = "?epoch=" + std::to_string(epoch) + "&bundle_id=" + std::to_string(b.id);
      for (int twice = 0; twice < 2; ++twice) {
        auto pr = cli->Post("/bundle/result" + tag, body, "application/octet-stream");
        if (pr && pr->status == 200 && !nlohmann::json::parse(pr->body).at("accepted").get<bool>()) ++rejected;
        if (twice == 0) ++posted;
      }
    }
  }
  factory.join();
  CHECK(rejected >= 1);
  CHECK(res.duplicate_posts + res.stale_posts == rejected);
  CHECK(rejected == posted);
  CHECK_THAT(res.energy, WithinAbs(davidson_lowest(s, ints, tight()).energy, 1e-10));
  CHECK(posted >= res.matvecs * res.bundles_per_matvec);
}

TEST_CASE("factory kill and checkpoint resume", "[distmv][net]") {
  const auto ints = hubbard(6, 1.0);
  const auto s = full(ints);
  const double reference = davidson_lowest(s, ints, tight()).energy;
  const auto dir = fresh_dir("resume");
  FactoryConfig cfg;
  cfg.davidson = tight();
  cfg.work_dir = dir;
  cfg.linger = Millis(100);
  cfg.kill_after_matvecs = 8;
  const auto killed = run_cluster(s, ints, 1, cfg, {WorkerConfig{}});
  REQUIRE(killed.factories[0].killed);
  const auto meta = read_checkpoint_meta(dir / checkpoint_dir_name(0));
  CHECK(meta.matvec_iter <= 8);
  CHECK(meta.config_hash == killed.factories[0].config_hash);

  cfg.kill_after_matvecs.reset();
  cfg.resume = true;
  const auto resumed = run_cluster(s, ints, 1, cfg, {WorkerConfig{}});
  CHECK(resumed.factories[0].resumed);
  CHECK(resumed.factories[0].converged);
  CHECK_THAT(resumed.factories[0].energy, WithinAbs(reference, 1e-7));
  CHECK(resumed.factories[0].matvecs > meta.matvec_iter);

  FactoryConfig other = cfg;
  other.davidson.energy_tol = 1e-9;
  CHECK_THROWS_AS(factory_serve(s, ints, other), CheckpointMismatch);
  std::filesystem::remove_all(dir);
}
