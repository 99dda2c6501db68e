#pragma once

#include "coosci/detspace/wavefunction.hpp"
#include "coosci/distmv/channels.hpp"
#include "coosci/distmv/factory.hpp"
#include "coosci/distmv/protocol.hpp"
#include "coosci/hamio/fcidump.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

namespace coosci {

struct WorkerConfig {
  // host:port of every factory known up front; the first is factory 0, whose
  // /status lists the rest.
  std::vector<std::string> factories;
  // Static payload (determinants, integrals) is kept here between runs when set.
  std::filesystem::path scratch_dir;
  std::size_t lease_size = 1;
  Millis idle_sleep{5};
  // Give up after factory 0 has been unreachable this long.
  Millis retry_deadline{30'000};
  // Stop after this long without any bundle; 0 disables.
  Millis max_idle{0};
  // Throttle, for exercising queue fairness.
  Millis delay_per_bundle{0};
  // Fault injection: exit while holding the n-th lease, without posting.
  std::optional<std::size_t> abandon_after;
  std::string name = "worker";
};

struct WorkerStats {
  std::size_t bundles_done = 0;
  std::size_t bundles_aborted = 0;
  std::size_t cache_hits = 0;
  bool abandoned = false;
  // Factory 0 reported the run over (as opposed to giving up or being stopped).
  bool finished = false;
  // Every file fetched, in order.
  std::vector<std::string> fetch_log;
};

namespace detail {

struct StaticPayload {
  std::string run_id;
  DetSet space;
  IntegralSet ints;
};

class WorkerSession {
 public:
  WorkerSession(const WorkerConfig& cfg, WorkerStats& stats) : cfg_(cfg), stats_(stats) {}

  std::optional<nlohmann::json> status(const std::string& addr) {
    auto cli = make_client(addr, Millis(5000));
    auto r = cli->Get("/status");
    if (!r || r->status != 200) return std::nullopt;
    return nlohmann::json::parse(r->body);
  }

  void load_payload(const std::string& coordinator, const std::string& run_id) {
    if (payload_ && payload_->run_id == run_id) return;
    v_cache_.clear();
    std::string space_text, ints_text;
    const auto dir = cfg_.scratch_dir.empty() ? std::filesystem::path{} : cfg_.scratch_dir / run_id;
    if (!dir.empty() && std::filesystem::exists(dir / "space.txt") && std::filesystem::exists(dir / "ints.fcidump")) {
      space_text = slurp(dir / "space.txt");
      ints_text = slurp(dir / "ints.fcidump");
      stats_.cache_hits += 2;
    } else {
      space_text = fetch_text(coordinator, "space");
      ints_text = fetch_text(coordinator, "ints");
      if (!dir.empty()) {
        std::filesystem::create_directories(dir);
        std::ofstream(dir / "space.txt") << space_text;
        std::ofstream(dir / "ints.fcidump") << ints_text;
      }
    }
    std::istringstream s(space_text), i(ints_text);
    auto wf = read_wavefunction(s);
    payload_ = StaticPayload{run_id, std::move(wf.wf.space), parse_fcidump(i)};
  }

  const StaticPayload& payload() const { return *payload_; }

  // Pulls every chunk the manifest names into the per-epoch slice cache.
  bool gather(const Bundle& b, std::uint64_t epoch, const ShardSpec& shards, const std::vector<std::string>& peers,
              std::size_t chunk_rows) {
    while (!v_cache_.empty() && v_cache_.begin()->first + 1 < epoch) v_cache_.erase(v_cache_.begin());
    auto& slices = v_cache_[epoch];
    for (const auto& r : b.manifest.v_ranges) {
      for (std::size_t c = r.begin / chunk_rows * chunk_rows; c < r.end; c += chunk_rows) {
        std::size_t at = std::max(c, r.begin);
        const std::size_t stop = std::min(c + chunk_rows, r.end);
        while (at < stop) {
          const std::size_t owner = shards.owner(at);
          const std::size_t cb = std::max(c, shards.begin(owner));
          const std::size_t ce = std::min(c + chunk_rows, shards.end(owner));
          if (slices.covers({cb, ce})) {
            ++stats_.cache_hits;
          } else {
            if (owner >= peers.size() || peers[owner].empty()) return false;
            const std::string name = "v." + std::to_string(epoch);
            auto cli = make_client(peers[owner], Millis(10'000));
            auto res = cli->Get("/files/" + name + "?offset=" + std::to_string(cb) + "&len=" + std::to_string(ce - cb));
            stats_.fetch_log.push_back(name + "@" + std::to_string(cb) + "+" + std::to_string(ce - cb));
            if (!res || res->status != 200) return false;
            auto v = decode_doubles(res->body);
            if (v.size() != ce - cb) return false;
            slices.insert(cb, std::move(v));
          }
          at = ce;
        }
      }
    }
    return true;
  }

  const SliceMap& slices(std::uint64_t epoch) { return v_cache_[epoch]; }

 private:
  static std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream o;
    o << in.rdbuf();
    return o.str();
  }

  std::string fetch_text(const std::string& addr, const std::string& name) {
    auto cli = make_client(addr, Millis(30'000));
    auto r = cli->Get("/files/" + name);
    stats_.fetch_log.push_back(name);
    if (!r || r->status != 200) throw std::runtime_error("cannot fetch " + name + " from " + addr);
    return r->body;
  }

  const WorkerConfig& cfg_;
  WorkerStats& stats_;
  std::optional<StaticPayload> payload_;
  std::map<std::uint64_t, SliceMap> v_cache_;
};

}  // namespace detail

// Pull a bundle, fetch what its manifest needs, run it, post the
// contributions, repeat. Returns when factory 0 reports the run finished,
// stays unreachable past the retry deadline, or on stop.
inline WorkerStats worker_loop(const WorkerConfig& cfg, std::stop_token st = {}) {
  if (cfg.factories.empty()) throw std::invalid_argument("worker needs at least one factory address");
  WorkerStats stats;
  detail::WorkerSession session(cfg, stats);
  const std::string& coordinator = cfg.factories.front();
  auto last_seen = std::chrono::steady_clock::now();
  auto last_work = last_seen;
  std::size_t leased = 0;
  Millis backoff{10};
  bool seen_running = false;

  std::optional<nlohmann::json> status;
  auto status_time = last_seen;
  bool worked = false;

  while (!st.stop_requested()) {
    const auto now = std::chrono::steady_clock::now();
    if (cfg.max_idle.count() > 0 && now - last_work > cfg.max_idle) break;
    if (!status || !worked || now - status_time > Millis(200)) {
      status = session.status(coordinator);
      status_time = now;
    }
    if (!status) {
      if (now - last_seen > cfg.retry_deadline) {
        spdlog::warn("{}: factory 0 at {} unreachable, exiting", cfg.name, coordinator);
        break;
      }
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, Millis(1000));
      continue;
    }
    last_seen = now;
    backoff = Millis(10);
    const std::string state = status->at("state");
    if (state == "done" || state == "killed") {
      if (seen_running || state == "killed") {
        stats.finished = true;
        break;
      }
    }
    if (state != "running") {
      status.reset();
      std::this_thread::sleep_for(cfg.idle_sleep);
      continue;
    }
    seen_running = true;
    session.load_payload(coordinator, status->at("run_id"));
    ShardSpec shards{status->at("boundaries").get<std::vector<std::size_t>>()};
    auto peers = status->at("peers").get<std::vector<std::string>>();
    const std::size_t chunk_rows = status->at("chunk_rows");

    worked = false;
    for (const auto& addr : peers) {
      if (addr.empty() || st.stop_requested()) continue;
      auto cli = make_client(addr, Millis(10'000));
      auto r = cli->Get("/bundle/next?n=" + std::to_string(cfg.lease_size) + "&worker=" + cfg.name);
      if (r && r->status == 410) status.reset();
      if (!r || r->status != 200) continue;
      const auto j = nlohmann::json::parse(r->body);
      const std::uint64_t epoch = j.at("epoch");
      for (const auto& bj : j.at("bundles")) {
        const Bundle b = bundle_from_json(bj);
        ++leased;
        if (cfg.abandon_after && leased >= *cfg.abandon_after) {
          stats.abandoned = true;
          spdlog::info("{}: abandoning bundle {} by request", cfg.name, b.id);
          return stats;
        }
        const std::string tag = "?epoch=" + std::to_string(epoch) + "&bundle_id=" + std::to_string(b.id);
        std::vector<Contribution> out;
        bool ok = session.gather(b, epoch, shards, peers, chunk_rows);
        if (ok) {
          try {
            out = execute_bundle(b, session.payload().space, session.payload().ints, session.slices(epoch));
          } catch (const ManifestError&) {
            ok = false;
          }
        }
        if (!ok) {
          cli->Post("/bundle/abort" + tag, "", "text/plain");
          ++stats.bundles_aborted;
          std::this_thread::sleep_for(cfg.idle_sleep);
          continue;
        }
        if (cfg.delay_per_bundle.count() > 0) std::this_thread::sleep_for(cfg.delay_per_bundle);
        const std::string body = encode_contributions(out);
        for (Millis wait{10}; wait <= Millis(640); wait *= 2) {
          auto pr = cli->Post("/bundle/result" + tag, body, "application/octet-stream");
          if (pr && pr->status == 200) {
            ++stats.bundles_done;
            break;
          }
          // A 409 means the matvec moved on; the factory no longer wants it.
          if (pr) break;
          std::this_thread::sleep_for(wait);
        }
        worked = true;
      }
    }
    if (worked) last_work = std::chrono::steady_clock::now();
    else std::this_thread::sleep_for(cfg.idle_sleep);
  }
  return stats;
}

}  // namespace coosci
