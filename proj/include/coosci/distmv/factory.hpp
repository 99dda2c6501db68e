#pragma once

#include "coosci/detspace/wavefunction.hpp"
#include "coosci/distmv/channels.hpp"
#include "coosci/distmv/checkpoint.hpp"
#include "coosci/distmv/ooc.hpp"
#include "coosci/distmv/protocol.hpp"
#include "coosci/hamio/fcidump.hpp"
#include "coosci/solver/davidson.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

namespace coosci {

using Millis = std::chrono::milliseconds;

struct FactoryConfig {
  std::size_t rank = 0;
  // Empty: a single factory owning every row.
  ShardSpec shards;
  std::string host = "127.0.0.1";
  // 0 binds any free port; on_listening reports the choice.
  int port = 0;
  // host:port of factory 0; unused on factory 0 itself.
  std::string coordinator;
  DavidsonConfig davidson;
  std::size_t c_max = 100;
  std::size_t b_max = 7;
  // Granularity of v-slice file chunks served to workers.
  std::size_t chunk_rows = 4096;
  Millis lease_timeout{120'000};
  Millis peer_deadline{60'000};
  // Krylov store and checkpoints go here; empty keeps the basis in memory
  // and disables checkpoints.
  std::filesystem::path work_dir;
  bool resume = false;
  std::size_t checkpoint_every = 1;
  // Keep answering /status this long after finishing so workers see it.
  Millis linger{300};
  // Fault injection: stop abruptly before this many matvecs have run.
  std::optional<std::size_t> kill_after_matvecs;
  std::function<void(int)> on_listening;

  void validate(std::size_t n_det) const {
    if (c_max == 0 || b_max == 0) throw std::invalid_argument("C and B must be at least 1");
    if (chunk_rows == 0) throw std::invalid_argument("chunk_rows must be positive");
    if (!shards.boundaries.empty()) {
      shards.validate(n_det);
      if (rank >= shards.k()) throw std::invalid_argument("factory rank outside the shard spec");
      if (rank > 0 && coordinator.empty()) throw std::invalid_argument("factories other than 0 need the coordinator address");
    } else if (rank != 0) {
      throw std::invalid_argument("a rank above 0 needs a shard spec");
    }
  }
};

struct FactoryResult {
  double energy = 0.0;
  double residual = 0.0;
  bool converged = false;
  bool killed = false;
  bool resumed = false;
  std::size_t matvecs = 0;
  std::size_t iterations = 0;
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
  // Owned rows of the converged vector.
  std::vector<double> coeffs;
  std::size_t bundles_per_matvec = 0;
  std::size_t leases = 0;
  std::size_t re_leases = 0;
  std::size_t duplicate_posts = 0;
  // Results that arrived after their matvec had completed.
  std::size_t stale_posts = 0;
  std::size_t aborts = 0;
  std::size_t checkpoints_written = 0;
  std::string config_hash;
};

class FactoryKilled : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string checkpoint_dir_name(std::size_t rank) { return "checkpoint-" + std::to_string(rank); }

inline std::unique_ptr<httplib::Client> make_client(const std::string& addr, Millis read_timeout) {
  auto c = std::make_unique<httplib::Client>("http://" + addr);
  c->set_connection_timeout(std::chrono::seconds(2));
  c->set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(read_timeout) + std::chrono::seconds(1));
  c->set_write_timeout(std::chrono::seconds(10));
  return c;
}

namespace detail {

enum class LeaseState : std::uint8_t { pending, leased, completed };

struct BundleSlot {
  LeaseState state = LeaseState::pending;
  std::chrono::steady_clock::time_point deadline{};
  std::size_t attempts = 0;
};

}  // namespace detail

class Factory {
 public:
  Factory(const DetSet& space, const IntegralSet& ints, FactoryConfig cfg)
      : space_(space), ints_(ints), cfg_(std::move(cfg)) {
    cfg_.validate(space_.size());
    if (cfg_.shards.boundaries.empty()) cfg_.shards = even_shards(space_.size(), 1);
    k_ = cfg_.shards.k();
    row_begin_ = cfg_.shards.begin(cfg_.rank);
    row_end_ = cfg_.shards.end(cfg_.rank);
    diag_ = diagonal_slice(space_, ints_, row_begin_, row_end_);
    const auto chans = build_channels(space_, row_begin_, row_end_);
    bundles_ = pack(space_, chans, cfg_.c_max, cfg_.b_max);
    for (const auto& b : bundles_) bundle_json_.push_back(bundle_to_json(b));
    slots_.resize(bundles_.size());
    agg_ = std::make_unique<SigmaAggregator>(row_begin_, row_end_);
    config_hash_ = run_config_hash(space_, ints_, hash_extra());
    if (cfg_.rank == 0) {
      hub_ = std::make_unique<ReduceHub>(k_);
      peers_.assign(k_, "");
      left_.assign(k_, false);
    }
    std::ostringstream sp, in;
    write_wavefunction(sp, Wavefunction{space_, std::vector<double>(space_.size(), 0.0)}, ints_.n_orb(),
                       ints_.n_alpha(), ints_.n_beta());
    write_fcidump(in, ints_);
    space_text_ = sp.str();
    ints_text_ = in.str();
    routes();
  }

  ~Factory() { shutdown_server(); }

  Factory(const Factory&) = delete;
  Factory& operator=(const Factory&) = delete;

  const std::string& config_hash() const { return config_hash_; }
  std::size_t n_bundles() const { return bundles_.size(); }

  FactoryResult run(std::stop_token st = {}) {
    stop_ = st;
    const int port = cfg_.port == 0 ? server_.bind_to_any_port(cfg_.host) : cfg_.port;
    if (cfg_.port != 0 && !server_.bind_to_port(cfg_.host, cfg_.port))
      throw std::runtime_error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
    if (port <= 0) throw std::runtime_error("cannot bind a port on " + cfg_.host);
    address_ = cfg_.host + ":" + std::to_string(port);
    listener_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    if (cfg_.rank == 0) {
      std::lock_guard lk(m_);
      peers_[0] = address_;
    } else {
      register_with_coordinator();
    }
    set_state("running");
    spdlog::info("factory {} of {} on {}: rows [{}, {}), {} bundles per matvec", cfg_.rank, k_, address_, row_begin_,
                 row_end_, bundles_.size());
    if (cfg_.on_listening) cfg_.on_listening(port);

    FactoryResult res;
    res.row_begin = row_begin_;
    res.row_end = row_end_;
    res.bundles_per_matvec = bundles_.size();
    res.config_hash = config_hash_;
    try {
      solve(res);
      set_state("done");
    } catch (const FactoryKilled&) {
      res.killed = true;
      res.matvecs = local_matvecs_;
      set_state("killed");
      spdlog::warn("factory {} stopped by fault injection after {} matvecs", cfg_.rank, local_matvecs_);
    }
    if (writer_) {
      if (!res.killed) writer_->flush();
      res.checkpoints_written = writer_->written();
      writer_.reset();
    }
    if (!res.killed) finish_protocol();
    else std::this_thread::sleep_for(cfg_.linger);
    shutdown_server();
    std::lock_guard lk(m_);
    res.leases = leases_;
    res.re_leases = re_leases_;
    res.duplicate_posts = duplicates_;
    res.stale_posts = stale_;
    res.aborts = aborts_;
    return res;
  }

 private:
  class Comm {
   public:
    explicit Comm(Factory& f) : f_(&f) {}
    int rank() const { return static_cast<int>(f_->cfg_.rank); }
    int size() const { return static_cast<int>(f_->k_); }
    void allreduce(std::span<double> v) { f_->allreduce(v); }

   private:
    Factory* f_;
  };

  class Op {
   public:
    explicit Op(Factory& f) : f_(&f) {}
    std::size_t size() const { return f_->row_end_ - f_->row_begin_; }
    std::span<const double> diagonal() const { return f_->diag_; }
    void apply(std::span<const double> x, std::span<double> y) { f_->matvec(x, y); }

   private:
    Factory* f_;
  };

  std::string hash_extra() const {
    std::ostringstream o;
    o.precision(17);
    o << "rank=" << cfg_.rank << ";shards=";
    for (auto b : cfg_.shards.boundaries) o << b << ',';
    o << ";C=" << cfg_.c_max << ";B=" << cfg_.b_max << ";etol=" << cfg_.davidson.energy_tol
      << ";rtol=" << cfg_.davidson.residual_tol << ";m=" << cfg_.davidson.max_subspace;
    return o.str();
  }

  void set_state(std::string s) {
    std::lock_guard lk(m_);
    state_ = std::move(s);
    cv_.notify_all();
  }

  void solve(FactoryResult& res) {
    DavidsonConfig dcfg = cfg_.davidson;
    std::size_t offset = 0;
    const auto ckpt_dir = cfg_.work_dir.empty() ? std::filesystem::path{} : cfg_.work_dir / checkpoint_dir_name(cfg_.rank);
    if (cfg_.resume) {
      if (ckpt_dir.empty()) throw std::invalid_argument("resume needs a work directory");
      auto c = resume_checkpoint(ckpt_dir, config_hash_, row_begin_, row_end_);
      spdlog::info("factory {} resuming from checkpoint at matvec {} (E = {:.12f})", cfg_.rank, c.meta.matvec_iter,
                   c.meta.energy);
      dcfg.warm_start = std::move(c.v);
      dcfg.warm_start_hv = std::move(c.hv);
      offset = c.meta.matvec_iter;
      res.resumed = true;
    }
    if (!ckpt_dir.empty() && cfg_.checkpoint_every > 0) writer_ = std::make_unique<CheckpointWriter>(ckpt_dir);

    auto on_iter = [&](const DavidsonProgress& p) {
      {
        std::lock_guard lk(m_);
        last_energy_ = p.energy;
        last_residual_ = p.residual_norm;
        iteration_ = p.iteration;
      }
      if (!writer_ || p.iteration % cfg_.checkpoint_every != 0) return;
      std::vector<double> sums{detail::local_dot(p.ritz_vector, p.ritz_hv), detail::local_dot(p.ritz_vector, p.ritz_vector)};
      allreduce(sums);
      RitzCheckpoint c;
      c.v.assign(p.ritz_vector.begin(), p.ritz_vector.end());
      c.hv.assign(p.ritz_hv.begin(), p.ritz_hv.end());
      c.meta = {sums[0] / sums[1], p.residual_norm, p.matvecs, space_.size(), config_hash_,
                row_begin_,        row_end_,        {},        {}};
      writer_->submit(std::move(c));
    };

    Op op(*this);
    Comm comm(*this);
    DavidsonResult dr;
    if (cfg_.work_dir.empty()) {
      InMemoryBasis basis;
      dr = davidson_solve(op, basis, comm, dcfg, on_iter, offset);
    } else {
      OocStore basis(cfg_.work_dir / ("krylov-" + std::to_string(cfg_.rank)), row_end_ - row_begin_);
      dr = davidson_solve(op, basis, comm, dcfg, on_iter, offset);
    }
    res.energy = dr.energy;
    res.residual = dr.residual_norm;
    res.converged = dr.converged;
    res.matvecs = dr.matvecs;
    res.iterations = dr.iterations;
    res.coeffs = std::move(dr.coeffs);
  }

  void matvec(std::span<const double> x, std::span<double> y) {
    if (cfg_.kill_after_matvecs && local_matvecs_ >= *cfg_.kill_after_matvecs) throw FactoryKilled("killed");
    ++local_matvecs_;
    std::unique_lock lk(m_);
    ++epoch_;
    v_[epoch_] = std::make_shared<const std::vector<double>>(x.begin(), x.end());
    while (v_.begin()->first + 1 < epoch_) v_.erase(v_.begin());
    agg_->reset();
    pending_.clear();
    for (std::size_t b = 0; b < slots_.size(); ++b) {
      slots_[b] = {};
      pending_.push_back(b);
    }
    remaining_ = slots_.size();
    cv_.notify_all();
    while (remaining_ > 0) {
      if (stop_.stop_requested()) throw FactoryKilled("stop requested");
      cv_.wait_for(lk, Millis(20));
      expire_leases();
    }
    agg_->finish(diag_, x, y);
  }

  // Caller holds m_.
  void expire_leases() {
    const auto now = std::chrono::steady_clock::now();
    for (std::size_t b = 0; b < slots_.size(); ++b) {
      auto& s = slots_[b];
      if (s.state == detail::LeaseState::leased && s.deadline < now) {
        s.state = detail::LeaseState::pending;
        pending_.push_back(b);
        ++re_leases_;
      }
    }
  }

  void allreduce(std::span<double> v) {
    if (k_ == 1) return;
    const std::uint64_t seq = reduce_seq_++;
    std::vector<double> out;
    if (cfg_.rank == 0) {
      out = hub_->contribute(seq, 0, {v.begin(), v.end()}, cfg_.peer_deadline);
    } else {
      const std::string body = encode_doubles(v);
      const std::string path = "/reduce?seq=" + std::to_string(seq) + "&rank=" + std::to_string(cfg_.rank);
      out = decode_doubles(post_with_retry(path, body));
    }
    if (out.size() != v.size()) throw std::runtime_error("reduction returned the wrong width");
    std::copy(out.begin(), out.end(), v.begin());
  }

  std::string post_with_retry(const std::string& path, const std::string& body) {
    const auto give_up = std::chrono::steady_clock::now() + cfg_.peer_deadline;
    Millis backoff{10};
    while (true) {
      auto cli = make_client(cfg_.coordinator, cfg_.peer_deadline);
      auto r = cli->Post(path, body, "application/octet-stream");
      if (r && r->status == 200) return r->body;
      if (stop_.stop_requested()) throw FactoryKilled("stop requested");
      if (std::chrono::steady_clock::now() > give_up)
        throw PeerTimeout("coordinator " + cfg_.coordinator + " unreachable for " + path);
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, Millis(1000));
    }
  }

  void register_with_coordinator() {
    post_with_retry("/register?rank=" + std::to_string(cfg_.rank) + "&addr=" + address_, "");
  }

  void finish_protocol() {
    if (cfg_.rank != 0) {
      try {
        post_with_retry("/leave?rank=" + std::to_string(cfg_.rank), "");
      } catch (const PeerTimeout&) {
        spdlog::warn("factory {} could not say goodbye to the coordinator", cfg_.rank);
      }
    } else {
      std::unique_lock lk(m_);
      cv_.wait_for(lk, cfg_.peer_deadline, [&] {
        for (std::size_t a = 1; a < k_; ++a)
          if (!left_[a]) return false;
        return true;
      });
    }
    std::this_thread::sleep_for(cfg_.linger);
  }

  void shutdown_server() {
    if (server_.is_running()) server_.stop();
    if (listener_.joinable()) listener_.join();
  }

  nlohmann::json status_json() {
    std::lock_guard lk(m_);
    nlohmann::json j{{"run_id", config_hash_},      {"rank", cfg_.rank},         {"k", k_},
                     {"state", state_},             {"epoch", epoch_},           {"n_det", space_.size()},
                     {"boundaries", cfg_.shards.boundaries}, {"chunk_rows", cfg_.chunk_rows},
                     {"bundles", bundles_.size()},  {"remaining", remaining_},   {"energy", last_energy_},
                     {"residual", last_residual_},  {"iteration", iteration_}};
    if (cfg_.rank == 0) j["peers"] = peers_;
    return j;
  }

  static std::uint64_t param_u64(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) throw std::invalid_argument(std::string("missing parameter ") + key);
    return std::stoull(req.get_param_value(key));
  }

  void routes() {
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(e.what(), "text/plain");
      }
    });

    server_.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(status_json().dump(), "application/json");
    });

    server_.Get("/bundle/next", [this](const httplib::Request& req, httplib::Response& res) {
      const std::size_t want = req.has_param("n") ? std::max<std::uint64_t>(1, param_u64(req, "n")) : 1;
      std::lock_guard lk(m_);
      if (state_ == "done" || state_ == "killed") {
        res.status = 410;
        return;
      }
      expire_leases();
      nlohmann::json out{{"epoch", epoch_}, {"bundles", nlohmann::json::array()}};
      const auto now = std::chrono::steady_clock::now();
      while (!pending_.empty() && out["bundles"].size() < want) {
        const std::size_t b = pending_.front();
        pending_.pop_front();
        auto& s = slots_[b];
        if (s.state != detail::LeaseState::pending) continue;
        s.state = detail::LeaseState::leased;
        s.deadline = now + cfg_.lease_timeout * (std::size_t{1} << std::min<std::size_t>(s.attempts, 6));
        ++s.attempts;
        ++leases_;
        out["bundles"].push_back(bundle_json_[b]);
      }
      if (out["bundles"].empty()) {
        res.status = 204;
        return;
      }
      res.set_content(out.dump(), "application/json");
    });

    server_.Post("/bundle/result", [this](const httplib::Request& req, httplib::Response& res) {
      const auto epoch = param_u64(req, "epoch");
      const auto id = param_u64(req, "bundle_id");
      auto contrib = decode_contributions(req.body);
      std::lock_guard lk(m_);
      if (epoch < epoch_ && id < slots_.size()) {
        // The matvec it belonged to has finished without it or with a copy.
        ++stale_;
        res.set_content(nlohmann::json{{"accepted", false}}.dump(), "application/json");
        return;
      }
      if (epoch != epoch_ || id >= slots_.size()) {
        res.status = 409;
        res.set_content("stale or unknown bundle", "text/plain");
        return;
      }
      bool accepted = false;
      if (slots_[id].state == detail::LeaseState::completed || agg_->has(id)) {
        ++duplicates_;
      } else {
        agg_->add(id, std::move(contrib));
        slots_[id].state = detail::LeaseState::completed;
        --remaining_;
        accepted = true;
        cv_.notify_all();
      }
      res.set_content(nlohmann::json{{"accepted", accepted}}.dump(), "application/json");
    });

    server_.Post("/bundle/abort", [this](const httplib::Request& req, httplib::Response& res) {
      const auto epoch = param_u64(req, "epoch");
      const auto id = param_u64(req, "bundle_id");
      std::lock_guard lk(m_);
      if (epoch == epoch_ && id < slots_.size() && slots_[id].state == detail::LeaseState::leased) {
        slots_[id].state = detail::LeaseState::pending;
        pending_.push_back(id);
        ++aborts_;
      }
      res.set_content("{}", "application/json");
    });

    server_.Get(R"(/files/([A-Za-z0-9_.]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string name = req.matches[1];
      if (name == "space" || name == "ints") {
        const std::string& text = name == "space" ? space_text_ : ints_text_;
        const std::size_t off = req.has_param("offset") ? param_u64(req, "offset") : 0;
        const std::size_t len = req.has_param("len") ? param_u64(req, "len") : text.size();
        if (off > text.size()) {
          res.status = 416;
          return;
        }
        res.set_content(text.substr(off, len), "text/plain");
        return;
      }
      if (name.rfind("v.", 0) == 0) {
        const auto epoch = std::stoull(name.substr(2));
        const std::size_t off = param_u64(req, "offset");
        const std::size_t len = param_u64(req, "len");
        std::shared_ptr<const std::vector<double>> v;
        {
          std::lock_guard lk(m_);
          auto it = v_.find(epoch);
          if (it != v_.end()) v = it->second;
        }
        if (!v) {
          res.status = 404;
          return;
        }
        if (off < row_begin_ || off + len > row_end_) {
          res.status = 416;
          return;
        }
        res.set_content(encode_doubles(std::span(*v).subspan(off - row_begin_, len)), "application/octet-stream");
        return;
      }
      res.status = 404;
    });

    if (cfg_.rank != 0) return;

    server_.Post("/register", [this](const httplib::Request& req, httplib::Response& res) {
      const auto rank = param_u64(req, "rank");
      if (rank >= k_) throw std::out_of_range("rank outside the shard spec");
      std::lock_guard lk(m_);
      peers_[rank] = req.get_param_value("addr");
      res.set_content("{}", "application/json");
    });

    server_.Post("/leave", [this](const httplib::Request& req, httplib::Response& res) {
      const auto rank = param_u64(req, "rank");
      if (rank >= k_) throw std::out_of_range("rank outside the shard spec");
      std::lock_guard lk(m_);
      left_[rank] = true;
      cv_.notify_all();
      res.set_content("{}", "application/json");
    });

    server_.Post("/reduce", [this](const httplib::Request& req, httplib::Response& res) {
      const auto seq = param_u64(req, "seq");
      const auto rank = param_u64(req, "rank");
      auto out = hub_->contribute(seq, rank, decode_doubles(req.body), cfg_.peer_deadline);
      res.set_content(encode_doubles(out), "application/octet-stream");
    });
  }

  const DetSet& space_;
  const IntegralSet& ints_;
  FactoryConfig cfg_;
  std::size_t k_ = 1;
  std::size_t row_begin_ = 0, row_end_ = 0;
  std::vector<double> diag_;
  std::vector<Bundle> bundles_;
  std::vector<nlohmann::json> bundle_json_;
  std::string config_hash_;
  std::string space_text_, ints_text_;

  std::mutex m_;
  std::condition_variable cv_;
  std::string state_ = "starting";
  std::uint64_t epoch_ = 0;
  std::map<std::uint64_t, std::shared_ptr<const std::vector<double>>> v_;
  std::vector<detail::BundleSlot> slots_;
  std::deque<std::size_t> pending_;
  std::size_t remaining_ = 0;
  std::unique_ptr<SigmaAggregator> agg_;
  std::size_t leases_ = 0, re_leases_ = 0, duplicates_ = 0, stale_ = 0, aborts_ = 0;
  double last_energy_ = 0.0, last_residual_ = 0.0;
  std::size_t iteration_ = 0;
  std::vector<std::string> peers_;
  std::vector<bool> left_;

  std::unique_ptr<ReduceHub> hub_;
  std::uint64_t reduce_seq_ = 0;
  std::size_t local_matvecs_ = 0;
  std::unique_ptr<CheckpointWriter> writer_;
  std::stop_token stop_;
  std::string address_;
  httplib::Server server_;
  std::jthread listener_;
};

// Runs one factory to completion: serves bundles to workers, drives the
// Davidson loop over its row shard and returns its slice of the answer.
inline FactoryResult factory_serve(const DetSet& space, const IntegralSet& ints, const FactoryConfig& cfg,
                                   std::stop_token st = {}) {
  Factory f(space, ints, cfg);
  return f.run(st);
}

}  // namespace coosci
