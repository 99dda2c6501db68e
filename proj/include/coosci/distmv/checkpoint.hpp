#pragma once

#include "coosci/detspace/detset.hpp"
#include "coosci/distmv/ooc.hpp"
#include "coosci/hamio/fcidump.hpp"
#include "coosci/hamio/integrals.hpp"
#include "coosci/util/hash.hpp"

#include <json.hpp>

#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace coosci {

struct RitzMeta {
  double energy = 0.0;
  double residual = 0.0;
  std::uint64_t matvec_iter = 0;
  std::uint64_t n_det = 0;
  std::string config_hash;
  // Rows of the global vector held by this checkpoint.
  std::uint64_t row_begin = 0;
  std::uint64_t row_end = 0;
  std::string v_hash;
  std::string hv_hash;
};

struct RitzCheckpoint {
  std::vector<double> v;
  std::vector<double> hv;
  RitzMeta meta;
};

class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string hash_vector(std::span<const double> v) {
  Fnv1a h;
  h.update_span(v);
  return h.hex();
}

// Identity of a run: determinants, integrals and whatever else the caller
// folds in (solver tolerances, shard layout).
inline std::string run_config_hash(const DetSet& s, const IntegralSet& ints, const std::string& extra) {
  Fnv1a h;
  for (const auto& d : s.dets()) {
    h.update(d.alpha.hex());
    h.update(d.beta.hex());
  }
  std::ostringstream f;
  write_fcidump(f, ints);
  h.update(f.str());
  h.update(extra);
  return h.hex();
}

inline nlohmann::json to_json(const RitzMeta& m) {
  return {{"energy", m.energy},       {"residual", m.residual}, {"matvec_iter", m.matvec_iter},
          {"n_det", m.n_det},         {"config_hash", m.config_hash}, {"row_begin", m.row_begin},
          {"row_end", m.row_end},     {"v_hash", m.v_hash},     {"hv_hash", m.hv_hash}};
}

inline RitzMeta meta_from_json(const nlohmann::json& j) {
  RitzMeta m;
  m.energy = j.at("energy").get<double>();
  m.residual = j.at("residual").get<double>();
  m.matvec_iter = j.at("matvec_iter").get<std::uint64_t>();
  m.n_det = j.at("n_det").get<std::uint64_t>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.row_begin = j.value("row_begin", std::uint64_t{0});
  m.row_end = j.value("row_end", m.n_det);
  m.v_hash = j.value("v_hash", std::string{});
  m.hv_hash = j.value("hv_hash", std::string{});
  return m;
}

// Each file goes to a temporary name first and is renamed into place;
// meta.json is renamed last and carries hashes of both vectors.
inline void write_checkpoint(const std::filesystem::path& dir, const RitzCheckpoint& c) {
  std::filesystem::create_directories(dir);
  if (c.v.size() != c.hv.size() || c.v.size() != c.meta.row_end - c.meta.row_begin)
    throw std::invalid_argument("checkpoint vectors disagree with their row range");
  RitzMeta meta = c.meta;
  meta.v_hash = hash_vector(c.v);
  meta.hv_hash = hash_vector(c.hv);
  write_vector_file(dir / "ritz_v.bin.tmp", c.v);
  write_vector_file(dir / "ritz_hv.bin.tmp", c.hv);
  {
    std::ofstream out(dir / "meta.json.tmp");
    out << to_json(meta).dump(2) << '\n';
    if (!out) throw IntegrityError("cannot write checkpoint metadata");
  }
  std::filesystem::rename(dir / "ritz_v.bin.tmp", dir / "ritz_v.bin");
  std::filesystem::rename(dir / "ritz_hv.bin.tmp", dir / "ritz_hv.bin");
  std::filesystem::rename(dir / "meta.json.tmp", dir / "meta.json");
}

inline RitzMeta read_checkpoint_meta(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw IntegrityError("no checkpoint metadata in " + dir.string());
  return meta_from_json(nlohmann::json::parse(in));
}

inline RitzCheckpoint read_checkpoint(const std::filesystem::path& dir) {
  RitzCheckpoint c;
  c.meta = read_checkpoint_meta(dir);
  const std::size_t n = c.meta.row_end - c.meta.row_begin;
  c.v = read_vector_file(dir / "ritz_v.bin", n);
  c.hv = read_vector_file(dir / "ritz_hv.bin", n);
  if ((!c.meta.v_hash.empty() && hash_vector(c.v) != c.meta.v_hash) ||
      (!c.meta.hv_hash.empty() && hash_vector(c.hv) != c.meta.hv_hash))
    throw IntegrityError("checkpoint vectors do not match their metadata");
  return c;
}

// Loads a checkpoint for resumption; refuses one written for another run.
inline RitzCheckpoint resume_checkpoint(const std::filesystem::path& dir, const std::string& config_hash,
                                        std::size_t row_begin, std::size_t row_end) {
  auto c = read_checkpoint(dir);
  if (c.meta.config_hash != config_hash)
    throw CheckpointMismatch("checkpoint config hash " + c.meta.config_hash + " does not match this run (" +
                             config_hash + ")");
  if (c.meta.row_begin != row_begin || c.meta.row_end != row_end)
    throw CheckpointMismatch("checkpoint row range does not match this shard");
  return c;
}

// Writes checkpoints on its own thread. Only the newest pending snapshot is
// kept, so a slow disk never holds up the caller.
class CheckpointWriter {
 public:
  explicit CheckpointWriter(std::filesystem::path dir)
      : dir_(std::move(dir)), thread_([this](std::stop_token st) { run(st); }) {}

  ~CheckpointWriter() {
    try {
      flush();
    } catch (const std::exception&) {
    }
    {
      std::lock_guard lk(m_);
      thread_.request_stop();
    }
    cv_.notify_all();
  }

  CheckpointWriter(const CheckpointWriter&) = delete;
  CheckpointWriter& operator=(const CheckpointWriter&) = delete;

  void submit(RitzCheckpoint c) {
    {
      std::lock_guard lk(m_);
      pending_ = std::move(c);
    }
    cv_.notify_all();
  }

  // Blocks until everything submitted so far is on disk.
  void flush() {
    std::unique_lock lk(m_);
    done_cv_.wait(lk, [&] { return !pending_ && !busy_; });
    if (error_) {
      auto e = *error_;
      error_.reset();
      throw IntegrityError(e);
    }
  }

  std::size_t written() const {
    std::lock_guard lk(m_);
    return written_;
  }

 private:
  void run(std::stop_token st) {
    std::unique_lock lk(m_);
    while (true) {
      cv_.wait(lk, [&] { return pending_.has_value() || st.stop_requested(); });
      if (!pending_) return;
      auto c = std::move(*pending_);
      pending_.reset();
      busy_ = true;
      lk.unlock();
      try {
        write_checkpoint(dir_, c);
        lk.lock();
        ++written_;
      } catch (const std::exception& e) {
        lk.lock();
        error_ = e.what();
      }
      busy_ = false;
      done_cv_.notify_all();
    }
  }

  std::filesystem::path dir_;
  mutable std::mutex m_;
  std::condition_variable cv_, done_cv_;
  std::optional<RitzCheckpoint> pending_;
  bool busy_ = false;
  std::size_t written_ = 0;
  std::optional<std::string> error_;
  std::jthread thread_;
};

}  // namespace coosci
