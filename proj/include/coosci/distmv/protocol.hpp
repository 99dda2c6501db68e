#pragma once

#include "coosci/distmv/channels.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coosci {

// Contiguous row intervals, one per factory: factory a owns
// [boundaries[a], boundaries[a + 1]).
struct ShardSpec {
  std::vector<std::size_t> boundaries;

  std::size_t k() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }
  std::size_t begin(std::size_t a) const { return boundaries.at(a); }
  std::size_t end(std::size_t a) const { return boundaries.at(a + 1); }
  std::size_t n_rows() const { return boundaries.empty() ? 0 : boundaries.back(); }

  std::size_t owner(std::size_t row) const {
    auto it = std::upper_bound(boundaries.begin(), boundaries.end(), row);
    if (it == boundaries.begin() || it == boundaries.end()) throw std::out_of_range("row outside every shard");
    return static_cast<std::size_t>(it - boundaries.begin()) - 1;
  }

  void validate(std::size_t n) const {
    if (boundaries.size() < 2 || boundaries.front() != 0 || boundaries.back() != n)
      throw std::invalid_argument("shards must cover rows 0.." + std::to_string(n));
    for (std::size_t a = 0; a + 1 < boundaries.size(); ++a)
      if (boundaries[a] > boundaries[a + 1]) throw std::invalid_argument("shard boundaries must not decrease");
  }
};

inline ShardSpec even_shards(std::size_t n, std::size_t k) {
  if (k == 0) throw std::invalid_argument("need at least one shard");
  ShardSpec s;
  for (std::size_t a = 0; a <= k; ++a) s.boundaries.push_back(n * a / k);
  return s;
}

// Per-shard partial sums, then the sum of the K partials in shard order.
inline double distributed_dot(std::span<const double> x, std::span<const double> y, const ShardSpec& shards) {
  double total = 0.0;
  for (std::size_t a = 0; a < shards.k(); ++a) {
    double part = 0.0;
    for (std::size_t i = shards.begin(a); i < shards.end(a); ++i) part += x[i] * y[i];
    total += part;
  }
  return total;
}

inline nlohmann::json bundle_to_json(const Bundle& b) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : b.minitasks) {
    nlohmann::json ch = nlohmann::json::array();
    for (const auto& c : t.channels) {
      if (c.g_prime) ch.push_back({c.g, *c.g_prime, c.row});
      else ch.push_back({c.g, c.row});
    }
    tasks.push_back({{"type", std::string(1, kind_letter(t.ctype))}, {"channels", std::move(ch)}});
  }
  nlohmann::json ranges = nlohmann::json::array();
  for (const auto& r : b.manifest.v_ranges) ranges.push_back({r.begin, r.end});
  return {{"bundle_id", b.id},
          {"minitasks", std::move(tasks)},
          {"manifest",
           {{"alpha_groups", b.manifest.alpha_groups},
            {"beta_groups", b.manifest.beta_groups},
            {"v_ranges", std::move(ranges)}}}};
}

inline Bundle bundle_from_json(const nlohmann::json& j) {
  Bundle b;
  b.id = j.at("bundle_id").get<std::uint64_t>();
  for (const auto& t : j.at("minitasks")) {
    MiniTask m;
    m.ctype = kind_from_letter(t.at("type").get<std::string>().at(0));
    for (const auto& c : t.at("channels")) {
      if (m.ctype == ChannelKind::M) m.channels.push_back({m.ctype, c.at(0), c.at(1).get<std::size_t>(), c.at(2)});
      else m.channels.push_back({m.ctype, c.at(0), std::nullopt, c.at(1)});
    }
    b.minitasks.push_back(std::move(m));
  }
  const auto& man = j.at("manifest");
  b.manifest.alpha_groups = man.at("alpha_groups").get<std::vector<std::size_t>>();
  b.manifest.beta_groups = man.at("beta_groups").get<std::vector<std::size_t>>();
  for (const auto& r : man.at("v_ranges")) b.manifest.v_ranges.push_back({r.at(0), r.at(1)});
  return b;
}

static_assert(std::endian::native == std::endian::little, "wire encoding assumes a little-endian host");

// (u64 row, f64 value) pairs.
inline std::string encode_contributions(std::span<const Contribution> c) {
  std::string out(c.size() * 16, '\0');
  for (std::size_t k = 0; k < c.size(); ++k) {
    std::memcpy(out.data() + 16 * k, &c[k].row, 8);
    std::memcpy(out.data() + 16 * k + 8, &c[k].value, 8);
  }
  return out;
}

inline std::vector<Contribution> decode_contributions(std::string_view body) {
  if (body.size() % 16 != 0) throw std::invalid_argument("contribution body is not a whole number of pairs");
  std::vector<Contribution> c(body.size() / 16);
  for (std::size_t k = 0; k < c.size(); ++k) {
    std::memcpy(&c[k].row, body.data() + 16 * k, 8);
    std::memcpy(&c[k].value, body.data() + 16 * k + 8, 8);
  }
  return c;
}

inline std::string encode_doubles(std::span<const double> v) {
  return {reinterpret_cast<const char*>(v.data()), v.size_bytes()};
}

inline std::vector<double> decode_doubles(std::string_view body) {
  if (body.size() % 8 != 0) throw std::invalid_argument("body is not a whole number of doubles");
  std::vector<double> v(body.size() / 8);
  std::memcpy(v.data(), body.data(), body.size());
  return v;
}

class PeerTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Blocking rendezvous: every rank contributes a vector for round `seq` and
// all receive the elementwise sum taken in rank order. Repeated contributions
// from a rank for the same round are ignored, so callers may retry.
class ReduceHub {
 public:
  explicit ReduceHub(std::size_t k) : k_(k) {}

  std::vector<double> contribute(std::uint64_t seq, std::size_t rank, std::vector<double> values,
                                 std::chrono::milliseconds deadline) {
    if (rank >= k_) throw std::out_of_range("reduction rank out of range");
    std::unique_lock lk(m_);
    auto& r = rounds_[seq];
    if (r.parts.empty()) r.parts.resize(k_);
    if (!r.parts[rank]) {
      if (r.n > 0 && values.size() != r.width) throw std::invalid_argument("reduction widths differ across ranks");
      r.width = values.size();
      r.parts[rank] = std::move(values);
      ++r.n;
    }
    if (r.n == k_) {
      if (r.sum.empty()) {
        r.sum.assign(r.width, 0.0);
        for (const auto& p : r.parts)
          for (std::size_t i = 0; i < r.width; ++i) r.sum[i] += (*p)[i];
      }
      cv_.notify_all();
    } else if (!cv_.wait_for(lk, deadline, [&] { return rounds_.at(seq).n == k_; })) {
      throw PeerTimeout("reduction round " + std::to_string(seq) + " timed out");
    }
    auto out = rounds_.at(seq).sum;
    // Keep a few recent rounds for retried requests.
    while (!rounds_.empty() && rounds_.begin()->first + 8 < seq) rounds_.erase(rounds_.begin());
    return out;
  }

 private:
  struct Round {
    std::vector<std::optional<std::vector<double>>> parts;
    std::size_t n = 0;
    std::size_t width = 0;
    std::vector<double> sum;
  };
  std::size_t k_;
  std::mutex m_;
  std::condition_variable cv_;
  std::map<std::uint64_t, Round> rounds_;
};

}  // namespace coosci
