#pragma once

#include "coosci/detspace/connections.hpp"
#include "coosci/detspace/detset.hpp"
#include "coosci/hamio/integrals.hpp"
#include "coosci/solver/hamiltonian.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coosci {

// One destination row paired with one source group. A and B channels keep
// g_prime empty; M channels name the adjacent alpha-group the sources live in.
// Every channel addresses its destination as row `row` of alpha-group `g`.
struct Channel {
  ChannelKind ctype = ChannelKind::A;
  std::size_t g = 0;
  std::optional<std::size_t> g_prime;
  std::size_t row = 0;

  bool operator==(const Channel&) const = default;
  auto operator<=>(const Channel&) const = default;
};

inline char kind_letter(ChannelKind k) { return "ABM"[static_cast<int>(k)]; }

inline ChannelKind kind_from_letter(char c) {
  switch (c) {
    case 'A': return ChannelKind::A;
    case 'B': return ChannelKind::B;
    case 'M': return ChannelKind::M;
  }
  throw std::invalid_argument(std::string("unknown channel type ") + c);
}

inline std::size_t destination_row(const DetSet& s, const Channel& c) { return s.alpha_offsets()[c.g] + c.row; }

struct ChannelCensus {
  std::size_t n_det = 0;
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t m = 0;

  std::size_t total() const { return a + b + m; }
  double mean_degree() const { return n_det ? static_cast<double>(m) / static_cast<double>(n_det) : 0.0; }
};

// Counts without materializing: N(2 + c-bar).
inline ChannelCensus channel_census(const DetSet& s) {
  return {s.size(), s.size(), s.size(), s.total_alpha_degree()};
}

inline ChannelCensus channel_census(std::span<const Channel> chans, std::size_t n_det) {
  ChannelCensus c{n_det, 0, 0, 0};
  for (const auto& ch : chans) {
    if (ch.ctype == ChannelKind::A) ++c.a;
    else if (ch.ctype == ChannelKind::B) ++c.b;
    else ++c.m;
  }
  return c;
}

// Channels for destination rows [row_begin, row_end), as three type segments
// (all A, then all B, then all M), rows ascending inside each segment.
inline std::vector<Channel> build_channels(const DetSet& s, std::size_t row_begin, std::size_t row_end) {
  if (row_begin > row_end || row_end > s.size()) throw std::invalid_argument("channel row range out of bounds");
  std::vector<Channel> out;
  const auto& off = s.alpha_offsets();
  for (ChannelKind k : {ChannelKind::A, ChannelKind::B}) {
    for (std::size_t i = row_begin; i < row_end; ++i) {
      const std::size_t g = s.row_alpha_group(i);
      out.push_back({k, g, std::nullopt, i - off[g]});
    }
  }
  for (std::size_t i = row_begin; i < row_end; ++i) {
    const std::size_t g = s.row_alpha_group(i);
    for (std::size_t gp : s.alpha_adjacency(g)) out.push_back({ChannelKind::M, g, gp, i - off[g]});
  }
  return out;
}

inline std::vector<Channel> build_channels(const DetSet& s) { return build_channels(s, 0, s.size()); }

struct PackCounts {
  std::uint64_t minitasks = 0;
  std::uint64_t bundles = 0;
};

// Mini-task and bundle totals implied by a census, without building anything.
inline PackCounts pack_counts(std::uint64_t a, std::uint64_t b, std::uint64_t m, std::uint64_t c_max,
                              std::uint64_t b_max) {
  if (c_max == 0 || b_max == 0) throw std::invalid_argument("C and B must be at least 1");
  auto ceil_div = [](std::uint64_t x, std::uint64_t y) { return (x + y - 1) / y; };
  const auto t = ceil_div(a, c_max) + ceil_div(b, c_max) + ceil_div(m, c_max);
  return {t, ceil_div(t, b_max)};
}

inline PackCounts pack_counts(const ChannelCensus& c, std::uint64_t c_max, std::uint64_t b_max) {
  return pack_counts(c.a, c.b, c.m, c_max, b_max);
}

struct MiniTask {
  ChannelKind ctype = ChannelKind::A;
  std::vector<Channel> channels;
};

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const RowRange&) const = default;
};

// Inputs a bundle reads besides the static integral and determinant payload.
struct Manifest {
  std::vector<std::size_t> alpha_groups;
  std::vector<std::size_t> beta_groups;
  std::vector<RowRange> v_ranges;
};

struct Bundle {
  std::uint64_t id = 0;
  std::vector<MiniTask> minitasks;
  Manifest manifest;

  std::size_t channel_count() const {
    std::size_t n = 0;
    for (const auto& t : minitasks) n += t.channels.size();
    return n;
  }
};

// Greedy: a mini-task closes at C channels or when the type changes.
inline std::vector<MiniTask> pack_minitasks(std::span<const Channel> chans, std::size_t c_max) {
  if (c_max == 0) throw std::invalid_argument("C must be at least 1");
  std::vector<MiniTask> out;
  for (const auto& ch : chans) {
    if (out.empty() || out.back().ctype != ch.ctype || out.back().channels.size() >= c_max) {
      out.push_back({ch.ctype, {}});
      out.back().channels.reserve(std::min<std::size_t>(c_max, 1024));
    }
    out.back().channels.push_back(ch);
  }
  return out;
}

inline std::vector<RowRange> merge_ranges(std::vector<RowRange> r) {
  std::sort(r.begin(), r.end(), [](const RowRange& x, const RowRange& y) { return x.begin < y.begin; });
  std::vector<RowRange> out;
  for (const auto& x : r) {
    if (x.begin == x.end) continue;
    if (!out.empty() && x.begin <= out.back().end) out.back().end = std::max(out.back().end, x.end);
    else out.push_back(x);
  }
  return out;
}

inline Manifest build_manifest(const DetSet& s, std::span<const MiniTask> tasks) {
  std::vector<std::size_t> ag, bg;
  std::vector<RowRange> ranges;
  const auto& off = s.alpha_offsets();
  for (const auto& t : tasks) {
    for (const auto& ch : t.channels) {
      switch (ch.ctype) {
        case ChannelKind::A:
          ag.push_back(ch.g);
          break;
        case ChannelKind::B:
          bg.push_back(s.row_beta_group(destination_row(s, ch)));
          break;
        case ChannelKind::M:
          ag.push_back(*ch.g_prime);
          break;
      }
    }
  }
  auto uniq = [](std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(ag);
  uniq(bg);
  for (std::size_t g : ag) ranges.push_back({off[g], off[g + 1]});
  for (std::size_t h : bg)
    for (std::size_t j : s.beta_group_rows(h)) ranges.push_back({j, j + 1});
  return {std::move(ag), std::move(bg), merge_ranges(std::move(ranges))};
}

// Up to B mini-tasks per bundle, ids from 0 in packing order.
inline std::vector<Bundle> pack(const DetSet& s, std::span<const Channel> chans, std::size_t c_max, std::size_t b_max) {
  if (b_max == 0) throw std::invalid_argument("B must be at least 1");
  auto tasks = pack_minitasks(chans, c_max);
  std::vector<Bundle> out;
  for (std::size_t k = 0; k < tasks.size(); k += b_max) {
    Bundle b;
    b.id = out.size();
    const std::size_t e = std::min(tasks.size(), k + b_max);
    b.minitasks.assign(std::make_move_iterator(tasks.begin() + static_cast<std::ptrdiff_t>(k)),
                       std::make_move_iterator(tasks.begin() + static_cast<std::ptrdiff_t>(e)));
    b.manifest = build_manifest(s, b.minitasks);
    out.push_back(std::move(b));
  }
  return out;
}

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Source-vector slices keyed by first row.
class SliceMap {
 public:
  void insert(std::size_t begin, std::vector<double> values) { slices_[begin] = std::move(values); }
  void clear() { slices_.clear(); }
  std::size_t size() const { return slices_.size(); }

  bool covers(RowRange r) const {
    std::size_t at = r.begin;
    while (at < r.end) {
      auto it = slices_.upper_bound(at);
      if (it == slices_.begin()) return false;
      --it;
      const std::size_t e = it->first + it->second.size();
      if (e <= at) return false;
      at = e;
    }
    return true;
  }

  double at(std::size_t row) const {
    auto it = slices_.upper_bound(row);
    if (it != slices_.begin()) {
      --it;
      if (row < it->first + it->second.size()) return it->second[row - it->first];
    }
    throw ManifestError("source row " + std::to_string(row) + " is not in any fetched slice");
  }

 private:
  std::map<std::size_t, std::vector<double>> slices_;
};

struct Contribution {
  std::uint64_t row = 0;
  double value = 0.0;

  bool operator==(const Contribution&) const = default;
};

// Off-diagonal sum over the bundle's channels, one entry per destination row
// in ascending order. Reads only the determinant set, the integrals and v.
inline std::vector<Contribution> execute_bundle(const Bundle& b, const DetSet& s, const IntegralSet& ints,
                                                const SliceMap& v) {
  for (const auto& r : b.manifest.v_ranges)
    if (!v.covers(r)) throw ManifestError("manifest slice not available");
  std::map<std::size_t, double> acc;
  for (const auto& t : b.minitasks) {
    for (const auto& ch : t.channels) {
      if (ch.ctype != t.ctype) throw std::invalid_argument("mini-task mixes channel types");
      const std::size_t i = destination_row(s, ch);
      double sum = 0.0;
      auto add = [&](std::size_t j) { sum += ordered_element(s, i, j, ints) * v.at(j); };
      switch (ch.ctype) {
        case ChannelKind::A: scan_same_alpha(s, i, add); break;
        case ChannelKind::B: scan_same_beta(s, i, add); break;
        case ChannelKind::M: scan_adjacent_alpha(s, i, *ch.g_prime, add); break;
      }
      acc[i] += sum;
    }
  }
  std::vector<Contribution> out;
  out.reserve(acc.size());
  for (const auto& [row, val] : acc) out.push_back({row, val});
  return out;
}

// Sums bundle contributions for rows [begin, end) exactly once per bundle id,
// in ascending id order regardless of arrival order.
class SigmaAggregator {
 public:
  SigmaAggregator(std::size_t begin, std::size_t end) : begin_(begin), end_(end) {}

  bool add(std::uint64_t bundle_id, std::vector<Contribution> c) {
    for (const auto& x : c)
      if (x.row < begin_ || x.row >= end_) throw std::out_of_range("contribution outside the owned rows");
    return parts_.emplace(bundle_id, std::move(c)).second;
  }
  bool has(std::uint64_t bundle_id) const { return parts_.count(bundle_id) > 0; }
  std::size_t received() const { return parts_.size(); }
  void reset() { parts_.clear(); }

  // sigma = diag * v + sum of contributions.
  void finish(std::span<const double> diag, std::span<const double> v, std::span<double> sigma) const {
    for (std::size_t k = 0; k < sigma.size(); ++k) sigma[k] = diag[k] * v[k];
    for (const auto& [id, part] : parts_)
      for (const auto& x : part) sigma[x.row - begin_] += x.value;
  }

 private:
  std::size_t begin_, end_;
  std::map<std::uint64_t, std::vector<Contribution>> parts_;
};

inline std::vector<double> diagonal_slice(const DetSet& s, const IntegralSet& ints, std::size_t begin, std::size_t end) {
  std::vector<double> d(end - begin);
  for (std::size_t i = begin; i < end; ++i) d[i - begin] = diagonal_energy(s[i], ints);
  return d;
}

// Whole pipeline in one process: channels, packing, every bundle, diagonal pass.
inline std::vector<double> bundle_matvec(const DetSet& s, const IntegralSet& ints, std::span<const double> v,
                                         std::size_t c_max = 100, std::size_t b_max = 7) {
  if (v.size() != s.size()) throw std::invalid_argument("vector length differs from the space");
  const auto bundles = pack(s, build_channels(s), c_max, b_max);
  SliceMap vm;
  vm.insert(0, {v.begin(), v.end()});
  SigmaAggregator agg(0, s.size());
  for (const auto& b : bundles) agg.add(b.id, execute_bundle(b, s, ints, vm));
  std::vector<double> sigma(s.size());
  agg.finish(diagonal_slice(s, ints, 0, s.size()), v, sigma);
  return sigma;
}

}  // namespace coosci
