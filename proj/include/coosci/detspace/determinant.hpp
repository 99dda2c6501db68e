#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace coosci {

// Occupation string over up to 128 spatial orbitals.
struct OrbString {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  static OrbString from_u64(std::uint64_t bits) { return {bits, 0}; }
  static OrbString lowest(int count) {
    OrbString s;
    for (int i = 0; i < count; ++i) s.set(i);
    return s;
  }
  static OrbString from_orbitals(const std::vector<int>& orbs) {
    OrbString s;
    for (int i : orbs) s.set(i);
    return s;
  }

  bool test(int i) const { return i < 64 ? (lo >> i) & 1U : (hi >> (i - 64)) & 1U; }
  void set(int i) { i < 64 ? lo |= (1ULL << i) : hi |= (1ULL << (i - 64)); }
  void reset(int i) { i < 64 ? lo &= ~(1ULL << i) : hi &= ~(1ULL << (i - 64)); }
  void flip(int i) { i < 64 ? lo ^= (1ULL << i) : hi ^= (1ULL << (i - 64)); }

  int count() const { return std::popcount(lo) + std::popcount(hi); }
  bool empty() const { return (lo | hi) == 0; }

  // Occupied orbitals strictly between i and j.
  int count_between(int i, int j) const {
    if (i > j) std::swap(i, j);
    if (j - i <= 1) return 0;
    OrbString m = below(j);
    OrbString k = below(i + 1);
    return ((*this) & m & ~k).count();
  }

  // Mask of orbitals [0, i).
  static OrbString below(int i) {
    if (i <= 0) return {};
    if (i < 64) return {(1ULL << i) - 1, 0};
    if (i == 64) return {~0ULL, 0};
    if (i >= 128) return {~0ULL, ~0ULL};
    return {~0ULL, (1ULL << (i - 64)) - 1};
  }

  int lowest_set() const { return lo ? std::countr_zero(lo) : 64 + std::countr_zero(hi); }

  template <class F>
  void for_each(F&& f) const {
    for (std::uint64_t w = lo; w; w &= w - 1) f(std::countr_zero(w));
    for (std::uint64_t w = hi; w; w &= w - 1) f(64 + std::countr_zero(w));
  }

  // Fills out with occupied orbitals in ascending order; returns count.
  int orbitals(int* out) const {
    int k = 0;
    for_each([&](int i) { out[k++] = i; });
    return k;
  }
  std::vector<int> orbitals() const {
    std::vector<int> v;
    for_each([&](int i) { v.push_back(i); });
    return v;
  }

  friend OrbString operator^(OrbString a, OrbString b) { return {a.lo ^ b.lo, a.hi ^ b.hi}; }
  friend OrbString operator&(OrbString a, OrbString b) { return {a.lo & b.lo, a.hi & b.hi}; }
  friend OrbString operator|(OrbString a, OrbString b) { return {a.lo | b.lo, a.hi | b.hi}; }
  friend OrbString operator~(OrbString a) { return {~a.lo, ~a.hi}; }
  friend bool operator==(OrbString a, OrbString b) = default;
  friend std::strong_ordering operator<=>(OrbString a, OrbString b) {
    if (auto c = a.hi <=> b.hi; c != 0) return c;
    return a.lo <=> b.lo;
  }

  std::string hex() const {
    char buf[40];
    if (hi) std::snprintf(buf, sizeof buf, "%llx%016llx", static_cast<unsigned long long>(hi), static_cast<unsigned long long>(lo));
    else std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(lo));
    return buf;
  }
  static OrbString from_hex(const std::string& s) {
    if (s.empty() || s.size() > 32) throw std::invalid_argument("bad bitstring: " + s);
    OrbString out;
    const std::size_t split = s.size() > 16 ? s.size() - 16 : 0;
    std::size_t used = 0;
    out.lo = std::stoull(s.substr(split), &used, 16);
    if (used != s.size() - split) throw std::invalid_argument("bad bitstring: " + s);
    if (split) {
      out.hi = std::stoull(s.substr(0, split), &used, 16);
      if (used != split) throw std::invalid_argument("bad bitstring: " + s);
    }
    return out;
  }
};

struct Determinant {
  OrbString alpha;
  OrbString beta;

  friend bool operator==(const Determinant&, const Determinant&) = default;
  friend std::strong_ordering operator<=>(const Determinant& a, const Determinant& b) {
    if (auto c = a.alpha <=> b.alpha; c != 0) return c;
    return a.beta <=> b.beta;
  }
};

struct ExcitationDegree {
  int alpha = 0;
  int beta = 0;
  int total() const { return alpha + beta; }
  friend bool operator==(const ExcitationDegree&, const ExcitationDegree&) = default;
};

inline ExcitationDegree excitation_degree(const Determinant& a, const Determinant& b) {
  return {(a.alpha ^ b.alpha).count() / 2, (a.beta ^ b.beta).count() / 2};
}

struct OrbStringHash {
  std::size_t operator()(const OrbString& s) const noexcept {
    std::uint64_t x = s.lo * 0x9e3779b97f4a7c15ULL ^ (s.hi + 0x632be59bd9b4e019ULL + (s.lo << 6));
    x ^= x >> 29;
    x *= 0xbf58476d1ce4e5b9ULL;
    return static_cast<std::size_t>(x ^ (x >> 32));
  }
};

struct DeterminantHash {
  std::size_t operator()(const Determinant& d) const noexcept {
    const std::size_t a = OrbStringHash{}(d.alpha);
    const std::size_t b = OrbStringHash{}(d.beta);
    return a ^ (b * 0x9ddfea08eb382d69ULL + 0x7f4a7c15 + (a << 12) + (a >> 4));
  }
};

}  // namespace coosci
