#pragma once

#include "coosci/detspace/determinant.hpp"
#include "coosci/util/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <vector>

namespace coosci {

// All strings with `count` electrons in `n_orb` orbitals, ascending.
inline std::vector<OrbString> all_strings(int n_orb, int count) {
  std::vector<OrbString> out;
  if (count < 0 || count > n_orb) return out;
  std::vector<int> idx(count);
  for (int i = 0; i < count; ++i) idx[i] = i;
  while (true) {
    out.push_back(OrbString::from_orbitals(idx));
    int k = count - 1;
    while (k >= 0 && idx[k] == n_orb - count + k) --k;
    if (k < 0) break;
    ++idx[k];
    for (int j = k + 1; j < count; ++j) idx[j] = idx[j - 1] + 1;
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<Determinant> full_space(int n_orb, int n_alpha, int n_beta) {
  const auto as = all_strings(n_orb, n_alpha);
  const auto bs = all_strings(n_orb, n_beta);
  std::vector<Determinant> out;
  out.reserve(as.size() * bs.size());
  for (const auto& a : as)
    for (const auto& b : bs) out.push_back({a, b});
  return out;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double space_dimension(int n_orb, int n_alpha, int n_beta) {
  return binomial(n_orb, n_alpha) * binomial(n_orb, n_beta);
}

// Aufbau determinant: lowest orbitals filled in each spin block.
inline Determinant reference_determinant(int n_alpha, int n_beta) {
  return {OrbString::lowest(n_alpha), OrbString::lowest(n_beta)};
}

inline OrbString random_string(Rng& rng, int n_orb, int count) {
  std::vector<int> orbs(n_orb);
  for (int i = 0; i < n_orb; ++i) orbs[i] = i;
  OrbString s;
  for (int k = 0; k < count; ++k) {
    const auto j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_orb - k)));
    std::swap(orbs[k], orbs[j]);
    s.set(orbs[k]);
  }
  return s;
}

// Reference plus up to `count` distinct uniformly random determinants.
// When the request covers the whole space the full space is returned.
inline std::vector<Determinant> initial_determinants(int n_orb, int n_alpha, int n_beta, std::size_t count, Rng& rng) {
  const Determinant ref = reference_determinant(n_alpha, n_beta);
  const double dim = space_dimension(n_orb, n_alpha, n_beta);
  if (static_cast<double>(count) + 1.0 >= dim) return full_space(n_orb, n_alpha, n_beta);
  std::set<Determinant> chosen{ref};
  std::vector<Determinant> out{ref};
  while (out.size() < count + 1) {
    Determinant d{random_string(rng, n_orb, n_alpha), random_string(rng, n_orb, n_beta)};
    if (chosen.insert(d).second) out.push_back(d);
  }
  return out;
}

// Visits every determinant reachable from `d` by one single or double
// excitation inside n_orb orbitals.
template <class F>
void for_each_connected(const Determinant& d, int n_orb, F&& f) {
  int occ[2][128], vir[2][128];
  int no[2] = {0, 0}, nv[2] = {0, 0};
  const OrbString* strs[2] = {&d.alpha, &d.beta};
  for (int s = 0; s < 2; ++s)
    for (int p = 0; p < n_orb; ++p) {
      if (strs[s]->test(p)) occ[s][no[s]++] = p;
      else vir[s][nv[s]++] = p;
    }
  auto with = [&](int spin, OrbString str) {
    Determinant e = d;
    (spin == 0 ? e.alpha : e.beta) = str;
    return e;
  };
  for (int s = 0; s < 2; ++s) {
    for (int x = 0; x < no[s]; ++x)
      for (int y = 0; y < nv[s]; ++y) {
        OrbString t = *strs[s];
        t.reset(occ[s][x]);
        t.set(vir[s][y]);
        f(with(s, t));
      }
    for (int x1 = 0; x1 < no[s]; ++x1)
      for (int x2 = x1 + 1; x2 < no[s]; ++x2)
        for (int y1 = 0; y1 < nv[s]; ++y1)
          for (int y2 = y1 + 1; y2 < nv[s]; ++y2) {
            OrbString t = *strs[s];
            t.reset(occ[s][x1]);
            t.reset(occ[s][x2]);
            t.set(vir[s][y1]);
            t.set(vir[s][y2]);
            f(with(s, t));
          }
  }
  for (int xa = 0; xa < no[0]; ++xa)
    for (int ya = 0; ya < nv[0]; ++ya) {
      OrbString ta = d.alpha;
      ta.reset(occ[0][xa]);
      ta.set(vir[0][ya]);
      for (int xb = 0; xb < no[1]; ++xb)
        for (int yb = 0; yb < nv[1]; ++yb) {
          OrbString tb = d.beta;
          tb.reset(occ[1][xb]);
          tb.set(vir[1][yb]);
          f(Determinant{ta, tb});
        }
    }
}

}  // namespace coosci
