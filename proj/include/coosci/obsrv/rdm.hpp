#pragma once

#include "coosci/detspace/connections.hpp"
#include "coosci/detspace/slater_condon.hpp"
#include "coosci/detspace/wavefunction.hpp"
#include "coosci/hamio/integrals.hpp"

#include <Eigen/Dense>

#include <vector>

namespace coosci {

using Rdm1 = Eigen::MatrixXd;

// Spin-summed two-body density in chemist layout:
//   G(p,q,r,s) = sum_{sigma,tau} <a+_{p sigma} a+_{r tau} a_{s tau} a_{q sigma}>
// so that E = sum h_pq g_pq + 1/2 sum (pq|rs) G(p,q,r,s) + e_core and
// sum_r G(p,q,r,r) = (N - 1) g_pq.
class Rdm2 {
 public:
  Rdm2() = default;
  explicit Rdm2(std::size_t n) : n_(n), data_(n * n * n * n, 0.0) {}

  std::size_t n_orb() const { return n_; }
  double& operator()(std::size_t p, std::size_t q, std::size_t r, std::size_t s) {
    return data_[((p * n_ + q) * n_ + r) * n_ + s];
  }
  double operator()(std::size_t p, std::size_t q, std::size_t r, std::size_t s) const {
    return data_[((p * n_ + q) * n_ + r) * n_ + s];
  }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct Rdms {
  Rdm1 one;
  Rdm2 two;
};

namespace detail {

struct RdmSink {
  Rdm1* g1;
  Rdm2* g2;

  void diag(const Determinant& d, double w) {
    int occ[2][128];
    const int n[2] = {d.alpha.orbitals(occ[0]), d.beta.orbitals(occ[1])};
    for (int s = 0; s < 2; ++s)
      for (int x = 0; x < n[s]; ++x) (*g1)(occ[s][x], occ[s][x]) += w;
    if (!g2) return;
    for (int s = 0; s < 2; ++s)
      for (int x = 0; x < n[s]; ++x)
        for (int t = 0; t < 2; ++t)
          for (int y = 0; y < n[t]; ++y) {
            if (s == t && x == y) continue;
            const int p = occ[s][x], r = occ[t][y];
            (*g2)(p, p, r, r) += w;
            if (s == t) (*g2)(p, r, r, p) -= w;
          }
  }

  // Single i -> a in spin block `moved`; `other` is the untouched block.
  void single(const OrbString& moved, const OrbString& other, int i, int a, double w) {
    const double s = single_phase(moved, i, a) * w;
    (*g1)(a, i) += s;
    if (!g2) return;
    moved.for_each([&](int k) {
      if (k == i) return;
      (*g2)(a, i, k, k) += s;
      (*g2)(k, k, a, i) += s;
      (*g2)(a, k, k, i) -= s;
      (*g2)(k, i, a, k) -= s;
    });
    other.for_each([&](int k) {
      (*g2)(a, i, k, k) += s;
      (*g2)(k, k, a, i) += s;
    });
  }

  void pair(int a, int i, int b, int j, double s, bool same_spin) {
    (*g2)(a, i, b, j) += s;
    (*g2)(b, j, a, i) += s;
    if (same_spin) {
      (*g2)(a, j, b, i) -= s;
      (*g2)(b, i, a, j) -= s;
    }
  }

  // Adds the contribution of <bra| ... |ket> scaled by w.
  void add(const Determinant& bra, const Determinant& ket, double w) {
    const OrbString xa = bra.alpha ^ ket.alpha;
    const OrbString xb = bra.beta ^ ket.beta;
    const int da = xa.count() / 2, db = xb.count() / 2;
    if (da + db == 0) return diag(ket, w);
    if (da == 1 && db == 0)
      return single(ket.alpha, ket.beta, (xa & ket.alpha).lowest_set(), (xa & bra.alpha).lowest_set(), w);
    if (da == 0 && db == 1)
      return single(ket.beta, ket.alpha, (xb & ket.beta).lowest_set(), (xb & bra.beta).lowest_set(), w);
    if (!g2) return;
    if (da == 1 && db == 1) {
      const int i = (xa & ket.alpha).lowest_set(), a = (xa & bra.alpha).lowest_set();
      const int j = (xb & ket.beta).lowest_set(), b = (xb & bra.beta).lowest_set();
      pair(a, i, b, j, single_phase(ket.alpha, i, a) * single_phase(ket.beta, j, b) * w, false);
      return;
    }
    const OrbString& x = da == 2 ? xa : xb;
    const OrbString& k = da == 2 ? ket.alpha : ket.beta;
    const OrbString& br = da == 2 ? bra.alpha : bra.beta;
    int h[2], p[2];
    (x & k).orbitals(h);
    (x & br).orbitals(p);
    OrbString mid = k;
    mid.reset(h[0]);
    mid.set(p[0]);
    const double s = single_phase(k, h[0], p[0]) * single_phase(mid, h[1], p[1]) * w;
    pair(p[0], h[0], p[1], h[1], s, true);
  }
};

inline void accumulate(const Wavefunction& w, const ConnectionPattern& pattern, RdmSink sink) {
  const auto& s = w.space;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double ci = w.coeffs[i];
    if (ci == 0.0) continue;
    for (std::size_t k = pattern.row_ptr[i]; k < pattern.row_ptr[i + 1]; ++k) {
      const std::size_t j = pattern.cols[k];
      const double cj = w.coeffs[j];
      if (cj != 0.0) sink.add(s[j], s[i], cj * ci);
    }
  }
}

}  // namespace detail

inline Rdm1 compute_rdm1(const Wavefunction& w, const ConnectionPattern& pattern, std::size_t n_orb) {
  Rdm1 g = Rdm1::Zero(n_orb, n_orb);
  detail::accumulate(w, pattern, {&g, nullptr});
  return g;
}

inline Rdms compute_rdms(const Wavefunction& w, const ConnectionPattern& pattern, std::size_t n_orb) {
  Rdms r{Rdm1::Zero(n_orb, n_orb), Rdm2(n_orb)};
  detail::accumulate(w, pattern, {&r.one, &r.two});
  return r;
}

inline Rdm1 compute_rdm1(const Wavefunction& w, std::size_t n_orb) {
  return compute_rdm1(w, build_connection_pattern(w.space), n_orb);
}

inline Rdm2 compute_rdm2(const Wavefunction& w, std::size_t n_orb) {
  return compute_rdms(w, build_connection_pattern(w.space), n_orb).two;
}

inline double rdm_energy(const Rdm1& g1, const Rdm2& g2, const IntegralSet& ints) {
  const std::size_t n = ints.n_orb();
  double e = ints.e_core();
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q) e += ints.h(p, q) * g1(p, q);
  double two = 0.0;
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t s = 0; s < n; ++s) two += ints.v(p, q, r, s) * g2(p, q, r, s);
  return e + 0.5 * two;
}

}  // namespace coosci
