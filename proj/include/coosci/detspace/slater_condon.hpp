#pragma once

#include "coosci/detspace/determinant.hpp"
#include "coosci/hamio/integrals.hpp"

namespace coosci {

// Operator order: alpha creators (ascending) then beta creators (ascending).
// A same-spin single i -> a picks up (-1)^(occupied orbitals strictly
// between i and a); beta moves never cross an odd number of alpha creators
// twice, so they carry no extra phase.
inline double single_phase(const OrbString& s, int from, int to) {
  return (s.count_between(from, to) & 1) ? -1.0 : 1.0;
}

inline double diagonal_energy(const Determinant& d, const IntegralSet& ints) {
  int occ_a[128], occ_b[128];
  const int na = d.alpha.orbitals(occ_a);
  const int nb = d.beta.orbitals(occ_b);
  double e = ints.e_core();
  for (int x = 0; x < na; ++x) {
    const int i = occ_a[x];
    e += ints.h(i, i);
    for (int y = 0; y < x; ++y) {
      const int j = occ_a[y];
      e += ints.v(i, i, j, j) - ints.v(i, j, j, i);
    }
    for (int y = 0; y < nb; ++y) {
      const int j = occ_b[y];
      e += ints.v(i, i, j, j);
    }
  }
  for (int x = 0; x < nb; ++x) {
    const int i = occ_b[x];
    e += ints.h(i, i);
    for (int y = 0; y < x; ++y) {
      const int j = occ_b[y];
      e += ints.v(i, i, j, j) - ints.v(i, j, j, i);
    }
  }
  return e;
}

// <bra| H |ket> for a single excitation from -> to inside `moved`
// (the spin block of the ket that changes), `other` being the unchanged block.
inline double single_element(const OrbString& moved, const OrbString& other, int from, int to,
                             const IntegralSet& ints) {
  double e = ints.h(to, from);
  moved.for_each([&](int j) {
    if (j != from) e += ints.v(to, from, j, j) - ints.v(to, j, j, from);
  });
  other.for_each([&](int j) { e += ints.v(to, from, j, j); });
  return single_phase(moved, from, to) * e;
}

inline double same_spin_double_element(const OrbString& ket, int i, int j, int a, int b, const IntegralSet& ints) {
  // Sequential phase: i -> a on the ket, then j -> b on the intermediate.
  OrbString mid = ket;
  mid.reset(i);
  mid.set(a);
  const double sign = single_phase(ket, i, a) * single_phase(mid, j, b);
  return sign * (ints.v(a, i, b, j) - ints.v(a, j, b, i));
}

inline double matrix_element(const Determinant& bra, const Determinant& ket, const IntegralSet& ints) {
  const OrbString xa = bra.alpha ^ ket.alpha;
  const OrbString xb = bra.beta ^ ket.beta;
  const int da = xa.count() / 2;
  const int db = xb.count() / 2;
  if (da + db > 2) return 0.0;
  if (da + db == 0) return diagonal_energy(ket, ints);
  if (da == 1 && db == 0) {
    const int i = (xa & ket.alpha).lowest_set();
    const int a = (xa & bra.alpha).lowest_set();
    return single_element(ket.alpha, ket.beta, i, a, ints);
  }
  if (da == 0 && db == 1) {
    const int i = (xb & ket.beta).lowest_set();
    const int a = (xb & bra.beta).lowest_set();
    return single_element(ket.beta, ket.alpha, i, a, ints);
  }
  if (da == 1 && db == 1) {
    const int i = (xa & ket.alpha).lowest_set();
    const int a = (xa & bra.alpha).lowest_set();
    const int j = (xb & ket.beta).lowest_set();
    const int b = (xb & bra.beta).lowest_set();
    return single_phase(ket.alpha, i, a) * single_phase(ket.beta, j, b) * ints.v(a, i, b, j);
  }
  const OrbString& x = da == 2 ? xa : xb;
  const OrbString& k = da == 2 ? ket.alpha : ket.beta;
  const OrbString& br = da == 2 ? bra.alpha : bra.beta;
  int holes[2], parts[2];
  (x & k).orbitals(holes);
  (x & br).orbitals(parts);
  return same_spin_double_element(k, holes[0], holes[1], parts[0], parts[1], ints);
}

}  // namespace coosci
