#pragma once

#include "coosci/detspace/wavefunction.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace coosci {

// Local states ordered (empty, up, down, up+down).
inline int local_state(const Determinant& d, int p) { return (d.alpha.test(p) ? 1 : 0) + (d.beta.test(p) ? 2 : 0); }

inline std::array<double, 4> one_orbital_rdm(const Wavefunction& w, int p) {
  std::array<double, 4> rho{};
  for (std::size_t i = 0; i < w.space.size(); ++i) rho[local_state(w.space[i], p)] += w.coeffs[i] * w.coeffs[i];
  return rho;
}

namespace detail {

// Parity of moving the creators on orbitals p and q (order p-up, p-down,
// q-up, q-down) to the front of the canonical alpha-then-beta string.
inline double pair_phase(const Determinant& d, int p, int q) {
  const int na = d.alpha.count();
  auto canon = [&](int orb, bool beta) {
    return beta ? na + (d.beta & OrbString::below(orb)).count() : (d.alpha & OrbString::below(orb)).count();
  };
  int pos[4];
  int k = 0;
  if (d.alpha.test(p)) pos[k++] = canon(p, false);
  if (d.beta.test(p)) pos[k++] = canon(p, true);
  if (d.alpha.test(q)) pos[k++] = canon(q, false);
  if (d.beta.test(q)) pos[k++] = canon(q, true);
  int inversions = 0;
  for (int x = 0; x < k; ++x) {
    for (int y = x + 1; y < k; ++y)
      if (pos[x] > pos[y]) ++inversions;
    // Every other creator sitting in front of this one in canonical order.
    int before_selected = 0;
    for (int y = 0; y < k; ++y)
      if (pos[y] < pos[x]) ++before_selected;
    inversions += pos[x] - before_selected;
  }
  return (inversions & 1) ? -1.0 : 1.0;
}

}  // namespace detail

// rho_pq = sum_g v_g v_g^T over groups sharing all occupations outside p, q.
// Local index is s_p + 4 s_q.
inline Eigen::Matrix<double, 16, 16> two_orbital_rdm(const Wavefunction& w, int p, int q) {
  if (p == q) throw std::invalid_argument("two_orbital_rdm needs distinct orbitals");
  std::unordered_map<Determinant, std::array<double, 16>, DeterminantHash> groups;
  for (std::size_t i = 0; i < w.space.size(); ++i) {
    const Determinant& d = w.space[i];
    Determinant rest = d;
    rest.alpha.reset(p);
    rest.alpha.reset(q);
    rest.beta.reset(p);
    rest.beta.reset(q);
    auto [it, fresh] = groups.try_emplace(rest);
    if (fresh) it->second.fill(0.0);
    it->second[local_state(d, p) + 4 * local_state(d, q)] += detail::pair_phase(d, p, q) * w.coeffs[i];
  }
  Eigen::Matrix<double, 16, 16> rho = Eigen::Matrix<double, 16, 16>::Zero();
  for (const auto& [key, v] : groups) {
    const Eigen::Map<const Eigen::Matrix<double, 16, 1>> vg(v.data());
    rho.noalias() += vg * vg.transpose();
  }
  return rho;
}

template <class Values>
double entropy_bits(const Values& eig) {
  double s = 0.0;
  for (double l : eig)
    if (l > 1e-14) s -= l * std::log2(l);
  return s;
}

inline double two_orbital_entropy(const Eigen::Matrix<double, 16, 16>& rho) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 16, 16>> es(rho, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return entropy_bits(std::vector<double>(ev.data(), ev.data() + 16));
}

using MiMatrix = Eigen::MatrixXd;

// I_ij = S_i + S_j - S_ij in bits; zero diagonal.
inline MiMatrix mutual_information(const Wavefunction& w, std::size_t n_orb) {
  std::vector<double> s1(n_orb);
  for (std::size_t p = 0; p < n_orb; ++p) s1[p] = entropy_bits(one_orbital_rdm(w, static_cast<int>(p)));
  MiMatrix mi = MiMatrix::Zero(n_orb, n_orb);
  for (std::size_t p = 0; p < n_orb; ++p)
    for (std::size_t q = p + 1; q < n_orb; ++q) {
      const double s2 = two_orbital_entropy(two_orbital_rdm(w, static_cast<int>(p), static_cast<int>(q)));
      const double v = s1[p] + s1[q] - s2;
      mi(p, q) = v;
      mi(q, p) = v;
    }
  return mi;
}

}  // namespace coosci
