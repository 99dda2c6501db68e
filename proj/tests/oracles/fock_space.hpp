#pragma once

// Brute-force second-quantized Hamiltonian on the full Fock space of up to
// 4 spatial orbitals (8 spin-orbitals). Mode k < n is alpha orbital k, mode
// n + k is beta orbital k; basis states are creators applied in ascending
// mode order.

#include "coosci/detspace/determinant.hpp"
#include "coosci/hamio/integrals.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <optional>
#include <utility>

namespace oracle {

struct Ket {
  std::uint32_t state;
  double amp;
};

inline std::optional<Ket> annihilate(int mode, Ket k) {
  if (!((k.state >> mode) & 1U)) return std::nullopt;
  const int below = std::popcount(k.state & ((1U << mode) - 1U));
  return Ket{k.state & ~(1U << mode), (below % 2) ? -k.amp : k.amp};
}

inline std::optional<Ket> create(int mode, Ket k) {
  if ((k.state >> mode) & 1U) return std::nullopt;
  const int below = std::popcount(k.state & ((1U << mode) - 1U));
  return Ket{k.state | (1U << mode), (below % 2) ? -k.amp : k.amp};
}

inline Eigen::MatrixXd fock_hamiltonian(const coosci::IntegralSet& ints) {
  const int n = static_cast<int>(ints.n_orb());
  const int modes = 2 * n;
  const std::uint32_t dim = 1U << modes;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (std::uint32_t s = 0; s < dim; ++s) {
    h(s, s) += ints.e_core();
    for (int sig = 0; sig < 2; ++sig)
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
          auto k = annihilate(sig * n + q, {s, 1.0});
          if (!k) continue;
          k = create(sig * n + p, *k);
          if (k) h(k->state, s) += ints.h(p, q) * k->amp;
        }
    for (int sig = 0; sig < 2; ++sig)
      for (int tau = 0; tau < 2; ++tau)
        for (int p = 0; p < n; ++p)
          for (int q = 0; q < n; ++q)
            for (int r = 0; r < n; ++r)
              for (int t = 0; t < n; ++t) {
                const double v = ints.v(p, q, r, t);
                if (v == 0.0) continue;
                // a+_{p sig} a+_{r tau} a_{t tau} a_{q sig}
                auto k = annihilate(sig * n + q, {s, 1.0});
                if (!k) continue;
                k = annihilate(tau * n + t, *k);
                if (!k) continue;
                k = create(tau * n + r, *k);
                if (!k) continue;
                k = create(sig * n + p, *k);
                if (k) h(k->state, s) += 0.5 * v * k->amp;
              }
  }
  return h;
}

inline std::uint32_t fock_index(const coosci::Determinant& d, int n) {
  return static_cast<std::uint32_t>(d.alpha.lo) | (static_cast<std::uint32_t>(d.beta.lo) << n);
}

// Lowest eigenvalue inside the (n_alpha, n_beta) sector.
inline double sector_ground_energy(const Eigen::MatrixXd& h, int n, int n_alpha, int n_beta) {
  std::vector<std::uint32_t> idx;
  for (std::uint32_t s = 0; s < (1U << (2 * n)); ++s) {
    const std::uint32_t mask = (1U << n) - 1U;
    if (std::popcount(s & mask) == n_alpha && std::popcount(s >> n) == n_beta) idx.push_back(s);
  }
  Eigen::MatrixXd sub(idx.size(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) sub(i, j) = h(idx[i], idx[j]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub);
  return es.eigenvalues()(0);
}

}  // namespace oracle
