#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace coosci {

// Antisymmetric rotation generator; params hold kappa(a, i) for a > i,
// ordered a = 1..n-1, i = 0..a-1.
struct Kappa {
  std::size_t n_orb = 0;
  std::vector<double> params;

  static Kappa zero(std::size_t n) { return {n, std::vector<double>(n * (n - 1) / 2, 0.0)}; }
  static std::size_t index(std::size_t a, std::size_t i) { return a * (a - 1) / 2 + i; }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n_orb, n_orb);
    for (std::size_t a = 1; a < n_orb; ++a)
      for (std::size_t i = 0; i < a; ++i) {
        k(a, i) = params[index(a, i)];
        k(i, a) = -params[index(a, i)];
      }
    return k;
  }

  static Kappa from_matrix(const Eigen::MatrixXd& k) {
    Kappa out = zero(static_cast<std::size_t>(k.rows()));
    for (std::size_t a = 1; a < out.n_orb; ++a)
      for (std::size_t i = 0; i < a; ++i) out.params[index(a, i)] = 0.5 * (k(a, i) - k(i, a));
    return out;
  }
};

// U = exp(kappa) by Pade scaling and squaring.
inline Eigen::MatrixXd expm_antisymmetric(const Kappa& k) {
  for (double p : k.params)
    if (!std::isfinite(p)) throw std::invalid_argument("kappa has non-finite entries");
  if (k.n_orb == 0) return {};
  return k.matrix().exp();
}

// Generator of a rotation, kappa = log(U); U must not have eigenvalue -1.
inline Kappa kappa_from_rotation(const Eigen::MatrixXd& u) {
  const Eigen::MatrixXd l = u.log();
  return Kappa::from_matrix(l);
}

inline void write_kappa(const std::string& path, const Kappa& k) {
  static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::uint64_t n = k.n_orb;
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(k.params.data()), static_cast<std::streamsize>(k.params.size() * sizeof(double)));
}

inline Kappa read_kappa(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::uint64_t n = 0;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n) || n > 128) throw std::runtime_error("bad kappa snapshot header");
  Kappa k = Kappa::zero(n);
  if (!in.read(reinterpret_cast<char*>(k.params.data()), static_cast<std::streamsize>(k.params.size() * sizeof(double)))) {
    throw std::runtime_error("truncated kappa snapshot");
  }
  return k;
}

}  // namespace coosci
