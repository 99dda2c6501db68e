#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace coosci {

// One- and two-electron integrals over real spatial orbitals.
// Two-body values use chemist notation (pq|rs) and are stored once per
// 8-fold symmetry class.
class IntegralSet {
 public:
  IntegralSet() = default;
  IntegralSet(std::size_t n_orb, int n_alpha, int n_beta, double e_core = 0.0)
      : n_orb_(n_orb), n_alpha_(n_alpha), n_beta_(n_beta), e_core_(e_core),
        h_(Eigen::MatrixXd::Zero(n_orb, n_orb)) {
    if (n_orb == 0 || n_orb > 128) throw std::invalid_argument("n_orb must be in [1, 128]");
    if (n_alpha < 0 || n_beta < 0 || n_alpha > static_cast<int>(n_orb) || n_beta > static_cast<int>(n_orb)) {
      throw std::invalid_argument("electron counts out of range");
    }
    const std::size_t npair = n_orb * (n_orb + 1) / 2;
    v_.assign(npair * (npair + 1) / 2, 0.0);
    pair_.resize(n_orb * n_orb);
    for (std::size_t p = 0; p < n_orb; ++p)
      for (std::size_t q = 0; q < n_orb; ++q)
        pair_[p * n_orb + q] = p >= q ? p * (p + 1) / 2 + q : q * (q + 1) / 2 + p;
  }

  std::size_t n_orb() const { return n_orb_; }
  int n_alpha() const { return n_alpha_; }
  int n_beta() const { return n_beta_; }
  double e_core() const { return e_core_; }
  void set_e_core(double e) { e_core_ = e; }
  void set_electrons(int n_alpha, int n_beta) {
    if (n_alpha < 0 || n_beta < 0 || n_alpha > static_cast<int>(n_orb_) || n_beta > static_cast<int>(n_orb_)) {
      throw std::invalid_argument("electron counts out of range");
    }
    n_alpha_ = n_alpha;
    n_beta_ = n_beta;
  }

  double h(std::size_t p, std::size_t q) const { return h_(p, q); }
  const Eigen::MatrixXd& h() const { return h_; }
  void set_h(std::size_t p, std::size_t q, double value) {
    h_(p, q) = value;
    h_(q, p) = value;
  }

  double v(std::size_t p, std::size_t q, std::size_t r, std::size_t s) const {
    return v_[index(p, q, r, s)];
  }
  void set_v(std::size_t p, std::size_t q, std::size_t r, std::size_t s, double value) {
    v_[index(p, q, r, s)] = value;
  }

  std::size_t index(std::size_t p, std::size_t q, std::size_t r, std::size_t s) const {
    const std::size_t a = pair_[p * n_orb_ + q];
    const std::size_t b = pair_[r * n_orb_ + s];
    return a >= b ? a * (a + 1) / 2 + b : b * (b + 1) / 2 + a;
  }

  const std::vector<double>& packed_v() const { return v_; }
  std::vector<double>& packed_v() { return v_; }

  // Dense (pq|rs) as a flat n^4 array, index ((p*n+q)*n+r)*n+s.
  std::vector<double> dense_v() const {
    const std::size_t n = n_orb_;
    std::vector<double> out(n * n * n * n);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q)
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t s = 0; s < n; ++s) out[((p * n + q) * n + r) * n + s] = v(p, q, r, s);
    return out;
  }

  bool operator==(const IntegralSet& o) const {
    return n_orb_ == o.n_orb_ && n_alpha_ == o.n_alpha_ && n_beta_ == o.n_beta_ && e_core_ == o.e_core_ &&
           h_ == o.h_ && v_ == o.v_;
  }

 private:
  std::size_t n_orb_ = 0;
  int n_alpha_ = 0;
  int n_beta_ = 0;
  double e_core_ = 0.0;
  Eigen::MatrixXd h_;
  std::vector<double> v_;
  std::vector<std::size_t> pair_;
};

}  // namespace coosci
