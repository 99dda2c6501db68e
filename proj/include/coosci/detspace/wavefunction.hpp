#pragma once

#include "coosci/detspace/detset.hpp"
#include "coosci/detspace/excitations.hpp"
#include "coosci/detspace/slater_condon.hpp"
#include "coosci/hamio/integrals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace coosci {

struct Wavefunction {
  DetSet space;
  std::vector<double> coeffs;

  std::size_t size() const { return coeffs.size(); }

  double norm() const {
    double s = 0.0;
    for (double c : coeffs) s += c * c;
    return std::sqrt(s);
  }
  void normalize() {
    const double n = norm();
    if (n == 0.0) throw std::runtime_error("cannot normalize a zero wavefunction");
    for (double& c : coeffs) c /= n;
  }

  std::size_t dominant_index() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < coeffs.size(); ++i)
      if (std::abs(coeffs[i]) > std::abs(coeffs[best])) best = i;
    return best;
  }
  // Weight of the largest-|c| determinant.
  double dominant_weight() const {
    if (coeffs.empty()) return 0.0;
    const double c = coeffs[dominant_index()];
    return c * c;
  }

  // Row indices by decreasing |c|, ties by canonical row order.
  std::vector<std::size_t> ranked_rows() const {
    std::vector<std::size_t> idx(coeffs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(coeffs[a]) > std::abs(coeffs[b]); });
    return idx;
  }
};

// Determinants outside w.space coupled to some member with |H_ji c_i| > theta.
inline DetSet heat_bath_neighbors(const Wavefunction& w, double theta, const IntegralSet& ints) {
  if (!(theta > 0.0)) throw std::invalid_argument("theta must be positive");
  std::vector<Determinant> found;
  if (std::isinf(theta)) return DetSet::build({});
  std::unordered_map<Determinant, char, DeterminantHash> seen;
  const int n = static_cast<int>(ints.n_orb());
  for (std::size_t i = 0; i < w.space.size(); ++i) {
    const double c = w.coeffs[i];
    if (c == 0.0) continue;
    const Determinant& src = w.space[i];
    for_each_connected(src, n, [&](const Determinant& d) {
      if (seen.count(d) || w.space.contains(d)) return;
      if (std::abs(matrix_element(d, src, ints) * c) > theta) {
        seen.emplace(d, 1);
        found.push_back(d);
      }
    });
  }
  return DetSet::build(std::move(found));
}

inline void write_wavefunction(std::ostream& out, const Wavefunction& w, std::size_t n_orb, int n_alpha, int n_beta) {
  out << n_orb << ' ' << n_alpha << ' ' << n_beta << ' ' << w.space.size() << '\n';
  char buf[48];
  for (std::size_t i = 0; i < w.space.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", w.coeffs[i]);
    out << w.space[i].alpha.hex() << ' ' << w.space[i].beta.hex() << ' ' << buf << '\n';
  }
}

inline void write_wavefunction(const std::string& path, const Wavefunction& w, std::size_t n_orb, int n_alpha,
                               int n_beta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_wavefunction(out, w, n_orb, n_alpha, n_beta);
}

struct WavefunctionFile {
  std::size_t n_orb = 0;
  int n_alpha = 0;
  int n_beta = 0;
  Wavefunction wf;
};

inline WavefunctionFile read_wavefunction(std::istream& in) {
  WavefunctionFile f;
  std::size_t n_det = 0;
  if (!(in >> f.n_orb >> f.n_alpha >> f.n_beta >> n_det)) throw std::runtime_error("bad wavefunction header");
  std::vector<std::pair<Determinant, double>> rows;
  rows.reserve(n_det);
  for (std::size_t i = 0; i < n_det; ++i) {
    std::string a, b;
    double c;
    if (!(in >> a >> b >> c)) throw std::runtime_error("truncated wavefunction file");
    Determinant d{OrbString::from_hex(a), OrbString::from_hex(b)};
    if (d.alpha.count() != f.n_alpha || d.beta.count() != f.n_beta) {
      throw std::runtime_error("determinant electron count disagrees with header");
    }
    rows.emplace_back(d, c);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<Determinant> dets;
  for (const auto& r : rows) {
    dets.push_back(r.first);
    f.wf.coeffs.push_back(r.second);
  }
  f.wf.space = DetSet::build(std::move(dets));
  return f;
}

inline WavefunctionFile read_wavefunction(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_wavefunction(in);
}

}  // namespace coosci
