#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace coosci {

// Orbital order from the Fiedler vector of L = D - I. Connected components
// (edges where I > 1e-12) are ordered separately and concatenated, largest
// first, ties by smallest member.
inline std::vector<std::size_t> fiedler_order(const Eigen::MatrixXd& mi) {
  const auto n = static_cast<std::size_t>(mi.rows());
  constexpr double edge = 1e-12;
  std::vector<int> comp(n, -1);
  std::vector<std::vector<std::size_t>> comps;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> members{s};
    comp[s] = static_cast<int>(comps.size());
    for (std::size_t k = 0; k < members.size(); ++k)
      for (std::size_t j = 0; j < n; ++j)
        if (comp[j] < 0 && j != members[k] && mi(members[k], j) > edge) {
          comp[j] = comp[s];
          members.push_back(j);
        }
    std::sort(members.begin(), members.end());
    comps.push_back(std::move(members));
  }
  std::stable_sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.front() < b.front();
  });

  std::vector<std::size_t> order;
  order.reserve(n);
  for (const auto& c : comps) {
    if (c.size() <= 2) {
      order.insert(order.end(), c.begin(), c.end());
      continue;
    }
    const auto m = static_cast<Eigen::Index>(c.size());
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b) {
        if (a == b) continue;
        const double w = std::max(0.0, mi(c[a], c[b]));
        lap(a, b) = -w;
        lap(a, a) += w;
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap);
    Eigen::VectorXd f = es.eigenvectors().col(1);
    // Orient so the lowest-index member sits in the first half.
    if (f(0) > 0.0) f = -f;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (std::abs(f(a) - f(b)) > 1e-12) return f(a) < f(b);
      return c[a] < c[b];
    });
    for (auto a : idx) order.push_back(c[a]);
  }
  return order;
}

// Smallest k such that pairs with |pos_i - pos_j| <= k hold at least
// `fraction` of the off-diagonal MI mass.
inline std::size_t k95_bandwidth(const Eigen::MatrixXd& mi, const std::vector<std::size_t>& order,
                                 double fraction = 0.95) {
  const std::size_t n = order.size();
  if (static_cast<std::size_t>(mi.rows()) != n) throw std::invalid_argument("order length must equal n_orb");
  std::vector<std::size_t> pos(n);
  for (std::size_t k = 0; k < n; ++k) pos[order[k]] = k;
  std::vector<double> by_distance(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double v = std::max(0.0, mi(i, j));
      by_distance[pos[i] > pos[j] ? pos[i] - pos[j] : pos[j] - pos[i]] += v;
      total += v;
    }
  if (total <= 0.0) return 0;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += by_distance[k];
    if (acc >= fraction * total * (1.0 - 1e-12)) return k;
  }
  return n - 1;
}

}  // namespace coosci
