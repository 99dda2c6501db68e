#pragma once

#include "coosci/detspace/detset.hpp"

#include <algorithm>
#include <vector>

namespace coosci {

// Three disjoint scans that together reach every row coupled to `row` by a
// single or double excitation:
//   same alpha-group, beta differs by 1 or 2 electrons      (kind A)
//   same beta-group, alpha differs by 1 or 2 electrons      (kind B)
//   adjacent alpha-group, beta differs by exactly 1 electron (kind M)
enum class ChannelKind : std::uint8_t { A = 0, B = 1, M = 2 };

template <class F>
void scan_same_alpha(const DetSet& s, std::size_t row, F&& f) {
  const auto [b, e] = s.alpha_group_rows(s.row_alpha_group(row));
  const OrbString beta = s[row].beta;
  for (std::size_t j = b; j < e; ++j) {
    if (j == row) continue;
    const int x = (beta ^ s[j].beta).count();
    if (x == 2 || x == 4) f(j);
  }
}

template <class F>
void scan_same_beta(const DetSet& s, std::size_t row, F&& f) {
  const OrbString alpha = s[row].alpha;
  for (std::size_t j : s.beta_group_rows(s.row_beta_group(row))) {
    if (j == row) continue;
    const int x = (alpha ^ s[j].alpha).count();
    if (x == 2 || x == 4) f(j);
  }
}

template <class F>
void scan_adjacent_alpha(const DetSet& s, std::size_t row, std::size_t group, F&& f) {
  const auto [b, e] = s.alpha_group_rows(group);
  const OrbString beta = s[row].beta;
  for (std::size_t j = b; j < e; ++j)
    if ((beta ^ s[j].beta).count() == 2) f(j);
}

template <class F>
void for_each_coupled_row(const DetSet& s, std::size_t row, F&& f) {
  scan_same_alpha(s, row, f);
  scan_same_beta(s, row, f);
  for (std::size_t g : s.alpha_adjacency(s.row_alpha_group(row))) scan_adjacent_alpha(s, row, g, f);
}

// Sparsity pattern of H over a determinant set: per row, the diagonal then
// every coupled column, columns ascending.
struct ConnectionPattern {
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> cols;

  std::size_t rows() const { return row_ptr.size() - 1; }
  std::size_t entries() const { return cols.size(); }
};

inline ConnectionPattern build_connection_pattern(const DetSet& s) {
  ConnectionPattern p;
  p.row_ptr.reserve(s.size() + 1);
  std::vector<std::size_t> row_cols;
  for (std::size_t i = 0; i < s.size(); ++i) {
    row_cols.clear();
    row_cols.push_back(i);
    for_each_coupled_row(s, i, [&](std::size_t j) { row_cols.push_back(j); });
    std::sort(row_cols.begin(), row_cols.end());
    p.cols.insert(p.cols.end(), row_cols.begin(), row_cols.end());
    p.row_ptr.push_back(p.cols.size());
  }
  return p;
}

}  // namespace coosci
