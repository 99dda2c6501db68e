#pragma once

#include "coosci/detspace/connections.hpp"
#include "coosci/detspace/detset.hpp"
#include "coosci/detspace/slater_condon.hpp"
#include "coosci/hamio/integrals.hpp"

#include <algorithm>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace coosci {

class CacheBudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// H_ij with the pair ordered by row index, so both triangles hold
// bit-identical values.
inline double ordered_element(const DetSet& s, std::size_t i, std::size_t j, const IntegralSet& ints) {
  return i <= j ? matrix_element(s[i], s[j], ints) : matrix_element(s[j], s[i], ints);
}

// Stored nonzero couplings (diagonal always kept) in CSR layout.
class ConnectionCache {
 public:
  ConnectionCache() = default;

  static ConnectionCache build(const DetSet& s, const ConnectionPattern& pattern, const IntegralSet& ints,
                               std::size_t max_entries = SIZE_MAX) {
    if (pattern.entries() > max_entries) throw CacheBudgetError("connection cache exceeds its entry budget");
    ConnectionCache c;
    c.row_ptr_.reserve(pattern.row_ptr.size());
    c.row_ptr_.push_back(0);
    c.cols_.reserve(pattern.entries());
    c.vals_.reserve(pattern.entries());
    c.diag_.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t k = pattern.row_ptr[i]; k < pattern.row_ptr[i + 1]; ++k) {
        const std::size_t j = pattern.cols[k];
        const double v = ordered_element(s, i, j, ints);
        if (i == j) c.diag_[i] = v;
        else if (v == 0.0) continue;
        c.cols_.push_back(j);
        c.vals_.push_back(v);
      }
      c.row_ptr_.push_back(c.cols_.size());
    }
    return c;
  }

  static ConnectionCache build(const DetSet& s, const IntegralSet& ints, std::size_t max_entries = SIZE_MAX) {
    return build(s, build_connection_pattern(s), ints, max_entries);
  }

  std::size_t size() const { return diag_.size(); }
  std::size_t entries() const { return cols_.size(); }
  std::size_t off_diagonal_entries() const { return cols_.size() - diag_.size(); }
  std::span<const double> diagonal() const { return diag_; }

  std::span<const std::size_t> row_cols(std::size_t i) const {
    return {cols_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  std::span<const double> row_vals(std::size_t i) const {
    return {vals_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  void apply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < diag_.size(); ++i) {
      double acc = 0.0;
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += vals_[k] * x[cols_[k]];
      y[i] = acc;
    }
  }

 private:
  std::vector<std::size_t> row_ptr_, cols_;
  std::vector<double> vals_, diag_;
};

// Matvec without stored couplings; same per-row summation order as the cache.
class DirectHamiltonian {
 public:
  DirectHamiltonian(const DetSet& s, const IntegralSet& ints) : s_(&s), ints_(&ints), diag_(s.size()) {
    for (std::size_t i = 0; i < s.size(); ++i) diag_[i] = diagonal_energy(s[i], ints);
  }

  std::size_t size() const { return diag_.size(); }
  std::span<const double> diagonal() const { return diag_; }

  void apply(std::span<const double> x, std::span<double> y) const {
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < s_->size(); ++i) {
      cols.clear();
      cols.push_back(i);
      for_each_coupled_row(*s_, i, [&](std::size_t j) { cols.push_back(j); });
      std::sort(cols.begin(), cols.end());
      double acc = 0.0;
      for (std::size_t j : cols) {
        const double v = j == i ? diag_[i] : ordered_element(*s_, i, j, *ints_);
        if (v != 0.0 || j == i) acc += v * x[j];
      }
      y[i] = acc;
    }
  }

 private:
  const DetSet* s_;
  const IntegralSet* ints_;
  std::vector<double> diag_;
};

}  // namespace coosci
