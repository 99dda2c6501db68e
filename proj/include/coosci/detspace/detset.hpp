#pragma once

#include "coosci/detspace/determinant.hpp"

#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

namespace coosci {

class DuplicateDeterminantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Canonically ordered determinant list with alpha/beta groups.
// Sorting by (alpha, beta) makes every alpha-group a contiguous row range.
class DetSet {
 public:
  DetSet() = default;

  static DetSet build(std::vector<Determinant> dets) {
    DetSet s;
    std::sort(dets.begin(), dets.end());
    if (std::adjacent_find(dets.begin(), dets.end()) != dets.end()) {
      throw DuplicateDeterminantError("determinant list contains duplicates");
    }
    s.dets_ = std::move(dets);
    s.index_groups();
    return s;
  }

  std::size_t size() const { return dets_.size(); }
  bool empty() const { return dets_.empty(); }
  const std::vector<Determinant>& dets() const { return dets_; }
  const Determinant& operator[](std::size_t i) const { return dets_[i]; }

  std::optional<std::size_t> find(const Determinant& d) const {
    auto it = std::lower_bound(dets_.begin(), dets_.end(), d);
    if (it == dets_.end() || *it != d) return std::nullopt;
    return static_cast<std::size_t>(it - dets_.begin());
  }
  bool contains(const Determinant& d) const { return find(d).has_value(); }

  std::size_t n_alpha_groups() const { return alpha_strings_.size(); }
  const OrbString& alpha_string(std::size_t g) const { return alpha_strings_[g]; }
  std::pair<std::size_t, std::size_t> alpha_group_rows(std::size_t g) const {
    return {alpha_start_[g], alpha_start_[g + 1]};
  }
  std::size_t row_alpha_group(std::size_t row) const { return row_alpha_[row]; }
  std::span<const std::size_t> alpha_adjacency(std::size_t g) const {
    return {adj_idx_.data() + adj_ptr_[g], adj_ptr_[g + 1] - adj_ptr_[g]};
  }
  std::optional<std::size_t> find_alpha_group(const OrbString& a) const {
    auto it = std::lower_bound(alpha_strings_.begin(), alpha_strings_.end(), a);
    if (it == alpha_strings_.end() || *it != a) return std::nullopt;
    return static_cast<std::size_t>(it - alpha_strings_.begin());
  }

  std::size_t n_beta_groups() const { return beta_strings_.size(); }
  const OrbString& beta_string(std::size_t g) const { return beta_strings_[g]; }
  std::span<const std::size_t> beta_group_rows(std::size_t g) const {
    return {beta_rows_.data() + beta_ptr_[g], beta_ptr_[g + 1] - beta_ptr_[g]};
  }
  std::size_t row_beta_group(std::size_t row) const { return row_beta_[row]; }

  // Raw CSR arrays, used when shipping the layout to remote workers.
  const std::vector<std::size_t>& alpha_offsets() const { return alpha_start_; }
  const std::vector<std::size_t>& beta_offsets() const { return beta_ptr_; }
  const std::vector<std::size_t>& beta_rows() const { return beta_rows_; }

  // Row-weighted mean alpha-adjacency degree (c-bar).
  double mean_alpha_degree() const {
    if (dets_.empty()) return 0.0;
    return static_cast<double>(total_alpha_degree()) / static_cast<double>(dets_.size());
  }
  std::size_t total_alpha_degree() const {
    std::size_t total = 0;
    for (std::size_t g = 0; g < n_alpha_groups(); ++g)
      total += (alpha_start_[g + 1] - alpha_start_[g]) * (adj_ptr_[g + 1] - adj_ptr_[g]);
    return total;
  }

 private:
  void index_groups() {
    const std::size_t n = dets_.size();
    row_alpha_.resize(n);
    alpha_start_.clear();
    alpha_strings_.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0 || dets_[i].alpha != dets_[i - 1].alpha) {
        alpha_strings_.push_back(dets_[i].alpha);
        alpha_start_.push_back(i);
      }
      row_alpha_[i] = alpha_strings_.size() - 1;
    }
    alpha_start_.push_back(n);

    beta_strings_.clear();
    for (const auto& d : dets_) beta_strings_.push_back(d.beta);
    std::sort(beta_strings_.begin(), beta_strings_.end());
    beta_strings_.erase(std::unique(beta_strings_.begin(), beta_strings_.end()), beta_strings_.end());
    row_beta_.resize(n);
    beta_ptr_.assign(beta_strings_.size() + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto it = std::lower_bound(beta_strings_.begin(), beta_strings_.end(), dets_[i].beta);
      row_beta_[i] = static_cast<std::size_t>(it - beta_strings_.begin());
      ++beta_ptr_[row_beta_[i] + 1];
    }
    for (std::size_t g = 0; g < beta_strings_.size(); ++g) beta_ptr_[g + 1] += beta_ptr_[g];
    beta_rows_.resize(n);
    std::vector<std::size_t> fill(beta_ptr_.begin(), beta_ptr_.end() - 1);
    for (std::size_t i = 0; i < n; ++i) beta_rows_[fill[row_beta_[i]]++] = i;

    // Single-excitation neighbours among alpha strings, by generation + lookup.
    std::unordered_map<OrbString, std::size_t, OrbStringHash> where;
    where.reserve(alpha_strings_.size() * 2);
    int max_orb = 0;
    for (std::size_t g = 0; g < alpha_strings_.size(); ++g) {
      where.emplace(alpha_strings_[g], g);
      alpha_strings_[g].for_each([&](int i) { max_orb = std::max(max_orb, i + 1); });
    }
    for (const auto& d : dets_) d.beta.for_each([&](int i) { max_orb = std::max(max_orb, i + 1); });
    adj_ptr_.assign(1, 0);
    adj_idx_.clear();
    std::vector<std::size_t> nbrs;
    for (std::size_t g = 0; g < alpha_strings_.size(); ++g) {
      nbrs.clear();
      const OrbString s = alpha_strings_[g];
      if (alpha_strings_.size() > 1) {
        s.for_each([&](int i) {
          for (int a = 0; a < max_orb; ++a) {
            if (s.test(a)) continue;
            OrbString t = s;
            t.reset(i);
            t.set(a);
            if (auto it = where.find(t); it != where.end()) nbrs.push_back(it->second);
          }
        });
      }
      std::sort(nbrs.begin(), nbrs.end());
      adj_idx_.insert(adj_idx_.end(), nbrs.begin(), nbrs.end());
      adj_ptr_.push_back(adj_idx_.size());
    }
  }

  std::vector<Determinant> dets_;
  std::vector<OrbString> alpha_strings_;
  std::vector<std::size_t> alpha_start_;
  std::vector<std::size_t> row_alpha_;
  std::vector<std::size_t> adj_ptr_, adj_idx_;
  std::vector<OrbString> beta_strings_;
  std::vector<std::size_t> beta_ptr_, beta_rows_, row_beta_;
};

inline DetSet build_groups(std::vector<Determinant> dets) { return DetSet::build(std::move(dets)); }

}  // namespace coosci
