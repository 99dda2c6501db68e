#pragma once

#include "coosci/detspace/wavefunction.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coosci {

// Named groups of basis-orbital indices; indices outside every group
// belong to the fallback center.
struct CenterSets {
  std::vector<std::pair<std::string, std::vector<int>>> centers;
  std::string fallback = "S";
};

// Center label per orbital. Index names.size() - 1 is the fallback center.
struct CenterMap {
  std::vector<std::string> names;
  std::vector<int> label;
  Eigen::MatrixXd weights;  // n_orb x names.size()

  std::size_t n_centers() const { return names.size(); }
  int fallback() const { return static_cast<int>(names.size()) - 1; }
};

// Orbital p is assigned to the named center with the largest squared
// projection when it exceeds 0.4 and the fallback weight; else fallback.
inline CenterMap label_centers(const Eigen::MatrixXd& rotation, const CenterSets& sets, double threshold = 0.4) {
  const auto n = static_cast<std::size_t>(rotation.rows());
  CenterMap m;
  std::vector<int> owner(n, -1);
  for (std::size_t c = 0; c < sets.centers.size(); ++c) {
    m.names.push_back(sets.centers[c].first);
    for (int i : sets.centers[c].second) {
      if (i < 0 || static_cast<std::size_t>(i) >= n) throw std::invalid_argument("center orbital index out of range");
      if (owner[i] >= 0) throw std::invalid_argument("orbital assigned to two centers");
      owner[i] = static_cast<int>(c);
    }
  }
  m.names.push_back(sets.fallback);
  const int fb = m.fallback();
  m.weights = Eigen::MatrixXd::Zero(n, m.names.size());
  m.label.assign(n, fb);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      const int c = owner[i] >= 0 ? owner[i] : fb;
      m.weights(p, c) += rotation(i, p) * rotation(i, p);
    }
    int best = -1;
    for (int c = 0; c < fb; ++c)
      if (best < 0 || m.weights(p, c) > m.weights(p, best)) best = c;
    if (best >= 0 && m.weights(p, best) > threshold && m.weights(p, best) > m.weights(p, fb)) m.label[p] = best;
  }
  return m;
}

inline CenterSets read_center_sets(std::istream& in) {
  CenterSets sets;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto eq = line.find_first_of("=:");
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) throw std::invalid_argument("bad center line: " + line);
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string name = trim(line.substr(0, eq));
    const std::string rest = line.substr(eq + 1);
    if (name == "fallback") {
      sets.fallback = trim(rest);
      continue;
    }
    std::vector<int> idx;
    std::istringstream ls(rest);
    std::string tok;
    while (ls >> tok) {
      tok.erase(std::remove_if(tok.begin(), tok.end(), [](char c) { return c == ',' || c == '[' || c == ']'; }),
                tok.end());
      if (tok.empty()) continue;
      if (auto colon = tok.find_first_of("-:"); colon != std::string::npos && colon > 0) {
        const int a = std::stoi(tok.substr(0, colon)), b = std::stoi(tok.substr(colon + 1));
        for (int i = a; i <= b; ++i) idx.push_back(i);
      } else {
        idx.push_back(std::stoi(tok));
      }
    }
    sets.centers.emplace_back(name, std::move(idx));
  }
  return sets;
}

inline CenterSets read_center_sets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_center_sets(in);
}

// Every orbital its own center; no fallback orbitals.
inline CenterSets site_centers(std::size_t n_orb, const std::string& prefix = "C") {
  CenterSets s;
  for (std::size_t p = 0; p < n_orb; ++p) s.centers.emplace_back(prefix + std::to_string(p + 1), std::vector<int>{static_cast<int>(p)});
  return s;
}

// U / D / 0 per named center from the dominant determinant (|Sz| >= 1/2).
inline std::string spin_pattern(const Wavefunction& w, const CenterMap& centers) {
  const Determinant& d = w.space[w.dominant_index()];
  std::vector<double> sz(centers.n_centers(), 0.0);
  for (std::size_t p = 0; p < centers.label.size(); ++p) {
    const int ip = static_cast<int>(p);
    sz[centers.label[p]] += 0.5 * ((d.alpha.test(ip) ? 1 : 0) - (d.beta.test(ip) ? 1 : 0));
  }
  std::string out;
  for (int c = 0; c < centers.fallback(); ++c) out.push_back(sz[c] >= 0.5 ? 'U' : (sz[c] <= -0.5 ? 'D' : '0'));
  return out;
}

inline std::size_t hamming(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) throw std::invalid_argument("patterns differ in length");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

inline std::string flip_pattern(std::string p) {
  for (char& c : p) c = c == 'U' ? 'D' : (c == 'D' ? 'U' : c);
  return p;
}

// Reduced Hamming distance: global spin flip counts as equal.
inline std::size_t rhd(const std::string& a, const std::string& b) {
  return std::min(hamming(a, b), hamming(flip_pattern(a), b));
}

struct MulticenterRow {
  std::size_t touched = 0;
  std::size_t dets = 0;
  double pct_dets = 0.0;
  double pct_weight = 0.0;
  double pct_excitation_weight = 0.0;  // NaN on the dominant row
};

struct MulticenterHistogram {
  std::vector<MulticenterRow> rows;  // index = |F|, 0..K
  std::size_t dominant_row = 0;
  std::size_t analysed = 0;
  double multi_center_excitation_weight = 0.0;  // |F| >= 2, percent
};

inline MulticenterHistogram multicenter_histogram(const Wavefunction& w, const CenterMap& centers,
                                                  std::size_t top_k = 10'000) {
  MulticenterHistogram h;
  const std::size_t k_centers = centers.n_centers();
  h.rows.resize(k_centers + 1);
  for (std::size_t k = 0; k <= k_centers; ++k) h.rows[k].touched = k;
  if (w.space.empty()) return h;
  const auto ranked = w.ranked_rows();
  const std::size_t take = std::min(top_k, ranked.size());
  const Determinant& dom = w.space[ranked[0]];
  std::vector<double> weight(k_centers + 1, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < take; ++r) {
    const Determinant& d = w.space[ranked[r]];
    const OrbString diff = (d.alpha ^ dom.alpha) | (d.beta ^ dom.beta);
    std::vector<char> hit(k_centers, 0);
    diff.for_each([&](int p) { hit[centers.label[p]] = 1; });
    const auto f = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
    const double c2 = w.coeffs[ranked[r]] * w.coeffs[ranked[r]];
    ++h.rows[f].dets;
    weight[f] += c2;
    total += c2;
  }
  h.analysed = take;
  const double excitation = total - weight[0];
  for (std::size_t k = 0; k <= k_centers; ++k) {
    auto& row = h.rows[k];
    row.pct_dets = 100.0 * static_cast<double>(row.dets) / static_cast<double>(take);
    row.pct_weight = total > 0.0 ? 100.0 * weight[k] / total : 0.0;
    row.pct_excitation_weight =
        k == 0 ? std::nan("") : (excitation > 0.0 ? 100.0 * weight[k] / excitation : 0.0);
    if (k >= 2) h.multi_center_excitation_weight += row.pct_excitation_weight;
  }
  return h;
}

}  // namespace coosci
