#pragma once

#include "coosci/hamio/integrals.hpp"
#include "coosci/util/rng.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>

namespace coosci {

struct GraphModelSpec {
  std::size_t L = 8;
  double t = 1.0;
  double U = 4.0;  // in units of t
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::optional<int> n_alpha;
  std::optional<int> n_beta;
};

// Open chain with long-range hopping -alpha * t * r_ij on non-neighbour pairs.
// r_ij ~ U[0.5, 1.5] is drawn row-major over i<j for every non-neighbour
// pair, whatever alpha is, so the couplings are shared across alpha.
inline IntegralSet build_hubbard_graph(const GraphModelSpec& spec) {
  if (spec.L < 2) throw std::invalid_argument("L must be at least 2");
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  const int half = static_cast<int>(spec.L / 2);
  IntegralSet ints(spec.L, spec.n_alpha.value_or(half), spec.n_beta.value_or(half));
  Rng rng(spec.seed);
  for (std::size_t i = 0; i < spec.L; ++i) {
    for (std::size_t j = i + 1; j < spec.L; ++j) {
      if (j == i + 1) {
        ints.set_h(i, j, -spec.t);
      } else {
        const double r = rng.uniform(0.5, 1.5);
        if (spec.alpha != 0.0) ints.set_h(i, j, -spec.alpha * spec.t * r);
      }
    }
    ints.set_v(i, i, i, i, spec.U * spec.t);
  }
  return ints;
}

}  // namespace coosci
