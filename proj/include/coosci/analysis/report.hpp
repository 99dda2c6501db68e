#pragma once

#include "coosci/analysis/powerlaw.hpp"
#include "coosci/analysis/pt2.hpp"

#include <json.hpp>

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace coosci {

// Reads (N, E) pairs from CSV. A header row is skipped; the columns are
// chosen by name (n_det/N_det/N and e_var/E_var/E) or default to the first two.
inline std::vector<FitPoint> read_points_csv(std::istream& in) {
  std::vector<FitPoint> out;
  std::string line;
  int col_n = 0, col_e = 1;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) {
      const auto b = c.find_first_not_of(" \t\r"), e = c.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? "" : c.substr(b, e - b + 1));
    }
    if (first) {
      first = false;
      char* end = nullptr;
      std::strtod(cells[0].c_str(), &end);
      if (end == cells[0].c_str()) {
        for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
          std::string h = cells[i];
          for (char& ch : h) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
          if (h == "n_det" || h == "n" || h == "ndet") col_n = i;
          if (h == "e_var" || h == "e" || h == "energy") col_e = i;
        }
        continue;
      }
    }
    if (static_cast<int>(cells.size()) <= std::max(col_n, col_e)) throw std::runtime_error("short CSV row: " + line);
    out.push_back({std::stod(cells[col_n]), std::stod(cells[col_e])});
  }
  return out;
}

inline std::vector<FitPoint> read_points_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return read_points_csv(f);
}

inline nlohmann::json to_json(const PowerLawFit& f) {
  return {{"e_extrap", f.e_extrap},       {"a", f.a},
          {"alpha", f.alpha_exp},         {"r2", f.r2},
          {"sigma", f.bootstrap_sigma},   {"ci90", {f.ci90.first, f.ci90.second}},
          {"alpha_sigma", f.alpha_sigma}, {"a_sigma", f.a_sigma},
          {"bootstrap_samples", f.bootstrap_samples}, {"degenerate", f.degenerate}};
}

inline nlohmann::json to_json(const Pt2Result& r) {
  nlohmann::json sched = nlohmann::json::array();
  for (const auto& [eps, e] : r.schedule) sched.push_back({{"eps_hc", eps}, {"e_pt2", e}});
  return {{"e_pt2", r.energy},       {"e_var", r.e_var},       {"e_total", r.e_var + r.energy},
          {"eps_hc", r.eps_hc},      {"sources", r.sources},   {"externals", r.externals},
          {"skipped_denominators", r.skipped_denominators}, {"rounds", r.rounds}, {"schedule", sched}};
}

inline void write_fit_csv(std::ostream& out, const std::vector<FitPoint>& pts, const PowerLawFit& f) {
  out << "n_det,e,e_model\n";
  out.precision(12);
  for (const auto& p : pts) out << p.n << ',' << p.e << ',' << f.e_extrap + f.a * std::pow(p.n, -f.alpha_exp) << '\n';
}

}  // namespace coosci
