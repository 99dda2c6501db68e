#pragma once

#include "coosci/hamio/integrals.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace coosci {

class FcidumpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FcidumpReport {
  std::size_t records = 0;
  std::size_t conflicting_duplicates = 0;
  std::size_t ignored_orbital_energies = 0;
};

namespace detail {

inline std::map<std::string, std::string> parse_namelist(const std::string& text) {
  // KEY=value[,value...] pairs; values run until the next KEY= token.
  std::map<std::string, std::string> out;
  std::string key;
  std::string cur;
  std::size_t i = 0;
  auto flush = [&] {
    if (!key.empty()) {
      while (!cur.empty() && (cur.back() == ',' || std::isspace(static_cast<unsigned char>(cur.back())))) cur.pop_back();
      out[key] = cur;
    }
    cur.clear();
  };
  while (i < text.size()) {
    if (std::isalpha(static_cast<unsigned char>(text[i]))) {
      std::size_t j = i;
      while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
      std::size_t k = j;
      while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
      if (k < text.size() && text[k] == '=') {
        flush();
        key = text.substr(i, j - i);
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::toupper(c); });
        i = k + 1;
        continue;
      }
    }
    cur.push_back(text[i]);
    ++i;
  }
  flush();
  return out;
}

inline double parse_fortran_double(std::string tok) {
  for (char& c : tok)
    if (c == 'D' || c == 'd') c = 'E';
  std::size_t used = 0;
  double v = std::stod(tok, &used);
  if (used != tok.size()) throw FcidumpError("bad numeric token: " + tok);
  return v;
}

}  // namespace detail

inline IntegralSet parse_fcidump(std::istream& in, FcidumpReport* report = nullptr) {
  std::string header;
  std::string line;
  bool closed = false;
  bool opened = false;
  while (std::getline(in, line)) {
    std::string upper = line;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    if (!opened) {
      auto pos = upper.find("&FCI");
      if (pos == std::string::npos) {
        if (upper.find_first_not_of(" \t\r") == std::string::npos) continue;
        throw FcidumpError("missing &FCI header");
      }
      opened = true;
      line = line.substr(pos + 4);
      upper = upper.substr(pos + 4);
    }
    auto end = upper.find("&END");
    if (end == std::string::npos) end = upper.find('/');
    if (end != std::string::npos) {
      header += " " + line.substr(0, end);
      closed = true;
      break;
    }
    header += " " + line;
  }
  if (!closed) throw FcidumpError("unterminated FCIDUMP header");

  const auto fields = detail::parse_namelist(header);
  auto get_int = [&](const char* key) -> long {
    auto it = fields.find(key);
    if (it == fields.end()) throw FcidumpError(std::string("header lacks ") + key);
    try {
      return std::stol(it->second);
    } catch (const std::exception&) {
      throw FcidumpError(std::string("bad value for ") + key);
    }
  };
  const long norb = get_int("NORB");
  const long nelec = get_int("NELEC");
  const long ms2 = get_int("MS2");
  if (norb <= 0 || norb > 128) throw FcidumpError("NORB out of range");
  if (nelec < 0 || (nelec + ms2) % 2 != 0 || std::labs(ms2) > nelec) throw FcidumpError("inconsistent NELEC/MS2");
  const int n_alpha = static_cast<int>((nelec + ms2) / 2);
  const int n_beta = static_cast<int>((nelec - ms2) / 2);
  if (n_alpha > norb || n_beta > norb) throw FcidumpError("more electrons than orbitals");

  const auto n = static_cast<std::size_t>(norb);
  IntegralSet ints(n, n_alpha, n_beta);
  std::vector<char> seen_v(ints.packed_v().size(), 0);
  std::vector<char> seen_h(n * n, 0);
  bool seen_core = false;
  FcidumpReport rep;

  auto conflict = [&](bool seen, double old_value, double value, const std::string& what) {
    if (seen && old_value != value) {
      ++rep.conflicting_duplicates;
      spdlog::warn("FCIDUMP: conflicting duplicate {} ({} vs {}), keeping last", what, old_value, value);
    }
  };

  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string vtok;
    if (!(ls >> vtok)) continue;
    long idx[4];
    for (long& x : idx)
      if (!(ls >> x)) throw FcidumpError("malformed integral record: " + line);
    const double value = detail::parse_fortran_double(vtok);
    for (long x : idx)
      if (x < 0 || x > norb) throw FcidumpError("integral index out of range: " + line);
    ++rep.records;
    const long i = idx[0], j = idx[1], k = idx[2], l = idx[3];
    if (i == 0 && j == 0 && k == 0 && l == 0) {
      conflict(seen_core, ints.e_core(), value, "core energy");
      ints.set_e_core(value);
      seen_core = true;
    } else if (i > 0 && j > 0 && k == 0 && l == 0) {
      const auto p = static_cast<std::size_t>(i - 1), q = static_cast<std::size_t>(j - 1);
      const std::size_t key = std::min(p, q) * n + std::max(p, q);
      conflict(seen_h[key], ints.h(p, q), value, "one-body entry");
      ints.set_h(p, q, value);
      seen_h[key] = 1;
    } else if (i > 0 && j == 0 && k == 0 && l == 0) {
      ++rep.ignored_orbital_energies;
    } else if (i > 0 && j > 0 && k > 0 && l > 0) {
      const std::size_t key = ints.index(i - 1, j - 1, k - 1, l - 1);
      conflict(seen_v[key], ints.packed_v()[key], value, "two-body entry");
      ints.packed_v()[key] = value;
      seen_v[key] = 1;
    } else {
      throw FcidumpError("unrecognized index pattern: " + line);
    }
  }
  if (report) *report = rep;
  return ints;
}

inline IntegralSet read_fcidump(const std::string& path, FcidumpReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw FcidumpError("cannot open " + path);
  return parse_fcidump(in, report);
}

inline void write_fcidump(std::ostream& out, const IntegralSet& ints, double cutoff = 0.0) {
  const std::size_t n = ints.n_orb();
  out << "&FCI NORB=" << n << ",NELEC=" << ints.n_alpha() + ints.n_beta() << ",MS2=" << ints.n_alpha() - ints.n_beta()
      << ",\n &END\n";
  char buf[96];
  auto emit = [&](double v, std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    std::snprintf(buf, sizeof buf, "%.17e %zu %zu %zu %zu\n", v, i, j, k, l);
    out << buf;
  };
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q <= p; ++q)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t s = 0; s <= r; ++s) {
          if (p * (p + 1) / 2 + q < r * (r + 1) / 2 + s) continue;
          const double v = ints.v(p, q, r, s);
          if (v != 0.0 && std::abs(v) > cutoff) emit(v, p + 1, q + 1, r + 1, s + 1);
        }
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q <= p; ++q)
      if (ints.h(p, q) != 0.0 && std::abs(ints.h(p, q)) > cutoff) emit(ints.h(p, q), p + 1, q + 1, 0, 0);
  emit(ints.e_core(), 0, 0, 0, 0);
}

inline void write_fcidump(const std::string& path, const IntegralSet& ints) {
  std::ofstream out(path);
  if (!out) throw FcidumpError("cannot write " + path);
  write_fcidump(out, ints);
}

}  // namespace coosci
