#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coosci {

static_assert(std::endian::native == std::endian::little, "vector files assume a little-endian host");

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector file layout: u64 element count, then that many f64.
inline void write_vector(std::ostream& out, std::span<const double> v) {
  const std::uint64_t n = v.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  if (!out) throw IntegrityError("short write of a vector record");
}

inline std::vector<double> read_vector(std::istream& in, std::optional<std::size_t> expect = std::nullopt) {
  std::uint64_t n = 0;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n)) throw IntegrityError("missing vector length header");
  if (expect && n != *expect) throw IntegrityError("stored vector length does not match");
  std::vector<double> v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw IntegrityError("short read of a vector record");
  return v;
}

inline void write_vector_file(const std::filesystem::path& p, std::span<const double> v) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IntegrityError("cannot write " + p.string());
  write_vector(out, v);
  out.flush();
  if (!out) throw IntegrityError("short write to " + p.string());
}

inline std::vector<double> read_vector_file(const std::filesystem::path& p,
                                            std::optional<std::size_t> expect = std::nullopt) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + p.string());
  auto v = read_vector(in, expect);
  const auto want = sizeof(std::uint64_t) + v.size() * sizeof(double);
  if (std::filesystem::file_size(p) != want) throw IntegrityError("trailing bytes in " + p.string());
  return v;
}

// Bytes one Krylov layer (V_k plus HV_k) adds for n rows.
constexpr std::uint64_t ooc_layer_bytes(std::uint64_t n) { return 2 * n * 8; }

// Append-only V and HV sequences on disk, read back one layer at a time.
// Satisfies the Davidson basis interface.
class OocStore {
 public:
  OocStore(std::filesystem::path dir, std::size_t n) : dir_(std::move(dir)), n_(n) {
    std::filesystem::create_directories(dir_);
    clear();
  }

  std::size_t size() const { return layers_; }
  std::size_t length() const { return n_; }
  std::filesystem::path v_path() const { return dir_ / "krylov_v.bin"; }
  std::filesystem::path hv_path() const { return dir_ / "krylov_hv.bin"; }

  void clear() {
    truncate(v_path());
    truncate(hv_path());
    layers_ = 0;
  }

  void append(std::span<const double> v, std::span<const double> hv) {
    if (v.size() != n_ || hv.size() != n_) throw std::invalid_argument("layer length differs from the store");
    append_to(v_path(), v);
    append_to(hv_path(), hv);
    ++layers_;
  }

  void read_v(std::size_t k, std::span<double> out) const { read_from(v_path(), k, out); }
  void read_hv(std::size_t k, std::span<double> out) const { read_from(hv_path(), k, out); }

  std::uint64_t disk_bytes() const { return std::filesystem::file_size(v_path()) + std::filesystem::file_size(hv_path()); }

 private:
  static void truncate(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot create " + p.string());
  }
  void append_to(const std::filesystem::path& p, std::span<const double> v) const {
    std::ofstream out(p, std::ios::binary | std::ios::app);
    if (!out) throw IntegrityError("cannot append to " + p.string());
    write_vector(out, v);
  }
  void read_from(const std::filesystem::path& p, std::size_t k, std::span<double> out) const {
    if (k >= layers_) throw std::out_of_range("Krylov layer index past the end");
    std::ifstream in(p, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(k * (sizeof(std::uint64_t) + n_ * sizeof(double))));
    std::uint64_t n = 0;
    if (!in.read(reinterpret_cast<char*>(&n), sizeof n) || n != n_) throw IntegrityError("bad layer header in " + p.string());
    if (!in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n_ * sizeof(double))))
      throw IntegrityError("short read in " + p.string());
  }

  std::filesystem::path dir_;
  std::size_t n_;
  std::size_t layers_ = 0;
};

}  // namespace coosci
