#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "jala/common.hpp"
#include "jala/tensor.hpp"

// Little-endian binary primitives shared by every on-disk container in the
// repo (tokenizer checkpoints, training checkpoints, episode records).
// Numeric payloads are written bit-exact so round-trips are bitwise.
namespace jala::io {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_i32(std::ostream& os, std::int32_t v) { put_u32(os, static_cast<std::uint32_t>(v)); }

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& is) {
  char b[4];
  is.read(b, 4);
  check(is.good(), "binary read: truncated stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  char b[8];
  is.read(b, 8);
  check(is.good(), "binary read: truncated stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

inline std::int32_t get_i32(std::istream& is) { return static_cast<std::int32_t>(get_u32(is)); }

inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline std::string get_string(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  check(n < (1ull << 32), "binary read: unreasonable string length");
  std::string s(static_cast<std::size_t>(n), '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  check(is.good(), "binary read: truncated stream");
  return s;
}

inline void put_scalar(std::ostream& os, double v) { put_f64(os, v); }
inline void put_scalar(std::ostream& os, float v) { put_f32(os, v); }
inline void get_scalar(std::istream& is, double& v) { v = get_f64(is); }
inline void get_scalar(std::istream& is, float& v) { v = get_f32(is); }

template <class T>
void put_tensor(std::ostream& os, const Tensor<T>& t) {
  put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
  for (int d : t.shape()) put_i32(os, d);
  put_u64(os, t.values().size());
  for (T v : t.values()) put_scalar(os, v);
}

template <class T>
Tensor<T> get_tensor(std::istream& is) {
  const std::uint32_t rank = get_u32(is);
  check(rank <= 8, "binary read: bad tensor rank");
  std::vector<int> shape(rank);
  for (auto& d : shape) d = get_i32(is);
  const std::uint64_t n = get_u64(is);
  std::vector<T> values(static_cast<std::size_t>(n));
  for (auto& v : values) get_scalar(is, v);
  return Tensor<T>::from_values(std::move(shape), std::move(values));
}

template <class T>
void put_vector(std::ostream& os, const std::vector<T>& v) {
  put_u64(os, v.size());
  for (const T& x : v) put_scalar(os, x);
}

inline void put_int_vector(std::ostream& os, const std::vector<int>& v) {
  put_u64(os, v.size());
  for (int x : v) put_i32(os, x);
}

inline std::vector<int> get_int_vector(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  std::vector<int> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = get_i32(is);
  return v;
}

template <class T>
std::vector<T> get_vector(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  std::vector<T> v(static_cast<std::size_t>(n));
  for (auto& x : v) get_scalar(is, x);
  return v;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open for reading: " + path);
  return is;
}

}  // namespace jala::io
