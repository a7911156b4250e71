#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crfgen/array.hpp"

namespace crfgen {

// Flat tensor container. Layout: the text line "CRFGEN-CKPT v1\n", then one
// record per tensor: u64-LE name length, UTF-8 name bytes, u64-LE rank,
// rank u64-LE shape entries, then the payload as little-endian IEEE-754
// doubles. Round-trips bit-exactly.
class Checkpoint {
 public:
  static constexpr const char* kHeader = "CRFGEN-CKPT v1";

  void put(std::string name, Array a) {
    entries_.emplace_back(std::move(name), std::move(a));
  }

  bool contains(const std::string& name) const {
    for (const auto& [n, a] : entries_)
      if (n == name) return true;
    return false;
  }

  const Array& get(const std::string& name) const {
    for (const auto& [n, a] : entries_)
      if (n == name) return a;
    throw std::out_of_range("checkpoint: no tensor named " + name);
  }

  const std::vector<std::pair<std::string, Array>>& entries() const {
    return entries_;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out << kHeader << '\n';
    for (const auto& [name, a] : entries_) {
      write_u64(out, name.size());
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u64(out, a.rank());
      for (std::size_t d : a.shape) write_u64(out, d);
      for (double v : a.data) write_f64(out, v);
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
    std::string header;
    std::getline(in, header);
    if (header != kHeader)
      throw std::runtime_error("checkpoint: bad header in " + path);
    Checkpoint ck;
    while (true) {
      std::uint64_t name_len;
      if (!try_read_u64(in, name_len)) break;
      std::string name(name_len, '\0');
      in.read(name.data(), static_cast<std::streamsize>(name_len));
      std::uint64_t rank = read_u64(in);
      std::vector<std::size_t> shape(rank);
      for (auto& d : shape) d = read_u64(in);
      Array a(shape);
      for (double& v : a.data) v = read_f64(in);
      if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
      ck.put(std::move(name), std::move(a));
    }
    return ck;
  }

 private:
  static void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
  }
  static void write_f64(std::ostream& out, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    write_u64(out, v);
  }
  static bool try_read_u64(std::istream& in, std::uint64_t& v) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (in.gcount() == 0) return false;
    if (in.gcount() != 8) throw std::runtime_error("checkpoint: truncated record");
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return true;
  }
  static std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v;
    if (!try_read_u64(in, v)) throw std::runtime_error("checkpoint: truncated record");
    return v;
  }
  static double read_f64(std::istream& in) {
    std::uint64_t v = read_u64(in);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }

  std::vector<std::pair<std::string, Array>> entries_;
};

// Text payloads (e.g. an embedded vocabulary) ride along as byte-per-double
// tensors so the container stays single-format.
inline Array bytes_to_array(const std::string& text) {
  Array a({text.size()});
  for (std::size_t i = 0; i < text.size(); ++i)
    a[i] = static_cast<double>(static_cast<unsigned char>(text[i]));
  return a;
}

inline std::string array_to_bytes(const Array& a) {
  std::string s(a.numel(), '\0');
  for (std::size_t i = 0; i < a.numel(); ++i)
    s[i] = static_cast<char>(static_cast<unsigned char>(a[i]));
  return s;
}

}  // namespace crfgen
