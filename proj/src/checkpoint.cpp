#include "dcha/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace dcha {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  static_assert(sizeof(u) == sizeof(v));
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::map<std::string, const Array*>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(bool(os), "io", "cannot open checkpoint for writing: " + path);
  os << kCheckpointMagic << '\n';
  write_u32(os, std::uint32_t(entries.size()));
  for (const auto& [name, arr] : entries) {  // std::map iterates sorted
    write_u32(os, std::uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    write_u32(os, std::uint32_t(arr->shape.size()));
    for (int d : arr->shape) write_u32(os, std::uint32_t(d));
    for (double v : arr->data) write_f64(os, v);
  }
  require(bool(os), "io", "write failure on checkpoint: " + path);
}

std::map<std::string, Array> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "io", "cannot open checkpoint: " + path);
  std::string magic;
  std::getline(is, magic);
  require(magic == kCheckpointMagic, "format",
          "bad checkpoint magic in " + path + " (got '" + magic + "')");
  std::uint32_t count = read_u32(is);
  std::map<std::string, Array> out;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::uint32_t nlen = read_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    std::uint32_t ndims = read_u32(is);
    Shape shape(ndims);
    for (auto& d : shape) d = int(read_u32(is));
    Array a(shape);
    for (double& v : a.data) v = read_f64(is);
    require(bool(is), "format", "truncated checkpoint: " + path);
    out.emplace(std::move(name), std::move(a));
  }
  return out;
}

}  // namespace dcha
