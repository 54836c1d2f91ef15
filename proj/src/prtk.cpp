#include "prefiner/prtk.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "prefiner/error.hpp"

namespace prefiner {

namespace {

constexpr std::array<char, 4> kMagic{'P', 'R', 'T', 'K'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) fail(ErrorCode::ParseError, std::string("PRTK truncated in ") + what);
}

}  // namespace

void write_prtk(std::ostream& out, const Tensor& t) {
  if (t.rank() > 255) fail(ErrorCode::InvalidArgument, "PRTK rank above 255");
  out.write(kMagic.data(), 4);
  out.put(static_cast<char>(kVersion));
  out.put(static_cast<char>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) fail(ErrorCode::InvalidArgument, "PRTK extent above 2^32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

Tensor read_prtk(std::istream& in) {
  char magic[4];
  read_exact(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic.data(), 4) != 0) fail(ErrorCode::ParseError, "not a PRTK record (bad magic)");
  unsigned char head[2];
  read_exact(in, head, 2, "header");
  if (head[0] != kVersion) {
    fail(ErrorCode::FormatVersionMismatch, "PRTK version " + std::to_string(head[0]) + ", expected 1");
  }
  Shape shape(head[1]);
  for (auto& d : shape) {
    unsigned char b[4];
    read_exact(in, b, 4, "extents");
    d = get_u32(b);
  }
  std::vector<unsigned char> raw(shape_size(shape) * 4);
  read_exact(in, raw.data(), raw.size(), "payload");
  std::vector<double> values(shape_size(shape));
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::bit_cast<float>(get_u32(raw.data() + 4 * i));
  return Tensor::from(std::move(shape), std::move(values));
}

void save_prtk(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  write_prtk(out, t);
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

Tensor load_prtk(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  try {
    return read_prtk(in);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    fail(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace prefiner
