#pragma once

// PRTK tensor files: "PRTK", version byte 1, u8 rank, rank x u32 LE extents,
// then the row-major payload as little-endian float32.

#include <filesystem>
#include <iosfwd>

#include "prefiner/tensor.hpp"

namespace prefiner {

void write_prtk(std::ostream& out, const Tensor& t);
/// Reads one record. Throws ParseError on bad magic or truncation and
/// FormatVersionMismatch on an unknown version byte.
Tensor read_prtk(std::istream& in);

void save_prtk(const std::filesystem::path& path, const Tensor& t);
Tensor load_prtk(const std::filesystem::path& path);

}  // namespace prefiner
