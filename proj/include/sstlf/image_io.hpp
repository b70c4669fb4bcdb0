#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sstlf/image.hpp"

namespace sstlf::io {

namespace fs = std::filesystem;

/// PFM ("PF" colour / "Pf" greyscale). Rows are stored bottom-to-top; the
/// sign of the scale field selects endianness. Writes are little-endian.
FloatMap read_pfm(const fs::path& path);
void write_pfm(const fs::path& path, const Image<float>& img);

/// PNG of any bit depth/colour type, converted to floats in [0,1].
/// Grey+alpha and RGBA inputs drop alpha.
ViewImage read_png(const fs::path& path);

/// Samples are clamped to [0,1] and quantised to 8 or 16 bits.
void write_png(const fs::path& path, const ViewImage& img, int bit_depth = 8);

/// Binary netpbm: P5 (grey) and P6 (RGB), maxval up to 65535.
ViewImage read_pnm(const fs::path& path);
void write_pnm(const fs::path& path, const ViewImage& img);

/// Dispatch on extension (.png, .pfm, .ppm/.pgm/.pnm).
ViewImage read_image(const fs::path& path);
void write_image(const fs::path& path, const ViewImage& img);

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit palette PNG holding raw indices. Reading also accepts 8-bit greyscale,
/// in which case grey values are taken as indices.
void write_indexed_png(const fs::path& path, const Image<std::uint8_t>& indices,
                       const std::vector<Rgb>& palette);
Image<std::uint8_t> read_indexed_png(const fs::path& path);

/// Whole-file read, used for hashing and HTTP bodies.
std::vector<std::uint8_t> read_bytes(const fs::path& path);

/// PNG/PFM encoders into memory.
std::vector<std::uint8_t> encode_png(const ViewImage& img, int bit_depth = 8);
std::vector<std::uint8_t> encode_pfm(const Image<float>& img);
ViewImage decode_png(const std::vector<std::uint8_t>& bytes);
FloatMap decode_pfm(const std::vector<std::uint8_t>& bytes);

}  // namespace sstlf::io
