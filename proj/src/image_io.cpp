#include "sstlf/image_io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sstlf::io {

namespace {

std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  for (char& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

// Parses whitespace-separated header tokens, skipping '#' comments (netpbm).
class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space();
    std::string tok;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) tok.push_back(static_cast<char>(bytes_[pos_++]));
    if (tok.empty()) throw Error(ErrorKind::kBadImage, "truncated header");
    return tok;
  }

  // Consumes exactly one whitespace byte terminating the header.
  std::size_t data_offset() {
    if (pos_ >= bytes_.size()) throw Error(ErrorKind::kBadImage, "truncated header");
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

int parse_int(const std::string& tok) {
  try {
    std::size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kBadImage, "bad integer in header: " + tok);
  }
}

// libpng plumbing -----------------------------------------------------------

struct MemReader {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t len) {
  auto* src = static_cast<MemReader*>(png_get_io_ptr(png));
  if (src->pos + len > src->bytes->size()) png_error(png, "read past end of buffer");
  std::memcpy(out, src->bytes->data() + src->pos, len);
  src->pos += len;
}

void png_mem_write(png_structp png, png_bytep data, png_size_t len) {
  auto* dst = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  dst->insert(dst->end(), data, data + len);
}

void png_mem_flush(png_structp) {}

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  bool palette = false;
  std::vector<std::uint8_t> raw;  // row-major, big-endian for 16-bit
};

// keep_indices: palette images are returned as raw indices instead of RGB.
DecodedPng decode_png_raw(const std::vector<std::uint8_t>& bytes, bool keep_indices) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorKind::kBadImage, "not a PNG stream");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw Error(ErrorKind::kBadImage, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  DecodedPng out;
  MemReader reader{&bytes, 0};
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::kBadImage, "libpng: " + err);
  }
  png_set_read_fn(png, &reader, png_mem_read);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  out.palette = color == PNG_COLOR_TYPE_PALETTE;
  if (out.palette) {
    if (keep_indices) {
      if (depth < 8) png_set_packing(png);
    } else {
      png_set_palette_to_rgb(png);
    }
  }
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS) && !(out.palette && keep_indices)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.raw.resize(stride * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = out.raw.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

std::vector<std::uint8_t> encode_png_raw(int width, int height, int color_type, int bit_depth,
                                         const std::vector<std::uint8_t>& raw, std::size_t stride,
                                         const std::vector<Rgb>* palette) {
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw Error(ErrorKind::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  std::vector<png_color> colors;
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::kIo, "libpng: " + err);
  }
  png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (palette) {
    for (const Rgb& c : *palette) colors.push_back(png_color{c[0], c[1], c[2]});
    png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
  }
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(raw.data() + stride * static_cast<std::size_t>(y));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

float read_le_or_be(const std::uint8_t* p, bool little) {
  std::uint32_t bits = little ? (std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
                                 std::uint32_t{p[3]} << 24)
                              : (std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 | std::uint32_t{p[1]} << 16 |
                                 std::uint32_t{p[0]} << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// PFM -----------------------------------------------------------------------

FloatMap decode_pfm(const std::vector<std::uint8_t>& bytes) {
  HeaderReader hdr(bytes);
  const std::string magic = hdr.token();
  int channels = 0;
  if (magic == "PF") channels = 3;
  else if (magic == "Pf") channels = 1;
  else throw Error(ErrorKind::kBadImage, "bad PFM magic: " + magic);
  const int width = parse_int(hdr.token());
  const int height = parse_int(hdr.token());
  const std::string scale_tok = hdr.token();
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw Error(ErrorKind::kBadImage, "bad PFM scale: " + scale_tok);
  }
  if (width < 1 || height < 1 || scale == 0.0) throw Error(ErrorKind::kBadImage, "bad PFM header");
  const bool little = scale < 0.0;
  const std::size_t offset = hdr.data_offset();
  const std::size_t need = static_cast<std::size_t>(width) * height * channels * 4;
  if (bytes.size() < offset + need) throw Error(ErrorKind::kBadImage, "truncated PFM data");
  FloatMap img(width, height, channels);
  const std::uint8_t* p = bytes.data() + offset;
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c, p += 4) img.at(x, y, c) = read_le_or_be(p, little);
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_pfm(const Image<float>& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw Error(ErrorKind::kInvalidArgument, "PFM supports 1 or 3 channels");
  }
  std::ostringstream hdr;
  hdr << (img.channels() == 3 ? "PF" : "Pf") << "\n" << img.width() << " " << img.height() << "\n-1.0\n";
  const std::string h = hdr.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.reserve(out.size() + img.data().size() * 4);
  for (int y = img.height() - 1; y >= 0; --y) {
    for (float v : img.row(y)) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return out;
}

FloatMap read_pfm(const fs::path& path) { return decode_pfm(read_bytes(path)); }

void write_pfm(const fs::path& path, const Image<float>& img) { write_bytes(path, encode_pfm(img)); }

// PNG -----------------------------------------------------------------------

ViewImage decode_png(const std::vector<std::uint8_t>& bytes) {
  DecodedPng d = decode_png_raw(bytes, false);
  // Alpha is dropped: 2 -> 1 channel, 4 -> 3 channels.
  const int out_ch = (d.channels == 2 || d.channels == 1) ? 1 : 3;
  ViewImage img(d.width, d.height, out_ch);
  const bool wide = d.bit_depth == 16;
  const float scale = wide ? 1.0f / 65535.0f : 1.0f / 255.0f;
  const std::size_t stride = d.raw.size() / static_cast<std::size_t>(d.height);
  for (int y = 0; y < d.height; ++y) {
    const std::uint8_t* row = d.raw.data() + stride * static_cast<std::size_t>(y);
    for (int x = 0; x < d.width; ++x) {
      for (int c = 0; c < out_ch; ++c) {
        const std::size_t idx = static_cast<std::size_t>(x) * d.channels + c;
        const unsigned v = wide ? (unsigned{row[2 * idx]} << 8 | row[2 * idx + 1]) : row[idx];
        img.at(x, y, c) = static_cast<float>(v) * scale;
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const ViewImage& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw Error(ErrorKind::kInvalidArgument, "PNG bit depth must be 8 or 16");
  if (img.channels() != 1 && img.channels() != 3) throw Error(ErrorKind::kInvalidArgument, "PNG needs 1 or 3 channels");
  const int bytes_per = bit_depth / 8;
  const std::size_t stride = static_cast<std::size_t>(img.width()) * img.channels() * bytes_per;
  std::vector<std::uint8_t> raw(stride * static_cast<std::size_t>(img.height()));
  const float maxv = bit_depth == 16 ? 65535.0f : 255.0f;
  for (int y = 0; y < img.height(); ++y) {
    std::uint8_t* dst = raw.data() + stride * static_cast<std::size_t>(y);
    for (float v : img.row(y)) {
      const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
      const auto q = static_cast<unsigned>(std::lround(c * maxv));
      if (bit_depth == 16) {
        *dst++ = static_cast<std::uint8_t>(q >> 8);
        *dst++ = static_cast<std::uint8_t>(q & 0xff);
      } else {
        *dst++ = static_cast<std::uint8_t>(q);
      }
    }
  }
  const int color = img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  return encode_png_raw(img.width(), img.height(), color, bit_depth, raw, stride, nullptr);
}

ViewImage read_png(const fs::path& path) { return decode_png(read_bytes(path)); }

void write_png(const fs::path& path, const ViewImage& img, int bit_depth) {
  write_bytes(path, encode_png(img, bit_depth));
}

void write_indexed_png(const fs::path& path, const Image<std::uint8_t>& indices, const std::vector<Rgb>& palette) {
  if (palette.empty() || palette.size() > 256) throw Error(ErrorKind::kInvalidArgument, "palette size must be 1..256");
  const std::size_t stride = static_cast<std::size_t>(indices.width());
  write_bytes(path, encode_png_raw(indices.width(), indices.height(), PNG_COLOR_TYPE_PALETTE, 8, indices.data(),
                                   stride, &palette));
}

Image<std::uint8_t> read_indexed_png(const fs::path& path) {
  DecodedPng d = decode_png_raw(read_bytes(path), true);
  if (d.channels != 1 || d.bit_depth != 8) {
    throw Error(ErrorKind::kBadImage, "label PNG must be 8-bit palette or greyscale: " + path.string());
  }
  Image<std::uint8_t> out(d.width, d.height, 1);
  out.data() = std::move(d.raw);
  return out;
}

// PNM -----------------------------------------------------------------------

ViewImage read_pnm(const fs::path& path) {
  const auto bytes = read_bytes(path);
  HeaderReader hdr(bytes);
  const std::string magic = hdr.token();
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw Error(ErrorKind::kBadImage, "unsupported netpbm magic: " + magic);
  const int width = parse_int(hdr.token());
  const int height = parse_int(hdr.token());
  const int maxval = parse_int(hdr.token());
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) throw Error(ErrorKind::kBadImage, "bad netpbm header");
  const std::size_t offset = hdr.data_offset();
  const int bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(width) * height * channels * bytes_per;
  if (bytes.size() < offset + need) throw Error(ErrorKind::kBadImage, "truncated netpbm data");
  ViewImage img(width, height, channels);
  const std::uint8_t* p = bytes.data() + offset;
  const float scale = 1.0f / static_cast<float>(maxval);
  for (float& v : img.data()) {
    const unsigned raw = bytes_per == 2 ? (unsigned{p[0]} << 8 | p[1]) : p[0];
    p += bytes_per;
    v = static_cast<float>(raw) * scale;
  }
  return img;
}

void write_pnm(const fs::path& path, const ViewImage& img) {
  if (img.channels() != 1 && img.channels() != 3) throw Error(ErrorKind::kInvalidArgument, "PNM needs 1 or 3 channels");
  std::ostringstream hdr;
  hdr << (img.channels() == 3 ? "P6" : "P5") << "\n" << img.width() << " " << img.height() << "\n255\n";
  const std::string h = hdr.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  for (float v : img.data()) {
    const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
    out.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0f)));
  }
  write_bytes(path, out);
}

// Dispatch ------------------------------------------------------------------

ViewImage read_image(const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pfm") return read_pfm(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
  throw Error(ErrorKind::kBadImage, "unsupported image extension: " + path.string());
}

void write_image(const fs::path& path, const ViewImage& img) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return write_png(path, img);
  if (ext == ".pfm") return write_pfm(path, img);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return write_pnm(path, img);
  throw Error(ErrorKind::kBadImage, "unsupported image extension: " + path.string());
}

}  // namespace sstlf::io
