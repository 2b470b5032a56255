// Copyright 2026 The ssd3d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SSD3D__IMAGE_IO_HPP_
#define SSD3D__IMAGE_IO_HPP_

#include "ssd3d/error.hpp"

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#if SSD3D_HAS_PNG
#include <png.h>
#endif

namespace ssd3d
{

/// Single-channel 16-bit image (depth in millimeters, 0 = missing).
struct GrayImage16
{
  int width{0};
  int height{0};
  std::vector<std::uint16_t> pixels;

  std::uint16_t & at(int u, int v) { return pixels[static_cast<std::size_t>(v) * width + u]; }
  std::uint16_t at(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u]; }
  friend bool operator==(const GrayImage16 &, const GrayImage16 &) = default;
};

/// Interleaved 8-bit RGB image.
struct RgbImage8
{
  int width{0};
  int height{0};
  std::vector<std::uint8_t> pixels;

  std::uint8_t & at(int u, int v, int c)
  {
    return pixels[(static_cast<std::size_t>(v) * width + u) * 3 + c];
  }
  std::uint8_t at(int u, int v, int c) const
  {
    return pixels[(static_cast<std::size_t>(v) * width + u) * 3 + c];
  }
  friend bool operator==(const RgbImage8 &, const RgbImage8 &) = default;
};

namespace detail
{

struct NetpbmHeader
{
  std::string magic;
  int width{0};
  int height{0};
  int maxval{0};
};

inline int read_header_int(std::istream & is, const std::string & what)
{
  // skip whitespace and '#' comments
  for (;;) {
    const int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (c != std::char_traits<char>::eof() && std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  long long v = -1;
  if (!(is >> v) || v <= 0 || v > 1'000'000) {
    throw Error(ErrorCode::ParseError, "netpbm: bad " + what);
  }
  return static_cast<int>(v);
}

inline NetpbmHeader read_netpbm_header(std::istream & is)
{
  NetpbmHeader h;
  char m[2] = {0, 0};
  is.read(m, 2);
  if (!is || m[0] != 'P') {
    throw Error(ErrorCode::ParseError, "netpbm: missing magic");
  }
  h.magic = std::string(m, 2);
  h.width = read_header_int(is, "width");
  h.height = read_header_int(is, "height");
  h.maxval = read_header_int(is, "maxval");
  if (h.maxval > 65535) {
    throw Error(ErrorCode::ParseError, "netpbm: maxval above 65535");
  }
  return h;
}

/// Reads `count` samples following the header: binary (one whitespace byte
/// after maxval) or ASCII.
inline std::vector<std::uint16_t> read_samples(
  std::istream & is, const NetpbmHeader & h, std::size_t count, bool binary)
{
  std::vector<std::uint16_t> out(count);
  if (binary) {
    is.get();
    const bool wide = h.maxval > 255;
    for (std::size_t i = 0; i < count; ++i) {
      int hi = wide ? is.get() : 0;
      const int lo = is.get();
      if (lo == std::char_traits<char>::eof() || hi == std::char_traits<char>::eof()) {
        throw Error(ErrorCode::ParseError, "netpbm: truncated pixel data");
      }
      out[i] = static_cast<std::uint16_t>((hi << 8) | lo);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      long long v = -1;
      if (!(is >> v) || v < 0 || v > h.maxval) {
        throw Error(ErrorCode::ParseError, "netpbm: bad ASCII sample");
      }
      out[i] = static_cast<std::uint16_t>(v);
    }
  }
  return out;
}

inline std::ifstream open_in(const std::filesystem::path & path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  return is;
}

inline std::ofstream open_out(const std::filesystem::path & path)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw Error(ErrorCode::IoError, "cannot write " + path.string());
  }
  return os;
}

}  // namespace detail

/// Grayscale PGM (P5 binary or P2 ASCII, 8- or 16-bit samples).
inline GrayImage16 read_pgm(std::istream & is)
{
  const auto h = detail::read_netpbm_header(is);
  if (h.magic != "P5" && h.magic != "P2") {
    throw Error(ErrorCode::ParseError, "expected a PGM (P5/P2), got " + h.magic);
  }
  GrayImage16 img{h.width, h.height, {}};
  img.pixels = detail::read_samples(
    is, h, static_cast<std::size_t>(h.width) * h.height, h.magic == "P5");
  return img;
}

inline GrayImage16 read_pgm(const std::filesystem::path & path)
{
  auto is = detail::open_in(path);
  return read_pgm(is);
}

/// Writes a binary 16-bit PGM (big-endian samples, maxval 65535).
inline void write_pgm(std::ostream & os, const GrayImage16 & img)
{
  os << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
  for (const std::uint16_t v : img.pixels) {
    os.put(static_cast<char>(v >> 8));
    os.put(static_cast<char>(v & 0xff));
  }
}

inline void write_pgm(const std::filesystem::path & path, const GrayImage16 & img)
{
  auto os = detail::open_out(path);
  write_pgm(os, img);
}

/// Color PPM (P6 binary or P3 ASCII). Samples are rescaled to 8 bits when
/// maxval differs from 255.
inline RgbImage8 read_ppm(std::istream & is)
{
  const auto h = detail::read_netpbm_header(is);
  if (h.magic != "P6" && h.magic != "P3") {
    throw Error(ErrorCode::ParseError, "expected a PPM (P6/P3), got " + h.magic);
  }
  RgbImage8 img{h.width, h.height, {}};
  const auto raw = detail::read_samples(
    is, h, static_cast<std::size_t>(h.width) * h.height * 3, h.magic == "P6");
  img.pixels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(
      h.maxval == 255 ? raw[i] : (static_cast<std::uint32_t>(raw[i]) * 255 + h.maxval / 2) / h.maxval);
  }
  return img;
}

inline RgbImage8 read_ppm(const std::filesystem::path & path)
{
  auto is = detail::open_in(path);
  return read_ppm(is);
}

inline void write_ppm(std::ostream & os, const RgbImage8 & img)
{
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(
    reinterpret_cast<const char *>(img.pixels.data()),
    static_cast<std::streamsize>(img.pixels.size()));
}

inline void write_ppm(const std::filesystem::path & path, const RgbImage8 & img)
{
  auto os = detail::open_out(path);
  write_ppm(os, img);
}

#if SSD3D_HAS_PNG
inline constexpr bool kPngSupported = true;
#else
inline constexpr bool kPngSupported = false;
#endif

#if SSD3D_HAS_PNG
/// 8-bit RGB PNG through libpng's simplified API; other layouts are converted.
inline RgbImage8 read_png(const std::filesystem::path & path)
{
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage8 img{static_cast<int>(image.width), static_cast<int>(image.height), {}};
  img.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::ParseError, path.string() + ": " + image.message);
  }
  return img;
}

inline void write_png(const std::filesystem::path & path, const RgbImage8 & img)
{
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, path.string() + ": " + image.message);
  }
}
#endif

namespace detail
{

inline bool has_png_extension(const std::filesystem::path & path)
{
  std::string ext = path.extension().string();
  for (auto & c : ext) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return ext == ".png";
}

}  // namespace detail

/// Color image by extension: .png needs libpng at build time, anything else is PPM.
inline RgbImage8 read_rgb(const std::filesystem::path & path)
{
  if (detail::has_png_extension(path)) {
#if SSD3D_HAS_PNG
    return read_png(path);
#else
    throw Error(ErrorCode::ParseError, path.string() + ": built without PNG support");
#endif
  }
  return read_ppm(path);
}

inline void write_rgb(const std::filesystem::path & path, const RgbImage8 & img)
{
  if (detail::has_png_extension(path)) {
#if SSD3D_HAS_PNG
    write_png(path, img);
    return;
#else
    throw Error(ErrorCode::IoError, path.string() + ": built without PNG support");
#endif
  }
  write_ppm(path, img);
}

}  // namespace ssd3d

#endif  // SSD3D__IMAGE_IO_HPP_
