#include "uca/png_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include <png.h>

#include "uca/error.hpp"

namespace uca::png {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
    default: return -1;
  }
}

bool little_endian() {
  const std::uint16_t probe = 1;
  return *reinterpret_cast<const std::uint8_t*>(&probe) == 1;
}

// libpng reports errors through longjmp. The decode runs in a plain function
// whose only locals are trivially destructible; buffers are owned by caller.
bool decode(std::FILE* fp, Raster& out, std::vector<std::uint8_t>& bytes, std::string& err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) {
    err = "png_create_read_struct failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    err = "png_create_info_struct failed";
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    err = "corrupt or truncated PNG data";
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16 && little_endian()) png_set_swap(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  out.bit_depth = depth;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  bytes.resize(rowbytes * static_cast<std::size_t>(out.height));
  for (int r = 0; r < out.height; ++r)
    png_read_row(png, bytes.data() + rowbytes * static_cast<std::size_t>(r), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode(std::FILE* fp, const Raster& in, const std::vector<std::uint8_t>& bytes, std::string& err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) {
    err = "png_create_write_struct failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    err = "png_create_info_struct failed";
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    err = "libpng write error";
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(in.width), static_cast<png_uint_32>(in.height),
               in.bit_depth, color_type_for(in.channels), PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (in.bit_depth == 16 && little_endian()) png_set_swap(png);
  const std::size_t rowbytes =
      static_cast<std::size_t>(in.width) * in.channels * (in.bit_depth == 16 ? 2 : 1);
  for (int r = 0; r < in.height; ++r)
    png_write_row(png, bytes.data() + rowbytes * static_cast<std::size_t>(r));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

Raster read(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError(path.string() + " is not a PNG file");

  Raster out;
  std::vector<std::uint8_t> bytes;
  std::string err;
  std::rewind(fp.get());
  if (!decode(fp.get(), out, bytes, err)) throw FormatError(path.string() + ": " + err);

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    const auto* p = reinterpret_cast<const std::uint16_t*>(bytes.data());
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = p[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = bytes[i];
  }
  return out;
}

void write(const std::filesystem::path& path, const Raster& raster) {
  if (raster.width <= 0 || raster.height <= 0 || color_type_for(raster.channels) < 0 ||
      (raster.bit_depth != 8 && raster.bit_depth != 16) ||
      raster.samples.size() != static_cast<std::size_t>(raster.width) * raster.height * raster.channels)
    throw ShapeError("inconsistent raster for " + path.string());

  std::vector<std::uint8_t> bytes;
  if (raster.bit_depth == 16) {
    bytes.resize(raster.samples.size() * 2);
    auto* p = reinterpret_cast<std::uint16_t*>(bytes.data());
    for (std::size_t i = 0; i < raster.samples.size(); ++i) p[i] = raster.samples[i];
  } else {
    bytes.resize(raster.samples.size());
    for (std::size_t i = 0; i < raster.samples.size(); ++i)
      bytes[i] = static_cast<std::uint8_t>(raster.samples[i]);
  }

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot create " + path.string());
  std::string err;
  if (!encode(fp.get(), raster, bytes, err)) throw IoError(path.string() + ": " + err);
  if (std::fflush(fp.get()) != 0) throw IoError("flush failed for " + path.string());
}

}  // namespace uca::png
