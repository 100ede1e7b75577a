#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "gscg/scene_io.hpp"

namespace gscg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngErr {
  char msg[256] = {0};
};

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngErr*>(png_get_error_ptr(png));
  std::snprintf(err->msg, sizeof(err->msg), "%s", msg);
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> bytes;  // row-major, big-endian samples for 16-bit
};

// Everything that libpng may longjmp out of lives here; `out` and `rows` are
// owned by the caller so no destructor is skipped.
bool decode_into(std::FILE* fp, DecodedPng* out, std::vector<png_bytep>* rows, PngErr* err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, err, png_fail, png_warn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out->width = static_cast<int>(png_get_image_width(png, info));
  out->height = static_cast<int>(png_get_image_height(png, info));
  out->channels = png_get_channels(png, info);
  out->bit_depth = png_get_bit_depth(png, info);
  std::size_t rowbytes = png_get_rowbytes(png, info);
  out->bytes.resize(rowbytes * out->height);
  rows->resize(out->height);
  for (int y = 0; y < out->height; ++y) (*rows)[y] = out->bytes.data() + rowbytes * y;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

DecodedPng decode(const std::filesystem::path& path) {
  std::string where = path.string();
  FilePtr fp(std::fopen(where.c_str(), "rb"));
  if (!fp) throw BundleError(where + ": cannot open file");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw BundleError(where + ": not a PNG file");
  DecodedPng out;
  std::vector<png_bytep> rows;
  PngErr err;
  if (!decode_into(fp.get(), &out, &rows, &err))
    throw BundleError(where + ": libpng: " + err.msg);
  return out;
}

bool encode_from(std::FILE* fp, int width, int height, int color_type, int bit_depth,
                 const std::vector<std::uint8_t>& bytes, PngErr* err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, err, png_fail, png_warn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::size_t rowbytes = height > 0 ? bytes.size() / height : 0;
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + rowbytes * y));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

void encode(const std::filesystem::path& path, int width, int height, int color_type,
            int bit_depth, const std::vector<std::uint8_t>& bytes) {
  std::string where = path.string();
  FilePtr fp(std::fopen(where.c_str(), "wb"));
  if (!fp) throw BundleError(where + ": cannot open for writing");
  PngErr err;
  if (!encode_from(fp.get(), width, height, color_type, bit_depth, bytes, &err))
    throw BundleError(where + ": libpng: " + err.msg);
}

void expect(const DecodedPng& img, int channels, int bit_depth, const std::filesystem::path& path) {
  if (img.channels != channels || img.bit_depth != bit_depth)
    throw BundleError(path.string() + ": expected " + std::to_string(bit_depth) + "-bit " +
                      (channels == 1 ? "grayscale" : "RGB") + " PNG, got " +
                      std::to_string(img.bit_depth) + "-bit with " +
                      std::to_string(img.channels) + " channel(s)");
}

}  // namespace

Raster<Rgb8> read_png_rgb8(const std::filesystem::path& path) {
  auto img = decode(path);
  if (img.channels == 1 && img.bit_depth == 8) {
    Raster<Rgb8> out(img.width, img.height);
    for (std::size_t i = 0; i < out.size(); ++i)
      out.data[i] = {img.bytes[i], img.bytes[i], img.bytes[i]};
    return out;
  }
  expect(img, 3, 8, path);
  Raster<Rgb8> out(img.width, img.height);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = {img.bytes[3 * i], img.bytes[3 * i + 1], img.bytes[3 * i + 2]};
  return out;
}

Raster<std::uint8_t> read_png_gray8(const std::filesystem::path& path) {
  auto img = decode(path);
  expect(img, 1, 8, path);
  Raster<std::uint8_t> out(img.width, img.height);
  out.data = std::move(img.bytes);
  return out;
}

Raster<std::uint16_t> read_png_gray16(const std::filesystem::path& path) {
  auto img = decode(path);
  Raster<std::uint16_t> out(img.width, img.height);
  if (img.channels == 1 && img.bit_depth == 8) {
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = img.bytes[i];
    return out;
  }
  expect(img, 1, 16, path);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = static_cast<std::uint16_t>((img.bytes[2 * i] << 8) | img.bytes[2 * i + 1]);
  return out;
}

void write_png_rgb8(const Raster<Rgb8>& raster, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(raster.size() * 3);
  for (std::size_t i = 0; i < raster.size(); ++i) {
    bytes[3 * i] = raster.data[i].r;
    bytes[3 * i + 1] = raster.data[i].g;
    bytes[3 * i + 2] = raster.data[i].b;
  }
  encode(path, raster.width, raster.height, PNG_COLOR_TYPE_RGB, 8, bytes);
}

void write_png_gray8(const Raster<std::uint8_t>& raster, const std::filesystem::path& path) {
  encode(path, raster.width, raster.height, PNG_COLOR_TYPE_GRAY, 8, raster.data);
}

void write_png_gray16(const Raster<std::uint16_t>& raster, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(raster.size() * 2);
  for (std::size_t i = 0; i < raster.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(raster.data[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(raster.data[i] & 0xff);
  }
  encode(path, raster.width, raster.height, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

}  // namespace gscg
