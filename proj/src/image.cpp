#include "pex/image.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace pex {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

void read_png_rows(const std::string& path, int color_type_wanted,
                   int& width, int& height, std::vector<std::uint8_t>& out) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw InputError("cannot open PNG file " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw ParseError(path + " is not a PNG file (bad signature at byte 0)");

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw InputError("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw InputError("png_create_info_struct failed");

  if (setjmp(png_jmpbuf(r.png)))
    throw ParseError("malformed PNG data in " + path);

  png_init_io(r.png, fp.get());
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);

  width = static_cast<int>(png_get_image_width(r.png, r.info));
  height = static_cast<int>(png_get_image_height(r.png, r.info));
  int color_type = png_get_color_type(r.png, r.info);
  int bit_depth = png_get_bit_depth(r.png, r.info);

  if (bit_depth == 16) png_set_strip_16(r.png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  png_set_strip_alpha(r.png);

  if (color_type_wanted == PNG_COLOR_TYPE_RGB) {
    if (color_type == PNG_COLOR_TYPE_GRAY ||
        color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(r.png);
  } else {
    if (color_type == PNG_COLOR_TYPE_RGB ||
        color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
        color_type == PNG_COLOR_TYPE_PALETTE)
      png_set_rgb_to_gray_fixed(r.png, 1, -1, -1);
  }
  png_read_update_info(r.png, r.info);

  const std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
  out.assign(rowbytes * static_cast<std::size_t>(height), 0);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<std::size_t>(y)] = out.data() + rowbytes * static_cast<std::size_t>(y);
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
}

void write_png_rows(const std::string& path, int width, int height,
                    int color_type, const std::uint8_t* data) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw InputError("cannot open " + path + " for writing");

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw InputError("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw InputError("png_create_info_struct failed");

  if (setjmp(png_jmpbuf(w.png)))
    throw InputError("PNG write failed for " + path);

  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);

  const std::size_t rowbytes =
      static_cast<std::size_t>(width) * (color_type == PNG_COLOR_TYPE_RGB ? 3 : 1);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(data + rowbytes * static_cast<std::size_t>(y));
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

}  // namespace

Image Image::filled(int w, int h, std::array<std::uint8_t, 3> color) {
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = color[0];
    img.rgb[i + 1] = color[1];
    img.rgb[i + 2] = color[2];
  }
  return img;
}

std::array<std::uint8_t, 3> Image::mean_color() const {
  if (rgb.empty()) return {0, 0, 0};
  std::uint64_t sum[3] = {0, 0, 0};
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    sum[0] += rgb[i];
    sum[1] += rgb[i + 1];
    sum[2] += rgb[i + 2];
  }
  const std::uint64_t n = pixel_count();
  return {static_cast<std::uint8_t>(sum[0] / n),
          static_cast<std::uint8_t>(sum[1] / n),
          static_cast<std::uint8_t>(sum[2] / n)};
}

Image read_image_png(const std::string& path) {
  Image img;
  read_png_rows(path, PNG_COLOR_TYPE_RGB, img.width, img.height, img.rgb);
  return img;
}

void write_image_png(const std::string& path, const Image& img) {
  if (img.width <= 0 || img.height <= 0)
    throw InputError("cannot write empty image");
  write_png_rows(path, img.width, img.height, PNG_COLOR_TYPE_RGB, img.rgb.data());
}

GrayImage read_gray_png(const std::string& path) {
  GrayImage img;
  read_png_rows(path, PNG_COLOR_TYPE_GRAY, img.width, img.height, img.pixels);
  return img;
}

void write_gray_png(const std::string& path, const GrayImage& img) {
  if (img.width <= 0 || img.height <= 0)
    throw InputError("cannot write empty image");
  write_png_rows(path, img.width, img.height, PNG_COLOR_TYPE_GRAY,
                 img.pixels.data());
}

}  // namespace pex
