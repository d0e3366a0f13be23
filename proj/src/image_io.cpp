#include "catpose/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace catpose {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::IoFailure, path + ": " + what);
}

void write_gray_png(const std::string& path, int width, int height, int bit_depth,
                    const std::vector<std::vector<uint8_t>>& rows, const std::string& config_hash) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) io_fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    io_fail(path, "libpng write error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (!config_hash.empty()) {
    png_text text;
    std::memset(&text, 0, sizeof(text));
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<char*>("config_hash");
    text.text = const_cast<char*>(config_hash.c_str());
    png_set_text(png, info, &text, 1);
  }
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(rows[static_cast<size_t>(y)].data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct GrayImage {
  int width = 0, height = 0, bit_depth = 0;
  std::vector<std::vector<uint8_t>> rows;
};

GrayImage read_gray_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) io_fail(path, "cannot open");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_fail(path, "libpng read error");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  GrayImage img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_fail(path, "expected grayscale png");
  }
  const size_t rowbytes = png_get_rowbytes(png, info);
  img.rows.assign(static_cast<size_t>(img.height), std::vector<uint8_t>(rowbytes));
  for (int y = 0; y < img.height; ++y) png_read_row(png, img.rows[static_cast<size_t>(y)].data(), nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

void write_depth_png(const Mat& depth_meters, const std::string& path,
                     const std::string& config_hash) {
  const int h = static_cast<int>(depth_meters.rows()), w = static_cast<int>(depth_meters.cols());
  std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(h),
                                         std::vector<uint8_t>(static_cast<size_t>(w) * 2));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double mm = std::round(depth_meters(y, x) * 1000.0);
      const uint16_t v = static_cast<uint16_t>(std::clamp(mm, 0.0, 65535.0));
      // PNG is big-endian per channel.
      rows[static_cast<size_t>(y)][static_cast<size_t>(x) * 2] = static_cast<uint8_t>(v >> 8);
      rows[static_cast<size_t>(y)][static_cast<size_t>(x) * 2 + 1] = static_cast<uint8_t>(v & 0xff);
    }
  }
  write_gray_png(path, w, h, 16, rows, config_hash);
}

Mat read_depth_png(const std::string& path) {
  const GrayImage img = read_gray_png(path);
  if (img.bit_depth != 16) io_fail(path, "expected 16-bit depth png");
  Mat out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const uint16_t v = static_cast<uint16_t>((img.rows[static_cast<size_t>(y)][static_cast<size_t>(x) * 2] << 8) |
                                               img.rows[static_cast<size_t>(y)][static_cast<size_t>(x) * 2 + 1]);
      out(y, x) = static_cast<double>(v) / 1000.0;
    }
  return out;
}

void write_mask_png(const Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>& mask,
                    const std::string& path) {
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(h), std::vector<uint8_t>(static_cast<size_t>(w)));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) rows[static_cast<size_t>(y)][static_cast<size_t>(x)] = mask(y, x);
  write_gray_png(path, w, h, 8, rows, "");
}

Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> read_mask_png(const std::string& path) {
  const GrayImage img = read_gray_png(path);
  if (img.bit_depth != 8) io_fail(path, "expected 8-bit mask png");
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out(y, x) = img.rows[static_cast<size_t>(y)][static_cast<size_t>(x)];
  return out;
}

void write_rgb_png(const std::vector<uint8_t>& pixels, int width, int height,
                   const std::string& path, const std::string& config_hash) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) io_fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    io_fail(path, "libpng write error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (!config_hash.empty()) {
    png_text text;
    std::memset(&text, 0, sizeof(text));
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<char*>("config_hash");
    text.text = const_cast<char*>(config_hash.c_str());
    png_set_text(png, info, &text, 1);
  }
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<size_t>(y) * width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_depth_raw(const Mat& depth_meters, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  const char magic[4] = {'C', 'P', 'D', 'F'};
  out.write(magic, 4);
  const uint32_t h = static_cast<uint32_t>(depth_meters.rows());
  const uint32_t w = static_cast<uint32_t>(depth_meters.cols());
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  for (uint32_t y = 0; y < h; ++y)
    for (uint32_t x = 0; x < w; ++x) {
      const double v = depth_meters(y, x);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  if (!out) io_fail(path, "write failed");
}

Mat read_depth_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "CPDF", 4) != 0) io_fail(path, "bad magic");
  uint32_t h = 0, w = 0;
  in.read(reinterpret_cast<char*>(&h), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  Mat out(h, w);
  for (uint32_t y = 0; y < h; ++y)
    for (uint32_t x = 0; x < w; ++x) {
      double v;
      in.read(reinterpret_cast<char*>(&v), 8);
      out(y, x) = v;
    }
  if (!in) io_fail(path, "truncated data");
  return out;
}

}  // namespace catpose
