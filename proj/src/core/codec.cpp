#include "crowdlocal/errors.hpp"
#include "crowdlocal/image.hpp"

#include <png.h>
#include <jpeglib.h>
#include <jerror.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

namespace crowdlocal {
namespace {

using Kind = ImageIoError::Kind;

bool is_png(std::span<const unsigned char> b) {
  static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

bool is_jpeg(std::span<const unsigned char> b) {
  return b.size() >= 3 && b[0] == 0xff && b[1] == 0xd8 && b[2] == 0xff;
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image from_bytes(const unsigned char* px, int width, int height, int stride_channels) {
  Image img(width, height);
  const Eigen::Index n = img.pixel_count();
  for (Eigen::Index i = 0; i < n; ++i) {
    const unsigned char* p = px + i * stride_channels;
    img.data(i, 0) = p[0] / 255.0;
    img.data(i, 1) = p[1] / 255.0;
    img.data(i, 2) = p[2] / 255.0;
  }
  return img;
}

std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
}

Image decode_png(std::span<const unsigned char> bytes) {
  // IHDR is always the first chunk: width and height sit at bytes 16..23.
  // libpng rejects zero sizes as generic corruption, so check them first.
  if (bytes.size() >= 24 && std::equal(bytes.begin() + 12, bytes.begin() + 16, "IHDR") &&
      (read_be32(bytes.data() + 16) == 0 || read_be32(bytes.data() + 20) == 0)) {
    throw ImageIoError(Kind::zero_dimension, "png: zero-dimension image");
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw ImageIoError(Kind::corrupt, std::string("png: ") + png.message);
  }
  if (png.width == 0 || png.height == 0) {
    png_image_free(&png);
    throw ImageIoError(Kind::zero_dimension, "png: zero-dimension image");
  }
  // RGBA keeps color bytes untouched; alpha is dropped rather than composited.
  png.format = PNG_FORMAT_RGBA;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw ImageIoError(Kind::corrupt, "png: " + msg);
  }
  return from_bytes(buffer.data(), int(png.width), int(png.height), 4);
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(std::span<const unsigned char> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<unsigned char> pixels;
  int width = 0, height = 0;
  if (setjmp(err.jump)) {
    const bool empty = err.base.msg_code == JERR_EMPTY_IMAGE;
    jpeg_destroy_decompress(&cinfo);
    throw ImageIoError(empty ? Kind::zero_dimension : Kind::corrupt, std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = int(cinfo.output_width);
  height = int(cinfo.output_height);
  if (width > 0 && height > 0) {
    pixels.resize(std::size_t(width) * height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = pixels.data() + std::size_t(cinfo.output_scanline) * width * 3;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  if (width == 0 || height == 0) throw ImageIoError(Kind::zero_dimension, "jpeg: zero-dimension image");
  return from_bytes(pixels.data(), width, height, 3);
}

std::vector<unsigned char> write_png(const unsigned char* pixels, int width, int height, png_uint_32 format) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(width);
  png.height = png_uint_32(height);
  png.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw ImageIoError(Kind::unwritable, std::string("png encode: ") + png.message);
  }
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, pixels, 0, nullptr)) {
    throw ImageIoError(Kind::unwritable, std::string("png encode: ") + png.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

Image decode_image(std::span<const unsigned char> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw ImageIoError(Kind::unsupported_format, "unsupported image format (expected PNG or JPEG)");
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError(Kind::unreadable, "cannot read " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw ImageIoError(Kind::unreadable, "cannot read " + path.string());
  return decode_image(bytes);
}

std::vector<unsigned char> encode_png(const Image& image) {
  validate(image);
  std::vector<unsigned char> px(std::size_t(image.pixel_count()) * 3);
  for (Eigen::Index i = 0; i < image.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) px[std::size_t(i) * 3 + c] = quantize(image.data(i, c));
  }
  return write_png(px.data(), image.width, image.height, PNG_FORMAT_RGB);
}

std::vector<unsigned char> encode_gray_png(std::span<const double> values, int width, int height) {
  if (width <= 0 || height <= 0 || values.size() != std::size_t(width) * height) {
    throw DimensionMismatch("encode_gray_png: value count does not match dimensions");
  }
  std::vector<unsigned char> px(values.size());
  std::transform(values.begin(), values.end(), px.begin(), quantize);
  return write_png(px.data(), width, height, PNG_FORMAT_GRAY);
}

void save_image(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageIoError(Kind::unwritable, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw ImageIoError(Kind::unwritable, "cannot write " + path.string());
}

}  // namespace crowdlocal
