#include "codec_oracle.hpp"
#include "scenes.hpp"

#include "crowdlocal/edit.hpp"
#include "crowdlocal/errors.hpp"
#include "crowdlocal/image.hpp"

#include <doctest.h>

#include <fstream>
#include <random>

using namespace crowdlocal;
using testsupport::RawRgb;

namespace {

Image load_raw(const RawRgb& raw, const std::string& tag) {
  const auto dir = testsupport::scratch_dir(tag);
  testsupport::write_png_rgb(dir / "in.png", raw);
  return load_image(dir / "in.png");
}

ImageIoError::Kind load_error_kind(const std::filesystem::path& path) {
  try {
    load_image(path);
  } catch (const ImageIoError& e) {
    return e.kind();
  }
  FAIL("expected ImageIoError");
  return ImageIoError::Kind::corrupt;
}

}  // namespace

TEST_SUITE("imaging") {
  TEST_CASE("black and white pixels map to 0 and 1") {
    const Image black = load_raw({1, 1, {0, 0, 0}}, "black");
    CHECK(black.width == 1);
    CHECK(black.height == 1);
    CHECK(black.data.row(0).isZero());
    const Image white = load_raw({1, 1, {255, 255, 255}}, "white");
    CHECK((white.data.row(0).array() == 1.0).all());
  }

  TEST_CASE("8-bit values are divided by 255") {
    RawRgb raw{2, 2, std::vector<unsigned char>(12, 7)};
    raw.bytes[0] = 128;
    raw.bytes[1] = 64;
    raw.bytes[2] = 32;
    const Image img = load_raw(raw, "div255");
    CHECK(img.data(0, 0) == 128 / 255.0);
    CHECK(img.data(0, 1) == 64 / 255.0);
    CHECK(img.data(0, 2) == 32 / 255.0);
    CHECK(img.data(3, 2) == 7 / 255.0);
  }

  TEST_CASE("row-major pixel order") {
    RawRgb raw{3, 2, {}};
    for (int i = 0; i < 18; ++i) raw.bytes.push_back(static_cast<unsigned char>(i * 10));
    const Image img = load_raw(raw, "order");
    // pixel (row 1, col 2) starts at byte 15
    CHECK(img.pixel(img.index(1, 2))[0] == 150 / 255.0);
  }

  TEST_CASE("distinct load errors") {
    const auto dir = testsupport::scratch_dir("errors");
    CHECK(load_error_kind(dir / "missing.png") == ImageIoError::Kind::unreadable);
    {
      std::ofstream(dir / "note.png") << "plain text, not an image";
    }
    CHECK(load_error_kind(dir / "note.png") == ImageIoError::Kind::unsupported_format);
    // A valid PNG header whose IHDR declares zero width.
    testsupport::write_png_rgb(dir / "ok.png", {1, 1, {1, 2, 3}});
    std::ifstream in(dir / "ok.png", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[16] = bytes[17] = bytes[18] = bytes[19] = 0;
    {
      std::ofstream out(dir / "zero.png", std::ios::binary);
      out.write(bytes.data(), std::streamsize(bytes.size()));
    }
    CHECK(load_error_kind(dir / "zero.png") == ImageIoError::Kind::zero_dimension);
    bytes.resize(40);
    bytes[19] = 1;
    {
      std::ofstream out(dir / "trunc.png", std::ios::binary);
      out.write(bytes.data(), std::streamsize(bytes.size()));
    }
    CHECK(load_error_kind(dir / "trunc.png") == ImageIoError::Kind::corrupt);
  }

  TEST_CASE("save quantizes by rounding") {
    const auto dir = testsupport::scratch_dir("save");
    save_image(Image::filled(1, 1, Rgb(0.5, 0.5, 0.5)), dir / "half.png");
    CHECK(testsupport::read_png_rgb(dir / "half.png").bytes == std::vector<unsigned char>{128, 128, 128});
    save_image(Image::filled(1, 1, Rgb(0, 0, 0)), dir / "zero.png");
    CHECK(testsupport::read_png_rgb(dir / "zero.png").bytes == std::vector<unsigned char>{0, 0, 0});
    CHECK_THROWS_AS(save_image(Image::filled(1, 1, Rgb(0, 0, 0)), dir / "no" / "such" / "dir.png"), ImageIoError);
  }

  TEST_CASE("round trip error is at most 1/255") {
    const auto dir = testsupport::scratch_dir("roundtrip");
    const Image img = testsupport::random_image(37, 23, 5);
    save_image(img, dir / "rt.png");
    const Image back = load_image(dir / "rt.png");
    CHECK(back.width == 37);
    CHECK(back.height == 23);
    CHECK((back.data - img.data).cwiseAbs().maxCoeff() <= 0.5 / 255 + 1e-12);
  }

  TEST_CASE("jpeg decodes close to its source") {
    const auto dir = testsupport::scratch_dir("jpeg");
    testsupport::write_jpeg_rgb(dir / "flat.jpg", {16, 16, std::vector<unsigned char>(16 * 16 * 3, 100)}, 100);
    const Image img = load_image(dir / "flat.jpg");
    CHECK(img.width == 16);
    CHECK((img.data.array() - 100 / 255.0).abs().maxCoeff() <= 2 / 255.0);
  }

  TEST_CASE("apply_edit examples") {
    CHECK(apply_edit(Rgb(0.3, 0.6, 0.9), ParamVector::Zero()) == Rgb(0.3, 0.6, 0.9));
    CHECK((apply_edit(Rgb(0.25, 0.25, 0.25), ParamVector(1, 0, 0)) - Rgb(0.5, 0.5, 0.5)).norm() < 1e-12);
    for (double g : {0.0, 0.2, 0.7, 1.0}) {
      CHECK((apply_edit(Rgb(g, g, g), ParamVector(0, 1, 0)) - Rgb(g, g, g)).norm() < 1e-12);
    }
    CHECK(apply_edit(Rgb(0.9, 0.9, 0.9), ParamVector(1, 0, 0)) == Rgb(1, 1, 1));
  }

  TEST_CASE("apply_edit matches the stepwise formulas") {
    const Rgb c(0.2, 0.5, 0.7);
    const ParamVector p(0.3, -0.4, 0.6);
    Rgb b = c * std::pow(2.0, 0.3);
    const double y = 0.299 * b[0] + 0.587 * b[1] + 0.114 * b[2];
    Rgb s = (y + 0.6 * (b.array() - y)).matrix();
    Rgb k = (0.5 + 1.6 * (s.array() - 0.5)).matrix();
    CHECK((apply_edit(c, p) - k.cwiseMax(0.0).cwiseMin(1.0)).norm() < 1e-12);
  }

  TEST_CASE("apply_param_map") {
    const Image img = testsupport::random_image(5, 4, 9);
    CHECK(apply_param_map(img, ParamMap::Zero(20, 3)) == img);

    const ParamVector p(0.2, -0.1, 0.5);
    const Image g = apply_param_map(img, global_map(p, 20));
    for (Eigen::Index n = 0; n < 20; ++n) {
      CHECK(g.pixel(n).transpose() == apply_edit(img.pixel(n).transpose(), p));
    }

    Image two(2, 1);
    two.data << 0.2, 0.4, 0.6, 0.8, 0.3, 0.1;
    ParamMap pm(2, 3);
    pm << 0.5, 0, 0, 0, 0.5, -0.5;
    const Image out = apply_param_map(two, pm);
    CHECK(out.pixel(0).transpose() == apply_edit(two.pixel(0).transpose(), pm.row(0).transpose()));
    CHECK(out.pixel(1).transpose() == apply_edit(two.pixel(1).transpose(), pm.row(1).transpose()));

    CHECK_THROWS_AS(apply_param_map(img, ParamMap::Zero(19, 3)), DimensionMismatch);
  }

  TEST_CASE("global_map broadcasts") {
    CHECK(global_map(ParamVector::Zero(), 4) == ParamMap::Zero(4, 3));
    const ParamMap m = global_map(ParamVector(0.2, -0.1, 0.5), 2);
    CHECK(m.rows() == 2);
    CHECK(m.row(0) == m.row(1));
    CHECK(m(1, 1) == -0.1);
  }

  TEST_CASE("range and locality properties") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    const Image img = testsupport::random_image(8, 8, 11);
    ParamMap pm(64, 3);
    for (Eigen::Index i = 0; i < pm.size(); ++i) pm.data()[i] = u(rng);
    const Image base = apply_param_map(img, pm);
    CHECK(base.data.minCoeff() >= 0.0);
    CHECK(base.data.maxCoeff() <= 1.0);
    ParamMap changed = pm;
    changed.row(17) = ParamVector(0.9, -0.9, 0.9).transpose();
    const Image out = apply_param_map(img, changed);
    for (Eigen::Index n = 0; n < 64; ++n) {
      if (n != 17) CHECK(out.pixel(n) == base.pixel(n));
    }
  }

  TEST_CASE("resize_for_preview") {
    const Image wide = testsupport::random_image(100, 50, 1);
    const Image half = resize_for_preview(wide, 50);
    CHECK(half.width == 50);
    CHECK(half.height == 25);
    // Exact 2x2 box means.
    const Rgb mean = (wide.pixel(0) + wide.pixel(1) + wide.pixel(100) + wide.pixel(101)).transpose() / 4.0;
    CHECK((half.pixel(0).transpose() - mean).norm() < 1e-12);

    const Image small = testsupport::random_image(10, 10, 2);
    CHECK(resize_for_preview(small, 20) == small);

    Image pair(2, 1);
    pair.data << 0.2, 0.4, 0.6, 0.8, 0.0, 1.0;
    const Image one = resize_for_preview(pair, 1);
    CHECK(one.width == 1);
    CHECK((one.pixel(0).transpose() - Rgb(0.5, 0.2, 0.8)).norm() < 1e-12);

    const Image odd = resize_for_preview(testsupport::random_image(333, 101, 4), 128);
    CHECK(std::max(odd.width, odd.height) <= 128);
    CHECK(odd.data.minCoeff() >= 0.0);
    CHECK(odd.data.maxCoeff() <= 1.0);
  }

  TEST_CASE("validate rejects bad images") {
    Image img = Image::filled(2, 2, Rgb(0.5, 0.5, 0.5));
    CHECK_NOTHROW(validate(img));
    img.data(0, 0) = 1.5;
    CHECK_THROWS(validate(img));
    CHECK_THROWS(validate(Image()));
  }
}
