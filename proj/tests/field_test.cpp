/* Copyright 2026 The Quadflow Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "quadflow/field.hpp"
#include "quadflow/random.hpp"

namespace quadflow {
namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, c);
  for (double& v : img.values()) v = rng.uniform();
  return img;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("quadflow_field_" + name)).string();
}

TEST(Image, RejectsOutOfRangeOrBadLength) {
  EXPECT_THROW(Image::from_data(1, 2, 1, {0.0, 1.5}), std::invalid_argument);
  EXPECT_THROW(Image::from_data(1, 2, 1, {0.0, NAN}), std::invalid_argument);
  EXPECT_THROW(Image::from_data(1, 2, 1, {0.0}), std::invalid_argument);
  EXPECT_THROW(Image::from_data(1, 1, 2, {0.0, 0.0}), std::invalid_argument);
  EXPECT_NO_THROW(Image::from_data(1, 2, 3, {0, 0.1, 0.2, 0.3, 0.4, 1.0}));
}

TEST(Bilinear, ConstantImage) {
  const Image img(5, 7, 1, 0.5);
  for (double x : {-3.0, 0.0, 1.7, 6.0, 9.2})
    for (double y : {-1.0, 0.4, 3.3, 8.0}) EXPECT_DOUBLE_EQ(bilinear_sample(img, x, y), 0.5);
}

TEST(Bilinear, HandExamples) {
  const Image two = Image::from_data(1, 2, 1, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(bilinear_sample(two, 0.25, 0.0), 0.25);
  const Image img = random_image(6, 4, 1, 3);
  EXPECT_EQ(bilinear_sample(img, 1, 3), img(3, 1));
}

TEST(Bilinear, ClampsOutsideTheFrame) {
  const Image img = random_image(3, 3, 1, 4);
  EXPECT_EQ(bilinear_sample(img, -5.0, 1.0), img(1, 0));
  EXPECT_EQ(bilinear_sample(img, 2.0, 40.0), img(2, 2));
  EXPECT_FALSE(in_bounds(img.dims(), -0.01, 1.0));
  EXPECT_TRUE(in_bounds(img.dims(), 2.0, 2.0));
}

// Exact on the lattice, linear between lattice points along each axis.
TEST(Bilinear, RandomRampsAreLinear) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Image img = random_image(4, 9, 1, 100 + trial);
    const int x0 = static_cast<int>(rng.uniform_int(0, 7));
    const int y = static_cast<int>(rng.uniform_int(0, 3));
    const double t = rng.uniform();
    EXPECT_EQ(bilinear_sample(img, x0, y), img(y, x0));
    EXPECT_NEAR(bilinear_sample(img, x0 + t, y), (1 - t) * img(y, x0) + t * img(y, x0 + 1), 1e-15);
    const int yy = static_cast<int>(rng.uniform_int(0, 2));
    EXPECT_NEAR(bilinear_sample(img, x0, yy + t), (1 - t) * img(yy, x0) + t * img(yy + 1, x0), 1e-15);
  }
}

TEST(Bilinear, GradientMatchesDifferences) {
  Plane p(5, 6);
  Rng rng(2);
  for (double& v : p.values()) v = rng.uniform();
  for (int n = 0; n < 30; ++n) {
    const double x = rng.uniform(0.1, 4.9), y = rng.uniform(0.1, 3.9);
    const SampleGrad g = bilinear_grad(p, x, y);
    EXPECT_DOUBLE_EQ(g.value, bilinear(p, x, y));
    const double h = 1e-7;
    if (std::abs(x - std::round(x)) > 1e-3)
      EXPECT_NEAR(g.dx, (bilinear(p, x + h, y) - bilinear(p, x - h, y)) / (2 * h), 1e-6);
    if (std::abs(y - std::round(y)) > 1e-3)
      EXPECT_NEAR(g.dy, (bilinear(p, x, y + h) - bilinear(p, x, y - h)) / (2 * h), 1e-6);
  }
}

// <scatter(w), q> == w * sample(q): the scatter is the adjoint of sampling.
TEST(Bilinear, ScatterIsAdjointOfSampling) {
  Rng rng(5);
  Plane q(4, 5);
  for (double& v : q.values()) v = rng.uniform();
  for (int n = 0; n < 20; ++n) {
    const double x = rng.uniform(-2.0, 7.0), y = rng.uniform(-2.0, 6.0), w = rng.uniform(-1.0, 1.0);
    Plane s(4, 5);
    bilinear_scatter(s, x, y, w);
    double dot = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) dot += s.values()[i] * q.values()[i];
    EXPECT_NEAR(dot, w * bilinear(q, x, y), 1e-14);
  }
}

TEST(Downsample, HandExamples) {
  const Image c = Image(6, 4, 1, 0.3);
  const Image dc = downsample2(c);
  EXPECT_EQ(dc.dims(), (Dims{3, 2}));
  for (double v : dc.values()) EXPECT_DOUBLE_EQ(v, 0.3);

  const Image two = Image::from_data(2, 2, 1, {0, 0, 1, 1});
  const Image d2 = downsample2(two);
  EXPECT_EQ(d2.dims(), (Dims{1, 1}));
  EXPECT_DOUBLE_EQ(d2(0, 0), 0.5);

  Image checker(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker(y, x) = (x + y) % 2;
  const Image dchecker = downsample2(checker);
  for (double v : dchecker.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Downsample, OddEdgesAverageAvailablePixels) {
  const Image img = Image::from_data(1, 3, 1, {0.2, 0.4, 0.9});
  EXPECT_THROW(downsample2(img), std::invalid_argument);  // H < 2
  const Image odd = Image::from_data(3, 3, 1, {0, 0, 1, 0, 0, 1, 0.5, 0.5, 0.25});
  const Image d = downsample2(odd);
  EXPECT_EQ(d.dims(), (Dims{2, 2}));
  EXPECT_DOUBLE_EQ(d(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(d(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(d(1, 1), 0.25);
  EXPECT_THROW(downsample2(Image(1, 1)), std::invalid_argument);
}

TEST(Downsample, PreservesMeanOfEvenImages) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image img = random_image(2 * (3 + static_cast<int>(s)), 2 * (5 + static_cast<int>(s % 3)), s % 2 ? 3 : 1, s);
    const Image d = downsample2(img);
    double a = 0.0, b = 0.0;
    for (double v : img.values()) a += v;
    for (double v : d.values()) b += v;
    EXPECT_NEAR(a / img.values().size(), b / d.values().size(), 1e-12);
  }
}

TEST(UpsampleFlow, HandExamples) {
  const FlowField zero(3, 4);
  const FlowField z = upsample_flow(zero, 9, 13);
  for (double v : z.u().values()) EXPECT_EQ(v, 0.0);
  for (double v : z.v().values()) EXPECT_EQ(v, 0.0);

  const FlowField one = upsample_flow(FlowField(3, 4, 1.0, 0.0), 6, 8);
  for (double v : one.u().values()) EXPECT_DOUBLE_EQ(v, 2.0);
  for (double v : one.v().values()) EXPECT_DOUBLE_EQ(v, 0.0);

  const FlowField three = upsample_flow(FlowField(3, 4, 0.0, 3.0), 6, 4);
  for (double v : three.u().values()) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : three.v().values()) EXPECT_DOUBLE_EQ(v, 6.0);

  EXPECT_THROW(upsample_flow(one, 0, 8), std::invalid_argument);
  EXPECT_THROW(upsample_flow(one, 2, 8), std::invalid_argument);
}

// Pixel centres align, so an affine field is reproduced exactly (scaled) at
// the fine pixel centres away from the clamped border.
TEST(UpsampleFlow, ReproducesAffineFieldsAtFactorTwo) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const double a = rng.uniform(-2, 2), bx = rng.uniform(-1, 1), by = rng.uniform(-1, 1);
    const int h = 5 + trial % 3, w = 6 + trial % 4;
    FlowField f(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        f.u()(y, x) = a + bx * x + by * y;
        f.v()(y, x) = -a + by * x - bx * y;
      }
    const FlowField up = upsample_flow(f, 2 * h, 2 * w);
    for (int y = 1; y < 2 * h - 1; ++y)
      for (int x = 1; x < 2 * w - 1; ++x) {
        const double xs = (x + 0.5) / 2 - 0.5, ys = (y + 0.5) / 2 - 0.5;
        EXPECT_NEAR(up.u()(y, x), 2 * (a + bx * xs + by * ys), 1e-9);
        EXPECT_NEAR(up.v()(y, x), 2 * (-a + by * xs - bx * ys), 1e-9);
      }
    // Lattice points of the source land between fine centres 2x and 2x+1.
    for (int y = 1; y < h - 1; ++y)
      for (int x = 1; x < w - 1; ++x)
        EXPECT_NEAR(0.25 * (up.u()(2 * y, 2 * x) + up.u()(2 * y, 2 * x + 1) + up.u()(2 * y + 1, 2 * x) +
                            up.u()(2 * y + 1, 2 * x + 1)),
                    2 * f.u()(y, x), 1e-9);
  }
}

TEST(Pyramid, LevelDimsRoundUp) {
  const Image img = random_image(13, 21, 1, 1);
  const Pyramid<Image> p = build_pyramid(img, 4);
  ASSERT_EQ(p.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    const int f = 1 << k;
    EXPECT_EQ(p[k].dims(), (Dims{(13 + f - 1) / f, (21 + f - 1) / f}));
    EXPECT_EQ(p[k].dims(), level_dims(img.dims(), k));
  }
  EXPECT_EQ(p[0], img);
  EXPECT_EQ(max_pyramid_levels({3, 40}, 6), 3);
}

TEST(Grayscale, UsesLumaWeights) {
  const Image rgb = Image::from_data(1, 2, 3, {1, 0, 0, 0.2, 0.4, 0.6});
  const Image g = to_grayscale(rgb);
  EXPECT_EQ(g.channels(), 1);
  EXPECT_NEAR(g(0, 0), 0.299, 1e-15);
  EXPECT_NEAR(g(0, 1), 0.299 * 0.2 + 0.587 * 0.4 + 0.114 * 0.6, 1e-15);
}

TEST(Mask, BinaryOpsAndCount) {
  Mask a(2, 2, 0), b(2, 2, 0);
  a(0, 0) = a(0, 1) = 1;
  b(0, 1) = b(1, 1) = 1;
  EXPECT_EQ((a & b).count(), 1u);
  EXPECT_EQ((!a).count(), 2u);
  EXPECT_THROW(a & Mask(3, 2), std::invalid_argument);
}

TEST(Disparity, ConvertsToNegativeHorizontalFlow) {
  DisparityField d(2, 3);
  d(1, 2) = 4.5;
  const FlowField f = FlowField::from_disparity(d);
  EXPECT_EQ(f.u()(1, 2), -4.5);
  EXPECT_EQ(f.v()(1, 2), 0.0);
}

TEST(ImageIo, RawDumpRoundTripsExactly) {
  const Image img = random_image(7, 5, 3, 9);
  const auto bytes = encode_raw(img);
  ASSERT_EQ(bytes.size(), 12 + 7 * 5 * 3 * 8u);
  EXPECT_EQ(bytes[0], 7);  // little-endian height
  EXPECT_EQ(decode_raw(bytes), img);
  const std::string path = temp_path("rt.raw");
  save_raw(img, path);
  EXPECT_EQ(load_raw(path), img);
  std::filesystem::remove(path);
  EXPECT_ANY_THROW(decode_raw(std::span<const std::uint8_t>(bytes.data(), 20)));
}

TEST(ImageIo, PngQuantizesToEightBits) {
  Image img = random_image(6, 9, 1, 12);
  for (double& v : img.values()) v = std::round(v * 255) / 255;
  const std::string path = temp_path("rt.png");
  save_png(img, path);
  const Image back = load_png(path);
  ASSERT_EQ(back.dims(), img.dims());
  for (std::size_t i = 0; i < img.values().size(); ++i) EXPECT_DOUBLE_EQ(back.values()[i], img.values()[i]);

  Mask m(3, 11, 0);
  m(1, 9) = m(2, 0) = 1;
  save_mask_png(m, path);
  EXPECT_EQ(load_mask_png(path), m);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace quadflow
