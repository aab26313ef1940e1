#include <gtest/gtest.h>

#include <opencv2/imgcodecs.hpp>

#include "test_util.hpp"

using namespace toon2real;
using testutil::TempDir;

TEST(ImageTensor, RejectsBadShapes) {
  EXPECT_CATEGORY(ImageTensor(2, 4, 4), InvalidImage);
  EXPECT_CATEGORY(ImageTensor(3, 0, 4), InvalidImage);
  EXPECT_CATEGORY(ImageTensor(1, 4, 0), InvalidImage);
  EXPECT_NO_THROW(ImageTensor(1, 1, 1));
}

TEST(ImageTensor, RangeScan) {
  ImageTensor img(3, 2, 2);
  EXPECT_TRUE(img.values_in_range());
  img.at(1, 0, 1) = 1.5;
  EXPECT_FALSE(img.values_in_range());
  img.at(1, 0, 1) = -0.5;
  img.set_range(ValueRange::Signed);
  EXPECT_TRUE(img.values_in_range());
}

TEST(LoadImage, ColorPngShapeFollowsHeader) {
  TempDir tmp;
  cv::Mat m(384, 256, CV_8UC3, cv::Scalar(10, 20, 30));  // BGR
  cv::imwrite((tmp / "c.png").string(), m);
  const ImageTensor img = load_image(tmp / "c.png");
  EXPECT_EQ(img.channels(), 3u);
  EXPECT_EQ(img.height(), 384u);
  EXPECT_EQ(img.width(), 256u);
  EXPECT_EQ(img.range(), ValueRange::Unit);
  EXPECT_DOUBLE_EQ(img.at(0, 5, 5), 30 / 255.0);
  EXPECT_DOUBLE_EQ(img.at(2, 5, 5), 10 / 255.0);
}

TEST(LoadImage, GrayIsReplicated) {
  TempDir tmp;
  cv::Mat m(8, 6, CV_8UC1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 6; ++x) m.at<unsigned char>(y, x) = static_cast<unsigned char>(y * 30 + x);
  cv::imwrite((tmp / "g.png").string(), m);
  const ImageTensor img = load_image(tmp / "g.png");
  ASSERT_EQ(img.channels(), 3u);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 6; ++x) {
      EXPECT_EQ(img.at(0, y, x), img.at(1, y, x));
      EXPECT_EQ(img.at(1, y, x), img.at(2, y, x));
      EXPECT_DOUBLE_EQ(img.at(0, y, x), (y * 30 + x) / 255.0);
    }
}

TEST(LoadImage, SixteenBitAndJpeg) {
  TempDir tmp;
  cv::Mat m(4, 4, CV_16UC3, cv::Scalar(65535, 0, 65535));
  cv::imwrite((tmp / "w.png").string(), m);
  const ImageTensor img = load_image(tmp / "w.png");
  EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(img.at(1, 0, 0), 0.0);

  cv::Mat j(16, 16, CV_8UC3, cv::Scalar(128, 128, 128));
  cv::imwrite((tmp / "j.jpg").string(), j);
  EXPECT_NEAR(load_image(tmp / "j.jpg").at(1, 8, 8), 128 / 255.0, 2 / 255.0);
}

TEST(LoadImage, Errors) {
  TempDir tmp;
  EXPECT_CATEGORY(load_image(tmp / "missing.png"), NotFound);
  testutil::fs::create_directories(tmp / "dir.png");
  EXPECT_CATEGORY(load_image(tmp / "dir.png"), NotFound);
  dataset::write_text(tmp / "junk.png", "definitely not an image");
  EXPECT_CATEGORY(load_image(tmp / "junk.png"), DecodeError);
  dataset::write_text(tmp / "trunc.png", std::string("\x89PNG\r\n\x1a\n", 8) + "xx");
  EXPECT_CATEGORY(load_image(tmp / "trunc.png"), DecodeError);
}

TEST(SavePng, RoundTripsEightBitValues) {
  TempDir tmp;
  ImageTensor img = testutil::random_image(5, 7, 3);
  img = quantize_8bit(img);
  save_png(img, tmp / "sub" / "r.png");
  EXPECT_EQ(load_image(tmp / "sub" / "r.png"), img);
}

TEST(PrepareInput, ResizeWithoutJitter) {
  const JitterConfig plain = JitterConfig::for_size(256, false);
  const ImageTensor out = prepare_input(testutil::random_image(384, 256, 1), plain, 0);
  EXPECT_EQ(out.channels(), 3u);
  EXPECT_EQ(out.height(), 256u);
  EXPECT_EQ(out.width(), 256u);
}

TEST(PrepareInput, IdentityAtTargetSize) {
  const ImageTensor in = testutil::random_image(256, 256, 2);
  EXPECT_EQ(prepare_input(in, JitterConfig::for_size(256, false), 0), in);
}

TEST(PrepareInput, JitterReplaysUnderSeed) {
  const ImageTensor in = testutil::random_image(300, 280, 4);
  const JitterConfig j = JitterConfig::for_size(256, true);
  EXPECT_EQ(j.load_size, 286u);
  const ImageTensor a = prepare_input(in, j, 17), b = prepare_input(in, j, 17);
  EXPECT_EQ(a, b);
  bool any_diff = false;
  for (std::uint64_t s = 0; s < 8 && !any_diff; ++s) any_diff = !(prepare_input(in, j, s) == a);
  EXPECT_TRUE(any_diff);
}

TEST(PrepareInput, JitterFlipsAboutHalfTheTime) {
  // A horizontal ramp: after a flip the left column is brighter than the right.
  ImageTensor ramp(3, 64, 64);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x) ramp.at(c, y, x) = x / 63.0;
  const JitterConfig j = JitterConfig::for_size(32, true);
  int flips = 0;
  for (std::uint64_t s = 0; s < 400; ++s) {
    const ImageTensor o = prepare_input(ramp, j, s);
    flips += o.at(0, 0, 0) > o.at(0, 0, 31);
  }
  EXPECT_GT(flips, 150);
  EXPECT_LT(flips, 250);
}

TEST(PrepareInput, PropertyShapeOverRandomSizes) {
  Rng rng(99);
  for (int i = 0; i < 40; ++i) {
    const std::size_t h = 2 + rng.below(300), w = 2 + rng.below(300);
    const ImageTensor in = testutil::random_image(h, w, i);
    for (bool jitter : {false, true}) {
      const ImageTensor out = prepare_input(in, JitterConfig::for_size(256, jitter), i);
      ASSERT_EQ(out.height(), 256u);
      ASSERT_EQ(out.width(), 256u);
      ASSERT_EQ(out.channels(), 3u);
      ASSERT_TRUE(out.values_in_range());
    }
  }
}

TEST(PrepareInput, Errors) {
  const JitterConfig j = JitterConfig::for_size(256, false);
  EXPECT_CATEGORY(prepare_input(testutil::random_image(1, 40, 0), j, 0), InvalidImage);
  EXPECT_CATEGORY(prepare_input(testutil::random_image(40, 1, 0), j, 0), InvalidImage);
  EXPECT_CATEGORY(prepare_input(normalize(testutil::random_image(8, 8, 0)), j, 0), RangeError);
}

TEST(Normalize, Endpoints) {
  ImageTensor img = testutil::constant_image(2, 2, 0.0, 1.0, 0.25);
  const ImageTensor n = normalize(img);
  EXPECT_EQ(n.range(), ValueRange::Signed);
  EXPECT_DOUBLE_EQ(n.at(0, 0, 0), -1.0);
  EXPECT_DOUBLE_EQ(n.at(1, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(n.at(2, 0, 0), -0.5);
}

TEST(Normalize, RoundTripProperty) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const ImageTensor x = testutil::random_image(9, 13, s);
    const ImageTensor r = denormalize(normalize(x));
    ASSERT_EQ(r.range(), ValueRange::Unit);
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(r.data()[i], x.data()[i], 1e-12);
  }
}

TEST(Normalize, WrongRange) {
  const ImageTensor x = testutil::random_image(3, 3, 0);
  EXPECT_CATEGORY(denormalize(x), RangeError);
  EXPECT_CATEGORY(normalize(normalize(x)), RangeError);
}

TEST(Geometry, CropFlipHconcat) {
  const ImageTensor x = testutil::random_image(6, 8, 5);
  const ImageTensor c = crop(x, 1, 2, 3, 4);
  EXPECT_EQ(c.at(2, 0, 0), x.at(2, 1, 2));
  EXPECT_EQ(c.at(0, 2, 3), x.at(0, 3, 5));
  EXPECT_CATEGORY(crop(x, 4, 0, 3, 3), InvalidImage);
  EXPECT_EQ(flip_horizontal(flip_horizontal(x)), x);
  EXPECT_EQ(flip_horizontal(x).at(1, 2, 0), x.at(1, 2, 7));
  const std::array<ImageTensor, 3> panels{x, x, x};
  const ImageTensor h = hconcat(panels);
  EXPECT_EQ(h.width(), 24u);
  EXPECT_EQ(h.at(1, 3, 17), x.at(1, 3, 1));
}

TEST(Geometry, BilinearOnConstantAndRamp) {
  const ImageTensor k = testutil::constant_image(10, 7, 0.3, 0.6, 0.9);
  const ImageTensor r = resize_bilinear(k, 33, 5);
  for (std::size_t y = 0; y < 33; ++y) EXPECT_NEAR(r.at(1, y, 2), 0.6, 1e-12);
  // Downsampling a linear ramp by 2 with half-pixel centres averages neighbours.
  ImageTensor ramp(1, 1, 8);
  for (std::size_t x = 0; x < 8; ++x) ramp.at(0, 0, x) = x;
  const ImageTensor half = resize_bilinear(ramp, 1, 4);
  for (std::size_t x = 0; x < 4; ++x) EXPECT_NEAR(half.at(0, 0, x), 2.0 * x + 0.5, 1e-12);
}

TEST(Batch, ToAndFrom) {
  const std::array<ImageTensor, 2> imgs{normalize(testutil::random_image(4, 4, 1)), normalize(testutil::random_image(4, 4, 2))};
  const Tensor<double> b = to_batch<double>(imgs);
  EXPECT_EQ(b.shape(), (Shape{2, 3, 4, 4}));
  EXPECT_EQ(from_batch(b, 1, ValueRange::Signed), imgs[1]);
}
