#include "mpp/convnet.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "mpp/errors.h"
#include "mpp/random.h"
#include "test_support.h"

namespace mpp {
namespace {

// Plain double-precision evaluation of a layer chain, written from the layer
// definitions (zero padding, floor-mode pooling, channel-major flattening).
struct Volume {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> v;
  double& at(std::size_t k, std::size_t y, std::size_t x) { return v[(k * h + y) * w + x]; }
  double at(std::size_t k, std::size_t y, std::size_t x) const { return v[(k * h + y) * w + x]; }
};

Volume oracle_forward(const NetworkSpec& net, const Tensor& input) {
  Volume a{input.channels(), input.height(), input.width(), {}};
  for (float x : input.data()) a.v.push_back(x);
  for (std::size_t li = 0; li <= net.target_layer; ++li) {
    const LayerSpec& L = net.layers[li];
    Volume b;
    switch (L.kind) {
      case LayerKind::kConv: {
        const long pad = L.pad;
        b = {L.out_channels, (a.h + 2 * L.pad - L.kernel_h) / L.stride + 1,
             (a.w + 2 * L.pad - L.kernel_w) / L.stride + 1, {}};
        b.v.assign(b.c * b.h * b.w, 0.0);
        for (std::size_t o = 0; o < b.c; ++o)
          for (std::size_t y = 0; y < b.h; ++y)
            for (std::size_t x = 0; x < b.w; ++x) {
              double s = L.bias[o];
              for (std::size_t i = 0; i < a.c; ++i)
                for (std::size_t ky = 0; ky < L.kernel_h; ++ky)
                  for (std::size_t kx = 0; kx < L.kernel_w; ++kx) {
                    const long sy = static_cast<long>(y * L.stride + ky) - pad;
                    const long sx = static_cast<long>(x * L.stride + kx) - pad;
                    if (sy < 0 || sx < 0 || sy >= static_cast<long>(a.h) ||
                        sx >= static_cast<long>(a.w))
                      continue;
                    s += L.weights[((o * a.c + i) * L.kernel_h + ky) * L.kernel_w + kx] *
                         a.at(i, sy, sx);
                  }
              b.at(o, y, x) = s;
            }
        break;
      }
      case LayerKind::kRelu:
        b = a;
        for (double& x : b.v) x = std::max(x, 0.0);
        break;
      case LayerKind::kMaxPool: {
        const long pad = L.pad;
        b = {a.c, (a.h + 2 * L.pad - L.kernel_h) / L.stride + 1,
             (a.w + 2 * L.pad - L.kernel_w) / L.stride + 1, {}};
        b.v.assign(b.c * b.h * b.w, -std::numeric_limits<double>::infinity());
        for (std::size_t k = 0; k < b.c; ++k)
          for (std::size_t y = 0; y < b.h; ++y)
            for (std::size_t x = 0; x < b.w; ++x)
              for (std::size_t ky = 0; ky < L.kernel_h; ++ky)
                for (std::size_t kx = 0; kx < L.kernel_w; ++kx) {
                  const long sy = static_cast<long>(y * L.stride + ky) - pad;
                  const long sx = static_cast<long>(x * L.stride + kx) - pad;
                  if (sy < 0 || sx < 0 || sy >= static_cast<long>(a.h) ||
                      sx >= static_cast<long>(a.w))
                    continue;
                  b.at(k, y, x) = std::max(b.at(k, y, x), a.at(k, sy, sx));
                }
        break;
      }
      case LayerKind::kLocalResponseNorm: {
        b = a;
        const long half = L.lrn_size / 2;
        for (long k = 0; k < static_cast<long>(a.c); ++k)
          for (std::size_t y = 0; y < a.h; ++y)
            for (std::size_t x = 0; x < a.w; ++x) {
              double s = 0;
              for (long j = std::max(0L, k - half);
                   j <= std::min(static_cast<long>(a.c) - 1, k + half); ++j)
                s += a.at(j, y, x) * a.at(j, y, x);
              b.at(k, y, x) =
                  a.at(k, y, x) / std::pow(L.lrn_k + L.lrn_alpha / L.lrn_size * s, L.lrn_beta);
            }
        break;
      }
      case LayerKind::kFullyConnected: {
        b = {L.out_channels, 1, 1, std::vector<double>(L.out_channels)};
        for (std::size_t o = 0; o < b.c; ++o) {
          double s = L.bias[o];
          for (std::size_t i = 0; i < a.v.size(); ++i) s += L.weights[o * a.v.size() + i] * a.v[i];
          b.v[o] = s;
        }
        break;
      }
    }
    a = std::move(b);
  }
  return a;
}

Tensor random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(c, h, w);
  for (float& x : t.data()) x = static_cast<float>(rng.uniform());
  return t;
}

double max_rel(std::span<const float> got, std::span<const double> want) {
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    scale = std::max(scale, std::abs(want[i]));
    diff = std::max(diff, std::abs(got[i] - want[i]));
  }
  return diff / std::max(scale, 1e-30);
}

const char* kCustomNet = R"(
# two convs, pooling, normalization, one fully-connected layer
input channels=3 size=227 target=fc1
conv name=conv1 out=4 kernel=11 stride=4 seed=3
relu name=relu1
lrn name=norm1 size=5 alpha=1e-2 beta=0.75 k=1
maxpool name=pool1 kernel=3 stride=2
conv name=conv2 out=6 kernel=5 stride=2 pad=2 seed=4
relu name=relu2
fc name=fc1 out=10 seed=5
)";

TEST(Convnet, OneByOneConvIsPerPixelAffine) {
  NetworkSpec net;
  net.input_channels = 2;
  net.standard_size = 3;
  LayerSpec conv = LayerSpec::conv("mix", 1, 1);
  conv.weights = {2.0f, -1.0f};
  conv.bias = {0.5f};
  net.layers = {conv};
  Tensor in(2, 3, 3);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) {
      in.at(0, y, x) = static_cast<float>(y + x);
      in.at(1, y, x) = static_cast<float>(y * x);
    }
  const Tensor out = forward(net, in);
  ASSERT_EQ(out.shape(), (Shape{1, 3, 3}));
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x)
      EXPECT_FLOAT_EQ(out.at(0, y, x), 2.0f * (y + x) - 1.0f * (y * x) + 0.5f);
}

TEST(Convnet, MatchesDoubleOracleOnFullSizeInput) {
  const NetworkSpec net = parse_network_manifest(kCustomNet);
  validate(net);
  const Tensor image = random_image(3, 227, 227, 99);
  ForwardStats stats;
  const Tensor got = forward(net, image, &stats);
  const Volume want = oracle_forward(net, image);
  ASSERT_EQ(got.size(), want.v.size());
  EXPECT_LT(max_rel(got.data(), want.v), 1e-5);
  EXPECT_EQ(stats.macs, count_macs(net, image.shape()));
}

TEST(Convnet, InferShapesFollowsLayerArithmetic) {
  const NetworkSpec net = parse_network_manifest(kCustomNet);
  const auto shapes = infer_shapes(net, Shape{3, 227, 227});
  ASSERT_EQ(shapes.size(), net.layers.size());
  EXPECT_EQ(shapes[0], (Shape{4, 55, 55}));
  EXPECT_EQ(shapes[3], (Shape{4, 27, 27}));
  EXPECT_EQ(shapes[4], (Shape{6, 14, 14}));
  EXPECT_EQ(shapes.back(), (Shape{10, 1, 1}));
}

TEST(Convnet, ShapeErrors) {
  NetworkSpec net = parse_network_manifest(kCustomNet);
  EXPECT_THROW(infer_shapes(net, Shape{1, 227, 227}), ConfigError);
  EXPECT_THROW(forward(net, Tensor(3, 100, 100)), InputError);

  NetworkSpec bad = net;
  bad.layers[0].weights.pop_back();
  EXPECT_THROW(validate(bad), ConfigError);

  NetworkSpec huge = net;
  huge.layers[4].kernel_h = huge.layers[4].kernel_w = 40;
  EXPECT_THROW(infer_shapes(huge, Shape{3, 227, 227}), ConfigError);

  EXPECT_THROW(parse_network_manifest("conv name=c out=2 kernel=3\n"), ConfigError);
  EXPECT_THROW(parse_network_manifest("input channels=1 size=8\nwarp name=x\n"), ConfigError);
}

TEST(Convnet, NonFiniteActivationNamesTheLayer) {
  const NetworkSpec net = parse_network_manifest(kCustomNet);
  Tensor image = random_image(3, 227, 227, 5);
  image.at(1, 100, 100) = std::numeric_limits<float>::quiet_NaN();
  try {
    forward(net, image);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("conv1"), std::string::npos) << e.what();
  }
}

TEST(Convnet, FullyConnectedConversionIsBitExactAtStandardSize) {
  const NetworkSpec net = make_toy_network(11);
  const NetworkSpec conv = convert_fc_to_conv(net);
  EXPECT_TRUE(net.has_fully_connected());
  EXPECT_FALSE(conv.has_fully_connected());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor image = random_image(1, 32, 32, seed);
    const Tensor a = forward(net, image);
    const Tensor b = forward(conv, image);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
  }
}

TEST(Convnet, DenseMatchesCropAndForwardAcrossScales) {
  const NetworkSpec net = make_toy_network(7);
  const NetworkSpec conv = convert_fc_to_conv(net);
  for (std::uint32_t s = 1; s <= 3; ++s) {
    const std::size_t edge = 32u << (s - 1);
    const Tensor image = random_image(1, edge, edge, 40 + s);
    DescriptorSet dense(32, 3), naive(32, 3);
    ForwardStats dense_stats, naive_stats;
    const std::size_t n = dense_activations(conv, image, s, dense, &dense_stats);
    ASSERT_EQ(naive_dense_activations(net, image, s, naive, &naive_stats), n);
    const std::size_t side = (edge - 32) / 8 + 1;
    EXPECT_EQ(n, side * side);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(dense.geometry(i), naive.geometry(i));
      const auto a = dense.row(i);
      const auto b = naive.row(i);
      double scale = 0, diff = 0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        scale = std::max(scale, std::abs(static_cast<double>(b[j])));
        diff = std::max(diff, std::abs(static_cast<double>(a[j]) - b[j]));
      }
      EXPECT_LE(diff, 1e-5 * std::max(scale, 1e-6)) << "scale " << s << " window " << i;
    }
    if (s > 1) EXPECT_LT(dense_stats.macs, naive_stats.macs);
  }
}

TEST(Convnet, DenseRequiresConvertedNetwork) {
  const NetworkSpec net = make_toy_network(7);
  DescriptorSet out(32, 1);
  EXPECT_THROW(dense_activations(net, Tensor(1, 32, 32), 1, out), ConfigError);
  EXPECT_THROW(dense_activations(convert_fc_to_conv(net), Tensor(1, 16, 16), 1, out), InputError);
}

TEST(Convnet, WindowGeometry) {
  const NetworkSpec net = make_toy_network(7);
  const DenseGeometry g = dense_geometry(net);
  EXPECT_EQ(g.stride, 8u);
  EXPECT_EQ(g.pad, 0u);
  EXPECT_EQ(g.window, 32u);

  DescriptorSet out(32, 2);
  dense_activations(convert_fc_to_conv(net), Tensor(1, 64, 64, 0.5f), 2, out);
  ASSERT_EQ(out.size(), 25u);
  EXPECT_FLOAT_EQ(out.geometry(0).center_x, 0.25f);
  EXPECT_FLOAT_EQ(out.geometry(0).center_y, 0.25f);
  EXPECT_FLOAT_EQ(out.geometry(0).edge, 0.5f);
  EXPECT_FLOAT_EQ(out.geometry(24).center_x, 0.75f);
  EXPECT_EQ(out.geometry(24).scale, 2u);
  // Row-major: entry 1 moves right by one stride.
  EXPECT_FLOAT_EQ(out.geometry(1).center_x, 0.25f + 8.0f / 64.0f);
  EXPECT_FLOAT_EQ(out.geometry(1).center_y, 0.25f);
}

TEST(Convnet, ReferenceLayoutStride) {
  const NetworkSpec net = reference_alex_layout();
  EXPECT_EQ(dense_output_shape(net, 227), (Shape{4096, 1, 1}));
  EXPECT_EQ(dense_output_shape(net, 227 + 32), (Shape{4096, 2, 2}));
  EXPECT_EQ(dense_geometry(net).stride, 32u);
}

TEST(Convnet, BinaryRoundTripAndTruncation) {
  testing::TempDir dir;
  const NetworkSpec net = make_toy_network(3);
  const std::string path = dir.file("toy.mppn");
  save_network(net, path);
  const NetworkSpec back = load_network_any(path);
  ASSERT_EQ(back.layers.size(), net.layers.size());
  EXPECT_EQ(back.target_layer, net.target_layer);
  const Tensor image = random_image(1, 32, 32, 1);
  const Tensor a = forward(net, image), b = forward(back, image);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  EXPECT_THROW(load_network(path), FormatError);
}

TEST(Convnet, TextManifestInlineWeights) {
  const NetworkSpec net = parse_network_manifest(
      "input channels=1 size=2 target=fc\n"
      "fc name=fc out=1 w=1,2,3,4 b=0.5\n");
  Tensor in(1, 2, 2);
  in.at(0, 0, 0) = 1;
  in.at(0, 0, 1) = 1;
  in.at(0, 1, 0) = 1;
  in.at(0, 1, 1) = 1;
  EXPECT_FLOAT_EQ(forward(net, in).data()[0], 10.5f);
}

}  // namespace
}  // namespace mpp
