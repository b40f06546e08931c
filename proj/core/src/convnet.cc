#include "mpp/convnet.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "mpp/binary_io.h"
#include "mpp/errors.h"
#include "mpp/random.h"

namespace mpp {
namespace {

constexpr std::uint32_t kNetworkVersion = 1;

bool has_weights(LayerKind kind) {
  return kind == LayerKind::kConv || kind == LayerKind::kFullyConnected;
}

std::string layer_label(const NetworkSpec& net, std::size_t index) {
  const LayerSpec& layer = net.layers[index];
  std::string label = "layer " + std::to_string(index) + " (" +
                      layer_kind_name(layer.kind);
  if (!layer.name.empty()) label += " '" + layer.name + "'";
  return label + ")";
}

std::string shape_str(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

std::size_t window_output(std::size_t in, std::uint32_t kernel,
                          std::uint32_t stride, std::uint32_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// Shapes of every layer output. `fc_inputs`, when given, pins the input shape
// each fully-connected layer must see (its standard-size input).
std::vector<Shape> infer_chain(const NetworkSpec& net, Shape input,
                               const std::vector<Shape>* fc_inputs) {
  if (net.layers.empty()) throw ConfigError("network has no layers");
  if (net.target_layer >= net.layers.size()) {
    throw ConfigError("target layer index " + std::to_string(net.target_layer) +
                      " out of range");
  }
  if (input.channels != net.input_channels) {
    throw ConfigError("input has " + std::to_string(input.channels) +
                      " channels, network expects " +
                      std::to_string(net.input_channels));
  }
  std::vector<Shape> shapes;
  shapes.reserve(net.target_layer + 1);
  Shape cur = input;
  for (std::size_t i = 0; i <= net.target_layer; ++i) {
    const LayerSpec& layer = net.layers[i];
    switch (layer.kind) {
      case LayerKind::kConv:
      case LayerKind::kMaxPool: {
        if (layer.stride < 1 || layer.kernel_h < 1 || layer.kernel_w < 1) {
          throw ConfigError(layer_label(net, i) + ": kernel and stride must be >= 1");
        }
        if (layer.kernel_h > cur.height + 2 * layer.pad ||
            layer.kernel_w > cur.width + 2 * layer.pad) {
          throw ConfigError(layer_label(net, i) + ": kernel " +
                            std::to_string(layer.kernel_h) + "x" +
                            std::to_string(layer.kernel_w) +
                            " larger than padded input " + shape_str(cur));
        }
        if (layer.kind == LayerKind::kConv && layer.out_channels == 0) {
          throw ConfigError(layer_label(net, i) + ": zero output channels");
        }
        const std::size_t oc =
            layer.kind == LayerKind::kConv ? layer.out_channels : cur.channels;
        cur = Shape{oc, window_output(cur.height, layer.kernel_h, layer.stride, layer.pad),
                    window_output(cur.width, layer.kernel_w, layer.stride, layer.pad)};
        break;
      }
      case LayerKind::kRelu:
      case LayerKind::kLocalResponseNorm:
        break;
      case LayerKind::kFullyConnected: {
        if (layer.out_channels == 0) {
          throw ConfigError(layer_label(net, i) + ": zero outputs");
        }
        if (fc_inputs != nullptr && !((*fc_inputs)[i] == cur)) {
          throw ConfigError(layer_label(net, i) + " expects input " +
                            shape_str((*fc_inputs)[i]) + ", got " + shape_str(cur) +
                            "; convert the network before dense evaluation");
        }
        cur = Shape{layer.out_channels, 1, 1};
        break;
      }
    }
    shapes.push_back(cur);
  }
  return shapes;
}

// Input shape seen by each layer at the standard size (index-aligned).
std::vector<Shape> standard_inputs(const NetworkSpec& net) {
  const Shape input{net.input_channels, net.standard_size, net.standard_size};
  const auto outs = infer_chain(net, input, nullptr);
  std::vector<Shape> ins(net.layers.size());
  for (std::size_t i = 0; i < outs.size(); ++i) ins[i] = i == 0 ? input : outs[i - 1];
  return ins;
}

void conv_layer(const LayerSpec& layer, const Tensor& in, Tensor& out,
                ForwardStats* stats) {
  const Tensor* src = &in;
  Tensor padded;
  if (layer.pad > 0) {
    padded = Tensor(in.channels(), in.height() + 2 * layer.pad,
                    in.width() + 2 * layer.pad);
    for (std::size_t c = 0; c < in.channels(); ++c) {
      for (std::size_t y = 0; y < in.height(); ++y) {
        const auto row = in.plane(c).subspan(y * in.width(), in.width());
        std::copy(row.begin(), row.end(), &padded.at(c, y + layer.pad, layer.pad));
      }
    }
    src = &padded;
  }
  const std::size_t in_c = src->channels();
  const std::size_t oh = out.height();
  const std::size_t ow = out.width();
  const std::size_t kh = layer.kernel_h;
  const std::size_t kw = layer.kernel_w;
  const std::size_t stride = layer.stride;
  const std::size_t in_w = src->width();
  const float* weights = layer.weights.data();

  for (std::size_t co = 0; co < out.channels(); ++co) {
    auto out_plane = out.plane(co);
    std::fill(out_plane.begin(), out_plane.end(), layer.bias[co]);
    for (std::size_t ci = 0; ci < in_c; ++ci) {
      const float* in_plane = src->plane(ci).data();
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const float w = weights[((co * in_c + ci) * kh + ky) * kw + kx];
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const float* in_row = in_plane + (oy * stride + ky) * in_w + kx;
            float* out_row = out_plane.data() + oy * ow;
            if (stride == 1) {
              for (std::size_t ox = 0; ox < ow; ++ox) out_row[ox] += w * in_row[ox];
            } else {
              for (std::size_t ox = 0; ox < ow; ++ox) {
                out_row[ox] += w * in_row[ox * stride];
              }
            }
          }
        }
      }
    }
  }
  if (stats != nullptr) {
    stats->macs += static_cast<std::uint64_t>(out.size()) * in_c * kh * kw;
  }
}

// Accumulation order (bias, then input in channel-major order) matches
// conv_layer with a full-extent kernel, so converted networks agree bit-for-bit.
void fc_layer(const LayerSpec& layer, const Tensor& in, Tensor& out,
              ForwardStats* stats) {
  const std::size_t n = in.size();
  const auto x = in.data();
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const float* w = layer.weights.data() + o * n;
    float acc = layer.bias[o];
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * x[i];
    out.data()[o] = acc;
  }
  if (stats != nullptr) stats->macs += static_cast<std::uint64_t>(layer.out_channels) * n;
}

void max_pool_layer(const LayerSpec& layer, const Tensor& in, Tensor& out) {
  const long pad = layer.pad;
  for (std::size_t c = 0; c < out.channels(); ++c) {
    for (std::size_t oy = 0; oy < out.height(); ++oy) {
      for (std::size_t ox = 0; ox < out.width(); ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        const long y0 = static_cast<long>(oy * layer.stride) - pad;
        const long x0 = static_cast<long>(ox * layer.stride) - pad;
        for (long ky = 0; ky < static_cast<long>(layer.kernel_h); ++ky) {
          const long y = y0 + ky;
          if (y < 0 || y >= static_cast<long>(in.height())) continue;
          for (long kx = 0; kx < static_cast<long>(layer.kernel_w); ++kx) {
            const long x = x0 + kx;
            if (x < 0 || x >= static_cast<long>(in.width())) continue;
            best = std::max(best, in.at(c, y, x));
          }
        }
        out.at(c, oy, ox) = best;
      }
    }
  }
}

void lrn_layer(const LayerSpec& layer, const Tensor& in, Tensor& out) {
  const long channels = static_cast<long>(in.channels());
  const long half = static_cast<long>(layer.lrn_size) / 2;
  const std::size_t plane = in.height() * in.width();
  for (long c = 0; c < channels; ++c) {
    const long lo = std::max(0L, c - half);
    const long hi = std::min(channels - 1, c + half);
    for (std::size_t p = 0; p < plane; ++p) {
      float sum_sq = 0.0f;
      for (long k = lo; k <= hi; ++k) {
        const float a = in.plane(k)[p];
        sum_sq += a * a;
      }
      const float scale =
          std::pow(layer.lrn_k + layer.lrn_alpha / layer.lrn_size * sum_sq, layer.lrn_beta);
      out.plane(c)[p] = in.plane(c)[p] / scale;
    }
  }
}

std::vector<float> he_normal(std::size_t count, std::size_t fan_in, Rng& rng) {
  std::vector<float> w(count);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w) v = static_cast<float>(rng.normal() * stddev);
  return w;
}

void init_layer(LayerSpec& layer, const Shape& input, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t fan_in = layer.kind == LayerKind::kConv
                                 ? input.channels * layer.kernel_h * layer.kernel_w
                                 : input.size();
  layer.weights = he_normal(layer.out_channels * fan_in, fan_in, rng);
  layer.bias.resize(layer.out_channels);
  for (auto& b : layer.bias) b = static_cast<float>(0.01 * rng.normal());
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kLocalResponseNorm: return "lrn";
    case LayerKind::kFullyConnected: return "fc";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv(std::string name, std::uint32_t out, std::uint32_t kernel,
                          std::uint32_t stride, std::uint32_t pad) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.name = std::move(name);
  l.out_channels = out;
  l.kernel_h = l.kernel_w = kernel;
  l.stride = stride;
  l.pad = pad;
  return l;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::kRelu;
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::max_pool(std::string name, std::uint32_t kernel,
                              std::uint32_t stride, std::uint32_t pad) {
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.name = std::move(name);
  l.kernel_h = l.kernel_w = kernel;
  l.stride = stride;
  l.pad = pad;
  return l;
}

LayerSpec LayerSpec::fully_connected(std::string name, std::uint32_t out) {
  LayerSpec l;
  l.kind = LayerKind::kFullyConnected;
  l.name = std::move(name);
  l.out_channels = out;
  return l;
}

bool NetworkSpec::has_fully_connected() const {
  return std::any_of(layers.begin(), layers.end(), [](const LayerSpec& l) {
    return l.kind == LayerKind::kFullyConnected;
  });
}

std::vector<Shape> infer_shapes(const NetworkSpec& net, Shape input) {
  if (!net.has_fully_connected()) return infer_chain(net, input, nullptr);
  const auto fc_inputs = standard_inputs(net);
  return infer_chain(net, input, &fc_inputs);
}

void validate(const NetworkSpec& net) {
  if (net.standard_size == 0) throw ConfigError("standard size must be positive");
  const auto ins = standard_inputs(net);
  bool saw_feature_layer = false;
  for (std::size_t i = 0; i <= net.target_layer; ++i) {
    const LayerSpec& layer = net.layers[i];
    if (layer.kind == LayerKind::kConv || layer.kind == LayerKind::kFullyConnected) {
      saw_feature_layer = true;
    }
    if (!has_weights(layer.kind)) continue;
    const std::size_t fan_in = layer.kind == LayerKind::kConv
                                   ? ins[i].channels * layer.kernel_h * layer.kernel_w
                                   : ins[i].size();
    const std::size_t expected = layer.out_channels * fan_in;
    if (layer.weights.size() != expected) {
      throw ConfigError(layer_label(net, i) + ": weight payload has " +
                        std::to_string(layer.weights.size()) + " values, expected " +
                        std::to_string(expected));
    }
    if (layer.bias.size() != layer.out_channels) {
      throw ConfigError(layer_label(net, i) + ": bias payload has " +
                        std::to_string(layer.bias.size()) + " values, expected " +
                        std::to_string(layer.out_channels));
    }
  }
  if (!saw_feature_layer) {
    throw ConfigError("target layer precedes every conv / fully-connected layer");
  }
}

std::uint64_t count_macs(const NetworkSpec& net, Shape input) {
  const std::vector<Shape> shapes = infer_shapes(net, input);
  std::uint64_t macs = 0;
  Shape in = input;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    if (layer.kind == LayerKind::kConv) {
      macs += static_cast<std::uint64_t>(shapes[i].size()) * in.channels * layer.kernel_h *
              layer.kernel_w;
    } else if (layer.kind == LayerKind::kFullyConnected) {
      macs += static_cast<std::uint64_t>(layer.out_channels) * in.size();
    }
    in = shapes[i];
  }
  return macs;
}

Tensor forward(const NetworkSpec& net, const Tensor& input, ForwardStats* stats) {
  if (input.height() < net.standard_size || input.width() < net.standard_size) {
    throw InputError("input " + shape_str(input.shape()) +
                     " is smaller than the standard size " +
                     std::to_string(net.standard_size));
  }
  const auto shapes = infer_shapes(net, input.shape());
  validate(net);

  Tensor cur = input;
  for (std::size_t i = 0; i <= net.target_layer; ++i) {
    const LayerSpec& layer = net.layers[i];
    switch (layer.kind) {
      case LayerKind::kConv: {
        Tensor out(shapes[i]);
        conv_layer(layer, cur, out, stats);
        cur = std::move(out);
        break;
      }
      case LayerKind::kFullyConnected: {
        Tensor out(shapes[i]);
        fc_layer(layer, cur, out, stats);
        cur = std::move(out);
        break;
      }
      case LayerKind::kMaxPool: {
        Tensor out(shapes[i]);
        max_pool_layer(layer, cur, out);
        cur = std::move(out);
        break;
      }
      case LayerKind::kLocalResponseNorm: {
        Tensor out(shapes[i]);
        lrn_layer(layer, cur, out);
        cur = std::move(out);
        break;
      }
      case LayerKind::kRelu:
        for (float& v : cur.data()) v = std::max(v, 0.0f);
        break;
    }
    if (!cur.all_finite()) {
      throw NumericError("non-finite activation after " + layer_label(net, i));
    }
  }
  return cur;
}

NetworkSpec convert_fc_to_conv(const NetworkSpec& net) {
  if (!net.has_fully_connected()) return net;
  const auto ins = standard_inputs(net);
  NetworkSpec out = net;
  // Layers past the target are never evaluated and have no defined input.
  out.layers.resize(net.target_layer + 1);
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    LayerSpec& layer = out.layers[i];
    if (layer.kind != LayerKind::kFullyConnected) continue;
    const Shape& in = ins[i];
    if (!layer.weights.empty() && layer.weights.size() != layer.out_channels * in.size()) {
      throw ConfigError(layer_label(net, i) + ": " + std::to_string(layer.weights.size()) +
                        " weights cannot be reshaped over a " + shape_str(in) + " input");
    }
    layer.kind = LayerKind::kConv;
    layer.kernel_h = static_cast<std::uint32_t>(in.height);
    layer.kernel_w = static_cast<std::uint32_t>(in.width);
    layer.stride = 1;
    layer.pad = 0;
  }
  return out;
}

DenseGeometry dense_geometry(const NetworkSpec& net) {
  const NetworkSpec converted = convert_fc_to_conv(net);
  DenseGeometry g;
  g.window = net.standard_size;
  std::uint64_t jump = 1;
  std::uint64_t pad = 0;
  std::uint64_t rf = 1;
  for (std::size_t i = 0; i <= converted.target_layer; ++i) {
    const LayerSpec& layer = converted.layers[i];
    if (layer.kind != LayerKind::kConv && layer.kind != LayerKind::kMaxPool) continue;
    pad += layer.pad * jump;
    rf += (std::max(layer.kernel_h, layer.kernel_w) - 1) * jump;
    jump *= layer.stride;
  }
  g.stride = static_cast<std::uint32_t>(jump);
  g.pad = static_cast<std::uint32_t>(pad);
  g.receptive_field = static_cast<std::uint32_t>(rf);
  return g;
}

Shape dense_output_shape(const NetworkSpec& net, std::uint32_t edge) {
  const NetworkSpec converted = convert_fc_to_conv(net);
  return infer_chain(converted, Shape{net.input_channels, edge, edge}, nullptr).back();
}

namespace {

PatchGeometry window_geometry(const DenseGeometry& g, std::size_t i, std::size_t j,
                              std::size_t height, std::size_t width, std::uint32_t scale) {
  const double y0 = static_cast<double>(i) * g.stride - g.pad;
  const double x0 = static_cast<double>(j) * g.stride - g.pad;
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  const double top = std::clamp(y0, 0.0, h);
  const double bottom = std::clamp(y0 + g.window, 0.0, h);
  const double left = std::clamp(x0, 0.0, w);
  const double right = std::clamp(x0 + g.window, 0.0, w);
  PatchGeometry geo;
  geo.scale = scale;
  geo.center_x = static_cast<float>((left + right) / (2.0 * w));
  geo.center_y = static_cast<float>((top + bottom) / (2.0 * h));
  geo.edge = static_cast<float>(
      std::clamp(std::max((right - left) / w, (bottom - top) / h), 1e-9, 1.0));
  return geo;
}

}  // namespace

std::size_t dense_activations(const NetworkSpec& converted, const Tensor& image,
                              std::uint32_t scale, DescriptorSet& out,
                              ForwardStats* stats) {
  if (converted.has_fully_connected()) {
    throw ConfigError("dense_activations needs a converted network");
  }
  if (image.height() < converted.standard_size || image.width() < converted.standard_size) {
    throw InputError("image " + shape_str(image.shape()) + " is smaller than the standard size " +
                     std::to_string(converted.standard_size));
  }
  const Tensor map = forward(converted, image, stats);
  if (map.channels() != out.dim()) {
    throw InputError("descriptor set dim " + std::to_string(out.dim()) +
                     " != target channels " + std::to_string(map.channels()));
  }
  const DenseGeometry g = dense_geometry(converted);
  std::vector<float> column(map.channels());
  out.reserve(out.size() + map.height() * map.width());
  for (std::size_t i = 0; i < map.height(); ++i) {
    for (std::size_t j = 0; j < map.width(); ++j) {
      for (std::size_t c = 0; c < map.channels(); ++c) column[c] = map.at(c, i, j);
      out.append(column, window_geometry(g, i, j, image.height(), image.width(), scale));
    }
  }
  return map.height() * map.width();
}

std::size_t naive_dense_activations(const NetworkSpec& net, const Tensor& image,
                                    std::uint32_t scale, DescriptorSet& out,
                                    ForwardStats* stats) {
  if (image.height() < net.standard_size || image.width() < net.standard_size) {
    throw InputError("image is smaller than the standard size");
  }
  const NetworkSpec converted = convert_fc_to_conv(net);
  const Shape map = infer_chain(converted, image.shape(), nullptr).back();
  const DenseGeometry g = dense_geometry(net);
  const long win = g.window;
  for (std::size_t i = 0; i < map.height; ++i) {
    for (std::size_t j = 0; j < map.width; ++j) {
      const long y0 = static_cast<long>(i * g.stride) - g.pad;
      const long x0 = static_cast<long>(j * g.stride) - g.pad;
      Tensor window(image.channels(), win, win);
      for (std::size_t c = 0; c < image.channels(); ++c) {
        for (long y = 0; y < win; ++y) {
          const long sy = y0 + y;
          if (sy < 0 || sy >= static_cast<long>(image.height())) continue;
          for (long x = 0; x < win; ++x) {
            const long sx = x0 + x;
            if (sx < 0 || sx >= static_cast<long>(image.width())) continue;
            window.at(c, y, x) = image.at(c, sy, sx);
          }
        }
      }
      const Tensor act = forward(net, window, stats);
      out.append(act.data(), window_geometry(g, i, j, image.height(), image.width(), scale));
    }
  }
  return map.height * map.width;
}

NetworkSpec make_toy_network(std::uint64_t seed, std::uint32_t input_channels) {
  NetworkSpec net;
  net.input_channels = input_channels;
  net.standard_size = 32;
  net.layers = {
      LayerSpec::conv("conv1", 8, 5, 2),
      LayerSpec::relu("relu1"),
      LayerSpec::max_pool("pool1", 2, 2),
      LayerSpec::conv("conv2", 16, 3, 2),
      LayerSpec::relu("relu2"),
      LayerSpec::fully_connected("fc1", 32),
      LayerSpec::relu("fc1_relu"),
      LayerSpec::fully_connected("fc2", 32),
      LayerSpec::relu("fc2_relu"),
  };
  net.target_layer = net.layers.size() - 1;
  const auto ins = standard_inputs(net);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (has_weights(net.layers[i].kind)) {
      init_layer(net.layers[i], ins[i], derive_seed(seed, i));
    }
  }
  return net;
}

NetworkSpec reference_alex_layout() {
  NetworkSpec net;
  net.input_channels = 3;
  net.standard_size = 227;
  net.layers = {
      LayerSpec::conv("conv1", 96, 11, 4),   LayerSpec::relu("relu1"),
      LayerSpec::max_pool("pool1", 3, 2),    LayerSpec::conv("conv2", 256, 5, 1, 2),
      LayerSpec::relu("relu2"),              LayerSpec::max_pool("pool2", 3, 2),
      LayerSpec::conv("conv3", 384, 3, 1, 1), LayerSpec::relu("relu3"),
      LayerSpec::conv("conv4", 384, 3, 1, 1), LayerSpec::relu("relu4"),
      LayerSpec::conv("conv5", 256, 3, 1, 1), LayerSpec::relu("relu5"),
      LayerSpec::max_pool("pool5", 3, 2),    LayerSpec::fully_connected("fc6", 4096),
      LayerSpec::relu("relu6"),              LayerSpec::fully_connected("fc7", 4096),
      LayerSpec::relu("relu7"),
  };
  net.target_layer = net.layers.size() - 1;
  return net;
}

void save_network(const NetworkSpec& net, const std::string& path) {
  validate(net);
  BinaryWriter w(path);
  w.magic("MPPN");
  w.u32(kNetworkVersion);
  w.u32(net.input_channels);
  w.u32(net.standard_size);
  w.u32(static_cast<std::uint32_t>(net.target_layer));
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const LayerSpec& l : net.layers) {
    w.u32(static_cast<std::uint32_t>(l.kind));
    w.str(l.name);
    w.u32(l.out_channels);
    w.u32(l.kernel_h);
    w.u32(l.kernel_w);
    w.u32(l.stride);
    w.u32(l.pad);
    w.u32(l.lrn_size);
    w.f32(l.lrn_alpha);
    w.f32(l.lrn_beta);
    w.f32(l.lrn_k);
    w.u64(l.weights.size());
    w.f32_array(std::span<const float>(l.weights));
    w.u64(l.bias.size());
    w.f32_array(std::span<const float>(l.bias));
  }
  w.close();
}

NetworkSpec load_network(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic("MPPN");
  const std::uint32_t version = r.u32();
  if (version != kNetworkVersion) {
    throw FormatError(path + ": unsupported MPPN version " + std::to_string(version));
  }
  NetworkSpec net;
  net.input_channels = r.u32();
  net.standard_size = r.u32();
  net.target_layer = r.u32();
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 4096) throw FormatError(path + ": bad layer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec l;
    const std::uint32_t kind = r.u32();
    if (kind > static_cast<std::uint32_t>(LayerKind::kFullyConnected)) {
      throw FormatError(path + ": unknown layer kind " + std::to_string(kind));
    }
    l.kind = static_cast<LayerKind>(kind);
    l.name = r.str();
    l.out_channels = r.u32();
    l.kernel_h = r.u32();
    l.kernel_w = r.u32();
    l.stride = r.u32();
    l.pad = r.u32();
    l.lrn_size = r.u32();
    l.lrn_alpha = r.f32();
    l.lrn_beta = r.f32();
    l.lrn_k = r.f32();
    const std::uint64_t nw = r.u64();
    if (nw > (1ull << 32)) throw FormatError(path + ": weight payload too large");
    l.weights = r.f32_array(nw);
    const std::uint64_t nb = r.u64();
    if (nb > (1ull << 32)) throw FormatError(path + ": bias payload too large");
    l.bias = r.f32_array(nb);
    net.layers.push_back(std::move(l));
  }
  validate(net);
  return net;
}

namespace {

std::vector<float> parse_float_list(const std::string& text, int line) {
  std::vector<float> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(std::stof(item));
    } catch (const std::exception&) {
      throw ConfigError("manifest line " + std::to_string(line) + ": bad number '" + item + "'");
    }
  }
  return values;
}

std::uint32_t parse_u32(const std::string& text, int line) {
  std::uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("manifest line " + std::to_string(line) + ": bad integer '" + text + "'");
  }
  return v;
}

}  // namespace

NetworkSpec parse_network_manifest(const std::string& text) {
  NetworkSpec net;
  bool saw_input = false;
  std::string target_name;
  std::map<std::size_t, std::uint64_t> seeds;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream tokens(raw);
    std::string head;
    if (!(tokens >> head)) continue;
    std::map<std::string, std::string> kv;
    std::string tok;
    while (tokens >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("manifest line " + std::to_string(line_no) + ": expected key=value, got '" + tok + "'");
      }
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto take = [&](const std::string& key) -> std::optional<std::string> {
      const auto it = kv.find(key);
      if (it == kv.end()) return std::nullopt;
      std::string v = it->second;
      kv.erase(it);
      return v;
    };
    auto take_u32 = [&](const std::string& key, std::uint32_t fallback) {
      const auto v = take(key);
      return v ? parse_u32(*v, line_no) : fallback;
    };

    if (head == "input") {
      net.input_channels = take_u32("channels", 3);
      net.standard_size = take_u32("size", 227);
      target_name = take("target").value_or("");
      saw_input = true;
    } else {
      LayerSpec l;
      l.name = take("name").value_or(head + std::to_string(net.layers.size()));
      if (head == "conv" || head == "fc") {
        l.kind = head == "conv" ? LayerKind::kConv : LayerKind::kFullyConnected;
        l.out_channels = take_u32("out", 0);
      } else if (head == "relu") {
        l.kind = LayerKind::kRelu;
      } else if (head == "maxpool") {
        l.kind = LayerKind::kMaxPool;
      } else if (head == "lrn") {
        l.kind = LayerKind::kLocalResponseNorm;
        l.lrn_size = take_u32("size", 5);
        if (auto v = take("alpha")) l.lrn_alpha = std::stof(*v);
        if (auto v = take("beta")) l.lrn_beta = std::stof(*v);
        if (auto v = take("k")) l.lrn_k = std::stof(*v);
      } else {
        throw ConfigError("manifest line " + std::to_string(line_no) + ": unknown layer kind '" + head + "'");
      }
      if (l.kind == LayerKind::kConv || l.kind == LayerKind::kMaxPool) {
        const std::uint32_t k = take_u32("kernel", 1);
        l.kernel_h = take_u32("kernel_h", k);
        l.kernel_w = take_u32("kernel_w", k);
        l.stride = take_u32("stride", 1);
        l.pad = take_u32("pad", 0);
      }
      if (has_weights(l.kind)) {
        if (auto v = take("w")) l.weights = parse_float_list(*v, line_no);
        if (auto v = take("b")) l.bias = parse_float_list(*v, line_no);
        if (auto v = take("seed")) seeds[net.layers.size()] = std::stoull(*v);
      }
      net.layers.push_back(std::move(l));
    }
    if (!kv.empty()) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": unknown key '" + kv.begin()->first + "'");
    }
  }
  if (!saw_input) throw ConfigError("manifest lacks an 'input' line");
  if (net.layers.empty()) throw ConfigError("manifest declares no layers");

  net.target_layer = net.layers.size() - 1;
  if (!target_name.empty()) {
    const auto it = std::find_if(net.layers.begin(), net.layers.end(),
                                 [&](const LayerSpec& l) { return l.name == target_name; });
    if (it == net.layers.end()) throw ConfigError("target layer '" + target_name + "' not found");
    net.target_layer = static_cast<std::size_t>(it - net.layers.begin());
  }
  if (!seeds.empty()) {
    const auto ins = standard_inputs(net);
    for (const auto& [index, seed] : seeds) init_layer(net.layers[index], ins[index], seed);
  }
  validate(net);
  return net;
}

NetworkSpec load_network_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open network manifest '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_network_manifest(ss.str());
}

NetworkSpec load_network_any(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open network file '" + path + "'");
  char tag[4] = {};
  in.read(tag, 4);
  if (in.gcount() == 4 && std::string(tag, 4) == "MPPN") return load_network(path);
  return load_network_manifest(path);
}

}  // namespace mpp
