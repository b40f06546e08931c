#ifndef MPP_CONVNET_H_
#define MPP_CONVNET_H_

#include <cstdint>
#include <string>
#include <vector>

#include "mpp/descriptor_set.h"
#include "mpp/tensor.h"

namespace mpp {

enum class LayerKind : std::uint32_t {
  kConv = 0,
  kRelu = 1,
  kMaxPool = 2,
  kLocalResponseNorm = 3,
  kFullyConnected = 4,
};

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::string name;

  // conv / fully-connected: out_channels is the filter (or output) count.
  // conv / maxpool: kernel, stride and zero padding.
  std::uint32_t out_channels = 0;
  std::uint32_t kernel_h = 1;
  std::uint32_t kernel_w = 1;
  std::uint32_t stride = 1;
  std::uint32_t pad = 0;

  // Across-channel local response normalization:
  //   b = a / (k + alpha / size * sum a^2)^beta
  std::uint32_t lrn_size = 5;
  float lrn_alpha = 1e-4f;
  float lrn_beta = 0.75f;
  float lrn_k = 1.0f;

  // conv: out x in x kh x kw.  fully-connected: out x (c*h*w of its input,
  // flattened channel-major).
  std::vector<float> weights;
  std::vector<float> bias;

  static LayerSpec conv(std::string name, std::uint32_t out,
                        std::uint32_t kernel, std::uint32_t stride = 1,
                        std::uint32_t pad = 0);
  static LayerSpec relu(std::string name);
  static LayerSpec max_pool(std::string name, std::uint32_t kernel,
                            std::uint32_t stride, std::uint32_t pad = 0);
  static LayerSpec fully_connected(std::string name, std::uint32_t out);
};

// Layer chain plus the fixed input edge it was designed for. forward() returns
// the output of layers[target_layer].
struct NetworkSpec {
  std::uint32_t input_channels = 3;
  std::uint32_t standard_size = 227;
  std::vector<LayerSpec> layers;
  std::size_t target_layer = 0;

  bool has_fully_connected() const;
};

// Output shape of every layer (up to and including the target) for an input
// of the given shape. Needs geometry only, not weights.
// Throws ConfigError on any inconsistency.
std::vector<Shape> infer_shapes(const NetworkSpec& net, Shape input);

// Shape inference at the standard size plus payload-length checks.
void validate(const NetworkSpec& net);

// Multiply-accumulate counter for conv and fully-connected layers.
struct ForwardStats {
  std::uint64_t macs = 0;
};

// MACs forward() would count for an input of the given shape, from shape
// inference alone.
std::uint64_t count_macs(const NetworkSpec& net, Shape input);

// Runs the chain up to the target layer. Requires input.channels ==
// input_channels and spatial size >= standard_size.
Tensor forward(const NetworkSpec& net, const Tensor& input,
               ForwardStats* stats = nullptr);

// Rewrites each fully-connected layer as an equivalent convolution: the first
// gets a kernel equal to its input extent at the standard size, later ones are
// 1x1. Weight memory layout is unchanged.
NetworkSpec convert_fc_to_conv(const NetworkSpec& net);

// Sliding-window bookkeeping of the target layer: output position (i, j)
// corresponds to the standard_size window whose top-left input pixel is
// (i * stride - pad, j * stride - pad).
struct DenseGeometry {
  std::uint32_t stride = 1;
  std::uint32_t pad = 0;
  std::uint32_t window = 0;  // == standard_size
  std::uint32_t receptive_field = 0;
};
DenseGeometry dense_geometry(const NetworkSpec& net);

// Target-layer map size for a square input of the given edge.
Shape dense_output_shape(const NetworkSpec& net, std::uint32_t edge);

// One descriptor per target-layer location of a converted network applied to
// `image` (square, edge >= standard_size). Entries are tagged with `scale` and
// appended in row-major order. Returns the number of entries appended.
// Matches naive_dense_activations exactly when no layer pads; padded layers
// see neighbouring pixels where the cropped window would see zeros.
std::size_t dense_activations(const NetworkSpec& converted, const Tensor& image,
                              std::uint32_t scale, DescriptorSet& out,
                              ForwardStats* stats = nullptr);

// Reference path: crops every standard-size window and runs forward() on each.
std::size_t naive_dense_activations(const NetworkSpec& net, const Tensor& image,
                                    std::uint32_t scale, DescriptorSet& out,
                                    ForwardStats* stats = nullptr);

// Desk-scale stand-in for the pre-trained network: seeded random weights,
// standard size 32, two conv layers, two fully-connected layers (target: the
// ReLU after the second), total stride 8, 32-dimensional descriptors.
NetworkSpec make_toy_network(std::uint64_t seed,
                             std::uint32_t input_channels = 1);

// Geometry-only replica of the Caffe reference (AlexNet-style) model up to
// FC7: no weights, usable with infer_shapes / dense_output_shape.
NetworkSpec reference_alex_layout();

// "MPPN" binary container.
void save_network(const NetworkSpec& net, const std::string& path);
NetworkSpec load_network(const std::string& path);

// Text manifest, one layer per line:
//   input channels=1 size=32 target=fc2_relu
//   conv name=conv1 out=8 kernel=5 stride=2 pad=0 seed=11
//   relu name=relu1
//   maxpool name=pool1 kernel=2 stride=2
//   lrn name=norm1 size=5 alpha=1e-4 beta=0.75 k=1
//   fc name=fc1 out=32 seed=12
// Weights come from `seed=` (He-normal init) or inline `w=a,b,...` and
// `b=a,b,...` lists. '#' starts a comment.
NetworkSpec parse_network_manifest(const std::string& text);
NetworkSpec load_network_manifest(const std::string& path);

// Dispatches on content: "MPPN" magic -> binary, otherwise text manifest.
NetworkSpec load_network_any(const std::string& path);

}  // namespace mpp

#endif  // MPP_CONVNET_H_
