#pragma once

// Hybrid ANN/SNN blocks and the VGG / ResNet model builders.
//
// Every hybrid block runs its input through two paths and adds the results:
//   ann: ordinary conv/linear layers with BN and ReLU;
//   snn: clamp to [0,1] -> bit-plane encode -> per-step layers with IF
//        neurons -> decode.
//
// VGG:    [conv block + pool] x d_max -> GAP -> MLP block -> linear head
//         conv block d has 3 b m^d output channels, the MLP block is twice
//         as wide as the last conv block.
// ResNet: conv7x7/2 stem block (b m channels) + pool
//         -> stage 1: basic, basic            (b channels)
//         -> stage d > 1: downsample, basic   (b m^(d-1) channels)
//         -> GAP -> linear head

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "has8/codec.hpp"
#include "has8/layers.hpp"
#include "has8/neuron.hpp"

namespace has8 {

enum class Variant { kVgg, kResNet };
std::string_view variant_name(Variant v);
// "vgg" | "resnet"
Variant parse_variant(std::string_view name);

struct ModelSpec {
  Variant variant = Variant::kVgg;
  std::size_t b = 16;
  std::size_t m = 2;
  std::size_t d_max = 4;
  std::size_t num_classes = 10;
  std::size_t in_channels = 3;
  // Square input extent. The VGG head flattens the last feature map, so its
  // width depends on this; ResNet ends in a global average pool and ignores it.
  std::size_t input_size = 32;
  SurrogateSpec surrogate;
  DecoderKind decoder = DecoderKind::kBitplane;
  IFConfig neuron;

  void validate() const;
  // VGG only: spatial extent after the d_max pooled blocks.
  std::size_t vgg_feature_extent() const;
  // e.g. "has8-vgg[fouriersine-bitplane][b16-m2-d4]"
  std::string name() const;
};

// 3 b m^d
std::size_t channels_for(std::size_t b, std::size_t m, std::size_t d);

enum class BranchMode { kBoth, kAnnOnly, kSnnOnly };

struct MacCount {
  std::uint64_t ann = 0;
  std::uint64_t snn = 0;  // one timestep
  std::uint64_t total() const { return ann + snn; }
  MacCount& operator+=(const MacCount& o) {
    ann += o.ann;
    snn += o.snn;
    return *this;
  }
};

template <typename T>
class HybridBlock {
 public:
  HybridBlock(const ModelSpec& spec) : surrogate_(spec.surrogate), decoder_(spec.decoder), neuron_(spec.neuron) {}
  virtual ~HybridBlock() = default;

  Tensor<T> forward(const Tensor<T>& x);
  virtual std::string kind() const = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) = 0;
  virtual void set_training(bool on) = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  // Per-branch MACs for input `in`; the SNN branch is counted for one step.
  virtual MacCount macs(const Shape& in) const = 0;

  void set_branch_mode(BranchMode mode) { mode_ = mode; }
  BranchMode branch_mode() const { return mode_; }

  // Pre-decode activations of the last SNN forward, kept for inspection.
  const Tensor<T>& last_encoded() const { return last_encoded_; }

 protected:
  virtual Tensor<T> ann_forward(const Tensor<T>& x) = 0;
  // spikes [T, B, ...] -> output spikes [T, B, ...]
  virtual SpikeTrain<T> snn_forward(const SpikeTrain<T>& spikes) = 0;
  // Applied to the fused output (pooling); identity by default.
  virtual Tensor<T> post(const Tensor<T>& fused) { return fused; }

  SurrogateSpec surrogate_;
  DecoderKind decoder_;
  IFConfig neuron_;
  BranchMode mode_ = BranchMode::kBoth;
  Tensor<T> last_encoded_;
};

// conv -> BN -> ReLU  ||  conv -> BN -> IF ; optional max-pool after fusion.
template <typename T>
class HybridConvBlock : public HybridBlock<T> {
 public:
  HybridConvBlock(const ModelSpec& spec, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, Conv2dParams params, std::size_t pool, Rng& rng);

  std::string kind() const override { return "hybrid_conv"; }
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void set_training(bool on) override;
  Shape output_shape(const Shape& in) const override;
  MacCount macs(const Shape& in) const override;

 protected:
  Tensor<T> ann_forward(const Tensor<T>& x) override;
  SpikeTrain<T> snn_forward(const SpikeTrain<T>& spikes) override;
  Tensor<T> post(const Tensor<T>& fused) override;

 private:
  Conv2d<T> ann_conv_, snn_conv_;
  BatchNorm<T> ann_bn_, snn_bn_;
  std::size_t pool_;
};

// linear -> ReLU  ||  linear -> IF
template <typename T>
class HybridMlpBlock : public HybridBlock<T> {
 public:
  HybridMlpBlock(const ModelSpec& spec, std::size_t in_features, std::size_t out_features, Rng& rng);

  std::string kind() const override { return "hybrid_mlp"; }
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void set_training(bool) override {}
  Shape output_shape(const Shape& in) const override;
  MacCount macs(const Shape& in) const override;

 protected:
  Tensor<T> ann_forward(const Tensor<T>& x) override;
  SpikeTrain<T> snn_forward(const SpikeTrain<T>& spikes) override;

 private:
  Linear<T> ann_fc_, snn_fc_;
};

// Residual basic block. With stride > 1 or a channel change the skip of both
// paths is a 1x1 conv + BN projection (the downsample variant).
//   ann: relu(bn2(conv2(relu(bn1(conv1 x)))) + skip(x))
//   snn: IF(bn2(conv2(IF(bn1(conv1 s)))) + skip(s))
template <typename T>
class HybridBasicBlock : public HybridBlock<T> {
 public:
  HybridBasicBlock(const ModelSpec& spec, std::size_t in_channels, std::size_t out_channels,
                   std::size_t stride, Rng& rng);

  std::string kind() const override { return projects() ? "hybrid_downsample" : "hybrid_basic"; }
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void set_training(bool on) override;
  Shape output_shape(const Shape& in) const override;
  MacCount macs(const Shape& in) const override;
  bool projects() const { return ann_.proj != nullptr; }

 protected:
  Tensor<T> ann_forward(const Tensor<T>& x) override;
  SpikeTrain<T> snn_forward(const SpikeTrain<T>& spikes) override;

 private:
  struct Path {
    std::unique_ptr<Conv2d<T>> conv1, conv2, proj;
    std::unique_ptr<BatchNorm<T>> bn1, bn2, proj_bn;
  };
  static Path make_path(std::size_t in, std::size_t out, std::size_t stride, Rng& rng);
  static void collect_path(Path& p, const std::string& prefix, std::vector<ParamRef<T>>& out);
  static std::uint64_t path_macs(const Path& p, const Shape& in);

  Path ann_, snn_;
};

template <typename T>
class HybridModel {
 public:
  HybridModel(const ModelSpec& spec, std::uint64_t seed);

  // x [B, in_channels, H, W] with pixels in [0,1] -> logits [B, num_classes]
  Tensor<T> forward(const Tensor<T>& x);

  // Trainable parameters and running statistics, in a fixed order.
  std::vector<ParamRef<T>> parameters();
  std::vector<ParamRef<T>> trainable_parameters();
  std::size_t param_count();

  void set_training(bool on);
  void set_branch_mode(BranchMode mode);
  // Zeros every trainable tensor of every SNN path.
  void zero_snn_params();

  // Shape after each stage, ending at [B, num_classes].
  std::vector<Shape> shape_trace(const Shape& in) const;
  // Input [1, C, H, W] gives per-sample counts.
  MacCount macs(const Shape& in) const;

  const ModelSpec& spec() const { return spec_; }
  std::vector<HybridBlock<T>*> blocks();
  // [B, C, H, W] features -> the [B, F] input of the MLP block (VGG, flatten)
  // or of the linear head (ResNet, global average pool).
  Shape head_input(const Shape& features) const;

 private:
  ModelSpec spec_;
  std::vector<std::unique_ptr<HybridBlock<T>>> features_;
  std::unique_ptr<HybridMlpBlock<T>> mlp_;
  std::unique_ptr<Linear<T>> head_;
};

}  // namespace has8
