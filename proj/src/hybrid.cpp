#include "has8/hybrid.hpp"

#include <algorithm>
#include <cctype>

#include "has8/errors.hpp"
#include "has8/ops.hpp"

namespace has8 {
namespace {

template <typename T>
Tensor<T> per_step(Module<T>& layer, const Tensor<T>& steps) {
  return apply_per_timestep(layer, steps);
}

}  // namespace

std::string_view variant_name(Variant v) { return v == Variant::kVgg ? "vgg" : "resnet"; }

Variant parse_variant(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "vgg") return Variant::kVgg;
  if (s == "resnet") return Variant::kResNet;
  throw ValueError("unknown model variant '" + std::string(name) + "' (expected vgg or resnet)");
}

void ModelSpec::validate() const {
  if (b == 0) throw ValueError("model base b must be positive");
  if (m == 0) throw ValueError("model multiplier m must be positive");
  if (d_max == 0) throw ValueError("model depth d_max must be positive");
  if (num_classes < 2) throw ValueError("model needs at least two classes");
  if (in_channels == 0) throw ValueError("model needs at least one input channel");
  if (variant == Variant::kVgg && vgg_feature_extent() == 0) {
    throw ValueError("input size " + std::to_string(input_size) + " is too small for " + std::to_string(d_max) +
                     " pooled blocks");
  }
  surrogate.validate();
  neuron.validate();
}

std::size_t ModelSpec::vgg_feature_extent() const {
  std::size_t s = input_size;
  for (std::size_t d = 0; d < d_max; ++d) s /= 2;
  return s;
}

std::string ModelSpec::name() const {
  return "has8-" + std::string(variant_name(variant)) + "[" + std::string(surrogate_name(surrogate.kind)) +
         "-" + std::string(decoder_name(decoder)) + "][b" + std::to_string(b) + "-m" + std::to_string(m) +
         "-d" + std::to_string(d_max) + "]";
}

std::size_t channels_for(std::size_t b, std::size_t m, std::size_t d) {
  std::size_t c = 3 * b;
  for (std::size_t i = 0; i < d; ++i) c *= m;
  return c;
}

template <typename T>
Tensor<T> HybridBlock<T>::forward(const Tensor<T>& x) {
  Tensor<T> ann, snn;
  if (mode_ != BranchMode::kSnnOnly) ann = ann_forward(x);
  if (mode_ != BranchMode::kAnnOnly) {
    const SpikeTrain<T> in = bitplane_encode(clamp(x, T(0), T(1)), surrogate_);
    const SpikeTrain<T> out = snn_forward(in);
    last_encoded_ = out.tensor();
    snn = decode(out, decoder_);
  }
  if (!ann.defined()) return post(snn);
  if (!snn.defined()) return post(ann);
  if (ann.shape() != snn.shape()) {
    throw ShapeError(kind() + ": ann path " + to_string(ann.shape()) + " and snn path " +
                     to_string(snn.shape()) + " cannot be fused");
  }
  return post(add(ann, snn));
}

// --- conv block -------------------------------------------------------------

template <typename T>
HybridConvBlock<T>::HybridConvBlock(const ModelSpec& spec, std::size_t in_channels,
                                    std::size_t out_channels, std::size_t kernel, Conv2dParams params,
                                    std::size_t pool, Rng& rng)
    : HybridBlock<T>(spec),
      ann_conv_(in_channels, out_channels, kernel, params, true, rng),
      snn_conv_(in_channels, out_channels, kernel, params, true, rng),
      ann_bn_(out_channels),
      snn_bn_(out_channels),
      pool_(pool) {}

template <typename T>
Tensor<T> HybridConvBlock<T>::ann_forward(const Tensor<T>& x) {
  return relu(ann_bn_.forward(ann_conv_.forward(x)));
}

template <typename T>
SpikeTrain<T> HybridConvBlock<T>::snn_forward(const SpikeTrain<T>& spikes) {
  const Tensor<T> c = per_step(snn_bn_, per_step(snn_conv_, spikes.tensor()));
  return if_over_time(c, this->neuron_);
}

template <typename T>
Tensor<T> HybridConvBlock<T>::post(const Tensor<T>& fused) {
  return pool_ > 1 ? maxpool2d(fused, pool_) : fused;
}

template <typename T>
void HybridConvBlock<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  ann_conv_.collect(prefix + "ann.conv.", out);
  ann_bn_.collect(prefix + "ann.bn.", out);
  snn_conv_.collect(prefix + "snn.conv.", out);
  snn_bn_.collect(prefix + "snn.bn.", out);
}

template <typename T>
void HybridConvBlock<T>::set_training(bool on) {
  ann_bn_.set_training(on);
  snn_bn_.set_training(on);
}

template <typename T>
Shape HybridConvBlock<T>::output_shape(const Shape& in) const {
  const Shape conv = ann_conv_.output_shape(in);
  return pool_ > 1 ? MaxPool2d<T>(pool_).output_shape(conv) : conv;
}

template <typename T>
MacCount HybridConvBlock<T>::macs(const Shape& in) const {
  return {ann_conv_.macs(in), snn_conv_.macs(in)};
}

// --- MLP block --------------------------------------------------------------

template <typename T>
HybridMlpBlock<T>::HybridMlpBlock(const ModelSpec& spec, std::size_t in_features,
                                  std::size_t out_features, Rng& rng)
    : HybridBlock<T>(spec), ann_fc_(in_features, out_features, true, rng), snn_fc_(in_features, out_features, true, rng) {}

template <typename T>
Tensor<T> HybridMlpBlock<T>::ann_forward(const Tensor<T>& x) {
  return relu(ann_fc_.forward(x));
}

template <typename T>
SpikeTrain<T> HybridMlpBlock<T>::snn_forward(const SpikeTrain<T>& spikes) {
  return if_over_time(per_step(snn_fc_, spikes.tensor()), this->neuron_);
}

template <typename T>
void HybridMlpBlock<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  ann_fc_.collect(prefix + "ann.fc.", out);
  snn_fc_.collect(prefix + "snn.fc.", out);
}

template <typename T>
Shape HybridMlpBlock<T>::output_shape(const Shape& in) const {
  return ann_fc_.output_shape(in);
}

template <typename T>
MacCount HybridMlpBlock<T>::macs(const Shape& in) const {
  return {ann_fc_.macs(in), snn_fc_.macs(in)};
}

// --- residual blocks --------------------------------------------------------

template <typename T>
typename HybridBasicBlock<T>::Path HybridBasicBlock<T>::make_path(std::size_t in, std::size_t out,
                                                                  std::size_t stride, Rng& rng) {
  Path p;
  p.conv1 = std::make_unique<Conv2d<T>>(in, out, 3, Conv2dParams{stride, 1}, false, rng);
  p.bn1 = std::make_unique<BatchNorm<T>>(out);
  p.conv2 = std::make_unique<Conv2d<T>>(out, out, 3, Conv2dParams{1, 1}, false, rng);
  p.bn2 = std::make_unique<BatchNorm<T>>(out);
  if (stride != 1 || in != out) {
    p.proj = std::make_unique<Conv2d<T>>(in, out, 1, Conv2dParams{stride, 0}, false, rng);
    p.proj_bn = std::make_unique<BatchNorm<T>>(out);
  }
  return p;
}

template <typename T>
HybridBasicBlock<T>::HybridBasicBlock(const ModelSpec& spec, std::size_t in_channels,
                                      std::size_t out_channels, std::size_t stride, Rng& rng)
    : HybridBlock<T>(spec) {
  if (stride == 0) throw ValueError("residual block stride must be positive");
  ann_ = make_path(in_channels, out_channels, stride, rng);
  snn_ = make_path(in_channels, out_channels, stride, rng);
}

template <typename T>
Tensor<T> HybridBasicBlock<T>::ann_forward(const Tensor<T>& x) {
  Tensor<T> h = relu(ann_.bn1->forward(ann_.conv1->forward(x)));
  h = ann_.bn2->forward(ann_.conv2->forward(h));
  const Tensor<T> skip = ann_.proj ? ann_.proj_bn->forward(ann_.proj->forward(x)) : x;
  return relu(add(h, skip));
}

template <typename T>
SpikeTrain<T> HybridBasicBlock<T>::snn_forward(const SpikeTrain<T>& spikes) {
  const Tensor<T>& s = spikes.tensor();
  const Tensor<T> a = if_over_time(per_step(*snn_.bn1, per_step(*snn_.conv1, s)), this->neuron_).tensor();
  const Tensor<T> h = per_step(*snn_.bn2, per_step(*snn_.conv2, a));
  const Tensor<T> skip = snn_.proj ? per_step(*snn_.proj_bn, per_step(*snn_.proj, s)) : s;
  return if_over_time(add(h, skip), this->neuron_);
}

template <typename T>
void HybridBasicBlock<T>::collect_path(Path& p, const std::string& prefix, std::vector<ParamRef<T>>& out) {
  p.conv1->collect(prefix + "conv1.", out);
  p.bn1->collect(prefix + "bn1.", out);
  p.conv2->collect(prefix + "conv2.", out);
  p.bn2->collect(prefix + "bn2.", out);
  if (p.proj) {
    p.proj->collect(prefix + "proj.", out);
    p.proj_bn->collect(prefix + "proj_bn.", out);
  }
}

template <typename T>
void HybridBasicBlock<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  collect_path(ann_, prefix + "ann.", out);
  collect_path(snn_, prefix + "snn.", out);
}

template <typename T>
void HybridBasicBlock<T>::set_training(bool on) {
  for (Path* p : {&ann_, &snn_}) {
    p->bn1->set_training(on);
    p->bn2->set_training(on);
    if (p->proj_bn) p->proj_bn->set_training(on);
  }
}

template <typename T>
Shape HybridBasicBlock<T>::output_shape(const Shape& in) const {
  const Shape h = ann_.conv2->output_shape(ann_.conv1->output_shape(in));
  if (ann_.proj) {
    const Shape skip = ann_.proj->output_shape(in);
    if (skip != h) {
      throw ShapeError("residual body " + to_string(h) + " and skip " + to_string(skip) + " differ");
    }
  } else if (h != in) {
    throw ShapeError("identity skip needs matching shapes, got " + to_string(in) + " -> " + to_string(h));
  }
  return h;
}

template <typename T>
std::uint64_t HybridBasicBlock<T>::path_macs(const Path& p, const Shape& in) {
  const Shape h = p.conv1->output_shape(in);
  std::uint64_t total = p.conv1->macs(in) + p.conv2->macs(h);
  if (p.proj) total += p.proj->macs(in);
  return total;
}

template <typename T>
MacCount HybridBasicBlock<T>::macs(const Shape& in) const {
  return {path_macs(ann_, in), path_macs(snn_, in)};
}

// --- model ------------------------------------------------------------------

template <typename T>
HybridModel<T>::HybridModel(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  const std::size_t b = spec_.b, m = spec_.m;
  if (spec_.variant == Variant::kVgg) {
    std::size_t in = spec_.in_channels;
    for (std::size_t d = 1; d <= spec_.d_max; ++d) {
      const std::size_t out = channels_for(b, m, d);
      features_.push_back(
          std::make_unique<HybridConvBlock<T>>(spec_, in, out, 3, Conv2dParams{1, 1}, 2, rng));
      in = out;
    }
    const std::size_t extent = spec_.vgg_feature_extent();
    const std::size_t width = channels_for(b, m, spec_.d_max - 1);
    mlp_ = std::make_unique<HybridMlpBlock<T>>(spec_, in * extent * extent, width, rng);
    head_ = std::make_unique<Linear<T>>(width, spec_.num_classes, true, rng);
  } else {
    const std::size_t stem = b * m;
    features_.push_back(std::make_unique<HybridConvBlock<T>>(spec_, spec_.in_channels, stem, 7,
                                                             Conv2dParams{2, 3}, 2, rng));
    std::size_t in = stem;
    std::size_t width = b;
    for (std::size_t d = 1; d <= spec_.d_max; ++d) {
      const std::size_t stride = d == 1 ? 1 : 2;
      features_.push_back(std::make_unique<HybridBasicBlock<T>>(spec_, in, width, stride, rng));
      features_.push_back(std::make_unique<HybridBasicBlock<T>>(spec_, width, width, 1, rng));
      in = width;
      width *= m;
    }
    head_ = std::make_unique<Linear<T>>(in, spec_.num_classes, true, rng);
  }
}

template <typename T>
Tensor<T> HybridModel<T>::forward(const Tensor<T>& x) {
  if (x.dim() != 4 || x.size(1) != spec_.in_channels) {
    throw ShapeError(spec_.name() + " expects input [B," + std::to_string(spec_.in_channels) +
                     ",H,W], got " + to_string(x.shape()));
  }
  if (spec_.variant == Variant::kVgg && (x.size(2) != spec_.input_size || x.size(3) != spec_.input_size)) {
    throw ShapeError(spec_.name() + " was built for " + std::to_string(spec_.input_size) + "x" +
                     std::to_string(spec_.input_size) + " input, got " + to_string(x.shape()));
  }
  Tensor<T> h = x;
  for (auto& block : features_) h = block->forward(h);
  if (mlp_) {
    h = mlp_->forward(flatten(h));
  } else {
    h = global_avg_pool(h);
  }
  return head_->forward(h);
}

template <typename T>
std::vector<ParamRef<T>> HybridModel<T>::parameters() {
  std::vector<ParamRef<T>> out;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    features_[i]->collect("features." + std::to_string(i) + ".", out);
  }
  if (mlp_) mlp_->collect("mlp.", out);
  head_->collect("head.", out);
  return out;
}

template <typename T>
std::vector<ParamRef<T>> HybridModel<T>::trainable_parameters() {
  std::vector<ParamRef<T>> out;
  for (auto& p : parameters()) {
    if (p.trainable) out.push_back(p);
  }
  return out;
}

template <typename T>
std::size_t HybridModel<T>::param_count() {
  std::size_t n = 0;
  for (const auto& p : trainable_parameters()) n += p.tensor->numel();
  return n;
}

template <typename T>
void HybridModel<T>::set_training(bool on) {
  for (auto& block : features_) block->set_training(on);
  if (mlp_) mlp_->set_training(on);
}

template <typename T>
void HybridModel<T>::set_branch_mode(BranchMode mode) {
  for (auto* block : blocks()) block->set_branch_mode(mode);
}

template <typename T>
void HybridModel<T>::zero_snn_params() {
  for (auto& p : trainable_parameters()) {
    if (p.name.find(".snn.") == std::string::npos) continue;
    auto v = p.tensor->mutable_data();
    std::fill(v.begin(), v.end(), T(0));
  }
}

template <typename T>
Shape HybridModel<T>::head_input(const Shape& features) const {
  if (mlp_) return {features[0], features[1] * features[2] * features[3]};
  return {features[0], features[1]};
}

template <typename T>
std::vector<Shape> HybridModel<T>::shape_trace(const Shape& in) const {
  std::vector<Shape> trace{in};
  for (const auto& block : features_) trace.push_back(block->output_shape(trace.back()));
  trace.push_back(head_input(trace.back()));
  if (mlp_) trace.push_back(mlp_->output_shape(trace.back()));
  trace.push_back(head_->output_shape(trace.back()));
  return trace;
}

template <typename T>
MacCount HybridModel<T>::macs(const Shape& in) const {
  MacCount total;
  Shape s = in;
  for (const auto& block : features_) {
    total += block->macs(s);
    s = block->output_shape(s);
  }
  s = head_input(s);
  if (mlp_) {
    total += mlp_->macs(s);
    s = mlp_->output_shape(s);
  }
  total.ann += head_->macs(s);
  return total;
}

template <typename T>
std::vector<HybridBlock<T>*> HybridModel<T>::blocks() {
  std::vector<HybridBlock<T>*> out;
  for (auto& block : features_) out.push_back(block.get());
  if (mlp_) out.push_back(mlp_.get());
  return out;
}

#define HAS8_INSTANTIATE(T)           \
  template class HybridBlock<T>;      \
  template class HybridConvBlock<T>;  \
  template class HybridMlpBlock<T>;   \
  template class HybridBasicBlock<T>; \
  template class HybridModel<T>;

HAS8_INSTANTIATE(float)
HAS8_INSTANTIATE(double)
#undef HAS8_INSTANTIATE

}  // namespace has8
