// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "effdet/anchors.hpp"
#include "effdet/errors.hpp"
#include "effdet/fusion.hpp"
#include "effdet/image.hpp"
#include "effdet/layers.hpp"
#include "effdet/scalecfg.hpp"

namespace effdet {

/// Learnable scalar counts split by detector part.
struct ParamCount {
  std::int64_t backbone = 0;
  std::int64_t fusion = 0;
  std::int64_t heads = 0;
  std::int64_t total() const { return backbone + fusion + heads; }
  std::int64_t fusion_and_heads() const { return fusion + heads; }
};

/// Channel widths of the five backbone stages (strides 2..32) for a tier.
inline std::array<int, 5> backbone_widths(int tier) {
  constexpr std::array<int, 5> base = {16, 24, 40, 80, 112};
  std::array<int, 5> widths{};
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double scaled = base[i] * (1.0 + 0.1 * tier);
    widths[i] = std::max(8, static_cast<int>(std::floor(scaled / 8.0 + 0.5)) * 8);
  }
  return widths;
}

/// Extra stride-1 convolutions per backbone stage for a tier.
inline int backbone_stage_repeats(int tier) { return 1 + tier / 3; }

/// Normalizes an RGB image into a 3-channel input map with fixed per-channel
/// statistics (no per-image normalization, so brightness shifts reach the net).
template <typename Scalar>
FeatureMap<Scalar> to_input(const PixelImage& image) {
  static constexpr std::array<double, 3> mean = {0.485, 0.456, 0.406};
  static constexpr std::array<double, 3> stddev = {0.229, 0.224, 0.225};
  FeatureMap<Scalar> out(PixelImage::channels, image.height, image.width);
  for (int c = 0; c < PixelImage::channels; ++c) {
    Scalar* dst = out.data.row(c).data();
    for (int i = 0; i < image.width * image.height; ++i)
      dst[i] = static_cast<Scalar>((image.values[static_cast<std::size_t>(i) * 3 + c] / 255.0 - mean[c]) / stddev[c]);
  }
  return out;
}

/// Backbone stand-in, stacked BiFPN layers and two shared prediction subnets
/// realizing one ArchitectureConfig. Forward is const; per-call activations go
/// into a Tape so a frozen detector can run concurrently.
template <typename Scalar>
class Detector {
 public:
  using Map = FeatureMap<Scalar>;
  static constexpr int kFusionNodes = 8;

  struct Output {
    Matrix<Scalar> class_logits;  // anchors x num_classes
    Matrix<Scalar> box_offsets;   // anchors x 4
    std::array<Map, kNumLevels> class_maps;
    std::array<Map, kNumLevels> box_maps;
  };

  struct HeadCache {
    std::vector<typename ConvRelu<Scalar>::Cache> hidden;
    typename Conv2d<Scalar>::Cache output;
  };

  struct Tape {
    std::vector<typename ConvRelu<Scalar>::Cache> backbone;
    std::array<typename Conv2d<Scalar>::Cache, 3> projection;
    std::vector<int> pool6;
    std::vector<int> pool7;
    std::array<int, 2> p5_shape{};
    std::array<int, 2> p6_shape{};
    struct Layer {
      std::array<typename FusionNode<Scalar>::Cache, kFusionNodes> nodes;
      std::array<std::vector<int>, 4> pools;  // bottom-up downsampling of out3..out6
      std::array<std::array<int, 2>, 4> pool_shapes{};
    };
    std::vector<Layer> layers;
    std::array<HeadCache, kNumLevels> class_head;
    std::array<HeadCache, kNumLevels> box_head;
  };

  Detector() = default;

  static Detector build(const ArchitectureConfig& config, int num_classes, std::uint64_t seed = 0) {
    validate(config);
    if (num_classes < 1) throw ConfigurationError("num_classes must be >= 1");
    Detector d;
    d.config_ = config;
    d.num_classes_ = num_classes;
    d.create_layers();
    d.initialize(seed);
    return d;
  }

  const ArchitectureConfig& config() const { return config_; }
  int num_classes() const { return num_classes_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  int bifpn_layers() const { return static_cast<int>(layers_.size()); }
  int head_convs() const { return static_cast<int>(class_hidden_.size()); }

  ParamCount count_params() const {
    ParamCount count;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto n = params_[static_cast<int>(i)].size();
      switch (params_.group(static_cast<int>(i))) {
        case ParamGroup::backbone: count.backbone += n; break;
        case ParamGroup::fusion: count.fusion += n; break;
        case ParamGroup::heads: count.heads += n; break;
      }
    }
    return count;
  }

  Output forward(const PixelImage& image, Tape* tape) const {
    if (image.width != config_.input_resolution || image.height != config_.input_resolution)
      throw InputError("image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                       ", detector expects " + std::to_string(config_.input_resolution) + " square");
    if (image.values.size() != static_cast<std::size_t>(image.width) * image.height * PixelImage::channels)
      throw InputError("image buffer is not 3-channel RGB");
    return forward(to_input<Scalar>(image), tape);
  }

  Output forward(const Map& input, Tape* tape) const {
    if (input.channels() != 3 || input.height != config_.input_resolution || input.width != config_.input_resolution)
      throw InputError("input map must be 3 x R x R");
    if (tape) {
      tape->backbone.resize(backbone_.size());
      tape->layers.resize(layers_.size());
    }
    // Backbone: C3, C4, C5 are the outputs of the last three stages.
    std::array<Map, 3> features;
    Map x = input;
    std::size_t layer = 0;
    for (int stage = 0; stage < 5; ++stage) {
      for (int r = 0; r <= repeats_; ++r, ++layer)
        x = backbone_[layer].forward(params_, x, tape ? &tape->backbone[layer] : nullptr);
      if (stage >= 2) features[static_cast<std::size_t>(stage - 2)] = x;
    }
    std::array<Map, kNumLevels> levels;
    for (int i = 0; i < 3; ++i)
      levels[static_cast<std::size_t>(i)] =
          projection_[static_cast<std::size_t>(i)].forward(params_, features[static_cast<std::size_t>(i)],
                                                           tape ? &tape->projection[static_cast<std::size_t>(i)] : nullptr);
    levels[3] = max_pool2(levels[2], tape ? &tape->pool6 : nullptr);
    levels[4] = max_pool2(levels[3], tape ? &tape->pool7 : nullptr);
    if (tape) {
      tape->p5_shape = {levels[2].height, levels[2].width};
      tape->p6_shape = {levels[3].height, levels[3].width};
    }
    for (std::size_t l = 0; l < layers_.size(); ++l)
      levels = bifpn_forward(l, levels, tape ? &tape->layers[l] : nullptr);

    Output out;
    const long long total = anchor_count(config_.input_resolution);
    out.class_logits.resize(total, num_classes_);
    out.box_offsets.resize(total, 4);
    Eigen::Index row = 0;
    for (std::size_t l = 0; l < kNumLevels; ++l) {
      out.class_maps[l] = head_forward(class_hidden_, class_out_, levels[l], tape ? &tape->class_head[l] : nullptr);
      out.box_maps[l] = head_forward(box_hidden_, box_out_, levels[l], tape ? &tape->box_head[l] : nullptr);
      const auto& cls = out.class_maps[l];
      const auto& box = out.box_maps[l];
      for (int p = 0; p < cls.pixels(); ++p)
        for (int a = 0; a < kAnchorsPerCell; ++a, ++row) {
          for (int c = 0; c < num_classes_; ++c) out.class_logits(row, c) = cls.data(a * num_classes_ + c, p);
          for (int k = 0; k < 4; ++k) out.box_offsets(row, k) = box.data(a * 4 + k, p);
        }
    }
    return out;
  }

  /// Accumulates parameter gradients for the given output gradients.
  void backward(const Tape& tape, const Matrix<Scalar>& grad_class, const Matrix<Scalar>& grad_box,
                ParameterSet<Scalar>& grads) const {
    std::array<Map, kNumLevels> grad_levels;
    Eigen::Index row = 0;
    for (std::size_t l = 0; l < kNumLevels; ++l) {
      const int side = config_.input_resolution >> (kMinLevel + static_cast<int>(l));
      Map g_cls(kAnchorsPerCell * num_classes_, side, side);
      Map g_box(kAnchorsPerCell * 4, side, side);
      for (int p = 0; p < side * side; ++p)
        for (int a = 0; a < kAnchorsPerCell; ++a, ++row) {
          for (int c = 0; c < num_classes_; ++c) g_cls.data(a * num_classes_ + c, p) = grad_class(row, c);
          for (int k = 0; k < 4; ++k) g_box.data(a * 4 + k, p) = grad_box(row, k);
        }
      grad_levels[l] = head_backward(class_hidden_, class_out_, tape.class_head[l], g_cls, grads);
      grad_levels[l].data += head_backward(box_hidden_, box_out_, tape.box_head[l], g_box, grads).data;
    }
    for (std::size_t l = layers_.size(); l-- > 0;) grad_levels = bifpn_backward(l, tape.layers[l], grad_levels, grads);

    // P7 <- pool(P6) <- pool(P5).
    grad_levels[3].data +=
        max_pool2_backward(grad_levels[4], tape.pool7, tape.p6_shape[0], tape.p6_shape[1]).data;
    grad_levels[2].data +=
        max_pool2_backward(grad_levels[3], tape.pool6, tape.p5_shape[0], tape.p5_shape[1]).data;
    std::array<Map, 3> grad_features;
    for (std::size_t i = 0; i < 3; ++i)
      grad_features[i] = projection_[i].backward(params_, tape.projection[i], grad_levels[i], grads);

    Map g;
    std::size_t layer = backbone_.size();
    for (int stage = 4; stage >= 0; --stage) {
      if (stage >= 2) {
        if (stage == 4)
          g = grad_features[2];
        else
          g.data += grad_features[static_cast<std::size_t>(stage - 2)].data;
      }
      for (int r = 0; r <= repeats_; ++r) {
        --layer;
        g = backbone_[layer].backward(params_, tape.backbone[layer], std::move(g), grads);
      }
    }
  }

 private:
  void create_layers() {
    const auto widths = backbone_widths(config_.backbone_tier);
    repeats_ = backbone_stage_repeats(config_.backbone_tier);
    int channels = 3;
    for (int stage = 0; stage < 5; ++stage) {
      const int out_ch = widths[static_cast<std::size_t>(stage)];
      const std::string base = "backbone.stage" + std::to_string(stage);
      backbone_.push_back({Conv2d<Scalar>::create(params_, base + ".down", channels, out_ch, 3, 2, ParamGroup::backbone)});
      for (int r = 0; r < repeats_; ++r)
        backbone_.push_back({Conv2d<Scalar>::create(params_, base + ".conv" + std::to_string(r), out_ch, out_ch, 3, 1,
                                                    ParamGroup::backbone)});
      channels = out_ch;
    }
    const int w = config_.fused_channels;
    for (int i = 0; i < 3; ++i)
      projection_[static_cast<std::size_t>(i)] =
          Conv2d<Scalar>::create(params_, "fusion.project_p" + std::to_string(i + 3), widths[static_cast<std::size_t>(i + 2)],
                                 w, 1, 1, ParamGroup::fusion);
    static constexpr std::array<int, kFusionNodes> inputs = {2, 2, 2, 2, 3, 3, 3, 2};
    static constexpr std::array<const char*, kFusionNodes> names = {"td6", "td5", "td4", "out3",
                                                                    "out4", "out5", "out6", "out7"};
    for (int l = 0; l < config_.bifpn_depth; ++l) {
      std::array<FusionNode<Scalar>, kFusionNodes> nodes;
      for (int n = 0; n < kFusionNodes; ++n)
        nodes[static_cast<std::size_t>(n)] = FusionNode<Scalar>::create(
            params_, "bifpn" + std::to_string(l) + "." + names[static_cast<std::size_t>(n)],
            inputs[static_cast<std::size_t>(n)], w);
      layers_.push_back(nodes);
    }
    for (int d = 0; d < config_.head_depth; ++d) {
      class_hidden_.push_back({Conv2d<Scalar>::create(params_, "class_net.conv" + std::to_string(d), w, w, 3, 1, ParamGroup::heads)});
      box_hidden_.push_back({Conv2d<Scalar>::create(params_, "box_net.conv" + std::to_string(d), w, w, 3, 1, ParamGroup::heads)});
    }
    class_out_ = Conv2d<Scalar>::create(params_, "class_net.predict", w, kAnchorsPerCell * num_classes_, 3, 1, ParamGroup::heads);
    box_out_ = Conv2d<Scalar>::create(params_, "box_net.predict", w, kAnchorsPerCell * 4, 3, 1, ParamGroup::heads);
  }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& b : backbone_) b.conv.init_he(params_, rng);
    for (const auto& p : projection_) p.init_he(params_, rng);
    for (const auto& nodes : layers_)
      for (const auto& n : nodes) n.block.conv.init_he(params_, rng);
    for (const auto& h : class_hidden_) h.conv.init_he(params_, rng);
    for (const auto& h : box_hidden_) h.conv.init_he(params_, rng);
    // Class prior 0.01 so background dominates at the start of training.
    const auto prior_bias = static_cast<Scalar>(-std::log((1.0 - 0.01) / 0.01));
    class_out_.init_normal(params_, rng, 0.01, prior_bias);
    box_out_.init_normal(params_, rng, 0.01, Scalar(0));
  }

  Map head_forward(const std::vector<ConvRelu<Scalar>>& hidden, const Conv2d<Scalar>& output, const Map& in,
                   HeadCache* cache) const {
    if (cache) cache->hidden.resize(hidden.size());
    Map x = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) x = hidden[i].forward(params_, x, cache ? &cache->hidden[i] : nullptr);
    return output.forward(params_, x, cache ? &cache->output : nullptr);
  }

  Map head_backward(const std::vector<ConvRelu<Scalar>>& hidden, const Conv2d<Scalar>& output, const HeadCache& cache,
                    const Map& grad_out, ParameterSet<Scalar>& grads) const {
    Map g = output.backward(params_, cache.output, grad_out, grads);
    for (std::size_t i = hidden.size(); i-- > 0;) g = hidden[i].backward(params_, cache.hidden[i], std::move(g), grads);
    return g;
  }

  // Levels are indexed 0..4 for P3..P7.
  std::array<Map, kNumLevels> bifpn_forward(std::size_t l, const std::array<Map, kNumLevels>& in,
                                            typename Tape::Layer* tape) const {
    const auto& nodes = layers_[l];
    auto node = [&](int n, std::vector<Map> inputs) {
      return nodes[static_cast<std::size_t>(n)].forward(params_, std::move(inputs), tape ? &tape->nodes[static_cast<std::size_t>(n)] : nullptr);
    };
    auto down = [&](const Map& m, int k) {
      if (tape) tape->pool_shapes[static_cast<std::size_t>(k)] = {m.height, m.width};
      return max_pool2(m, tape ? &tape->pools[static_cast<std::size_t>(k)] : nullptr);
    };
    Map td6 = node(0, {in[3], upsample2(in[4])});
    Map td5 = node(1, {in[2], upsample2(td6)});
    Map td4 = node(2, {in[1], upsample2(td5)});
    std::array<Map, kNumLevels> out;
    out[0] = node(3, {in[0], upsample2(td4)});
    out[1] = node(4, {in[1], td4, down(out[0], 0)});
    out[2] = node(5, {in[2], td5, down(out[1], 1)});
    out[3] = node(6, {in[3], td6, down(out[2], 2)});
    out[4] = node(7, {in[4], down(out[3], 3)});
    return out;
  }

  std::array<Map, kNumLevels> bifpn_backward(std::size_t l, const typename Tape::Layer& tape,
                                             std::array<Map, kNumLevels> grad_out, ParameterSet<Scalar>& grads) const {
    const auto& nodes = layers_[l];
    auto node = [&](int n, const Map& g) {
      return nodes[static_cast<std::size_t>(n)].backward(params_, tape.nodes[static_cast<std::size_t>(n)], g, grads);
    };
    auto down_back = [&](const Map& g, int k) {
      const auto& shape = tape.pool_shapes[static_cast<std::size_t>(k)];
      return max_pool2_backward(g, tape.pools[static_cast<std::size_t>(k)], shape[0], shape[1]);
    };
    std::array<Map, kNumLevels> grad_in;
    for (std::size_t i = 0; i < kNumLevels; ++i) {
      const int side = config_.input_resolution >> (kMinLevel + static_cast<int>(i));
      grad_in[i] = Map(config_.fused_channels, side, side);
    }
    auto g7 = node(7, grad_out[4]);
    grad_in[4].data += g7[0].data;
    grad_out[3].data += down_back(g7[1], 3).data;

    auto g6 = node(6, grad_out[3]);
    grad_in[3].data += g6[0].data;
    Map g_td6 = g6[1];
    grad_out[2].data += down_back(g6[2], 2).data;

    auto g5 = node(5, grad_out[2]);
    grad_in[2].data += g5[0].data;
    Map g_td5 = g5[1];
    grad_out[1].data += down_back(g5[2], 1).data;

    auto g4 = node(4, grad_out[1]);
    grad_in[1].data += g4[0].data;
    Map g_td4 = g4[1];
    grad_out[0].data += down_back(g4[2], 0).data;

    auto g3 = node(3, grad_out[0]);
    grad_in[0].data += g3[0].data;
    g_td4.data += upsample2_backward(g3[1]).data;

    auto gt4 = node(2, g_td4);
    grad_in[1].data += gt4[0].data;
    g_td5.data += upsample2_backward(gt4[1]).data;

    auto gt5 = node(1, g_td5);
    grad_in[2].data += gt5[0].data;
    g_td6.data += upsample2_backward(gt5[1]).data;

    auto gt6 = node(0, g_td6);
    grad_in[3].data += gt6[0].data;
    grad_in[4].data += upsample2_backward(gt6[1]).data;
    return grad_in;
  }

  ArchitectureConfig config_{};
  int num_classes_ = 0;
  int repeats_ = 0;
  ParameterSet<Scalar> params_;
  std::vector<ConvRelu<Scalar>> backbone_;
  std::array<Conv2d<Scalar>, 3> projection_{};
  std::vector<std::array<FusionNode<Scalar>, kFusionNodes>> layers_;
  std::vector<ConvRelu<Scalar>> class_hidden_;
  std::vector<ConvRelu<Scalar>> box_hidden_;
  Conv2d<Scalar> class_out_;
  Conv2d<Scalar> box_out_;
};

/// Builds a float detector; throws ConfigurationError for invalid configs.
inline Detector<float> build_detector(const ArchitectureConfig& config, int num_classes, std::uint64_t seed = 0) {
  return Detector<float>::build(config, num_classes, seed);
}

template <typename Scalar>
ParamCount count_params(const Detector<Scalar>& detector) {
  return detector.count_params();
}

}  // namespace effdet
