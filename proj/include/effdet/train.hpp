// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "effdet/datasets.hpp"
#include "effdet/detector.hpp"
#include "effdet/focal_loss.hpp"

namespace effdet {

/// SGD with momentum, linear warmup then cosine decay to zero.
struct SgdOptions {
  int epochs = 30;
  int batch_size = 4;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 4e-5;
  double warmup_fraction = 0.05;
  double clip_norm = 10.0;
  bool horizontal_flip = true;
  std::uint64_t seed = 0;
  LossParams loss{};
};

struct TrainResult {
  std::vector<double> loss_history;  // mean per-sample loss, one entry per epoch
  int steps = 0;
};

inline double learning_rate_at(const SgdOptions& opt, int step, int total_steps) {
  const int warmup = static_cast<int>(std::ceil(opt.warmup_fraction * total_steps));
  if (step < warmup) return opt.learning_rate * (step + 1) / warmup;
  const double progress = static_cast<double>(step - warmup) / std::max(1, total_steps - warmup);
  return 0.5 * opt.learning_rate * (1.0 + std::cos(M_PI * progress));
}

inline TrainingSample flip_horizontal(const TrainingSample& sample) {
  TrainingSample out;
  out.image = PixelImage(sample.image.width, sample.image.height);
  for (int y = 0; y < sample.image.height; ++y)
    for (int x = 0; x < sample.image.width; ++x)
      for (int c = 0; c < 3; ++c) out.image.at(sample.image.width - 1 - x, y, c) = sample.image.at(x, y, c);
  for (const auto& gt : sample.boxes)
    out.boxes.push_back({{sample.image.width - gt.box.x_max, gt.box.y_min, sample.image.width - gt.box.x_min, gt.box.y_max},
                         gt.class_id});
  return out;
}

/// Trains in place. Deterministic for a given seed, detector and data.
/// `on_epoch(epoch, mean_loss)` runs after every epoch.
template <typename Scalar>
TrainResult train(Detector<Scalar>& detector, const std::vector<TrainingSample>& data, const SgdOptions& opt,
                  const std::function<void(int, double)>& on_epoch = {}) {
  if (data.empty()) throw InputError("training set is empty");
  if (opt.epochs < 1) throw DomainError("epochs must be >= 1");
  if (opt.batch_size < 1) throw DomainError("batch_size must be >= 1");
  const int resolution = detector.config().input_resolution;
  for (const auto& s : data)
    if (s.image.width != resolution || s.image.height != resolution)
      throw InputError("training image is " + std::to_string(s.image.width) + "x" + std::to_string(s.image.height) +
                       "; letterbox it to " + std::to_string(resolution) + " first");

  const auto anchors = generate_anchors(detector.config());
  auto& params = detector.parameters();
  auto grads = params.zeros_like();
  auto velocity = params.zeros_like();
  std::mt19937_64 rng(opt.seed);

  const int n = static_cast<int>(data.size());
  const int steps_per_epoch = (n + opt.batch_size - 1) / opt.batch_size;
  const int total_steps = steps_per_epoch * opt.epochs;
  std::vector<int> order(static_cast<std::size_t>(n));
  typename Detector<Scalar>::Tape tape;

  TrainResult result;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[rng() % static_cast<std::uint64_t>(i + 1)]);
    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += opt.batch_size) {
      const int stop = std::min(n, start + opt.batch_size);
      grads.set_zero();
      for (int b = start; b < stop; ++b) {
        const auto& original = data[static_cast<std::size_t>(order[static_cast<std::size_t>(b)])];
        const bool flip = opt.horizontal_flip && (rng() & 1U);
        const TrainingSample sample = flip ? flip_horizontal(original) : original;
        const auto targets = assign_targets(anchors, sample.boxes);
        const auto out = detector.forward(sample.image, &tape);
        const auto loss = focal_loss(out.class_logits, out.box_offsets, targets, opt.loss);
        epoch_loss += static_cast<double>(loss.total);
        detector.backward(tape, loss.grad_class_logits, loss.grad_box_offsets, grads);
      }
      const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(stop - start);
      double norm_sq = 0.0;
      for (std::size_t p = 0; p < grads.size(); ++p) {
        grads[static_cast<int>(p)] *= inv_batch;
        norm_sq += static_cast<double>(grads[static_cast<int>(p)].squaredNorm());
      }
      const double norm = std::sqrt(norm_sq);
      const auto clip = static_cast<Scalar>(norm > opt.clip_norm ? opt.clip_norm / norm : 1.0);
      const auto lr = static_cast<Scalar>(learning_rate_at(opt, result.steps, total_steps));
      const auto mu = static_cast<Scalar>(opt.momentum);
      const auto decay = static_cast<Scalar>(opt.weight_decay);
      for (std::size_t p = 0; p < params.size(); ++p) {
        const int i = static_cast<int>(p);
        // Fusion weights and biases are not decayed.
        const bool decayed = params.name(i).ends_with(".weight");
        auto& v = velocity[i];
        v = mu * v + clip * grads[i];
        if (decayed) v += decay * params[i];
        params[i] -= lr * v;
      }
      ++result.steps;
    }
    result.loss_history.push_back(epoch_loss / n);
    if (on_epoch) on_epoch(epoch, result.loss_history.back());
  }
  return result;
}

}  // namespace effdet
