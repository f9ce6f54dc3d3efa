// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>

#include "effdet/anchors.hpp"
#include "effdet/errors.hpp"
#include "effdet/tensor.hpp"

namespace effdet {

struct LossParams {
  double alpha = 0.25;
  double gamma = 2.0;
  double huber_delta = 0.1;
  double box_weight = 50.0;
};

template <typename Scalar>
struct LossResult {
  Scalar total = 0;
  Scalar classification = 0;
  Scalar box = 0;
  int num_positive = 0;
  Matrix<Scalar> grad_class_logits;  // anchors x classes
  Matrix<Scalar> grad_box_offsets;   // anchors x 4
};

namespace detail {

template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

/// Focal loss of one logit against a binary target, with d loss / d logit.
/// Positive: alpha (1-p)^gamma (-log p). Negative: (1-alpha) p^gamma (-log(1-p)).
template <typename Scalar>
std::pair<Scalar, Scalar> focal_term(Scalar logit, bool positive, double alpha, double gamma) {
  const Scalar p = detail::sigmoid(logit);
  const Scalar g = static_cast<Scalar>(gamma);
  if (positive) {
    const Scalar a = static_cast<Scalar>(alpha);
    const Scalar one_minus = Scalar(1) - p;
    const Scalar modulator = std::pow(one_minus, g);
    const Scalar nll = detail::softplus(-logit);
    return {a * modulator * nll, -a * modulator * (g * p * nll + one_minus)};
  }
  const Scalar a = static_cast<Scalar>(1.0 - alpha);
  const Scalar modulator = std::pow(p, g);
  const Scalar nll = detail::softplus(logit);
  return {a * modulator * nll, a * modulator * (g * (Scalar(1) - p) * nll + p)};
}

/// Huber loss value and derivative.
template <typename Scalar>
std::pair<Scalar, Scalar> huber(Scalar x, double delta) {
  const Scalar d = static_cast<Scalar>(delta);
  const Scalar ax = std::abs(x);
  if (ax <= d) return {Scalar(0.5) * x * x, x};
  return {d * (ax - Scalar(0.5) * d), x > Scalar(0) ? d : -d};
}

/// Focal classification loss over non-ignored anchors normalized by the
/// positive count (clamped to 1), plus box_weight times the Huber loss on
/// positive-anchor offsets normalized by 4 * positives (clamped to 1).
template <typename Scalar>
LossResult<Scalar> focal_loss(const Matrix<Scalar>& class_logits, const Matrix<Scalar>& box_offsets,
                              const AnchorTargets& targets, const LossParams& params = {}) {
  const Eigen::Index anchors = class_logits.rows();
  const Eigen::Index classes = class_logits.cols();
  if (box_offsets.rows() != anchors || box_offsets.cols() != 4 ||
      static_cast<Eigen::Index>(targets.labels.size()) != anchors || targets.box_targets.rows() != anchors)
    throw InputError("focal_loss: logits, offsets and targets disagree on anchor count");

  LossResult<Scalar> result;
  result.num_positive = targets.num_positive;
  result.grad_class_logits = Matrix<Scalar>::Zero(anchors, classes);
  result.grad_box_offsets = Matrix<Scalar>::Zero(anchors, 4);
  const Scalar cls_norm = Scalar(1) / static_cast<Scalar>(std::max(targets.num_positive, 1));
  const Scalar box_norm = static_cast<Scalar>(params.box_weight) / static_cast<Scalar>(std::max(4 * targets.num_positive, 1));

  Scalar cls_sum = 0;
  Scalar box_sum = 0;
  for (Eigen::Index a = 0; a < anchors; ++a) {
    const int label = targets.labels[static_cast<std::size_t>(a)];
    if (label == kIgnoreLabel) continue;
    if (label >= classes) throw InputError("focal_loss: target class out of range");
    for (Eigen::Index c = 0; c < classes; ++c) {
      const auto [loss, grad] = focal_term(class_logits(a, c), label == c, params.alpha, params.gamma);
      cls_sum += loss;
      result.grad_class_logits(a, c) = grad * cls_norm;
    }
    if (label >= 0) {
      for (int k = 0; k < 4; ++k) {
        const auto [loss, grad] =
            huber(box_offsets(a, k) - static_cast<Scalar>(targets.box_targets(a, k)), params.huber_delta);
        box_sum += loss;
        result.grad_box_offsets(a, k) = grad * box_norm;
      }
    }
  }
  result.classification = cls_sum * cls_norm;
  result.box = box_sum * box_norm;
  result.total = result.classification + result.box;
  return result;
}

}  // namespace effdet
