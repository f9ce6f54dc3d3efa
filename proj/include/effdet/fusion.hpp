// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "effdet/errors.hpp"
#include "effdet/layers.hpp"

namespace effdet {

inline constexpr double kFusionEpsilon = 1e-4;

/// Fast normalized fusion weights: max(w_i, 0) / (sum_j max(w_j, 0) + eps).
template <typename Derived>
RowVector<typename Derived::Scalar> normalize_fusion_weights(const Eigen::MatrixBase<Derived>& raw) {
  using Scalar = typename Derived::Scalar;
  if (raw.size() == 0) throw DomainError("fusion needs at least one input");
  const auto clamped = raw.reshaped().transpose().cwiseMax(Scalar(0)).eval();
  return clamped / (clamped.sum() + Scalar(kFusionEpsilon));
}

/// Pre-convolution part of a fusion node: sum_i w_hat_i * input_i.
template <typename Scalar>
FeatureMap<Scalar> weighted_sum(std::span<const FeatureMap<Scalar>* const> inputs,
                                const RowVector<Scalar>& raw_weights) {
  if (inputs.empty()) throw DomainError("fusion needs at least one input");
  if (static_cast<std::size_t>(raw_weights.size()) != inputs.size())
    throw DomainError("fusion weight count does not match input count");
  for (const auto* in : inputs)
    if (!in->same_shape(*inputs.front())) throw DomainError("fusion inputs must share one shape");
  const RowVector<Scalar> w = normalize_fusion_weights(raw_weights);
  FeatureMap<Scalar> out(inputs.front()->channels(), inputs.front()->height, inputs.front()->width);
  for (std::size_t i = 0; i < inputs.size(); ++i) out.data += w(static_cast<Eigen::Index>(i)) * inputs[i]->data;
  return out;
}

/// One BiFPN node: weighted sum of same-shape inputs, then conv + ReLU.
template <typename Scalar>
struct FusionNode {
  int weights = -1;  // 1 x num_inputs, raw (pre-normalization)
  int num_inputs = 0;
  ConvRelu<Scalar> block;

  struct Cache {
    std::vector<FeatureMap<Scalar>> inputs;
    typename ConvRelu<Scalar>::Cache block;
  };

  static FusionNode create(ParameterSet<Scalar>& params, const std::string& name, int num_inputs,
                           int channels) {
    FusionNode node;
    node.num_inputs = num_inputs;
    node.weights = params.add(name + ".fusion_weights", 1, num_inputs, ParamGroup::fusion);
    params[node.weights].setOnes();
    node.block.conv = Conv2d<Scalar>::create(params, name + ".conv", channels, channels, 3, 1, ParamGroup::fusion);
    return node;
  }

  FeatureMap<Scalar> forward(const ParameterSet<Scalar>& params, std::vector<FeatureMap<Scalar>> inputs,
                             Cache* cache) const {
    std::vector<const FeatureMap<Scalar>*> ptrs;
    for (const auto& in : inputs) ptrs.push_back(&in);
    const RowVector<Scalar> raw = params[weights].row(0);
    auto mixed = weighted_sum<Scalar>(ptrs, raw);
    auto out = block.forward(params, mixed, cache ? &cache->block : nullptr);
    if (cache) cache->inputs = std::move(inputs);
    return out;
  }

  /// Returns one gradient per input, in input order.
  std::vector<FeatureMap<Scalar>> backward(const ParameterSet<Scalar>& params, const Cache& cache,
                                           const FeatureMap<Scalar>& grad_out,
                                           ParameterSet<Scalar>& grads) const {
    const auto grad_mixed = block.backward(params, cache.block, grad_out, grads);
    const RowVector<Scalar> raw = params[weights].row(0);
    const RowVector<Scalar> clamped = raw.cwiseMax(Scalar(0));
    const Scalar denom = clamped.sum() + Scalar(kFusionEpsilon);
    RowVector<Scalar> inner(num_inputs);  // <dL/dmixed, input_i>
    for (int i = 0; i < num_inputs; ++i) inner(i) = grad_mixed.data.cwiseProduct(cache.inputs[i].data).sum();
    const Scalar weighted_inner = clamped.dot(inner);
    for (int i = 0; i < num_inputs; ++i) {
      if (raw(i) > Scalar(0))
        grads[weights](0, i) += (inner(i) * denom - weighted_inner) / (denom * denom);
    }
    std::vector<FeatureMap<Scalar>> grad_inputs;
    for (int i = 0; i < num_inputs; ++i) {
      FeatureMap<Scalar> g;
      g.height = grad_mixed.height;
      g.width = grad_mixed.width;
      g.data = (clamped(i) / denom) * grad_mixed.data;
      grad_inputs.push_back(std::move(g));
    }
    return grad_inputs;
  }
};

}  // namespace effdet
