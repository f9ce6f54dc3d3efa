// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "effdet/errors.hpp"
#include "effdet/tensor.hpp"

namespace effdet {

/// Square convolution with "same" padding (kernel 1 or 3) and stride 1 or 2,
/// computed as a GEMM over an im2col buffer.
template <typename Scalar>
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int weight = -1;  // out_channels x (in_channels * kernel * kernel)
  int bias = -1;    // out_channels x 1

  struct Cache {
    Matrix<Scalar> columns;
    int in_height = 0;
    int in_width = 0;
  };

  static Conv2d create(ParameterSet<Scalar>& params, const std::string& name, int in_channels,
                       int out_channels, int kernel, int stride, ParamGroup group) {
    Conv2d conv;
    conv.in_channels = in_channels;
    conv.out_channels = out_channels;
    conv.kernel = kernel;
    conv.stride = stride;
    conv.weight = params.add(name + ".weight", out_channels, in_channels * kernel * kernel, group);
    conv.bias = params.add(name + ".bias", out_channels, 1, group);
    return conv;
  }

  int fan_in() const { return in_channels * kernel * kernel; }
  int output_side(int side) const { return (side + 2 * pad() - kernel) / stride + 1; }
  int pad() const { return kernel / 2; }

  /// He-normal weights, constant bias.
  template <typename Rng>
  void init_he(ParameterSet<Scalar>& params, Rng& rng, Scalar bias_value = Scalar(0)) const {
    init_normal(params, rng, std::sqrt(2.0 / fan_in()), bias_value);
  }

  template <typename Rng>
  void init_normal(ParameterSet<Scalar>& params, Rng& rng, double stddev, Scalar bias_value) const {
    std::normal_distribution<double> dist(0.0, stddev);
    auto& w = params[weight];
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
    params[bias].setConstant(bias_value);
  }

  FeatureMap<Scalar> forward(const ParameterSet<Scalar>& params, const FeatureMap<Scalar>& in,
                             Cache* cache) const {
    if (in.channels() != in_channels)
      throw InputError("conv expects " + std::to_string(in_channels) + " channels, got " +
                       std::to_string(in.channels()));
    FeatureMap<Scalar> out;
    out.height = output_side(in.height);
    out.width = output_side(in.width);
    Matrix<Scalar> local;
    Matrix<Scalar>& columns = cache ? cache->columns : local;
    if (kernel == 1 && stride == 1) {
      columns = in.data;
    } else {
      im2col(in, out.height, out.width, columns);
    }
    out.data.noalias() = params[weight] * columns;
    out.data.colwise() += params[bias].col(0);
    if (cache) {
      cache->in_height = in.height;
      cache->in_width = in.width;
    }
    return out;
  }

  /// Accumulates parameter gradients into `grads` and returns the input gradient.
  FeatureMap<Scalar> backward(const ParameterSet<Scalar>& params, const Cache& cache,
                              const FeatureMap<Scalar>& grad_out, ParameterSet<Scalar>& grads) const {
    grads[weight].noalias() += grad_out.data * cache.columns.transpose();
    grads[bias].col(0) += grad_out.data.rowwise().sum();
    FeatureMap<Scalar> grad_in(in_channels, cache.in_height, cache.in_width);
    if (kernel == 1 && stride == 1) {
      grad_in.data.noalias() = params[weight].transpose() * grad_out.data;
    } else {
      Matrix<Scalar> grad_columns = params[weight].transpose() * grad_out.data;
      col2im(grad_columns, grad_out.height, grad_out.width, grad_in);
    }
    return grad_in;
  }

 private:
  void im2col(const FeatureMap<Scalar>& in, int out_h, int out_w, Matrix<Scalar>& columns) const {
    const int k = kernel;
    const int p = pad();
    columns.resize(in_channels * k * k, out_h * out_w);
    for (int c = 0; c < in_channels; ++c) {
      const Scalar* src = in.data.row(c).data();
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          Scalar* dst = columns.row((c * k + ky) * k + kx).data();
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * stride + ky - p;
            Scalar* row = dst + oy * out_w;
            if (iy < 0 || iy >= in.height) {
              std::fill(row, row + out_w, Scalar(0));
              continue;
            }
            const Scalar* src_row = src + iy * in.width;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride + kx - p;
              row[ox] = (ix < 0 || ix >= in.width) ? Scalar(0) : src_row[ix];
            }
          }
        }
      }
    }
  }

  void col2im(const Matrix<Scalar>& columns, int out_h, int out_w, FeatureMap<Scalar>& grad_in) const {
    const int k = kernel;
    const int p = pad();
    for (int c = 0; c < in_channels; ++c) {
      Scalar* dst = grad_in.data.row(c).data();
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const Scalar* src = columns.row((c * k + ky) * k + kx).data();
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * stride + ky - p;
            if (iy < 0 || iy >= grad_in.height) continue;
            Scalar* dst_row = dst + iy * grad_in.width;
            const Scalar* src_row = src + oy * out_w;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride + kx - p;
              if (ix >= 0 && ix < grad_in.width) dst_row[ix] += src_row[ox];
            }
          }
        }
      }
    }
  }
};

template <typename Scalar>
void relu_inplace(FeatureMap<Scalar>& x) {
  x.data = x.data.cwiseMax(Scalar(0));
}

/// Masks `grad` by the positive entries of the ReLU output.
template <typename Scalar>
void relu_backward_inplace(const FeatureMap<Scalar>& output, FeatureMap<Scalar>& grad) {
  grad.data = (output.data.array() > Scalar(0)).select(grad.data, Scalar(0));
}

/// Conv followed by ReLU; caches the activation for the backward pass.
template <typename Scalar>
struct ConvRelu {
  Conv2d<Scalar> conv;

  struct Cache {
    typename Conv2d<Scalar>::Cache conv;
    FeatureMap<Scalar> output;
  };

  FeatureMap<Scalar> forward(const ParameterSet<Scalar>& params, const FeatureMap<Scalar>& in,
                             Cache* cache) const {
    auto out = conv.forward(params, in, cache ? &cache->conv : nullptr);
    relu_inplace(out);
    if (cache) cache->output = out;
    return out;
  }

  FeatureMap<Scalar> backward(const ParameterSet<Scalar>& params, const Cache& cache,
                              FeatureMap<Scalar> grad_out, ParameterSet<Scalar>& grads) const {
    relu_backward_inplace(cache.output, grad_out);
    return conv.backward(params, cache.conv, grad_out, grads);
  }
};

/// 2x2 max pooling with stride 2; records winning positions for backward.
template <typename Scalar>
FeatureMap<Scalar> max_pool2(const FeatureMap<Scalar>& in, std::vector<int>* argmax) {
  if (in.height % 2 != 0 || in.width % 2 != 0) throw InputError("max_pool2 needs even sides");
  FeatureMap<Scalar> out(in.channels(), in.height / 2, in.width / 2);
  if (argmax) argmax->assign(static_cast<std::size_t>(out.data.size()), 0);
  for (int c = 0; c < in.channels(); ++c) {
    const Scalar* src = in.data.row(c).data();
    Scalar* dst = out.data.row(c).data();
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        int best = (2 * oy) * in.width + 2 * ox;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int idx = (2 * oy + dy) * in.width + 2 * ox + dx;
            if (src[idx] > src[best]) best = idx;
          }
        const int o = oy * out.width + ox;
        dst[o] = src[best];
        if (argmax) (*argmax)[static_cast<std::size_t>(c) * out.pixels() + o] = best;
      }
    }
  }
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> max_pool2_backward(const FeatureMap<Scalar>& grad_out, const std::vector<int>& argmax,
                                      int in_height, int in_width) {
  FeatureMap<Scalar> grad_in(grad_out.channels(), in_height, in_width);
  for (int c = 0; c < grad_out.channels(); ++c) {
    const Scalar* src = grad_out.data.row(c).data();
    Scalar* dst = grad_in.data.row(c).data();
    for (int o = 0; o < grad_out.pixels(); ++o)
      dst[argmax[static_cast<std::size_t>(c) * grad_out.pixels() + o]] += src[o];
  }
  return grad_in;
}

/// Nearest-neighbour 2x upsampling.
template <typename Scalar>
FeatureMap<Scalar> upsample2(const FeatureMap<Scalar>& in) {
  FeatureMap<Scalar> out(in.channels(), in.height * 2, in.width * 2);
  for (int c = 0; c < in.channels(); ++c) {
    const Scalar* src = in.data.row(c).data();
    Scalar* dst = out.data.row(c).data();
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) dst[y * out.width + x] = src[(y / 2) * in.width + x / 2];
  }
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> upsample2_backward(const FeatureMap<Scalar>& grad_out) {
  FeatureMap<Scalar> grad_in(grad_out.channels(), grad_out.height / 2, grad_out.width / 2);
  for (int c = 0; c < grad_out.channels(); ++c) {
    const Scalar* src = grad_out.data.row(c).data();
    Scalar* dst = grad_in.data.row(c).data();
    for (int y = 0; y < grad_out.height; ++y)
      for (int x = 0; x < grad_out.width; ++x) dst[(y / 2) * grad_in.width + x / 2] += src[y * grad_out.width + x];
  }
  return grad_in;
}

}  // namespace effdet
