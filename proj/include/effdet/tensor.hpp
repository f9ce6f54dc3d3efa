// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace effdet {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Channel-major feature map: data is channels x (height * width), each row one
/// channel laid out row by row.
template <typename Scalar>
struct FeatureMap {
  int height = 0;
  int width = 0;
  Matrix<Scalar> data;

  FeatureMap() = default;
  FeatureMap(int channels, int h, int w) : height(h), width(w), data(Matrix<Scalar>::Zero(channels, h * w)) {}

  int channels() const { return static_cast<int>(data.rows()); }
  int pixels() const { return height * width; }
  bool same_shape(const FeatureMap& other) const {
    return height == other.height && width == other.width && channels() == other.channels();
  }
};

/// Which part of the detector a parameter belongs to, for count breakdowns.
enum class ParamGroup { backbone, fusion, heads };

/// Flat store of named learnable tensors. Layers keep indices into it, so the
/// same layout serves weights, gradients and optimizer state.
template <typename Scalar>
class ParameterSet {
 public:
  int add(std::string name, int rows, int cols, ParamGroup group) {
    names_.push_back(std::move(name));
    groups_.push_back(group);
    values_.push_back(Matrix<Scalar>::Zero(rows, cols));
    return static_cast<int>(values_.size()) - 1;
  }

  std::size_t size() const { return values_.size(); }
  Matrix<Scalar>& operator[](int i) { return values_[i]; }
  const Matrix<Scalar>& operator[](int i) const { return values_[i]; }
  const std::string& name(int i) const { return names_[i]; }
  ParamGroup group(int i) const { return groups_[i]; }

  /// Zero-valued tensors of identical shapes (gradient or momentum buffers).
  ParameterSet zeros_like() const {
    ParameterSet out = *this;
    for (auto& v : out.values_) v.setZero();
    return out;
  }

  void set_zero() {
    for (auto& v : values_) v.setZero();
  }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<ParamGroup> groups_;
  std::vector<Matrix<Scalar>> values_;
};

}  // namespace effdet
