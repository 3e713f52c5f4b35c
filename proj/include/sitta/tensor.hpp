#ifndef SITTA_TENSOR_HPP_
#define SITTA_TENSOR_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sitta {

template <typename Scalar>
using RowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/**
 * Dense NCHW tensor. Storage is contiguous and row-major within each plane,
 * so a sample can be viewed as a C x (H*W) matrix and a plane as H x W.
 */
template <typename Scalar>
class Tensor {
 public:
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;
  using FlatMap = Eigen::Map<ArrayX<Scalar>>;
  using ConstFlatMap = Eigen::Map<const ArrayX<Scalar>>;
  using Storage = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

  Tensor() = default;
  Tensor(int n, int c, int h, int w, Scalar fill = Scalar(0))
      : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
      throw std::invalid_argument("Tensor: negative dimension");
    }
    data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
  }

  static Tensor like(const Tensor& other, Scalar fill = Scalar(0)) {
    return Tensor(other.n_, other.c_, other.h_, other.w_, fill);
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  int plane_size() const { return h_ * w_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape_string() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" +
           std::to_string(h_) + "x" + std::to_string(w_);
  }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  Scalar& operator()(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }
  Scalar operator()(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }

  FlatMap flat() { return FlatMap(data_.data(), data_.size()); }
  ConstFlatMap flat() const { return ConstFlatMap(data_.data(), data_.size()); }

  /// H x W view of one channel of one sample.
  MatrixMap plane(int n, int c) {
    return MatrixMap(data_.data() + offset(n, c), h_, w_);
  }
  ConstMatrixMap plane(int n, int c) const {
    return ConstMatrixMap(data_.data() + offset(n, c), h_, w_);
  }

  /// C x (H*W) view of one sample.
  MatrixMap sample(int n) {
    return MatrixMap(data_.data() + offset(n, 0), c_, plane_size());
  }
  ConstMatrixMap sample(int n) const {
    return ConstMatrixMap(data_.data() + offset(n, 0), c_, plane_size());
  }

  /// Copy of sample n as a 1xCxHxW tensor.
  Tensor slice(int n) const {
    Tensor out(1, c_, h_, w_);
    std::copy_n(data_.data() + offset(n, 0), out.size(), out.data());
    return out;
  }
  void set_slice(int n, const Tensor& src) {
    if (src.n_ != 1 || src.c_ != c_ || src.h_ != h_ || src.w_ != w_) {
      throw std::invalid_argument("Tensor::set_slice: shape mismatch");
    }
    std::copy_n(src.data(), src.size(), data_.data() + offset(n, 0));
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(n_, c_, h_, w_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out.data()[i] = static_cast<Other>(data_[i]);
    }
    return out;
  }

  bool operator==(const Tensor& o) const {
    return same_shape(o) && data_ == o.data_;
  }

 private:
  std::size_t offset(int n, int c) const {
    return (static_cast<std::size_t>(n) * c_ + c) * h_ * w_;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  Storage data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// H x W x 3 image with values in [0,1], stored as 1x3xHxW.
using Image = TensorF;
/// Raw per-class scores, 1xCxHxW.
using LogitMask = TensorF;
/// Per-pixel class distributions, 1xCxHxW.
using ProbMask = TensorF;

/// H x W class indices; 255 marks ignored pixels.
using LabelMask =
    Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::uint8_t kIgnoreLabel = 255;

}  // namespace sitta

#endif  // SITTA_TENSOR_HPP_
