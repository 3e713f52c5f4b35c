#ifndef SITTA_NN_LAYERS_HPP_
#define SITTA_NN_LAYERS_HPP_

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sitta/tensor.hpp"

namespace sitta::nn {

template <typename Scalar>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  ArrayX<Scalar> value;
  ArrayX<Scalar> grad;
  bool norm_affine = false;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s, bool is_norm_affine = false)
      : name(std::move(n)), shape(std::move(s)), norm_affine(is_norm_affine) {
    Eigen::Index count = 1;
    for (int d : shape) count *= d;
    value = ArrayX<Scalar>::Zero(count);
    grad = ArrayX<Scalar>::Zero(count);
  }
  Eigen::Index size() const { return value.size(); }
};

/// Non-trainable state such as normalization running statistics.
template <typename Scalar>
struct Buffer {
  std::string name;
  ArrayX<Scalar> value;
};

struct GradRequest {
  bool params = true;
  bool input = true;
};

/// 2-D convolution lowered to a GEMM over an im2col matrix.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int kernel,
         int stride = 1, int pad = -1)
      : weight_(name + ".weight", {out_ch, in_ch * kernel * kernel}),
        bias_(name + ".bias", {out_ch}),
        in_(in_ch), out_(out_ch), k_(kernel), stride_(stride),
        pad_(pad < 0 ? kernel / 2 : pad) {}

  void init(std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(in_) * k_ * k_;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (Eigen::Index i = 0; i < weight_.size(); ++i) {
      weight_.value[i] = static_cast<Scalar>(dist(rng));
    }
    bias_.value.setZero();
  }

  int out_size(int in_size) const {
    return (in_size + 2 * pad_ - k_) / stride_ + 1;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    if (x.c() != in_) {
      throw std::invalid_argument("Conv2d " + weight_.name + ": expected " +
                                  std::to_string(in_) + " channels, got " +
                                  std::to_string(x.c()));
    }
    input_ = x;
    const int ho = out_size(x.h()), wo = out_size(x.w());
    Tensor<Scalar> y(x.n(), out_, ho, wo);
    const auto w = weights();
    RowMatrix<Scalar> cols;
    for (int n = 0; n < x.n(); ++n) {
      im2col(x, n, ho, wo, cols);
      auto out = y.sample(n);
      out.noalias() = w * cols;
      out.colwise() += bias_.value.matrix();
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, GradRequest req) {
    const Tensor<Scalar>& x = input_;
    const int ho = dy.h(), wo = dy.w();
    Tensor<Scalar> dx;
    if (req.input) dx = Tensor<Scalar>::like(x);
    const auto w = weights();
    Eigen::Map<RowMatrix<Scalar>> dw(weight_.grad.data(), out_, in_ * k_ * k_);
    RowMatrix<Scalar> cols, dcols;
    for (int n = 0; n < x.n(); ++n) {
      auto g = dy.sample(n);
      if (req.params) {
        im2col(x, n, ho, wo, cols);
        dw.noalias() += g * cols.transpose();
        bias_.grad += g.rowwise().sum().array();
      }
      if (req.input) {
        dcols.noalias() = w.transpose() * g;
        col2im(dcols, n, ho, wo, dx);
      }
    }
    return dx;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  Eigen::Map<const RowMatrix<Scalar>> weights() const {
    return {weight_.value.data(), out_, in_ * k_ * k_};
  }

  void im2col(const Tensor<Scalar>& x, int n, int ho, int wo,
              RowMatrix<Scalar>& cols) const {
    cols.resize(in_ * k_ * k_, ho * wo);
    if (k_ == 1 && stride_ == 1 && pad_ == 0) {
      cols = x.sample(n);
      return;
    }
    for (int c = 0; c < in_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          Scalar* row = cols.row((c * k_ + ky) * k_ + kx).data();
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            Scalar* dst = row + oy * wo;
            if (iy < 0 || iy >= x.h()) {
              std::fill(dst, dst + wo, Scalar(0));
              continue;
            }
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              dst[ox] = (ix < 0 || ix >= x.w()) ? Scalar(0) : x(n, c, iy, ix);
            }
          }
        }
      }
    }
  }

  void col2im(const RowMatrix<Scalar>& cols, int n, int ho, int wo,
              Tensor<Scalar>& dx) const {
    if (k_ == 1 && stride_ == 1 && pad_ == 0) {
      dx.sample(n) += cols;
      return;
    }
    for (int c = 0; c < in_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const Scalar* row = cols.row((c * k_ + ky) * k_ + kx).data();
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= dx.h()) continue;
            const Scalar* src = row + oy * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < dx.w()) dx(n, c, iy, ix) += src[ox];
            }
          }
        }
      }
    }
  }

  Parameter<Scalar> weight_, bias_;
  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Tensor<Scalar> input_;
};

/**
 * Batch normalization over (N, H, W). In training mode batch statistics are
 * used and the running statistics are updated; in evaluation mode the running
 * statistics are used and never touched.
 */
template <typename Scalar>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels)
      : gamma_(name + ".weight", {channels}, true),
        beta_(name + ".bias", {channels}, true),
        mean_{name + ".running_mean", ArrayX<Scalar>::Zero(channels)},
        var_{name + ".running_var", ArrayX<Scalar>::Ones(channels)},
        channels_(channels) {
    gamma_.value.setOnes();
  }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    const int hw = x.plane_size();
    const double count = static_cast<double>(x.n()) * hw;
    xhat_ = Tensor<Scalar>::like(x);
    inv_std_.resize(channels_);
    Tensor<Scalar> y = Tensor<Scalar>::like(x);
    for (int c = 0; c < channels_; ++c) {
      Scalar mean, var;
      if (training_) {
        double s = 0, s2 = 0;
        for (int n = 0; n < x.n(); ++n) {
          const auto p = x.plane(n, c).array().template cast<double>();
          s += p.sum();
          s2 += p.square().sum();
        }
        const double m = s / count;
        const double v = std::max(0.0, s2 / count - m * m);
        mean = static_cast<Scalar>(m);
        var = static_cast<Scalar>(v);
        const double unbiased = count > 1 ? v * count / (count - 1) : v;
        mean_.value[c] = static_cast<Scalar>((1 - kMomentum) * mean_.value[c] + kMomentum * m);
        var_.value[c] = static_cast<Scalar>((1 - kMomentum) * var_.value[c] + kMomentum * unbiased);
      } else {
        mean = mean_.value[c];
        var = var_.value[c];
      }
      const Scalar inv = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kEps));
      inv_std_[c] = inv;
      for (int n = 0; n < x.n(); ++n) {
        xhat_.plane(n, c).array() = (x.plane(n, c).array() - mean) * inv;
        y.plane(n, c).array() = xhat_.plane(n, c).array() * gamma_.value[c] + beta_.value[c];
      }
    }
    batch_stats_ = training_;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, GradRequest req) {
    Tensor<Scalar> dx;
    if (req.input) dx = Tensor<Scalar>::like(dy);
    const double count = static_cast<double>(dy.n()) * dy.plane_size();
    for (int c = 0; c < channels_; ++c) {
      Scalar sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < dy.n(); ++n) {
        sum_dy += dy.plane(n, c).sum();
        sum_dy_xhat += (dy.plane(n, c).array() * xhat_.plane(n, c).array()).sum();
      }
      if (req.params) {
        gamma_.grad[c] += sum_dy_xhat;
        beta_.grad[c] += sum_dy;
      }
      if (!req.input) continue;
      const Scalar g = gamma_.value[c] * inv_std_[c];
      for (int n = 0; n < dy.n(); ++n) {
        if (batch_stats_) {
          const Scalar a = static_cast<Scalar>(sum_dy / count);
          const Scalar b = static_cast<Scalar>(sum_dy_xhat / count);
          dx.plane(n, c).array() =
              g * (dy.plane(n, c).array() - a - xhat_.plane(n, c).array() * b);
        } else {
          dx.plane(n, c).array() = g * dy.plane(n, c).array();
        }
      }
    }
    return dx;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(std::vector<Buffer<Scalar>*>& out) {
    out.push_back(&mean_);
    out.push_back(&var_);
  }

 private:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  Parameter<Scalar> gamma_, beta_;
  Buffer<Scalar> mean_, var_;
  int channels_ = 0;
  bool training_ = false;
  bool batch_stats_ = false;
  Tensor<Scalar> xhat_;
  ArrayX<Scalar> inv_std_;
};

template <typename Scalar>
class ReLU {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    Tensor<Scalar> y = x;
    y.flat() = y.flat().max(Scalar(0));
    mask_ = (x.flat() > Scalar(0)).template cast<Scalar>();
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) const {
    Tensor<Scalar> dx = dy;
    dx.flat() *= mask_;
    return dx;
  }

 private:
  ArrayX<Scalar> mask_;
};

/// Conv -> BatchNorm -> ReLU.
template <typename Scalar>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const std::string& name, int in_ch, int out_ch, int stride = 1,
            bool norm = true)
      : conv_(name + ".conv", in_ch, out_ch, 3, stride),
        norm_(name + ".norm", out_ch), use_norm_(norm) {}

  void init(std::mt19937_64& rng) { conv_.init(rng); }
  void set_training(bool t) { norm_.set_training(t); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    Tensor<Scalar> h = conv_.forward(x);
    if (use_norm_) h = norm_.forward(h);
    return relu_.forward(h);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy, GradRequest req) {
    Tensor<Scalar> g = relu_.backward(dy);
    if (use_norm_) g = norm_.backward(g, {req.params, true});
    return conv_.backward(g, req);
  }
  void collect(std::vector<Parameter<Scalar>*>& out) {
    conv_.collect(out);
    if (use_norm_) norm_.collect(out);
  }
  void collect_buffers(std::vector<Buffer<Scalar>*>& out) {
    if (use_norm_) norm_.collect_buffers(out);
  }

 private:
  Conv2d<Scalar> conv_;
  BatchNorm2d<Scalar> norm_;
  ReLU<Scalar> relu_;
  bool use_norm_ = true;
};

/// Nearest-neighbour 2x upsampling cropped to an explicit output size.
template <typename Scalar>
Tensor<Scalar> upsample2x(const Tensor<Scalar>& x, int out_h, int out_w) {
  Tensor<Scalar> y(x.n(), x.c(), out_h, out_w);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int r = 0; r < out_h; ++r)
        for (int q = 0; q < out_w; ++q) y(n, c, r, q) = x(n, c, r / 2, q / 2);
  return y;
}

template <typename Scalar>
Tensor<Scalar> upsample2x_backward(const Tensor<Scalar>& dy, int in_h, int in_w) {
  Tensor<Scalar> dx(dy.n(), dy.c(), in_h, in_w);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c)
      for (int r = 0; r < dy.h(); ++r)
        for (int q = 0; q < dy.w(); ++q) dx(n, c, r / 2, q / 2) += dy(n, c, r, q);
  return dx;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw std::invalid_argument("concat_channels: shape mismatch");
  }
  Tensor<Scalar> out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    out.sample(n).topRows(a.c()) = a.sample(n);
    out.sample(n).bottomRows(b.c()) = b.sample(n);
  }
  return out;
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_channels(const Tensor<Scalar>& t,
                                                         int first) {
  Tensor<Scalar> a(t.n(), first, t.h(), t.w());
  Tensor<Scalar> b(t.n(), t.c() - first, t.h(), t.w());
  for (int n = 0; n < t.n(); ++n) {
    a.sample(n) = t.sample(n).topRows(first);
    b.sample(n) = t.sample(n).bottomRows(t.c() - first);
  }
  return {std::move(a), std::move(b)};
}

/// Fully connected layer on Nx(in)x1x1 tensors.
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out)
      : weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}),
        in_(in), out_(out) {}

  void init(std::mt19937_64& rng, double gain = 2.0) {
    std::normal_distribution<double> dist(0.0, std::sqrt(gain / in_));
    for (Eigen::Index i = 0; i < weight_.size(); ++i) {
      weight_.value[i] = static_cast<Scalar>(dist(rng));
    }
    bias_.value.setZero();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    input_ = x;
    Tensor<Scalar> y(x.n(), out_, 1, 1);
    Eigen::Map<const RowMatrix<Scalar>> w(weight_.value.data(), out_, in_);
    for (int n = 0; n < x.n(); ++n) {
      y.sample(n) = w * x.sample(n) + bias_.value.matrix();
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, GradRequest req) {
    Tensor<Scalar> dx = Tensor<Scalar>::like(input_);
    Eigen::Map<const RowMatrix<Scalar>> w(weight_.value.data(), out_, in_);
    Eigen::Map<RowMatrix<Scalar>> dw(weight_.grad.data(), out_, in_);
    for (int n = 0; n < dy.n(); ++n) {
      if (req.params) {
        dw.noalias() += dy.sample(n) * input_.sample(n).transpose();
        bias_.grad += dy.sample(n).array();
      }
      dx.sample(n).noalias() = w.transpose() * dy.sample(n);
    }
    return dx;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Parameter<Scalar> weight_, bias_;
  int in_ = 0, out_ = 0;
  Tensor<Scalar> input_;
};

template <typename Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.n(), x.c(), 1, 1);
  for (int n = 0; n < x.n(); ++n) {
    y.sample(n) = x.sample(n).rowwise().mean();
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Tensor<Scalar>& dy, int h, int w) {
  Tensor<Scalar> dx(dy.n(), dy.c(), h, w);
  const Scalar scale = Scalar(1) / static_cast<Scalar>(h * w);
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      dx.plane(n, c).setConstant(dy(n, c, 0, 0) * scale);
    }
  }
  return dx;
}

}  // namespace sitta::nn

#endif  // SITTA_NN_LAYERS_HPP_
