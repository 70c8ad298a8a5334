// SPDX-License-Identifier: Apache-2.0
#include "s2st/toy_network.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

namespace s2st {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;

constexpr std::size_t kCoordChannels = 2;
constexpr const char* kConditionNames[] = {"null", "day", "night"};

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Mat silu(const Mat& a) {
  return a.unaryExpr([](double v) { return v * sigmoid(v); });
}

/// dL/da given dL/dsilu(a).
Mat silu_backward(const Mat& a, const Mat& upstream) {
  return upstream.cwiseProduct(a.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  }));
}

/// Rows are pixels of n images of size s x s; columns are 9 * C tap-major.
Mat im2col(const Mat& a, std::size_t n, std::size_t s, int dil) {
  const std::size_t c = static_cast<std::size_t>(a.cols());
  Mat out = Mat::Zero(static_cast<Eigen::Index>(n * s * s), static_cast<Eigen::Index>(9 * c));
  const long side = static_cast<long>(s);
  for (std::size_t b = 0; b < n; ++b) {
    for (long y = 0; y < side; ++y) {
      for (long x = 0; x < side; ++x) {
        double* dst = out.data() + ((b * s + static_cast<std::size_t>(y)) * s + static_cast<std::size_t>(x)) * 9 * c;
        for (int k = 0; k < 9; ++k) {
          const long yy = y + (k / 3 - 1) * dil, xx = x + (k % 3 - 1) * dil;
          if (yy < 0 || yy >= side || xx < 0 || xx >= side) continue;
          const double* src = a.data() + ((b * s + static_cast<std::size_t>(yy)) * s + static_cast<std::size_t>(xx)) * c;
          std::memcpy(dst + static_cast<std::size_t>(k) * c, src, c * sizeof(double));
        }
      }
    }
  }
  return out;
}

/// Adjoint of im2col.
Mat col2im(const Mat& cols, std::size_t n, std::size_t s, int dil, std::size_t c) {
  Mat out = Mat::Zero(static_cast<Eigen::Index>(n * s * s), static_cast<Eigen::Index>(c));
  const long side = static_cast<long>(s);
  for (std::size_t b = 0; b < n; ++b) {
    for (long y = 0; y < side; ++y) {
      for (long x = 0; x < side; ++x) {
        const double* src =
            cols.data() + ((b * s + static_cast<std::size_t>(y)) * s + static_cast<std::size_t>(x)) * 9 * c;
        for (int k = 0; k < 9; ++k) {
          const long yy = y + (k / 3 - 1) * dil, xx = x + (k % 3 - 1) * dil;
          if (yy < 0 || yy >= side || xx < 0 || xx >= side) continue;
          double* dst = out.data() + ((b * s + static_cast<std::size_t>(yy)) * s + static_cast<std::size_t>(xx)) * c;
          const double* tap = src + static_cast<std::size_t>(k) * c;
          for (std::size_t i = 0; i < c; ++i) dst[i] += tap[i];
        }
      }
    }
  }
  return out;
}

struct ForwardCache {
  std::size_t n = 0;
  Mat time_features, time_hidden, embedding;
  Mat input_cols;
  Mat cond_up;
  std::vector<Mat> h;
  std::vector<Mat> pre;
  std::vector<Mat> cols;
  Mat out_cols;
};

class Runner {
 public:
  Runner(const ToyNetworkShape& shape, const std::vector<ParamSlot>& slots, std::span<const double> params)
      : shape_(shape), slots_(slots), params_(params) {}

  ConstMap weight(std::size_t index) const {
    const ParamSlot& s = slots_[index];
    return ConstMap(params_.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
  }

  Mat forward(const std::vector<const Tensor*>& x, const std::vector<int>& t, const std::vector<const Tensor*>& cond,
              ForwardCache& cache) const {
    const std::size_t n = x.size(), s = shape_.latent_size, px = s * s, ch = shape_.latent_channels;
    cache.n = n;

    // Time embedding.
    const std::size_t half = shape_.time_dim / 2;
    cache.time_features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(shape_.time_dim));
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        cache.time_features(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) = std::sin(t[b] * freq);
        cache.time_features(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(half + i)) = std::cos(t[b] * freq);
      }
    }
    cache.time_hidden = (cache.time_features * weight(0)).rowwise() + weight(1).row(0);
    cache.embedding = (silu(cache.time_hidden) * weight(2)).rowwise() + weight(3).row(0);

    // Input with coordinate channels.
    Mat input(static_cast<Eigen::Index>(n * px), static_cast<Eigen::Index>(ch + kCoordChannels));
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t xx = 0; xx < s; ++xx) {
          const auto row = static_cast<Eigen::Index>(b * px + y * s + xx);
          for (std::size_t c = 0; c < ch; ++c) input(row, static_cast<Eigen::Index>(c)) = x[b]->at(y, xx, c);
          input(row, static_cast<Eigen::Index>(ch)) = (2.0 * static_cast<double>(y) + 1.0) / static_cast<double>(s) - 1.0;
          input(row, static_cast<Eigen::Index>(ch + 1)) =
              (2.0 * static_cast<double>(xx) + 1.0) / static_cast<double>(s) - 1.0;
        }
      }
    }

    // Nearest-upsampled condition grid.
    const std::size_t g = shape_.cond_grid, d = shape_.cond_dim, cell = s / g;
    cache.cond_up.resize(static_cast<Eigen::Index>(n * px), static_cast<Eigen::Index>(d));
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t xx = 0; xx < s; ++xx) {
          for (std::size_t k = 0; k < d; ++k) {
            cache.cond_up(static_cast<Eigen::Index>(b * px + y * s + xx), static_cast<Eigen::Index>(k)) =
                cond[b]->at(y / cell, xx / cell, k);
          }
        }
      }
    }

    cache.input_cols = im2col(input, n, s, 1);
    const std::size_t blocks = shape_.dilations.size();
    cache.h.assign(blocks + 1, Mat());
    cache.pre.assign(blocks, Mat());
    cache.cols.assign(blocks, Mat());
    cache.h[0] = (cache.input_cols * weight(4)).rowwise() + weight(5).row(0);

    for (std::size_t k = 0; k < blocks; ++k) {
      const std::size_t base = 6 + 5 * k;
      const Mat time_part = cache.embedding * weight(base);
      Mat pre = cache.h[k] + cache.cond_up * weight(base + 1);
      pre.rowwise() += weight(base + 2).row(0);
      for (std::size_t b = 0; b < n; ++b) {
        pre.middleRows(static_cast<Eigen::Index>(b * px), static_cast<Eigen::Index>(px)).rowwise() +=
            time_part.row(static_cast<Eigen::Index>(b));
      }
      cache.cols[k] = im2col(silu(pre), n, s, shape_.dilations[k]);
      cache.pre[k] = std::move(pre);
      cache.h[k + 1] = cache.h[k] + ((cache.cols[k] * weight(base + 3)).rowwise() + weight(base + 4).row(0));
    }
    const std::size_t out_base = 6 + 5 * blocks;
    cache.out_cols = im2col(silu(cache.h[blocks]), n, s, 1);
    return (cache.out_cols * weight(out_base)).rowwise() + weight(out_base + 1).row(0);
  }

  /// Returns d input (latent channels only) and d condition; accumulates
  /// parameter gradients when grad is non-empty.
  void backward(const ForwardCache& cache, const Mat& upstream, Mat* d_input, std::vector<Tensor>* d_cond,
                std::span<double> grad) const {
    const std::size_t n = cache.n, s = shape_.latent_size, px = s * s, hid = shape_.hidden;
    const std::size_t blocks = shape_.dilations.size(), out_base = 6 + 5 * blocks;
    const bool want_params = !grad.empty();
    auto grad_of = [&](std::size_t index) {
      const ParamSlot& sl = slots_[index];
      return MutMap(grad.data() + sl.offset, static_cast<Eigen::Index>(sl.rows), static_cast<Eigen::Index>(sl.cols));
    };

    if (want_params) {
      grad_of(out_base).noalias() += cache.out_cols.transpose() * upstream;
      grad_of(out_base + 1) += upstream.colwise().sum();
    }
    Mat dh = silu_backward(cache.h[blocks], col2im(upstream * weight(out_base).transpose(), n, s, 1, hid));

    Mat d_embedding = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(hid));
    Mat d_cond_up = Mat::Zero(static_cast<Eigen::Index>(n * px), static_cast<Eigen::Index>(shape_.cond_dim));
    for (std::size_t k = blocks; k-- > 0;) {
      const std::size_t base = 6 + 5 * k;
      if (want_params) {
        grad_of(base + 3).noalias() += cache.cols[k].transpose() * dh;
        grad_of(base + 4) += dh.colwise().sum();
      }
      const Mat d_pre =
          silu_backward(cache.pre[k], col2im(dh * weight(base + 3).transpose(), n, s, shape_.dilations[k], hid));
      Mat d_time(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(hid));
      for (std::size_t b = 0; b < n; ++b) {
        d_time.row(static_cast<Eigen::Index>(b)) =
            d_pre.middleRows(static_cast<Eigen::Index>(b * px), static_cast<Eigen::Index>(px)).colwise().sum();
      }
      d_embedding.noalias() += d_time * weight(base).transpose();
      d_cond_up.noalias() += d_pre * weight(base + 1).transpose();
      if (want_params) {
        grad_of(base).noalias() += cache.embedding.transpose() * d_time;
        grad_of(base + 1).noalias() += cache.cond_up.transpose() * d_pre;
        grad_of(base + 2) += d_pre.colwise().sum();
      }
      dh += d_pre;
    }

    if (want_params) {
      grad_of(4).noalias() += cache.input_cols.transpose() * dh;
      grad_of(5) += dh.colwise().sum();
      const Mat d_hidden_act = d_embedding * weight(2).transpose();
      const Mat d_hidden = silu_backward(cache.time_hidden, d_hidden_act);
      grad_of(2).noalias() += silu(cache.time_hidden).transpose() * d_embedding;
      grad_of(3) += d_embedding.colwise().sum();
      grad_of(0).noalias() += cache.time_features.transpose() * d_hidden;
      grad_of(1) += d_hidden.colwise().sum();
    }
    if (d_input != nullptr) {
      const std::size_t in_ch = shape_.latent_channels + kCoordChannels;
      *d_input = col2im(dh * weight(4).transpose(), n, s, 1, in_ch);
    }
    if (d_cond != nullptr) {
      const std::size_t g = shape_.cond_grid, d = shape_.cond_dim, cell = s / g;
      d_cond->assign(n, Tensor::hwc(g, g, d));
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t y = 0; y < s; ++y) {
          for (std::size_t xx = 0; xx < s; ++xx) {
            for (std::size_t k = 0; k < d; ++k) {
              (*d_cond)[b].at(y / cell, xx / cell, k) +=
                  d_cond_up(static_cast<Eigen::Index>(b * px + y * s + xx), static_cast<Eigen::Index>(k));
            }
          }
        }
      }
    }
  }

 private:
  const ToyNetworkShape& shape_;
  const std::vector<ParamSlot>& slots_;
  std::span<const double> params_;
};

Tensor rows_to_tensor(const Mat& m, std::size_t row0, std::size_t s, std::size_t channels) {
  Tensor out = Tensor::hwc(s, s, channels);
  for (std::size_t p = 0; p < s * s; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      out[p * channels + c] = m(static_cast<Eigen::Index>(row0 + p), static_cast<Eigen::Index>(c));
    }
  }
  return out;
}

Mat tensors_to_rows(const std::vector<const Tensor*>& ts) {
  const std::size_t px = ts.front()->height() * ts.front()->width(), ch = ts.front()->channels();
  Mat out(static_cast<Eigen::Index>(ts.size() * px), static_cast<Eigen::Index>(ch));
  for (std::size_t b = 0; b < ts.size(); ++b) {
    std::memcpy(out.data() + b * px * ch, ts[b]->data(), px * ch * sizeof(double));
  }
  return out;
}

template <typename T>
std::vector<const Tensor*> pointers(const std::vector<T>& v) {
  std::vector<const Tensor*> out;
  out.reserve(v.size());
  for (const auto& t : v) out.push_back(&t);
  return out;
}

}  // namespace

ToyNetwork::ToyNetwork(ToyNetworkShape shape) : shape_(std::move(shape)) {
  if (shape_.latent_size == 0 || shape_.cond_grid == 0 || shape_.latent_size % shape_.cond_grid != 0) {
    throw std::invalid_argument("toy network: latent size must be a positive multiple of the condition grid");
  }
  if (shape_.time_dim % 2 != 0 || shape_.hidden == 0 || shape_.dilations.empty()) {
    throw std::invalid_argument("toy network: invalid shape");
  }
  const std::size_t hid = shape_.hidden, in_ch = shape_.latent_channels + kCoordChannels;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    slots_.push_back({std::move(name), rows, cols, offset});
    offset += rows * cols;
  };
  add("time_w1", shape_.time_dim, hid);
  add("time_b1", 1, hid);
  add("time_w2", hid, hid);
  add("time_b2", 1, hid);
  add("in_w", 9 * in_ch, hid);
  add("in_b", 1, hid);
  for (std::size_t k = 0; k < shape_.dilations.size(); ++k) {
    const std::string p = "block" + std::to_string(k) + "_";
    add(p + "time", hid, hid);
    add(p + "cond", shape_.cond_dim, hid);
    add(p + "shift", 1, hid);
    add(p + "conv_w", 9 * hid, hid);
    add(p + "conv_b", 1, hid);
  }
  add("out_w", 9 * hid, shape_.latent_channels);
  add("out_b", 1, shape_.latent_channels);
  for (const char* name : kConditionNames) {
    add(std::string("cond_") + name, shape_.cond_grid * shape_.cond_grid, shape_.cond_dim);
  }
  params_.assign(offset, 0.0);
}

const ParamSlot& ToyNetwork::slot(const std::string& name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("toy network: no parameter named '" + name + "'");
}

void ToyNetwork::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& s : slots_) {
    double scale = 0.0;
    if (s.name.starts_with("cond_")) {
      scale = 1.0;
    } else if (s.rows > 1) {
      scale = std::sqrt(1.0 / static_cast<double>(s.rows));
      if (s.name.ends_with("conv_w")) scale *= 0.5;
      if (s.name == "out_w") scale *= 0.1;
    }
    for (std::size_t i = 0; i < s.rows * s.cols; ++i) params_[s.offset + i] = scale == 0.0 ? 0.0 : scale * normal(rng);
  }
}

Tensor ToyNetwork::stored_condition(const std::string& name) const {
  const ParamSlot& s = slot("cond_" + name);
  return Tensor(condition_shape(),
                std::vector<double>(params_.begin() + static_cast<long>(s.offset),
                                    params_.begin() + static_cast<long>(s.offset + s.rows * s.cols)));
}

Tensor ToyNetwork::predict(const Tensor& x, int t, const Tensor& cond) const {
  ForwardCache cache;
  const Mat out = Runner(shape_, slots_, params_).forward({&x}, {t}, {&cond}, cache);
  return rows_to_tensor(out, 0, shape_.latent_size, shape_.latent_channels);
}

ToyNetwork::InputGrad ToyNetwork::vjp(const Tensor& x, int t, const Tensor& cond, const Tensor& upstream) const {
  ForwardCache cache;
  const Runner runner(shape_, slots_, params_);
  runner.forward({&x}, {t}, {&cond}, cache);
  Mat d_input;
  std::vector<Tensor> d_cond;
  runner.backward(cache, tensors_to_rows({&upstream}), &d_input, &d_cond, {});
  const std::size_t px = shape_.latent_size * shape_.latent_size, ch = shape_.latent_channels;
  Tensor dx(latent_shape());
  for (std::size_t p = 0; p < px; ++p) {
    for (std::size_t c = 0; c < ch; ++c) dx[p * ch + c] = d_input(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c));
  }
  return {std::move(dx), std::move(d_cond.front())};
}

double ToyNetwork::mse_loss_and_grad(const std::vector<Tensor>& x, const std::vector<int>& t,
                                     const std::vector<Tensor>& cond, const std::vector<Tensor>& target,
                                     std::span<double> param_grad, std::vector<Tensor>* cond_grad) const {
  if (x.empty() || x.size() != t.size() || x.size() != cond.size() || x.size() != target.size()) {
    throw std::invalid_argument("toy network: batch size mismatch");
  }
  if (param_grad.size() != params_.size()) throw std::invalid_argument("toy network: gradient buffer size mismatch");
  ForwardCache cache;
  const Runner runner(shape_, slots_, params_);
  const Mat out = runner.forward(pointers(x), t, pointers(cond), cache);
  const Mat diff = out - tensors_to_rows(pointers(target));
  const double count = static_cast<double>(diff.size());
  runner.backward(cache, (2.0 / count) * diff, nullptr, cond_grad, param_grad);
  return diff.squaredNorm() / count;
}

double ToyNetwork::mse_loss(const std::vector<Tensor>& x, const std::vector<int>& t, const std::vector<Tensor>& cond,
                            const std::vector<Tensor>& target) const {
  if (x.empty() || x.size() != t.size() || x.size() != cond.size() || x.size() != target.size()) {
    throw std::invalid_argument("toy network: batch size mismatch");
  }
  ForwardCache cache;
  const Mat out = Runner(shape_, slots_, params_).forward(pointers(x), t, pointers(cond), cache);
  return (out - tensors_to_rows(pointers(target))).squaredNorm() / static_cast<double>(out.size());
}

}  // namespace s2st
