#include "ptd/network.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ptd/parallel.hpp"

namespace ptd {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
struct Context {
  const ParamSet<T>& params;
  ParamSet<T>* stats;
  Mode mode;
};

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) = 0;
  /// Accumulates parameter gradients into `grads`; returns dLoss/dx.
  virtual Tensor<T> backward(const ParamSet<T>& params, const Tensor<T>& dy, ParamSet<T>& grads) = 0;
};

// ---------------------------------------------------------------------------

template <class T>
class ConvLayer final : public Layer<T> {
 public:
  ConvLayer(const Conv2d& spec, std::size_t weight, std::ptrdiff_t bias)
      : spec_(spec), weight_(weight), bias_(bias) {}

  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) override {
    input_ = x;
    mode_ = ctx.mode;
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (c != spec_.in_ch) throw ShapeError("conv input channels mismatch");
    ho_ = conv_output_size(h, spec_.kh, spec_.stride, spec_.pad);
    wo_ = conv_output_size(w, spec_.kw, spec_.stride, spec_.pad);
    const int k = c * spec_.kh * spec_.kw, p = ho_ * wo_, o = spec_.out_ch;
    Tensor<T> y({n, o, ho_, wo_});
    CMapMat<T> wmat(ctx.params[weight_].value.data(), o, k);
    const bool use_bias = bias_ >= 0 && ctx.mode != Mode::Linearized;
    const T* b = use_bias ? ctx.params[bias_].value.data() : nullptr;
    parallel::for_chunks(n, [&](std::size_t begin, std::size_t end, int) {
      RowMat<T> col(k, p);
      for (std::size_t s = begin; s < end; ++s) {
        im2col(x.data() + s * c * h * w, h, w, col.data());
        MapMat<T> out(y.data() + s * o * p, o, p);
        out.noalias() = wmat * col;
        if (b) {
          for (int oc = 0; oc < o; ++oc) out.row(oc).array() += b[oc];
        }
      }
    });
    return y;
  }

  Tensor<T> backward(const ParamSet<T>& params, const Tensor<T>& dy, ParamSet<T>& grads) override {
    const Tensor<T>& x = input_;
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int k = c * spec_.kh * spec_.kw, p = ho_ * wo_, o = spec_.out_ch;
    CMapMat<T> wmat(params[weight_].value.data(), o, k);
    const bool use_bias = bias_ >= 0 && mode_ != Mode::Linearized;
    Tensor<T> dx(x.shape());
    const int chunks = parallel::chunk_count(n);
    std::vector<RowMat<T>> dw(chunks, RowMat<T>::Zero(o, k));
    std::vector<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(chunks, Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(o));
    parallel::for_chunks(n, [&](std::size_t begin, std::size_t end, int chunk) {
      RowMat<T> col(k, p);
      RowMat<T> dcol(k, p);
      for (std::size_t s = begin; s < end; ++s) {
        im2col(x.data() + s * c * h * w, h, w, col.data());
        CMapMat<T> g(dy.data() + s * o * p, o, p);
        dw[chunk].noalias() += g * col.transpose();
        if (use_bias) db[chunk] += g.rowwise().sum();
        dcol.noalias() = wmat.transpose() * g;
        col2im(dcol.data(), h, w, dx.data() + s * c * h * w);
      }
    });
    MapMat<T> gw(grads[weight_].value.data(), o, k);
    for (const auto& part : dw) gw += part;
    if (use_bias) {
      T* gb = grads[bias_].value.data();
      for (const auto& part : db) {
        for (int oc = 0; oc < o; ++oc) gb[oc] += part[oc];
      }
    }
    return dx;
  }

 private:
  void im2col(const T* x, int h, int w, T* col) const {
    const int kh = spec_.kh, kw = spec_.kw, s = spec_.stride, pad = spec_.pad;
    const int p = ho_ * wo_;
    for (int ch = 0; ch < spec_.in_ch; ++ch) {
      for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
          T* row = col + ((ch * kh + i) * kw + j) * p;
          for (int oh = 0; oh < ho_; ++oh) {
            const int ih = oh * s - pad + i;
            T* dst = row + oh * wo_;
            if (ih < 0 || ih >= h) {
              std::fill(dst, dst + wo_, T{0});
              continue;
            }
            const T* src = x + (ch * h + ih) * w;
            for (int ow = 0; ow < wo_; ++ow) {
              const int iw = ow * s - pad + j;
              dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T{0};
            }
          }
        }
      }
    }
  }

  void col2im(const T* col, int h, int w, T* dx) const {
    const int kh = spec_.kh, kw = spec_.kw, s = spec_.stride, pad = spec_.pad;
    const int p = ho_ * wo_;
    for (int ch = 0; ch < spec_.in_ch; ++ch) {
      for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
          const T* row = col + ((ch * kh + i) * kw + j) * p;
          for (int oh = 0; oh < ho_; ++oh) {
            const int ih = oh * s - pad + i;
            if (ih < 0 || ih >= h) continue;
            T* dst = dx + (ch * h + ih) * w;
            for (int ow = 0; ow < wo_; ++ow) {
              const int iw = ow * s - pad + j;
              if (iw >= 0 && iw < w) dst[iw] += row[oh * wo_ + ow];
            }
          }
        }
      }
    }
  }

  Conv2d spec_;
  std::size_t weight_;
  std::ptrdiff_t bias_;
  Tensor<T> input_;
  Mode mode_ = Mode::Train;
  int ho_ = 0;
  int wo_ = 0;
};

// ---------------------------------------------------------------------------

template <class T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(const Dense& spec, std::size_t weight, std::ptrdiff_t bias) : spec_(spec), weight_(weight), bias_(bias) {}

  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) override {
    if (x.rank() != 2 || x.dim(1) != spec_.in) throw ShapeError("dense input width mismatch");
    input_ = x;
    mode_ = ctx.mode;
    const int n = x.dim(0);
    Tensor<T> y({n, spec_.out});
    CMapMat<T> xm(x.data(), n, spec_.in);
    CMapMat<T> wm(ctx.params[weight_].value.data(), spec_.out, spec_.in);
    MapMat<T> ym(y.data(), n, spec_.out);
    ym.noalias() = xm * wm.transpose();
    if (bias_ >= 0 && ctx.mode != Mode::Linearized) {
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(ctx.params[bias_].value.data(), spec_.out);
      ym.rowwise() += b;
    }
    return y;
  }

  Tensor<T> backward(const ParamSet<T>& params, const Tensor<T>& dy, ParamSet<T>& grads) override {
    const int n = input_.dim(0);
    CMapMat<T> xm(input_.data(), n, spec_.in);
    CMapMat<T> g(dy.data(), n, spec_.out);
    CMapMat<T> wm(params[weight_].value.data(), spec_.out, spec_.in);
    MapMat<T> gw(grads[weight_].value.data(), spec_.out, spec_.in);
    gw.noalias() += g.transpose() * xm;
    if (bias_ >= 0 && mode_ != Mode::Linearized) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(grads[bias_].value.data(), spec_.out);
      gb += g.colwise().sum();
    }
    Tensor<T> dx({n, spec_.in});
    MapMat<T> dxm(dx.data(), n, spec_.in);
    dxm.noalias() = g * wm;
    return dx;
  }

 private:
  Dense spec_;
  std::size_t weight_;
  std::ptrdiff_t bias_;
  Tensor<T> input_;
  Mode mode_ = Mode::Train;
};

// ---------------------------------------------------------------------------

template <class T>
class BatchNormLayer final : public Layer<T> {
 public:
  BatchNormLayer(const BatchNorm& spec, std::size_t scale, std::size_t shift, std::size_t mean, std::size_t var)
      : spec_(spec), scale_(scale), shift_(shift), mean_(mean), var_(var) {}

  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) override {
    mode_ = ctx.mode;
    shape_ = x.shape();
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t spatial = x.size() / (static_cast<std::size_t>(n) * c);
    const T* gamma = ctx.params[scale_].value.data();
    const T* beta = ctx.params[shift_].value.data();
    Tensor<T> y(x.shape());
    if (ctx.mode == Mode::Linearized) {
      input_ = x;
      for_each(n, c, spatial, [&](int ch, std::size_t i) { y[i] = gamma[ch] * x[i]; });
      return y;
    }
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(c, T{0});
    const double m = static_cast<double>(n) * spatial;
    for (int ch = 0; ch < c; ++ch) {
      double mu, var;
      if (ctx.mode == Mode::Train) {
        double sum = 0;
        for (int s = 0; s < n; ++s) {
          const T* p = x.data() + (static_cast<std::size_t>(s) * c + ch) * spatial;
          for (std::size_t i = 0; i < spatial; ++i) sum += p[i];
        }
        mu = sum / m;
        double sq = 0;
        for (int s = 0; s < n; ++s) {
          const T* p = x.data() + (static_cast<std::size_t>(s) * c + ch) * spatial;
          for (std::size_t i = 0; i < spatial; ++i) sq += (p[i] - mu) * (p[i] - mu);
        }
        var = sq / m;
        if (ctx.stats) {
          T& rm = (*ctx.stats)[mean_].value[ch];
          T& rv = (*ctx.stats)[var_].value[ch];
          const double unbiased = m > 1 ? var * m / (m - 1) : var;
          rm = static_cast<T>((1 - spec_.momentum) * rm + spec_.momentum * mu);
          rv = static_cast<T>((1 - spec_.momentum) * rv + spec_.momentum * unbiased);
        }
      } else {
        mu = ctx.params[mean_].value[ch];
        var = ctx.params[var_].value[ch];
      }
      const T inv = static_cast<T>(1.0 / std::sqrt(var + spec_.eps));
      inv_std_[ch] = inv;
      const T mu_t = static_cast<T>(mu);
      for (int s = 0; s < n; ++s) {
        const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          const T xh = (x[off + i] - mu_t) * inv;
          xhat_[off + i] = xh;
          y[off + i] = gamma[ch] * xh + beta[ch];
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const ParamSet<T>& params, const Tensor<T>& dy, ParamSet<T>& grads) override {
    const int n = shape_[0], c = shape_[1];
    const std::size_t spatial = dy.size() / (static_cast<std::size_t>(n) * c);
    const T* gamma = params[scale_].value.data();
    T* dgamma = grads[scale_].value.data();
    T* dbeta = grads[shift_].value.data();
    Tensor<T> dx(shape_);
    if (mode_ == Mode::Linearized) {
      for_each(n, c, spatial, [&](int ch, std::size_t i) {
        dgamma[ch] += dy[i] * input_[i];
        dx[i] = gamma[ch] * dy[i];
      });
      return dx;
    }
    const double m = static_cast<double>(n) * spatial;
    for (int ch = 0; ch < c; ++ch) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int s = 0; s < n; ++s) {
        const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          sum_dy += dy[off + i];
          sum_dy_xhat += static_cast<double>(dy[off + i]) * xhat_[off + i];
        }
      }
      dbeta[ch] += static_cast<T>(sum_dy);
      dgamma[ch] += static_cast<T>(sum_dy_xhat);
      const double scale = static_cast<double>(gamma[ch]) * inv_std_[ch];
      for (int s = 0; s < n; ++s) {
        const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          if (mode_ == Mode::Train) {
            dx[off + i] = static_cast<T>(scale * (dy[off + i] - sum_dy / m - xhat_[off + i] * sum_dy_xhat / m));
          } else {
            dx[off + i] = static_cast<T>(scale * dy[off + i]);
          }
        }
      }
    }
    return dx;
  }

 private:
  template <class F>
  static void for_each(int n, int c, std::size_t spatial, F&& f) {
    for (int s = 0; s < n; ++s) {
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) f(ch, off + i);
      }
    }
  }

  BatchNorm spec_;
  std::size_t scale_, shift_, mean_, var_;
  Mode mode_ = Mode::Train;
  Shape shape_;
  Tensor<T> input_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

// ---------------------------------------------------------------------------

template <class T>
class ReLULayer final : public Layer<T> {
 public:
  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) override {
    linear_ = ctx.mode == Mode::Linearized;
    if (linear_) return x;
    Tensor<T> y(x.shape());
    active_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > T{0}) {
        y[i] = x[i];
        active_[i] = 1;
      }
    }
    return y;
  }

  Tensor<T> backward(const ParamSet<T>&, const Tensor<T>& dy, ParamSet<T>&) override {
    if (linear_) return dy;
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = active_[i] ? dy[i] : T{0};
    return dx;
  }

 private:
  bool linear_ = false;
  std::vector<unsigned char> active_;
};

template <class T>
class MaxPoolLayer final : public Layer<T> {
 public:
  explicit MaxPoolLayer(const MaxPool& spec) : spec_(spec) {}

  Tensor<T> forward(const Context<T>&, const Tensor<T>& x) override {
    in_shape_ = x.shape();
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = (h - spec_.k) / spec_.stride + 1, wo = (w - spec_.k) / spec_.stride + 1;
    Tensor<T> y({n, c, ho, wo});
    argmax_.assign(y.size(), 0);
    std::size_t out = 0;
    for (int plane = 0; plane < n * c; ++plane) {
      const std::size_t base = static_cast<std::size_t>(plane) * h * w;
      for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow, ++out) {
          std::size_t best = base + static_cast<std::size_t>(oh * spec_.stride) * w + ow * spec_.stride;
          for (int i = 0; i < spec_.k; ++i) {
            for (int j = 0; j < spec_.k; ++j) {
              const std::size_t idx = base + static_cast<std::size_t>(oh * spec_.stride + i) * w + ow * spec_.stride + j;
              // strict > keeps the first (lowest flat index) maximum
              if (x[idx] > x[best]) best = idx;
            }
          }
          y[out] = x[best];
          argmax_[out] = best;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const ParamSet<T>&, const Tensor<T>& dy, ParamSet<T>&) override {
    Tensor<T> dx(in_shape_);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax_[i]] += dy[i];
    return dx;
  }

 private:
  MaxPool spec_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

template <class T>
class FlattenLayer final : public Layer<T> {
 public:
  Tensor<T> forward(const Context<T>&, const Tensor<T>& x) override {
    in_shape_ = x.shape();
    Tensor<T> y = x;
    y.reshape({x.dim(0), static_cast<int>(x.size() / x.dim(0))});
    return y;
  }

  Tensor<T> backward(const ParamSet<T>&, const Tensor<T>& dy, ParamSet<T>&) override {
    Tensor<T> dx = dy;
    dx.reshape(in_shape_);
    return dx;
  }

 private:
  Shape in_shape_;
};

template <class T>
class ResidualLayer final : public Layer<T> {
 public:
  ResidualLayer(std::vector<std::unique_ptr<Layer<T>>> body, std::unique_ptr<Layer<T>> projection)
      : body_(std::move(body)), projection_(std::move(projection)) {}

  Tensor<T> forward(const Context<T>& ctx, const Tensor<T>& x) override {
    Tensor<T> y = x;
    for (auto& layer : body_) y = layer->forward(ctx, y);
    Tensor<T> shortcut = projection_ ? projection_->forward(ctx, x) : x;
    if (shortcut.shape() != y.shape()) throw ShapeError("residual branch shapes differ");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += shortcut[i];
    return y;
  }

  Tensor<T> backward(const ParamSet<T>& params, const Tensor<T>& dy, ParamSet<T>& grads) override {
    Tensor<T> g = dy;
    for (auto it = body_.rbegin(); it != body_.rend(); ++it) g = (*it)->backward(params, g, grads);
    Tensor<T> gs = projection_ ? projection_->backward(params, dy, grads) : dy;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gs[i];
    return g;
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> body_;
  std::unique_ptr<Layer<T>> projection_;
};

// ---------------------------------------------------------------------------

template <class T>
struct Builder {
  const std::vector<ParamInfo>& layout;

  std::size_t index(const std::string& name) const {
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (layout[i].name == name) return i;
    }
    throw ConfigError("layout has no parameter " + name);
  }

  std::ptrdiff_t optional_index(const std::string& name, bool present) const {
    return present ? static_cast<std::ptrdiff_t>(index(name)) : -1;
  }

  std::unique_ptr<Layer<T>> conv(const Conv2d& c, const std::string& p) const {
    return std::make_unique<ConvLayer<T>>(c, index(p + "weight"), optional_index(p + "bias", c.has_bias));
  }

  std::vector<std::unique_ptr<Layer<T>>> chain(const std::vector<LayerSpec>& specs, const std::string& prefix) const {
    std::vector<std::unique_ptr<Layer<T>>> out;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const std::string p = prefix + std::to_string(i) + ".";
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2d>) {
              out.push_back(conv(l, p));
            } else if constexpr (std::is_same_v<L, Dense>) {
              out.push_back(std::make_unique<DenseLayer<T>>(l, index(p + "weight"),
                                                            optional_index(p + "bias", l.has_bias)));
            } else if constexpr (std::is_same_v<L, BatchNorm>) {
              out.push_back(std::make_unique<BatchNormLayer<T>>(l, index(p + "bn_scale"), index(p + "bn_shift"),
                                                                index(p + "running_mean"), index(p + "running_var")));
            } else if constexpr (std::is_same_v<L, ReLU>) {
              out.push_back(std::make_unique<ReLULayer<T>>());
            } else if constexpr (std::is_same_v<L, MaxPool>) {
              out.push_back(std::make_unique<MaxPoolLayer<T>>(l));
            } else if constexpr (std::is_same_v<L, Flatten>) {
              out.push_back(std::make_unique<FlattenLayer<T>>());
            } else {
              auto body = chain(l.body, p + "body.");
              std::unique_ptr<Layer<T>> proj = l.projection ? conv(*l.projection, p + "proj.") : nullptr;
              out.push_back(std::make_unique<ResidualLayer<T>>(std::move(body), std::move(proj)));
            }
          },
          specs[i].kind);
    }
    return out;
  }
};

}  // namespace detail

template <class T>
Network<T>::Network(ArchitectureSpec arch) : arch_(std::move(arch)) {
  validate(arch_);
  layout_ = param_layout(arch_);
  layers_ = detail::Builder<T>{layout_}.chain(arch_.layers, "layers.");
}

template <class T>
Network<T>::~Network() = default;
template <class T>
Network<T>::Network(Network&&) noexcept = default;
template <class T>
Network<T>& Network<T>::operator=(Network&&) noexcept = default;

template <class T>
Tensor<T> Network<T>::run(const ParamSet<T>& params, ParamSet<T>* stats, const Tensor<T>& batch, Mode mode) {
  if (params.size() != layout_.size()) throw ShapeError("parameter set does not match architecture layout");
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != arch_.input) {
    throw ShapeError("batch shape " + shape_string(batch.shape()) + " does not match network input " +
                     shape_string(arch_.input));
  }
  cached_ = false;
  detail::Context<T> ctx{params, stats, mode};
  Tensor<T> x = batch;
  for (auto& layer : layers_) x = layer->forward(ctx, x);
  x.check_finite("network logits");
  batch_input_ = batch.shape();
  cached_ = true;
  return x;
}

template <class T>
Tensor<T> Network<T>::forward(ParamSet<T>& params, const Tensor<T>& batch, Mode mode) {
  return run(params, mode == Mode::Train ? &params : nullptr, batch, mode);
}

template <class T>
Tensor<T> Network<T>::infer(const ParamSet<T>& params, const Tensor<T>& batch) {
  return run(params, nullptr, batch, Mode::Eval);
}

template <class T>
ParamSet<T> Network<T>::backward(const ParamSet<T>& params, const Tensor<T>& upstream, Tensor<T>* input_grad) {
  if (!cached_) throw ConfigError("backward called without a preceding forward pass");
  if (upstream.rank() != 2 || upstream.dim(0) != batch_input_[0] || upstream.dim(1) != arch_.classes) {
    throw ShapeError("upstream gradient shape " + shape_string(upstream.shape()) + " does not match logits");
  }
  auto grads = ParamSet<T>::zeros(layout_);
  Tensor<T> g = upstream;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(params, g, grads);
  cached_ = false;
  if (input_grad) *input_grad = std::move(g);
  return grads;
}

template class Network<float>;
template class Network<double>;

}  // namespace ptd
