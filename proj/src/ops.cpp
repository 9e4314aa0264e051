#include "essnet/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>

namespace essnet::ops {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const Mat<T>>;

// Sliding-window geometry of an image [c, h, w] under a k x k kernel.
struct Window {
  int c, h, w, k, stride, pad, oh, ow;
  int rows() const { return c * k * k; }
  int cols() const { return oh * ow; }
};

template <typename T>
void im2col(const T* src, const Window& g, T* col) {
  for (int c = 0; c < g.c; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) *
                           g.cols();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* out = row + static_cast<std::size_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.ow, T(0));
            continue;
          }
          const T* in = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            out[ox] = (ix >= 0 && ix < g.w) ? in[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back, accumulating into dst.
template <typename T>
void col2im(const T* col, const Window& g, T* dst) {
  for (int c = 0; c < g.c; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k +
                                                      kx) *
                                 g.cols();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* in = row + static_cast<std::size_t>(oy) * g.ow;
          T* out = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              int stride, int pad) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  require(ws.c == xs.c, "conv2d: weight expects " + std::to_string(ws.c) +
                            " input channels, got " + std::to_string(xs.c));
  require(ws.h == ws.w, "conv2d: kernel must be square");
  const int k = ws.h;
  const int oh = conv_out_size(xs.h, k, stride, pad);
  const int ow = conv_out_size(xs.w, k, stride, pad);
  require(oh >= 1 && ow >= 1, "conv2d: input " + xs.str() +
                                  " too small for kernel " + std::to_string(k));
  const Window g{xs.c, xs.h, xs.w, k, stride, pad, oh, ow};
  const int cout = ws.n;

  Tensor<T> out(Shape{xs.n, cout, oh, ow});
  auto cols = std::make_shared<std::vector<T>>(
      static_cast<std::size_t>(xs.n) * g.rows() * g.cols());
  CMapMat<T> wmat(weight->value.data(), cout, g.rows());
  for (int n = 0; n < xs.n; ++n) {
    T* col = cols->data() + static_cast<std::size_t>(n) * g.rows() * g.cols();
    im2col(x->value.plane(n, 0), g, col);
    MapMat<T> o(out.plane(n, 0), cout, g.cols());
    o.noalias() = wmat * CMapMat<T>(col, g.rows(), g.cols());
    if (bias) {
      for (int c = 0; c < cout; ++c) o.row(c).array() += bias->value[c];
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return record<T>(
      std::move(out), std::move(parents),
      [g, cout, cols](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        Node<T>* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const int batch = self.value.shape().n;
        CMapMat<T> wmat(wn.value.data(), cout, g.rows());
        Mat<T> dcol;
        for (int n = 0; n < batch; ++n) {
          CMapMat<T> dout(self.grad.plane(n, 0), cout, g.cols());
          CMapMat<T> col(cols->data() +
                             static_cast<std::size_t>(n) * g.rows() * g.cols(),
                         g.rows(), g.cols());
          if (wn.requires_grad) {
            MapMat<T> dw(wn.grad_buffer().data(), cout, g.rows());
            dw.noalias() += dout * col.transpose();
          }
          if (bn && bn->requires_grad) {
            auto& db = bn->grad_buffer();
            for (int c = 0; c < cout; ++c) db[c] += dout.row(c).sum();
          }
          if (xn.requires_grad) {
            dcol.noalias() = wmat.transpose() * dout;
            col2im(dcol.data(), g, xn.grad_buffer().plane(n, 0));
          }
        }
      });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight,
                        const Var<T>& bias, int stride, int pad, int out_pad) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  require(ws.n == xs.c, "conv_transpose2d: weight expects " +
                            std::to_string(ws.n) + " input channels, got " +
                            std::to_string(xs.c));
  require(ws.h == ws.w, "conv_transpose2d: kernel must be square");
  const int k = ws.h;
  const int cout = ws.c;
  const int oh = (xs.h - 1) * stride - 2 * pad + k + out_pad;
  const int ow = (xs.w - 1) * stride - 2 * pad + k + out_pad;
  require(oh >= 1 && ow >= 1, "conv_transpose2d: empty output");
  // Window over the output image that maps back onto the input grid.
  const Window g{cout, oh, ow, k, stride, pad, xs.h, xs.w};
  require(conv_out_size(oh, k, stride, pad) == xs.h &&
              conv_out_size(ow, k, stride, pad) == xs.w,
          "conv_transpose2d: inconsistent geometry");

  Tensor<T> out(Shape{xs.n, cout, oh, ow});
  CMapMat<T> wmat(weight->value.data(), xs.c, g.rows());
  Mat<T> col;
  for (int n = 0; n < xs.n; ++n) {
    col.noalias() =
        wmat.transpose() * CMapMat<T>(x->value.plane(n, 0), xs.c, g.cols());
    col2im(col.data(), g, out.plane(n, 0));
    if (bias) {
      for (int c = 0; c < cout; ++c) {
        T* p = out.plane(n, c);
        const T b = bias->value[c];
        for (std::size_t i = 0; i < out.shape().plane(); ++i) p[i] += b;
      }
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  const int cin = xs.c;
  return record<T>(
      std::move(out), std::move(parents), [g, cin, cout](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        Node<T>* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const int batch = self.value.shape().n;
        CMapMat<T> wmat(wn.value.data(), cin, g.rows());
        Mat<T> dcol(g.rows(), g.cols());
        for (int n = 0; n < batch; ++n) {
          im2col(self.grad.plane(n, 0), g, dcol.data());
          if (xn.requires_grad) {
            MapMat<T> dx(xn.grad_buffer().plane(n, 0), cin, g.cols());
            dx.noalias() += wmat * dcol;
          }
          if (wn.requires_grad) {
            MapMat<T> dw(wn.grad_buffer().data(), cin, g.rows());
            dw.noalias() +=
                CMapMat<T>(xn.value.plane(n, 0), cin, g.cols()) *
                dcol.transpose();
          }
          if (bn && bn->requires_grad) {
            auto& db = bn->grad_buffer();
            const std::size_t plane = self.value.shape().plane();
            for (int c = 0; c < cout; ++c) {
              const T* p = self.grad.plane(n, c);
              T s = 0;
              for (std::size_t i = 0; i < plane; ++i) s += p[i];
              db[c] += s;
            }
          }
        }
      });
}

namespace {
inline int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}
}  // namespace

template <typename T>
Var<T> reflection_pad2d(const Var<T>& x, int pad) {
  const Shape xs = x->value.shape();
  require(pad < xs.h && pad < xs.w,
          "reflection_pad2d: pad " + std::to_string(pad) +
              " must be smaller than input " + xs.str());
  const Shape os{xs.n, xs.c, xs.h + 2 * pad, xs.w + 2 * pad};
  Tensor<T> out(os);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T* src = x->value.plane(n, c);
      T* dst = out.plane(n, c);
      for (int y = 0; y < os.h; ++y) {
        const int sy = reflect(y - pad, xs.h);
        for (int xx = 0; xx < os.w; ++xx)
          dst[y * os.w + xx] = src[sy * xs.w + reflect(xx - pad, xs.w)];
      }
    }
  return record<T>(std::move(out), {x}, [pad](Node<T>& self) {
    auto& xn = *self.parents[0];
    const Shape xs = xn.value.shape();
    const Shape os = self.value.shape();
    auto& dx = xn.grad_buffer();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const T* g = self.grad.plane(n, c);
        T* d = dx.plane(n, c);
        for (int y = 0; y < os.h; ++y) {
          const int sy = reflect(y - pad, xs.h);
          for (int xx = 0; xx < os.w; ++xx)
            d[sy * xs.w + reflect(xx - pad, xs.w)] += g[y * os.w + xx];
        }
      }
  });
}

template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                     T eps) {
  const Shape xs = x->value.shape();
  require(gain->value.size() == static_cast<std::size_t>(xs.c) &&
              bias->value.size() == static_cast<std::size_t>(xs.c),
          "instance_norm: affine parameters do not match channel count");
  const std::size_t m = xs.plane();
  Tensor<T> out(xs);
  auto xhat = std::make_shared<Tensor<T>>(xs);
  auto inv_std = std::make_shared<std::vector<T>>(
      static_cast<std::size_t>(xs.n) * xs.c);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T* src = x->value.plane(n, c);
      T mean = 0;
      for (std::size_t i = 0; i < m; ++i) mean += src[i];
      mean /= T(m);
      T var = 0;
      for (std::size_t i = 0; i < m; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= T(m);
      const T is = T(1) / std::sqrt(var + eps);
      (*inv_std)[n * xs.c + c] = is;
      T* xh = xhat->plane(n, c);
      T* dst = out.plane(n, c);
      const T g = gain->value[c], b = bias->value[c];
      for (std::size_t i = 0; i < m; ++i) {
        xh[i] = (src[i] - mean) * is;
        dst[i] = g * xh[i] + b;
      }
    }
  return record<T>(
      std::move(out), {x, gain, bias}, [xhat, inv_std](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const Shape xs = xn.value.shape();
        const std::size_t m = xs.plane();
        for (int n = 0; n < xs.n; ++n)
          for (int c = 0; c < xs.c; ++c) {
            const T* dy = self.grad.plane(n, c);
            const T* xh = xhat->plane(n, c);
            T sum_dy = 0, sum_dy_xh = 0;
            for (std::size_t i = 0; i < m; ++i) {
              sum_dy += dy[i];
              sum_dy_xh += dy[i] * xh[i];
            }
            if (gn.requires_grad) gn.grad_buffer()[c] += sum_dy_xh;
            if (bn.requires_grad) bn.grad_buffer()[c] += sum_dy;
            if (xn.requires_grad) {
              const T g = gn.value[c];
              const T is = (*inv_std)[n * xs.c + c];
              const T mean_dy = sum_dy / T(m);
              const T mean_dy_xh = sum_dy_xh / T(m);
              T* dx = xn.grad_buffer().plane(n, c);
              for (std::size_t i = 0; i < m; ++i)
                dx[i] += g * is * (dy[i] - mean_dy - xh[i] * mean_dy_xh);
            }
          }
      });
}

namespace {
template <typename T, typename Fwd, typename Deriv>
Var<T> pointwise(const Var<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> out(x->value.shape());
  const T* src = x->value.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) dst[i] = fwd(src[i]);
  return record<T>(std::move(out), {x}, [deriv](Node<T>& self) {
    auto& xn = *self.parents[0];
    T* dx = xn.grad_buffer().data();
    const T* g = self.grad.data();
    const T* xv = xn.value.data();
    const T* yv = self.value.data();
    for (std::size_t i = 0; i < self.value.size(); ++i)
      dx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}
}  // namespace

template <typename T>
Var<T> relu(const Var<T>& x) {
  return pointwise<T>(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return pointwise<T>(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return pointwise<T>(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a->value.shape() == b->value.shape(),
          "add: shape mismatch " + a->value.shape().str() + " vs " +
              b->value.shape().str());
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a->value[i] + b->value[i];
  return record<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> weighted_sum(const std::vector<std::pair<Var<T>, T>>& terms) {
  std::vector<Var<T>> parents;
  std::vector<T> weights;
  T total = 0;
  for (const auto& [v, w] : terms) {
    require(v->value.size() == 1, "weighted_sum: terms must be scalars");
    total += w * v->value[0];
    parents.push_back(v);
    weights.push_back(w);
  }
  return record<T>(Tensor<T>(Shape{}, total), std::move(parents),
                   [weights](Node<T>& self) {
                     for (std::size_t i = 0; i < weights.size(); ++i) {
                       auto& p = *self.parents[i];
                       if (p.requires_grad)
                         p.grad_buffer()[0] += weights[i] * self.grad[0];
                     }
                   });
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  require(a->value.shape() == b->value.shape(),
          "mean_abs_diff: shape mismatch " + a->value.shape().str() + " vs " +
              b->value.shape().str());
  const std::size_t m = a->value.size();
  T s = 0;
  for (std::size_t i = 0; i < m; ++i) s += std::abs(a->value[i] - b->value[i]);
  return record<T>(Tensor<T>(Shape{}, s / T(m)), {a, b}, [m](Node<T>& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    const T scale = self.grad[0] / T(m);
    for (std::size_t i = 0; i < m; ++i) {
      const T d = an.value[i] - bn.value[i];
      const T sg = d > T(0) ? scale : (d < T(0) ? -scale : T(0));
      if (an.requires_grad) an.grad_buffer()[i] += sg;
      if (bn.requires_grad) bn.grad_buffer()[i] -= sg;
    }
  });
}

namespace {
template <typename T>
T softplus(T z) {
  return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}
template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}
}  // namespace

template <typename T>
Var<T> mean_softplus(const Var<T>& x, T sign) {
  const std::size_t m = x->value.size();
  T s = 0;
  for (std::size_t i = 0; i < m; ++i) s += softplus(sign * x->value[i]);
  return record<T>(Tensor<T>(Shape{}, s / T(m)), {x},
                   [m, sign](Node<T>& self) {
                     auto& xn = *self.parents[0];
                     auto& dx = xn.grad_buffer();
                     const T scale = self.grad[0] / T(m);
                     for (std::size_t i = 0; i < m; ++i)
                       dx[i] += scale * sign * sigmoid(sign * xn.value[i]);
                   });
}

template <typename T>
Var<T> mean_squared_to(const Var<T>& x, T target) {
  const std::size_t m = x->value.size();
  T s = 0;
  for (std::size_t i = 0; i < m; ++i)
    s += (x->value[i] - target) * (x->value[i] - target);
  return record<T>(Tensor<T>(Shape{}, s / T(m)), {x},
                   [m, target](Node<T>& self) {
                     auto& xn = *self.parents[0];
                     auto& dx = xn.grad_buffer();
                     const T scale = T(2) * self.grad[0] / T(m);
                     for (std::size_t i = 0; i < m; ++i)
                       dx[i] += scale * (xn.value[i] - target);
                   });
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  const Shape s = logits.shape();
  Tensor<T> out(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      T mx = logits.plane(n, 0)[p];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, logits.plane(n, c)[p]);
      T z = 0;
      for (int c = 0; c < s.c; ++c) {
        const T e = std::exp(logits.plane(n, c)[p] - mx);
        out.plane(n, c)[p] = e;
        z += e;
      }
      for (int c = 0; c < s.c; ++c) out.plane(n, c)[p] /= z;
    }
  return out;
}

template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits,
                             std::span<const std::uint8_t> labels,
                             bool sum_reduction) {
  const Shape s = logits->value.shape();
  const std::size_t plane = s.plane();
  require(labels.size() == static_cast<std::size_t>(s.n) * plane,
          "softmax_cross_entropy: label count " +
              std::to_string(labels.size()) + " does not match logits " +
              s.str());
  for (std::uint8_t l : labels)
    if (l >= s.c)
      throw DataError("class ID " + std::to_string(l) +
                      " out of range for " + std::to_string(s.c) +
                      " classes");
  auto probs = std::make_shared<Tensor<T>>(softmax_channels(logits->value));
  T total = 0;
  for (int n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      const int label = labels[n * plane + p];
      T mx = logits->value.plane(n, 0)[p];
      for (int c = 1; c < s.c; ++c)
        mx = std::max(mx, logits->value.plane(n, c)[p]);
      T z = 0;
      for (int c = 0; c < s.c; ++c)
        z += std::exp(logits->value.plane(n, c)[p] - mx);
      total += mx + std::log(z) - logits->value.plane(n, label)[p];
    }
  const T denom = sum_reduction ? T(1) : T(static_cast<std::size_t>(s.n) * plane);
  std::vector<std::uint8_t> owned(labels.begin(), labels.end());
  return record<T>(
      Tensor<T>(Shape{}, total / denom), {logits},
      [probs, owned = std::move(owned), denom](Node<T>& self) {
        auto& ln = *self.parents[0];
        const Shape s = ln.value.shape();
        const std::size_t plane = s.plane();
        const T scale = self.grad[0] / denom;
        auto& dl = ln.grad_buffer();
        for (int n = 0; n < s.n; ++n)
          for (int c = 0; c < s.c; ++c) {
            const T* pr = probs->plane(n, c);
            T* d = dl.plane(n, c);
            const std::uint8_t* lab = owned.data() + n * plane;
            for (std::size_t p = 0; p < plane; ++p)
              d[p] += scale * (pr[p] - (lab[p] == c ? T(1) : T(0)));
          }
      });
}

#define ESSNET_INSTANTIATE_OPS(T)                                              \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int,    \
                         int);                                                 \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&,              \
                                   const Var<T>&, int, int, int);              \
  template Var<T> reflection_pad2d(const Var<T>&, int);                        \
  template Var<T> instance_norm(const Var<T>&, const Var<T>&, const Var<T>&,  \
                                T);                                            \
  template Var<T> relu(const Var<T>&);                                         \
  template Var<T> leaky_relu(const Var<T>&, T);                                \
  template Var<T> tanh(const Var<T>&);                                         \
  template Var<T> add(const Var<T>&, const Var<T>&);                           \
  template Var<T> weighted_sum(const std::vector<std::pair<Var<T>, T>>&);      \
  template Var<T> mean_abs_diff(const Var<T>&, const Var<T>&);                 \
  template Var<T> mean_softplus(const Var<T>&, T);                             \
  template Var<T> mean_squared_to(const Var<T>&, T);                           \
  template Var<T> softmax_cross_entropy(const Var<T>&,                         \
                                        std::span<const std::uint8_t>, bool);  \
  template Tensor<T> softmax_channels(const Tensor<T>&);

ESSNET_INSTANTIATE_OPS(float)
ESSNET_INSTANTIATE_OPS(double)

}  // namespace essnet::ops
