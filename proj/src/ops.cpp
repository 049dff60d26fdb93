#include "lai/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace lai {
namespace {

template <typename T>
bool want_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Tape<T>::current().recording()) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

#ifndef NDEBUG
template <typename T>
void debug_check_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data())
    if (!std::isfinite(v))
      throw ContractError(std::string("non-finite value in output of ") + op);
}
#else
template <typename T>
void debug_check_finite(const Tensor<T>&, const char*) {}
#endif

// valid output range [o0, o1) such that o*stride - pad + k lies in [0, limit)
inline void out_range(int k, int pad, int stride, int limit, int out_dim,
                      int& o0, int& o1) {
  o0 = 0;
  while (o0 < out_dim && o0 * stride - pad + k < 0) ++o0;
  o1 = out_dim;
  while (o1 > o0 && (o1 - 1) * stride - pad + k >= limit) --o1;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad) {
  if (x.ndim() != 4 || w.ndim() != 4 || b.ndim() != 1)
    throw ContractError("conv2d: x must be 4-d, w 4-d, b 1-d");
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  if (pad < 0) throw ContractError("conv2d: pad must be >= 0");
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), kH = w.dim(2), kW = w.dim(3);
  if (w.dim(1) != Cin)
    throw ContractError("conv2d: Cin mismatch, x has " + std::to_string(Cin) +
                        " channels, w expects " + std::to_string(w.dim(1)));
  if (b.dim(0) != Cout) throw ContractError("conv2d: bias size != Cout");
  const int Ho = (H + 2 * pad - kH) / stride + 1;
  const int Wo = (W + 2 * pad - kW) / stride + 1;
  if (kH > H + 2 * pad || kW > W + 2 * pad || Ho <= 0 || Wo <= 0)
    throw GeometryError("conv2d: empty output for input " +
                        shape_str(x.shape()) + " kernel " +
                        shape_str(w.shape()));

  Tensor<T> y = Tensor<T>::zeros({N, Cout, Ho, Wo});
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  const T* bd = b.data().data();
  T* yd = y.data().data();

  const std::size_t x_plane = static_cast<std::size_t>(H) * W;
  const std::size_t y_plane = static_cast<std::size_t>(Ho) * Wo;

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Cout; ++co) {
      T* yp = yd + (static_cast<std::size_t>(n) * Cout + co) * y_plane;
      std::fill(yp, yp + y_plane, bd[co]);
      for (int ci = 0; ci < Cin; ++ci) {
        const T* xp = xd + (static_cast<std::size_t>(n) * Cin + ci) * x_plane;
        for (int kh = 0; kh < kH; ++kh) {
          for (int kw = 0; kw < kW; ++kw) {
            const T wv =
                wd[((static_cast<std::size_t>(co) * Cin + ci) * kH + kh) * kW +
                   kw];
            int ow0, ow1;
            out_range(kw, pad, stride, W, Wo, ow0, ow1);
            for (int oh = 0; oh < Ho; ++oh) {
              const int ih = oh * stride - pad + kh;
              if (ih < 0 || ih >= H) continue;
              const T* xrow = xp + static_cast<std::size_t>(ih) * W;
              T* yrow = yp + static_cast<std::size_t>(oh) * Wo;
              if (stride == 1) {
                const T* xs = xrow + (kw - pad);
                for (int ow = ow0; ow < ow1; ++ow) yrow[ow] += wv * xs[ow];
              } else {
                for (int ow = ow0; ow < ow1; ++ow)
                  yrow[ow] += wv * xrow[ow * stride - pad + kw];
              }
            }
          }
        }
      }
    }
  }
  debug_check_finite(y, "conv2d");

  if (want_record<T>({&x, &w, &b})) {
    y.set_requires_grad(true);
    auto xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {xn, wn, bn},
         [xn, wn, bn, N, Cin, H, W, Cout, kH, kW, Ho, Wo, stride, pad, x_plane,
          y_plane](const std::vector<T>& dy, Adjoints<T>& adj) {
           const T* xd = xn->value.data();
           const T* wd = wn->value.data();
           if (xn->requires_grad) {
             T* dx = adj.at(xn).data();
#pragma omp parallel for collapse(2) schedule(static)
             for (int n = 0; n < N; ++n) {
               for (int ci = 0; ci < Cin; ++ci) {
                 T* dxp =
                     dx + (static_cast<std::size_t>(n) * Cin + ci) * x_plane;
                 for (int co = 0; co < Cout; ++co) {
                   const T* dyp =
                       dy.data() +
                       (static_cast<std::size_t>(n) * Cout + co) * y_plane;
                   for (int kh = 0; kh < kH; ++kh) {
                     for (int kw = 0; kw < kW; ++kw) {
                       const T wv =
                           wd[((static_cast<std::size_t>(co) * Cin + ci) * kH +
                               kh) *
                                  kW +
                              kw];
                       int ow0, ow1;
                       out_range(kw, pad, stride, W, Wo, ow0, ow1);
                       for (int oh = 0; oh < Ho; ++oh) {
                         const int ih = oh * stride - pad + kh;
                         if (ih < 0 || ih >= H) continue;
                         T* dxrow = dxp + static_cast<std::size_t>(ih) * W;
                         const T* dyrow =
                             dyp + static_cast<std::size_t>(oh) * Wo;
                         if (stride == 1) {
                           T* dxs = dxrow + (kw - pad);
                           for (int ow = ow0; ow < ow1; ++ow)
                             dxs[ow] += wv * dyrow[ow];
                         } else {
                           for (int ow = ow0; ow < ow1; ++ow)
                             dxrow[ow * stride - pad + kw] += wv * dyrow[ow];
                         }
                       }
                     }
                   }
                 }
               }
             }
           }
           if (wn->requires_grad) {
             T* dw = adj.at(wn).data();
#pragma omp parallel for collapse(2) schedule(static)
             for (int co = 0; co < Cout; ++co) {
               for (int ci = 0; ci < Cin; ++ci) {
                 for (int kh = 0; kh < kH; ++kh) {
                   for (int kw = 0; kw < kW; ++kw) {
                     T acc = T(0);
                     int ow0, ow1;
                     out_range(kw, pad, stride, W, Wo, ow0, ow1);
                     for (int n = 0; n < N; ++n) {
                       const T* xp =
                           xd + (static_cast<std::size_t>(n) * Cin + ci) *
                                    x_plane;
                       const T* dyp =
                           dy.data() +
                           (static_cast<std::size_t>(n) * Cout + co) * y_plane;
                       for (int oh = 0; oh < Ho; ++oh) {
                         const int ih = oh * stride - pad + kh;
                         if (ih < 0 || ih >= H) continue;
                         const T* xrow = xp + static_cast<std::size_t>(ih) * W;
                         const T* dyrow =
                             dyp + static_cast<std::size_t>(oh) * Wo;
                         if (stride == 1) {
                           const T* xs = xrow + (kw - pad);
                           for (int ow = ow0; ow < ow1; ++ow)
                             acc += xs[ow] * dyrow[ow];
                         } else {
                           for (int ow = ow0; ow < ow1; ++ow)
                             acc += xrow[ow * stride - pad + kw] * dyrow[ow];
                         }
                       }
                     }
                     dw[((static_cast<std::size_t>(co) * Cin + ci) * kH + kh) *
                            kW +
                        kw] += acc;
                   }
                 }
               }
             }
           }
           if (bn->requires_grad) {
             T* db = adj.at(bn).data();
             for (int co = 0; co < Cout; ++co) {
               T acc = T(0);
               for (int n = 0; n < N; ++n) {
                 const T* dyp =
                     dy.data() +
                     (static_cast<std::size_t>(n) * Cout + co) * y_plane;
                 for (std::size_t i = 0; i < y_plane; ++i) acc += dyp[i];
               }
               db[co] += acc;
             }
           }
         }});
  }
  return y;
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int k) {
  if (x.ndim() != 4) throw ContractError("max_pool2d: x must be 4-d");
  if (k < 1) throw ContractError("max_pool2d: k must be >= 1");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % k != 0 || W % k != 0)
    throw GeometryError("max_pool2d: dims " + shape_str(x.shape()) +
                        " not divisible by k=" + std::to_string(k));
  const int Ho = H / k, Wo = W / k;
  Tensor<T> y = Tensor<T>::zeros({N, C, Ho, Wo});
  std::vector<std::size_t> argmax(y.numel());
  const T* xd = x.data().data();
  T* yd = y.data().data();
  const std::size_t planes = static_cast<std::size_t>(N) * C;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* xp = xd + p * H * W;
    T* yp = yd + p * Ho * Wo;
    std::size_t* ap = argmax.data() + p * Ho * Wo;
    for (int oh = 0; oh < Ho; ++oh) {
      for (int ow = 0; ow < Wo; ++ow) {
        T best = xp[static_cast<std::size_t>(oh) * k * W + ow * k];
        std::size_t best_idx = static_cast<std::size_t>(oh) * k * W + ow * k;
        for (int dh = 0; dh < k; ++dh) {
          for (int dw = 0; dw < k; ++dw) {
            const std::size_t idx =
                (static_cast<std::size_t>(oh) * k + dh) * W + ow * k + dw;
            if (xp[idx] > best) {  // strict: first occurrence wins ties
              best = xp[idx];
              best_idx = idx;
            }
          }
        }
        yp[static_cast<std::size_t>(oh) * Wo + ow] = best;
        ap[static_cast<std::size_t>(oh) * Wo + ow] = p * H * W + best_idx;
      }
    }
  }
  debug_check_finite(y, "max_pool2d");

  if (want_record<T>({&x})) {
    y.set_requires_grad(true);
    auto xn = x.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {xn},
         [xn, argmax = std::move(argmax)](const std::vector<T>& dy,
                                          Adjoints<T>& adj) {
           T* dx = adj.at(xn).data();
           for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
         }});
  }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  if (x.ndim() != 4) throw ContractError("upsample_nearest2x: x must be 4-d");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<T> y = Tensor<T>::zeros({N, C, 2 * H, 2 * W});
  const T* xd = x.data().data();
  T* yd = y.data().data();
  const std::size_t planes = static_cast<std::size_t>(N) * C;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* xp = xd + p * H * W;
    T* yp = yd + p * 4 * H * W;
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        const T v = xp[static_cast<std::size_t>(h) * W + w];
        T* row0 = yp + static_cast<std::size_t>(2 * h) * 2 * W + 2 * w;
        T* row1 = row0 + static_cast<std::size_t>(2) * W;
        row0[0] = v;
        row0[1] = v;
        row1[0] = v;
        row1[1] = v;
      }
    }
  }

  if (want_record<T>({&x})) {
    y.set_requires_grad(true);
    auto xn = x.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {xn},
         [xn, N, C, H, W](const std::vector<T>& dy, Adjoints<T>& adj) {
           T* dx = adj.at(xn).data();
           const std::size_t planes = static_cast<std::size_t>(N) * C;
           for (std::size_t p = 0; p < planes; ++p) {
             const T* dyp = dy.data() + p * 4 * H * W;
             T* dxp = dx + p * H * W;
             for (int h = 0; h < H; ++h) {
               for (int w = 0; w < W; ++w) {
                 const T* row0 =
                     dyp + static_cast<std::size_t>(2 * h) * 2 * W + 2 * w;
                 const T* row1 = row0 + static_cast<std::size_t>(2) * W;
                 dxp[static_cast<std::size_t>(h) * W + w] +=
                     row0[0] + row0[1] + row1[0] + row1[1];
               }
             }
           }
         }});
  }
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* xd = x.data().data();
  T* yd = y.data().data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) yd[i] = xd[i] > T(0) ? xd[i] : T(0);

  if (want_record<T>({&x})) {
    y.set_requires_grad(true);
    auto xn = x.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {xn},
         [xn](const std::vector<T>& dy, Adjoints<T>& adj) {
           T* dx = adj.at(xn).data();
           const T* xd = xn->value.data();
           // subgradient at exactly 0 is 0
           for (std::size_t i = 0; i < dy.size(); ++i)
             if (xd[i] > T(0)) dx[i] += dy[i];
         }});
  }
  return y;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1)
    throw ContractError("linear: x must be 2-d, w 2-d, b 1-d");
  const int N = x.dim(0), Din = x.dim(1);
  const int Dout = w.dim(0);
  if (w.dim(1) != Din)
    throw ContractError("linear: Din mismatch, x has " + std::to_string(Din) +
                        ", w expects " + std::to_string(w.dim(1)));
  if (b.dim(0) != Dout) throw ContractError("linear: bias size != Dout");
  Tensor<T> y = Tensor<T>::zeros({N, Dout});
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  const T* bd = b.data().data();
  T* yd = y.data().data();
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < Dout; ++o) {
      T acc = bd[o];
      const T* xrow = xd + static_cast<std::size_t>(n) * Din;
      const T* wrow = wd + static_cast<std::size_t>(o) * Din;
      for (int i = 0; i < Din; ++i) acc += xrow[i] * wrow[i];
      yd[static_cast<std::size_t>(n) * Dout + o] = acc;
    }
  }
  debug_check_finite(y, "linear");

  if (want_record<T>({&x, &w, &b})) {
    y.set_requires_grad(true);
    auto xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {xn, wn, bn},
         [xn, wn, bn, N, Din, Dout](const std::vector<T>& dy,
                                    Adjoints<T>& adj) {
           const T* xd = xn->value.data();
           const T* wd = wn->value.data();
           if (xn->requires_grad) {
             T* dx = adj.at(xn).data();
             for (int n = 0; n < N; ++n)
               for (int o = 0; o < Dout; ++o) {
                 const T d = dy[static_cast<std::size_t>(n) * Dout + o];
                 const T* wrow = wd + static_cast<std::size_t>(o) * Din;
                 T* dxrow = dx + static_cast<std::size_t>(n) * Din;
                 for (int i = 0; i < Din; ++i) dxrow[i] += d * wrow[i];
               }
           }
           if (wn->requires_grad) {
             T* dw = adj.at(wn).data();
             for (int n = 0; n < N; ++n)
               for (int o = 0; o < Dout; ++o) {
                 const T d = dy[static_cast<std::size_t>(n) * Dout + o];
                 const T* xrow = xd + static_cast<std::size_t>(n) * Din;
                 T* dwrow = dw + static_cast<std::size_t>(o) * Din;
                 for (int i = 0; i < Din; ++i) dwrow[i] += d * xrow[i];
               }
           }
           if (bn->requires_grad) {
             T* db = adj.at(bn).data();
             for (int n = 0; n < N; ++n)
               for (int o = 0; o < Dout; ++o)
                 db[o] += dy[static_cast<std::size_t>(n) * Dout + o];
           }
         }});
  }
  return y;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ContractError("concat_channels: empty input list");
  const int N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int Ctot = 0;
  for (const auto& x : xs) {
    if (x.ndim() != 4) throw ContractError("concat_channels: inputs must be 4-d");
    if (x.dim(0) != N || x.dim(2) != H || x.dim(3) != W)
      throw ContractError("concat_channels: mismatched dims " +
                          shape_str(x.shape()) + " vs " +
                          shape_str(xs[0].shape()));
    Ctot += x.dim(1);
  }
  Tensor<T> y = Tensor<T>::zeros({N, Ctot, H, W});
  T* yd = y.data().data();
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  int c_off = 0;
  for (const auto& x : xs) {
    const int C = x.dim(1);
    const T* xd = x.data().data();
    for (int n = 0; n < N; ++n) {
      const T* src = xd + static_cast<std::size_t>(n) * C * plane;
      T* dst = yd + (static_cast<std::size_t>(n) * Ctot + c_off) * plane;
      std::copy(src, src + static_cast<std::size_t>(C) * plane, dst);
    }
    c_off += C;
  }

  bool rec = Tape<T>::current().recording();
  bool any = false;
  for (const auto& x : xs) any = any || x.requires_grad();
  if (rec && any) {
    y.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorNode<T>>> ins;
    std::vector<int> chans;
    for (const auto& x : xs) {
      ins.push_back(x.node());
      chans.push_back(x.dim(1));
    }
    auto yn = y.node();
    Tape<T>::current().record(
        {yn,
         ins,
         [ins, chans, N, Ctot, plane](const std::vector<T>& dy,
                                      Adjoints<T>& adj) {
           int c_off = 0;
           for (std::size_t k = 0; k < ins.size(); ++k) {
             const int C = chans[k];
             if (ins[k]->requires_grad) {
               T* dx = adj.at(ins[k]).data();
               for (int n = 0; n < N; ++n) {
                 const T* src =
                     dy.data() +
                     (static_cast<std::size_t>(n) * Ctot + c_off) * plane;
                 T* dst = dx + static_cast<std::size_t>(n) * C * plane;
                 for (std::size_t i = 0; i < static_cast<std::size_t>(C) * plane;
                      ++i)
                   dst[i] += src[i];
               }
             }
             c_off += C;
           }
         }});
  }
  return y;
}

template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& v, int height, int width) {
  if (v.ndim() != 2) throw ContractError("broadcast_spatial: v must be [N,C]");
  if (height < 1 || width < 1)
    throw ContractError("broadcast_spatial: H,W must be >= 1");
  const int N = v.dim(0), C = v.dim(1);
  Tensor<T> y = Tensor<T>::zeros({N, C, height, width});
  const T* vd = v.data().data();
  T* yd = y.data().data();
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T val = vd[static_cast<std::size_t>(n) * C + c];
      T* dst = yd + (static_cast<std::size_t>(n) * C + c) * plane;
      std::fill(dst, dst + plane, val);
    }

  if (want_record<T>({&v})) {
    y.set_requires_grad(true);
    auto vn = v.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {vn},
         [vn, N, C, plane](const std::vector<T>& dy, Adjoints<T>& adj) {
           T* dv = adj.at(vn).data();
           for (int n = 0; n < N; ++n)
             for (int c = 0; c < C; ++c) {
               const T* src =
                   dy.data() + (static_cast<std::size_t>(n) * C + c) * plane;
               T acc = T(0);
               for (std::size_t i = 0; i < plane; ++i) acc += src[i];
               dv[static_cast<std::size_t>(n) * C + c] += acc;
             }
         }});
  }
  return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ContractError("add: shape mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  T* yd = y.data().data();
  for (std::size_t i = 0; i < y.numel(); ++i) yd[i] = ad[i] + bd[i];

  if (want_record<T>({&a, &b})) {
    y.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {an, bn},
         [an, bn](const std::vector<T>& dy, Adjoints<T>& adj) {
           if (an->requires_grad) {
             T* da = adj.at(an).data();
             for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
           }
           if (bn->requires_grad) {
             T* db = adj.at(bn).data();
             for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
           }
         }});
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ContractError("mul: shape mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  T* yd = y.data().data();
  for (std::size_t i = 0; i < y.numel(); ++i) yd[i] = ad[i] * bd[i];

  if (want_record<T>({&a, &b})) {
    y.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {an, bn},
         [an, bn](const std::vector<T>& dy, Adjoints<T>& adj) {
           if (an->requires_grad) {
             T* da = adj.at(an).data();
             const T* bd = bn->value.data();
             for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bd[i];
           }
           if (bn->requires_grad) {
             T* db = adj.at(bn).data();
             const T* ad = an->value.data();
             for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * ad[i];
           }
         }});
  }
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* xd = x.data().data();
  T* yd = y.data().data();
  for (std::size_t i = 0; i < y.numel(); ++i) yd[i] = factor * xd[i];

  if (want_record<T>({&x})) {
    y.set_requires_grad(true);
    auto xn = x.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {xn},
         [xn, factor](const std::vector<T>& dy, Adjoints<T>& adj) {
           T* dx = adj.at(xn).data();
           for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += factor * dy[i];
         }});
  }
  return y;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  Tensor<T> y = Tensor<T>::scalar(acc);

  if (want_record<T>({&x})) {
    y.set_requires_grad(true);
    auto xn = x.node(), yn = y.node();
    Tape<T>::current().record(
        {yn,
         {xn},
         [xn](const std::vector<T>& dy, Adjoints<T>& adj) {
           T* dx = adj.at(xn).data();
           for (std::size_t i = 0; i < xn->value.size(); ++i) dx[i] += dy[0];
         }});
  }
  return y;
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&,
                              const Tensor<float>&, int, int);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>&, int, int);
template Tensor<float> max_pool2d(const Tensor<float>&, int);
template Tensor<double> max_pool2d(const Tensor<double>&, int);
template Tensor<float> upsample_nearest2x(const Tensor<float>&);
template Tensor<double> upsample_nearest2x(const Tensor<double>&);
template Tensor<float> relu(const Tensor<float>&);
template Tensor<double> relu(const Tensor<double>&);
template Tensor<float> linear(const Tensor<float>&, const Tensor<float>&,
                              const Tensor<float>&);
template Tensor<double> linear(const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>&);
template Tensor<float> concat_channels(const std::vector<Tensor<float>>&);
template Tensor<double> concat_channels(const std::vector<Tensor<double>>&);
template Tensor<float> broadcast_spatial(const Tensor<float>&, int, int);
template Tensor<double> broadcast_spatial(const Tensor<double>&, int, int);
template Tensor<float> add(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> add(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> mul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mul(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> scale(const Tensor<float>&, float);
template Tensor<double> scale(const Tensor<double>&, double);
template Tensor<float> sum(const Tensor<float>&);
template Tensor<double> sum(const Tensor<double>&);

}  // namespace lai
