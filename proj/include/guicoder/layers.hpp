#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "guicoder/prng.hpp"
#include "guicoder/tensor.hpp"

// Layer primitives with hand-derived backward passes. Convention: every
// backward ACCUMULATES (+=) into the gradient tensors it is given, so
// parameters shared across time steps or blocks collect contributions
// from each use. Callers zero-initialize.

namespace guicoder::nn {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// ---- elementwise activations ----

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> y = x;
  for (T& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
void relu_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>& dx) {
  for (int i = 0; i < y.numel(); ++i)
    if (y[i] > T(0)) dx[i] += dy[i];
}

template <typename T>
TensorT<T> sigmoid_forward(const TensorT<T>& x) {
  TensorT<T> y = x;
  for (T& v : y.data) v = sigmoid(v);
  return y;
}

template <typename T>
void sigmoid_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>& dx) {
  for (int i = 0; i < y.numel(); ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
}

template <typename T>
TensorT<T> tanh_forward(const TensorT<T>& x) {
  TensorT<T> y = x;
  for (T& v : y.data) v = std::tanh(v);
  return y;
}

template <typename T>
void tanh_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>& dx) {
  for (int i = 0; i < y.numel(); ++i) dx[i] += dy[i] * (T(1) - y[i] * y[i]);
}

// max-subtracted softmax over a flat vector
template <typename T>
TensorT<T> softmax(const TensorT<T>& z) {
  TensorT<T> y = z;
  T mx = *std::max_element(y.data.begin(), y.data.end());
  T sum = T(0);
  for (T& v : y.data) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (T& v : y.data) v /= sum;
  return y;
}

// dz from dy given y = softmax(z)
template <typename T>
void softmax_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>& dz) {
  T dot = T(0);
  for (int i = 0; i < y.numel(); ++i) dot += dy[i] * y[i];
  for (int i = 0; i < y.numel(); ++i) dz[i] += y[i] * (dy[i] - dot);
}

// ---- linear: y = W x + b, W is [M x N] ----

template <typename T>
TensorT<T> linear_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  int m = w.extent(0), n = w.extent(1);
  if (x.numel() != n || b.numel() != m)
    throw ShapeMismatch("linear: x" + shape_str(x) + " w" + shape_str(w) + " b" + shape_str(b));
  TensorT<T> y({m});
  for (int i = 0; i < m; ++i) {
    T acc = b[i];
    const T* wr = &w.data[std::size_t(i) * std::size_t(n)];
    for (int j = 0; j < n; ++j) acc += wr[j] * x[j];
    y[i] = acc;
  }
  return y;
}

template <typename T>
void linear_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                     TensorT<T>* dx, TensorT<T>& dw, TensorT<T>& db) {
  int m = w.extent(0), n = w.extent(1);
  for (int i = 0; i < m; ++i) {
    T g = dy[i];
    db[i] += g;
    T* dwr = &dw.data[std::size_t(i) * std::size_t(n)];
    const T* wr = &w.data[std::size_t(i) * std::size_t(n)];
    for (int j = 0; j < n; ++j) {
      dwr[j] += g * x[j];
      if (dx) (*dx)[j] += g * wr[j];
    }
  }
}

// ---- conv2d: cross-correlation, zero padding, square kernel ----
// x [Cin,H,W], w [Cout,Cin,k,k], b [Cout] -> y [Cout,Hout,Wout]

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                          int stride = 1, int pad = 1) {
  if (x.rank() != 3 || w.rank() != 4 || x.extent(0) != w.extent(1) ||
      b.numel() != w.extent(0) || w.extent(2) != w.extent(3))
    throw ShapeMismatch("conv2d: x" + shape_str(x) + " w" + shape_str(w));
  int cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  int cout = w.extent(0), k = w.extent(2);
  int ho = (h + 2 * pad - k) / stride + 1;
  int wo = (wd + 2 * pad - k) / stride + 1;
  TensorT<T> y({cout, ho, wo});
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T acc = b[co];
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < k; ++ky) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= wd) continue;
              acc += w.at(co, ci, ky, kx) * x.at(ci, iy, ix);
            }
          }
        y.at(co, oy, ox) = acc;
      }
  return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                     int stride, int pad, TensorT<T>* dx, TensorT<T>& dw, TensorT<T>& db) {
  int cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  int cout = w.extent(0), k = w.extent(2);
  int ho = dy.extent(1), wo = dy.extent(2);
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T g = dy.at(co, oy, ox);
        db[co] += g;
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < k; ++ky) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= wd) continue;
              dw.at(co, ci, ky, kx) += g * x.at(ci, iy, ix);
              if (dx) dx->at(ci, iy, ix) += g * w.at(co, ci, ky, kx);
            }
          }
      }
}

// ---- maxpool2d: square window, ties routed to the lowest flat index ----

struct PoolCache {
  std::vector<int> argmax;  // flat input index per output element
  std::vector<int> in_shape;
};

template <typename T>
TensorT<T> maxpool2d_forward(const TensorT<T>& x, int window, int stride, PoolCache& cache) {
  int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (h % stride != 0 || w % stride != 0)
    throw ShapeMismatch("maxpool2d: extent not divisible by stride " + shape_str(x));
  int ho = (h - window) / stride + 1;
  int wo = (w - window) / stride + 1;
  TensorT<T> y({c, ho, wo});
  cache.argmax.assign(std::size_t(y.numel()), 0);
  cache.in_shape = x.shape;
  int oi = 0;
  for (int ci = 0; ci < c; ++ci)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox, ++oi) {
        T best = x.at(ci, oy * stride, ox * stride);
        int besti = (ci * h + oy * stride) * w + ox * stride;
        for (int ky = 0; ky < window; ++ky)
          for (int kx = 0; kx < window; ++kx) {
            int iy = oy * stride + ky, ix = ox * stride + kx;
            T v = x.at(ci, iy, ix);
            if (v > best) {  // strict: ties keep the earliest index
              best = v;
              besti = (ci * h + iy) * w + ix;
            }
          }
        y[oi] = best;
        cache.argmax[std::size_t(oi)] = besti;
      }
  return y;
}

template <typename T>
void maxpool2d_backward(const TensorT<T>& dy, const PoolCache& cache, TensorT<T>& dx) {
  for (int i = 0; i < dy.numel(); ++i) dx[cache.argmax[std::size_t(i)]] += dy[i];
}

// ---- LSTM cell, gate packing [i, f, g, o] along the 4H axis ----
// wx [4H x E], wh [4H x H], b [4H]

template <typename T>
struct LstmCache {
  TensorT<T> x, h_prev, c_prev;
  TensorT<T> i, f, g, o, c, h;
};

template <typename T>
void lstm_forward(const TensorT<T>& x, const TensorT<T>& h_prev, const TensorT<T>& c_prev,
                  const TensorT<T>& wx, const TensorT<T>& wh, const TensorT<T>& b,
                  LstmCache<T>& cache) {
  int hh = h_prev.numel(), e = x.numel();
  if (wx.extent(0) != 4 * hh || wx.extent(1) != e || wh.extent(0) != 4 * hh ||
      wh.extent(1) != hh || b.numel() != 4 * hh)
    throw ShapeMismatch("lstm: x" + shape_str(x) + " wx" + shape_str(wx) + " wh" + shape_str(wh));
  TensorT<T> z({4 * hh});
  for (int r = 0; r < 4 * hh; ++r) {
    T acc = b[r];
    const T* wxr = &wx.data[std::size_t(r) * std::size_t(e)];
    for (int j = 0; j < e; ++j) acc += wxr[j] * x[j];
    const T* whr = &wh.data[std::size_t(r) * std::size_t(hh)];
    for (int j = 0; j < hh; ++j) acc += whr[j] * h_prev[j];
    z[r] = acc;
  }
  cache.x = x;
  cache.h_prev = h_prev;
  cache.c_prev = c_prev;
  cache.i = TensorT<T>({hh});
  cache.f = TensorT<T>({hh});
  cache.g = TensorT<T>({hh});
  cache.o = TensorT<T>({hh});
  cache.c = TensorT<T>({hh});
  cache.h = TensorT<T>({hh});
  for (int j = 0; j < hh; ++j) {
    cache.i[j] = sigmoid(z[j]);
    cache.f[j] = sigmoid(z[hh + j]);
    cache.g[j] = std::tanh(z[2 * hh + j]);
    cache.o[j] = sigmoid(z[3 * hh + j]);
    cache.c[j] = cache.f[j] * c_prev[j] + cache.i[j] * cache.g[j];
    cache.h[j] = cache.o[j] * std::tanh(cache.c[j]);
  }
}

// dh, dc are the incoming gradients at this step (dc may be all zero);
// writes dh_prev/dc_prev and accumulates dx and weight grads.
template <typename T>
void lstm_backward(const LstmCache<T>& cache, const TensorT<T>& wx, const TensorT<T>& wh,
                   const TensorT<T>& dh, const TensorT<T>& dc_in, TensorT<T>& dx,
                   TensorT<T>& dh_prev, TensorT<T>& dc_prev, TensorT<T>& dwx, TensorT<T>& dwh,
                   TensorT<T>& db) {
  int hh = cache.h.numel(), e = cache.x.numel();
  TensorT<T> dz({4 * hh});
  for (int j = 0; j < hh; ++j) {
    T tc = std::tanh(cache.c[j]);
    T do_ = dh[j] * tc;
    T dc = dc_in[j] + dh[j] * cache.o[j] * (T(1) - tc * tc);
    T di = dc * cache.g[j];
    T df = dc * cache.c_prev[j];
    T dg = dc * cache.i[j];
    dc_prev[j] += dc * cache.f[j];
    dz[j] = di * cache.i[j] * (T(1) - cache.i[j]);
    dz[hh + j] = df * cache.f[j] * (T(1) - cache.f[j]);
    dz[2 * hh + j] = dg * (T(1) - cache.g[j] * cache.g[j]);
    dz[3 * hh + j] = do_ * cache.o[j] * (T(1) - cache.o[j]);
  }
  for (int r = 0; r < 4 * hh; ++r) {
    T g = dz[r];
    db[r] += g;
    T* dwxr = &dwx.data[std::size_t(r) * std::size_t(e)];
    const T* wxr = &wx.data[std::size_t(r) * std::size_t(e)];
    for (int j = 0; j < e; ++j) {
      dwxr[j] += g * cache.x[j];
      dx[j] += g * wxr[j];
    }
    T* dwhr = &dwh.data[std::size_t(r) * std::size_t(hh)];
    const T* whr = &wh.data[std::size_t(r) * std::size_t(hh)];
    for (int j = 0; j < hh; ++j) {
      dwhr[j] += g * cache.h_prev[j];
      dh_prev[j] += g * whr[j];
    }
  }
}

// ---- region pooling: channel-wise max over the rows of nu [L x D] ----

template <typename T>
TensorT<T> region_pool_forward(const TensorT<T>& nu, std::vector<int>& argmax) {
  if (nu.rank() != 2 || nu.extent(0) < 1) throw EmptyInput("region_pool: need L >= 1");
  int l = nu.extent(0), d = nu.extent(1);
  TensorT<T> vp({d});
  argmax.assign(std::size_t(d), 0);
  for (int c = 0; c < d; ++c) {
    T best = nu.at(0, c);
    int bi = 0;
    for (int i = 1; i < l; ++i)
      if (nu.at(i, c) > best) {  // ties keep the lowest row
        best = nu.at(i, c);
        bi = i;
      }
    vp[c] = best;
    argmax[std::size_t(c)] = bi;
  }
  return vp;
}

template <typename T>
void region_pool_backward(const TensorT<T>& dvp, const std::vector<int>& argmax, TensorT<T>& dnu) {
  int d = dvp.numel();
  for (int c = 0; c < d; ++c) dnu.at(argmax[std::size_t(c)], c) += dvp[c];
}

// ---- soft attention over region features ----
// e_i = tanh(W_ev nu_i + W_eh h); s_i = w_s . e_i; alpha = softmax(s);
// vhat = sum_i alpha_i nu_i

template <typename T>
struct AttnCache {
  TensorT<T> e;      // L x A
  TensorT<T> alpha;  // L
};

template <typename T>
void attention_forward(const TensorT<T>& nu, const TensorT<T>& h, const TensorT<T>& w_ev,
                       const TensorT<T>& w_eh, const TensorT<T>& w_s, AttnCache<T>& cache,
                       TensorT<T>& alpha_out, TensorT<T>& vhat_out) {
  int l = nu.extent(0), d = nu.extent(1);
  int a = w_ev.extent(0);
  if (w_ev.extent(1) != d || w_eh.extent(0) != a || w_eh.extent(1) != h.numel() ||
      w_s.numel() != a)
    throw ShapeMismatch("attention: nu" + shape_str(nu) + " w_ev" + shape_str(w_ev) + " w_eh" +
                        shape_str(w_eh));
  TensorT<T> proj_h({a});  // W_eh h, shared across regions
  for (int r = 0; r < a; ++r) {
    T acc = T(0);
    for (int j = 0; j < h.numel(); ++j) acc += w_eh.at(r, j) * h[j];
    proj_h[r] = acc;
  }
  cache.e = TensorT<T>({l, a});
  TensorT<T> s({l});
  for (int i = 0; i < l; ++i) {
    T si = T(0);
    for (int r = 0; r < a; ++r) {
      T acc = proj_h[r];
      for (int j = 0; j < d; ++j) acc += w_ev.at(r, j) * nu.at(i, j);
      T e = std::tanh(acc);
      cache.e.at(i, r) = e;
      si += w_s[r] * e;
    }
    s[i] = si;
  }
  cache.alpha = softmax(s);
  alpha_out = cache.alpha;
  vhat_out = TensorT<T>({d});
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < d; ++j) vhat_out[j] += cache.alpha[i] * nu.at(i, j);
}

template <typename T>
void attention_backward(const TensorT<T>& nu, const TensorT<T>& h, const TensorT<T>& w_ev,
                        const TensorT<T>& w_eh, const TensorT<T>& w_s, const AttnCache<T>& cache,
                        const TensorT<T>& dvhat, TensorT<T>& dnu, TensorT<T>& dh,
                        TensorT<T>& dw_ev, TensorT<T>& dw_eh, TensorT<T>& dw_s) {
  int l = nu.extent(0), d = nu.extent(1), a = w_s.numel();
  // vhat = sum alpha_i nu_i
  TensorT<T> dalpha({l});
  for (int i = 0; i < l; ++i) {
    T acc = T(0);
    for (int j = 0; j < d; ++j) {
      acc += dvhat[j] * nu.at(i, j);
      dnu.at(i, j) += cache.alpha[i] * dvhat[j];
    }
    dalpha[i] = acc;
  }
  TensorT<T> ds({l});
  softmax_backward(cache.alpha, dalpha, ds);
  TensorT<T> du_sum({a});  // sum_i du_i, for the shared h projection
  for (int i = 0; i < l; ++i) {
    for (int r = 0; r < a; ++r) {
      T e = cache.e.at(i, r);
      dw_s[r] += ds[i] * e;
      T du = ds[i] * w_s[r] * (T(1) - e * e);
      du_sum[r] += du;
      for (int j = 0; j < d; ++j) {
        dw_ev.at(r, j) += du * nu.at(i, j);
        dnu.at(i, j) += du * w_ev.at(r, j);
      }
    }
  }
  for (int r = 0; r < a; ++r)
    for (int j = 0; j < h.numel(); ++j) {
      dw_eh.at(r, j) += du_sum[r] * h[j];
      dh[j] += du_sum[r] * w_eh.at(r, j);
    }
}

// ---- cross entropy on logits ----

template <typename T>
T cross_entropy(const TensorT<T>& logits, int target, TensorT<T>* probs_out = nullptr) {
  if (target < 0 || target >= logits.numel())
    throw std::out_of_range("cross_entropy: bad target " + std::to_string(target));
  TensorT<T> p = softmax(logits);
  T loss = -std::log(std::max(p[target], std::numeric_limits<T>::min()));
  if (probs_out) *probs_out = std::move(p);
  return loss;
}

// dlogits += scale * (softmax(logits) - one_hot(target))
template <typename T>
void cross_entropy_backward(const TensorT<T>& probs, int target, T scale, TensorT<T>& dlogits) {
  for (int i = 0; i < probs.numel(); ++i) dlogits[i] += scale * probs[i];
  dlogits[target] -= scale;
}

// ---- inverted dropout ----

template <typename T>
TensorT<T> dropout_forward(const TensorT<T>& x, double rate, Prng& stream, bool training,
                           TensorT<T>* mask_out = nullptr) {
  if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout rate must be in [0,1)");
  if (!training || rate == 0) {
    if (mask_out) *mask_out = TensorT<T>::full(x.shape, T(1));
    return x;
  }
  T keep_scale = T(1.0 / (1.0 - rate));
  TensorT<T> mask(x.shape);
  TensorT<T> y(x.shape);
  for (int i = 0; i < x.numel(); ++i) {
    T m = stream.next_unit() < rate ? T(0) : keep_scale;
    mask[i] = m;
    y[i] = x[i] * m;
  }
  if (mask_out) *mask_out = std::move(mask);
  return y;
}

template <typename T>
void dropout_backward(const TensorT<T>& mask, const TensorT<T>& dy, TensorT<T>& dx) {
  for (int i = 0; i < dy.numel(); ++i) dx[i] += dy[i] * mask[i];
}

}  // namespace guicoder::nn
