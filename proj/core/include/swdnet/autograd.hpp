#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "swdnet/errors.hpp"
#include "swdnet/gemm.hpp"
#include "swdnet/tensor.hpp"

namespace swdnet {

// Define-by-run reverse-mode tape. Every forward call appends one record whose
// inputs precede it, so one reverse sweep visits each record exactly once.
// The tape is rebuilt for every forward pass.
//
// Templated on the scalar type: the training path runs float; the
// finite-difference oracles in the tests instantiate the same code at double.
template <typename T>
class TapeT {
 public:
  using Id = int;

  // Parameter leaf: after backward(), d(loss)/d(param) is accumulated into
  // param->grad (allocated on demand, zeroed by the caller between steps).
  Id leaf(TensorT<T>* param) {
    param->ensure_grad();
    Node n;
    n.value = *param;
    n.external = param;
    n.needs_grad = true;
    return push(std::move(n));
  }

  // Constant input (no gradient is reported for it).
  Id input(TensorT<T> value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
  }

  bool needs_grad(Id id) const { return node(id).needs_grad; }

  const TensorT<T>& value(Id id) const { return node(id).value; }
  size_t num_records() const { return nodes_.size(); }

  // ---- operations -------------------------------------------------------

  Id conv2d(Id x, Id kernel, Id bias, int stride, int padding) {
    const TensorT<T>& xv = node(x).value;
    const TensorT<T>& kv = node(kernel).value;
    if (xv.shape.size() != 4 || kv.shape.size() != 4)
      throw ConfigError("conv2d: expected 4-d input and kernel, got " +
                        shape_str(xv.shape) + " and " + shape_str(kv.shape));
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
    const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Cout = kv.dim(0), Kh = kv.dim(2), Kw = kv.dim(3);
    if (kv.dim(1) != Cin)
      throw ConfigError("conv2d: kernel expects " + std::to_string(kv.dim(1)) +
                        " input channels, input has " + std::to_string(Cin));
    if (Kh > H + 2 * padding || Kw > W + 2 * padding)
      throw ConfigError("conv2d: kernel " + std::to_string(Kh) + "x" + std::to_string(Kw) +
                        " larger than padded input");
    if (bias >= 0 && node(bias).value.size() != Cout)
      throw ConfigError("conv2d: bias length does not match output channels");
    const int Ho = (H + 2 * padding - Kh) / stride + 1;
    const int Wo = (W + 2 * padding - Kw) / stride + 1;
    const int Krows = Cin * Kh * Kw;
    const int Ocols = Ho * Wo;

    TensorT<T> y({N, Cout, Ho, Wo});
    std::vector<T> col(static_cast<size_t>(Krows) * Ocols);
    for (int n = 0; n < N; ++n) {
      im2col(xv.data.data() + static_cast<size_t>(n) * Cin * H * W, Cin, H, W, Kh, Kw,
             stride, padding, Ho, Wo, col.data());
      gemm_nn(Cout, Krows, Ocols, kv.data.data(),
              col.data(), y.data.data() + static_cast<size_t>(n) * Cout * Ocols);
    }
    if (bias >= 0) {
      const TensorT<T>& bv = node(bias).value;
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co) {
          T* row = y.data.data() + (static_cast<size_t>(n) * Cout + co) * Ocols;
          for (int i = 0; i < Ocols; ++i) row[i] += bv.data[static_cast<size_t>(co)];
        }
    }

    Node out;
    out.value = std::move(y);
    out.back = [x, kernel, bias, stride, padding, N, Cin, H, W, Cout, Kh, Kw, Ho, Wo,
                Krows, Ocols](TapeT& t, Id self) {
      const std::vector<T>& dy = t.node(self).grad;
      const TensorT<T>& xv = t.node(x).value;
      const TensorT<T>& kv = t.node(kernel).value;
      std::vector<T>& dx = t.grad_ref(x);
      std::vector<T>& dk = t.grad_ref(kernel);

      if (bias >= 0) {
        std::vector<T>& db = t.grad_ref(bias);
        for (int co = 0; co < Cout; ++co) {
          double s = 0.0;
          for (int n = 0; n < N; ++n) {
            const T* row = dy.data() + (static_cast<size_t>(n) * Cout + co) * Ocols;
            for (int i = 0; i < Ocols; ++i) s += static_cast<double>(row[i]);
          }
          db[static_cast<size_t>(co)] += static_cast<T>(s);
        }
      }

      const bool want_dx = t.needs_grad(x);
      std::vector<T> col(static_cast<size_t>(Krows) * Ocols);
      std::vector<T> colT(static_cast<size_t>(Ocols) * Krows);
      std::vector<T> kT, dcol;
      if (want_dx) {
        kT.resize(static_cast<size_t>(Krows) * Cout);
        dcol.resize(static_cast<size_t>(Krows) * Ocols);
        transpose(Cout, Krows, kv.data.data(), kT.data());
      }
      for (int n = 0; n < N; ++n) {
        im2col(xv.data.data() + static_cast<size_t>(n) * Cin * H * W, Cin, H, W, Kh, Kw,
               stride, padding, Ho, Wo, col.data());
        transpose(Krows, Ocols, col.data(), colT.data());
        gemm_nn(Cout, Ocols, Krows, dy.data() + static_cast<size_t>(n) * Cout * Ocols,
                colT.data(), dk.data());
        if (want_dx) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          gemm_nn(Krows, Cout, Ocols, kT.data(),
                  dy.data() + static_cast<size_t>(n) * Cout * Ocols, dcol.data());
          col2im(dcol.data(), Cin, H, W, Kh, Kw, stride, padding, Ho, Wo,
                 dx.data() + static_cast<size_t>(n) * Cin * H * W);
        }
      }
    };
    return push_op(std::move(out), x, kernel, bias);
  }

  Id dense(Id x, Id weight, Id bias) {
    const TensorT<T>& xv = node(x).value;
    const TensorT<T>& wv = node(weight).value;
    if (xv.shape.size() != 2 || wv.shape.size() != 2)
      throw ConfigError("dense: expected 2-d input and weight");
    const int N = xv.dim(0), F = xv.dim(1), G = wv.dim(0);
    if (wv.dim(1) != F)
      throw ConfigError("dense: weight expects " + std::to_string(wv.dim(1)) +
                        " features, input has " + std::to_string(F));
    if (bias >= 0 && node(bias).value.size() != G)
      throw ConfigError("dense: bias length does not match output features");

    TensorT<T> y({N, G});
    std::vector<T> wT(static_cast<size_t>(F) * G);
    transpose(G, F, wv.data.data(), wT.data());
    gemm_nn(N, F, G, xv.data.data(), wT.data(), y.data.data());
    if (bias >= 0) {
      const TensorT<T>& bv = node(bias).value;
      for (int n = 0; n < N; ++n)
        for (int g = 0; g < G; ++g) y.data[static_cast<size_t>(n) * G + g] += bv.data[static_cast<size_t>(g)];
    }

    Node out;
    out.value = std::move(y);
    out.back = [x, weight, bias, N, F, G](TapeT& t, Id self) {
      const std::vector<T>& dy = t.node(self).grad;
      const TensorT<T>& xv = t.node(x).value;
      const TensorT<T>& wv = t.node(weight).value;
      std::vector<T>& dw = t.grad_ref(weight);
      if (t.needs_grad(x)) {
        std::vector<T>& dx = t.grad_ref(x);
        gemm_nn(N, G, F, dy.data(), wv.data.data(), dx.data());
      }
      std::vector<T> dyT(static_cast<size_t>(G) * N);
      transpose(N, G, dy.data(), dyT.data());
      gemm_nn(G, N, F, dyT.data(), xv.data.data(), dw.data());
      if (bias >= 0) {
        std::vector<T>& db = t.grad_ref(bias);
        for (int g = 0; g < G; ++g) {
          double s = 0.0;
          for (int n = 0; n < N; ++n) s += static_cast<double>(dy[static_cast<size_t>(n) * G + g]);
          db[static_cast<size_t>(g)] += static_cast<T>(s);
        }
      }
    };
    return push_op(std::move(out), x, weight, bias);
  }

  Id relu(Id x) {
    const TensorT<T>& xv = node(x).value;
    TensorT<T> y(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i) y.data[i] = xv.data[i] > T(0) ? xv.data[i] : T(0);
    Node out;
    out.value = std::move(y);
    out.back = [x](TapeT& t, Id self) {
      const Node& n = t.node(self);
      std::vector<T>& dx = t.grad_ref(x);
      for (size_t i = 0; i < dx.size(); ++i)
        if (n.value.data[i] > T(0)) dx[i] += n.grad[i];
    };
    return push_op(std::move(out), x);
  }

  Id maxpool2d(Id x, int k, int stride) {
    const TensorT<T>& xv = node(x).value;
    if (xv.shape.size() != 4) throw ConfigError("maxpool2d: expected 4-d input");
    if (k < 1 || stride < 1) throw ConfigError("maxpool2d: k and stride must be >= 1");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (k > H || k > W) throw ConfigError("maxpool2d: window larger than input");
    const int Ho = (H - k) / stride + 1;
    const int Wo = (W - k) / stride + 1;

    TensorT<T> y({N, C, Ho, Wo});
    std::vector<int> argmax(static_cast<size_t>(N) * C * Ho * Wo);
    size_t o = 0;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* plane = xv.data.data() + (static_cast<size_t>(n) * C + c) * H * W;
        for (int oh = 0; oh < Ho; ++oh)
          for (int ow = 0; ow < Wo; ++ow, ++o) {
            int best = (oh * stride) * W + (ow * stride);
            T bv = plane[best];
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                int idx = (oh * stride + kh) * W + (ow * stride + kw);
                if (plane[idx] > bv) {  // strict: first max wins, deterministic
                  bv = plane[idx];
                  best = idx;
                }
              }
            y.data[o] = bv;
            argmax[o] = best;
          }
      }

    Node out;
    out.value = std::move(y);
    out.back = [x, argmax = std::move(argmax), N, C, H, W, Ho, Wo](TapeT& t, Id self) {
      const std::vector<T>& dy = t.node(self).grad;
      std::vector<T>& dx = t.grad_ref(x);
      size_t o = 0;
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          T* plane = dx.data() + (static_cast<size_t>(n) * C + c) * H * W;
          for (int i = 0; i < Ho * Wo; ++i, ++o) plane[argmax[o]] += dy[o];
        }
    };
    return push_op(std::move(out), x);
  }

  Id global_avgpool(Id x) {
    const TensorT<T>& xv = node(x).value;
    if (xv.shape.size() != 4) throw ConfigError("global_avgpool: expected 4-d input");
    const int N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    TensorT<T> y({N, C});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* plane = xv.data.data() + (static_cast<size_t>(n) * C + c) * HW;
        double s = 0.0;
        for (int i = 0; i < HW; ++i) s += static_cast<double>(plane[i]);
        y.data[static_cast<size_t>(n) * C + c] = static_cast<T>(s / HW);
      }
    Node out;
    out.value = std::move(y);
    out.back = [x, N, C, HW](TapeT& t, Id self) {
      const std::vector<T>& dy = t.node(self).grad;
      std::vector<T>& dx = t.grad_ref(x);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T g = dy[static_cast<size_t>(n) * C + c] / static_cast<T>(HW);
          T* plane = dx.data() + (static_cast<size_t>(n) * C + c) * HW;
          for (int i = 0; i < HW; ++i) plane[i] += g;
        }
    };
    return push_op(std::move(out), x);
  }

  // residual sum; shapes must match exactly
  Id add(Id a, Id b) {
    const TensorT<T>& av = node(a).value;
    const TensorT<T>& bv = node(b).value;
    if (av.shape != bv.shape)
      throw ConfigError("add: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    TensorT<T> y(av.shape);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] + bv.data[i];
    Node out;
    out.value = std::move(y);
    out.back = [a, b](TapeT& t, Id self) {
      const std::vector<T>& dy = t.node(self).grad;
      std::vector<T>& da = t.grad_ref(a);
      std::vector<T>& db = t.grad_ref(b);
      for (size_t i = 0; i < dy.size(); ++i) {
        da[i] += dy[i];
        db[i] += dy[i];
      }
    };
    return push_op(std::move(out), a, b);
  }

  Id flatten(Id x) {
    const TensorT<T>& xv = node(x).value;
    if (xv.shape.empty()) throw ConfigError("flatten: scalar input");
    const int N = xv.dim(0);
    const int F = static_cast<int>(xv.size() / N);
    TensorT<T> y({N, F}, xv.data);
    Node out;
    out.value = std::move(y);
    out.back = [x](TapeT& t, Id self) {
      const std::vector<T>& dy = t.node(self).grad;
      std::vector<T>& dx = t.grad_ref(x);
      for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    };
    return push_op(std::move(out), x);
  }

  // Batch normalization over [N,C,H,W]. Train mode normalizes with batch
  // statistics and updates the running stats in place (exponential moving
  // average); eval mode reads the running stats and no gradient flows through
  // them. Statistics are accumulated in 64-bit.
  Id batchnorm(Id x, Id gamma, Id beta, std::vector<T>* run_mean, std::vector<T>* run_var,
               T eps, T momentum, bool train) {
    const TensorT<T>& xv = node(x).value;
    if (xv.shape.size() != 4) throw ConfigError("batchnorm: expected 4-d input");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int m = N * H * W;
    if (node(gamma).value.size() != C || node(beta).value.size() != C)
      throw ConfigError("batchnorm: gamma/beta length must equal channel count " + std::to_string(C));
    if (static_cast<int>(run_mean->size()) != C || static_cast<int>(run_var->size()) != C)
      throw ConfigError("batchnorm: running stats length must equal channel count");
    if (train && m < 2)
      throw ConfigError("batchnorm: degenerate batch, train mode needs N*H*W >= 2 (got " +
                        std::to_string(m) + ")");

    std::vector<T> mean(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
    const int HW = H * W;
    if (train) {
      for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (int n = 0; n < N; ++n) {
          const T* plane = xv.data.data() + (static_cast<size_t>(n) * C + c) * HW;
          for (int i = 0; i < HW; ++i) s += static_cast<double>(plane[i]);
        }
        const double mu = s / m;
        double v = 0.0;
        for (int n = 0; n < N; ++n) {
          const T* plane = xv.data.data() + (static_cast<size_t>(n) * C + c) * HW;
          for (int i = 0; i < HW; ++i) {
            const double d = static_cast<double>(plane[i]) - mu;
            v += d * d;
          }
        }
        v /= m;
        mean[static_cast<size_t>(c)] = static_cast<T>(mu);
        invstd[static_cast<size_t>(c)] = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
        (*run_mean)[static_cast<size_t>(c)] = static_cast<T>(
            (1.0 - static_cast<double>(momentum)) * static_cast<double>((*run_mean)[static_cast<size_t>(c)]) +
            static_cast<double>(momentum) * mu);
        (*run_var)[static_cast<size_t>(c)] = static_cast<T>(
            (1.0 - static_cast<double>(momentum)) * static_cast<double>((*run_var)[static_cast<size_t>(c)]) +
            static_cast<double>(momentum) * v);
      }
    } else {
      for (int c = 0; c < C; ++c) {
        mean[static_cast<size_t>(c)] = (*run_mean)[static_cast<size_t>(c)];
        invstd[static_cast<size_t>(c)] = static_cast<T>(
            1.0 / std::sqrt(static_cast<double>((*run_var)[static_cast<size_t>(c)]) + static_cast<double>(eps)));
      }
    }

    const TensorT<T>& gv = node(gamma).value;
    const TensorT<T>& bv = node(beta).value;
    TensorT<T> y(xv.shape);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* in = xv.data.data() + (static_cast<size_t>(n) * C + c) * HW;
        T* outp = y.data.data() + (static_cast<size_t>(n) * C + c) * HW;
        const T mu = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
        const T g = gv.data[static_cast<size_t>(c)], sh = bv.data[static_cast<size_t>(c)];
        for (int i = 0; i < HW; ++i) outp[i] = (in[i] - mu) * is * g + sh;
      }

    Node out;
    out.value = std::move(y);
    out.back = [x, gamma, beta, mean = std::move(mean), invstd = std::move(invstd), N, C, HW, m,
                train](TapeT& t, Id self) {
      const std::vector<T>& dy = t.node(self).grad;
      const TensorT<T>& xv = t.node(x).value;
      const TensorT<T>& gv = t.node(gamma).value;
      std::vector<T>& dx = t.grad_ref(x);
      std::vector<T>& dg = t.grad_ref(gamma);
      std::vector<T>& db = t.grad_ref(beta);
      for (int c = 0; c < C; ++c) {
        const T mu = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int n = 0; n < N; ++n) {
          const size_t base = (static_cast<size_t>(n) * C + c) * HW;
          for (int i = 0; i < HW; ++i) {
            const double d = static_cast<double>(dy[base + i]);
            sum_dy += d;
            sum_dy_xhat += d * static_cast<double>((xv.data[base + i] - mu) * is);
          }
        }
        dg[static_cast<size_t>(c)] += static_cast<T>(sum_dy_xhat);
        db[static_cast<size_t>(c)] += static_cast<T>(sum_dy);
        const T g = gv.data[static_cast<size_t>(c)];
        if (train) {
          const T k = g * is / static_cast<T>(m);
          for (int n = 0; n < N; ++n) {
            const size_t base = (static_cast<size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) {
              const T xhat = (xv.data[base + i] - mu) * is;
              dx[base + i] += k * (static_cast<T>(m) * dy[base + i] - static_cast<T>(sum_dy) -
                                   xhat * static_cast<T>(sum_dy_xhat));
            }
          }
        } else {
          const T k = g * is;
          for (int n = 0; n < N; ++n) {
            const size_t base = (static_cast<size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) dx[base + i] += k * dy[base + i];
          }
        }
      }
    };
    return push_op(std::move(out), x, gamma, beta);
  }

  // Mean over the batch of -log softmax(logits)[label]; max-subtracted.
  Id softmax_cross_entropy(Id logits, const std::vector<int>& labels) {
    const TensorT<T>& lv = node(logits).value;
    if (lv.shape.size() != 2) throw ConfigError("softmax_cross_entropy: expected 2-d logits");
    const int N = lv.dim(0), K = lv.dim(1);
    if (static_cast<int>(labels.size()) != N)
      throw DataError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                      " labels for batch of " + std::to_string(N));
    for (int n = 0; n < N; ++n)
      if (labels[static_cast<size_t>(n)] < 0 || labels[static_cast<size_t>(n)] >= K)
        throw DataError("softmax_cross_entropy: label " + std::to_string(labels[static_cast<size_t>(n)]) +
                        " out of range [0, " + std::to_string(K) + ") at row " + std::to_string(n));

    std::vector<T> probs(static_cast<size_t>(N) * K);
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
      const T* row = lv.data.data() + static_cast<size_t>(n) * K;
      double mx = static_cast<double>(row[0]);
      for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
      double z = 0.0;
      for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
      for (int k = 0; k < K; ++k)
        probs[static_cast<size_t>(n) * K + k] =
            static_cast<T>(std::exp(static_cast<double>(row[k]) - mx) / z);
      loss += -(static_cast<double>(row[labels[static_cast<size_t>(n)]]) - mx - std::log(z));
    }
    TensorT<T> y({1});
    y.data[0] = static_cast<T>(loss / N);

    Node out;
    out.value = std::move(y);
    out.back = [logits, labels, probs = std::move(probs), N, K](TapeT& t, Id self) {
      const T g = t.node(self).grad[0] / static_cast<T>(N);
      std::vector<T>& dl = t.grad_ref(logits);
      for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) {
          T p = probs[static_cast<size_t>(n) * K + k];
          if (k == labels[static_cast<size_t>(n)]) p -= T(1);
          dl[static_cast<size_t>(n) * K + k] += g * p;
        }
    };
    return push_op(std::move(out), logits);
  }

  // Scalar helpers (toy losses, penalty oracles).
  Id sum(Id x) {
    const TensorT<T>& xv = node(x).value;
    double s = 0.0;
    for (T v : xv.data) s += static_cast<double>(v);
    TensorT<T> y({1});
    y.data[0] = static_cast<T>(s);
    Node out;
    out.value = std::move(y);
    out.back = [x](TapeT& t, Id self) {
      const T g = t.node(self).grad[0];
      std::vector<T>& dx = t.grad_ref(x);
      for (T& v : dx) v += g;
    };
    return push_op(std::move(out), x);
  }

  Id sum_squares(Id x) {
    const TensorT<T>& xv = node(x).value;
    double s = 0.0;
    for (T v : xv.data) s += static_cast<double>(v) * static_cast<double>(v);
    TensorT<T> y({1});
    y.data[0] = static_cast<T>(s);
    Node out;
    out.value = std::move(y);
    out.back = [x](TapeT& t, Id self) {
      const T g = t.node(self).grad[0];
      const TensorT<T>& xv = t.node(x).value;
      std::vector<T>& dx = t.grad_ref(x);
      for (size_t i = 0; i < dx.size(); ++i) dx[i] += T(2) * g * xv.data[i];
    };
    return push_op(std::move(out), x);
  }

  Id mul(Id a, Id b) {
    const TensorT<T>& av = node(a).value;
    const TensorT<T>& bv = node(b).value;
    if (av.shape != bv.shape)
      throw ConfigError("mul: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    TensorT<T> y(av.shape);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] * bv.data[i];
    Node out;
    out.value = std::move(y);
    out.back = [a, b](TapeT& t, Id self) {
      const std::vector<T>& dy = t.node(self).grad;
      const TensorT<T>& av = t.node(a).value;
      const TensorT<T>& bv = t.node(b).value;
      std::vector<T>& da = t.grad_ref(a);
      std::vector<T>& db = t.grad_ref(b);
      for (size_t i = 0; i < dy.size(); ++i) {
        da[i] += dy[i] * bv.data[i];
        db[i] += dy[i] * av.data[i];
      }
    };
    return push_op(std::move(out), a, b);
  }

  Id scale(Id x, T c) {
    const TensorT<T>& xv = node(x).value;
    TensorT<T> y(xv.shape);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = c * xv.data[i];
    Node out;
    out.value = std::move(y);
    out.back = [x, c](TapeT& t, Id self) {
      const std::vector<T>& dy = t.node(self).grad;
      std::vector<T>& dx = t.grad_ref(x);
      for (size_t i = 0; i < dx.size(); ++i) dx[i] += c * dy[i];
    };
    return push_op(std::move(out), x);
  }

  // ---- reverse sweep -----------------------------------------------------

  void backward(Id loss) {
    if (loss < 0 || loss >= static_cast<Id>(nodes_.size()))
      throw UsageError("backward: tensor was not produced by this tape");
    if (nodes_[static_cast<size_t>(loss)].value.size() != 1)
      throw UsageError("backward: loss must be scalar, got shape " +
                       shape_str(nodes_[static_cast<size_t>(loss)].value.shape));
    for (Id i = 0; i <= loss; ++i)
      nodes_[static_cast<size_t>(i)].grad.assign(nodes_[static_cast<size_t>(i)].value.data.size(), T(0));
    nodes_[static_cast<size_t>(loss)].grad[0] = T(1);
    for (Id i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.back) n.back(*this, i);
    }
    for (Id i = 0; i <= loss; ++i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.external) {
        n.external->ensure_grad();
        for (size_t j = 0; j < n.grad.size(); ++j) n.external->grad[j] += n.grad[j];
      }
    }
  }

  std::vector<T>& grad_ref(Id id) { return node_mut(id).grad; }

 private:
  struct Node {
    TensorT<T> value;
    std::vector<T> grad;
    TensorT<T>* external = nullptr;
    bool needs_grad = false;
    std::function<void(TapeT&, Id)> back;
  };

  Id push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  template <typename... Ids>
  Id push_op(Node n, Ids... deps) {
    n.needs_grad = (... || (deps >= 0 && node(deps).needs_grad));
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }
  const Node& node(Id id) const {
    if (id < 0 || id >= static_cast<Id>(nodes_.size()))
      throw UsageError("tape: tensor id " + std::to_string(id) + " was not produced by this tape");
    return nodes_[static_cast<size_t>(id)];
  }
  Node& node_mut(Id id) { return const_cast<Node&>(node(id)); }

  static void im2col(const T* x, int Cin, int H, int W, int Kh, int Kw, int stride, int padding,
                     int Ho, int Wo, T* col) {
    for (int ci = 0; ci < Cin; ++ci)
      for (int kh = 0; kh < Kh; ++kh)
        for (int kw = 0; kw < Kw; ++kw) {
          T* out = col + (static_cast<size_t>((ci * Kh + kh) * Kw + kw)) * Ho * Wo;
          for (int oh = 0; oh < Ho; ++oh) {
            const int ih = oh * stride - padding + kh;
            if (ih < 0 || ih >= H) {
              for (int ow = 0; ow < Wo; ++ow) out[oh * Wo + ow] = T(0);
              continue;
            }
            const T* xrow = x + (static_cast<size_t>(ci) * H + ih) * W;
            for (int ow = 0; ow < Wo; ++ow) {
              const int iw = ow * stride - padding + kw;
              out[oh * Wo + ow] = (iw >= 0 && iw < W) ? xrow[iw] : T(0);
            }
          }
        }
  }

  static void col2im(const T* col, int Cin, int H, int W, int Kh, int Kw, int stride, int padding,
                     int Ho, int Wo, T* dx) {
    for (int ci = 0; ci < Cin; ++ci)
      for (int kh = 0; kh < Kh; ++kh)
        for (int kw = 0; kw < Kw; ++kw) {
          const T* in = col + (static_cast<size_t>((ci * Kh + kh) * Kw + kw)) * Ho * Wo;
          for (int oh = 0; oh < Ho; ++oh) {
            const int ih = oh * stride - padding + kh;
            if (ih < 0 || ih >= H) continue;
            T* xrow = dx + (static_cast<size_t>(ci) * H + ih) * W;
            for (int ow = 0; ow < Wo; ++ow) {
              const int iw = ow * stride - padding + kw;
              if (iw >= 0 && iw < W) xrow[iw] += in[oh * Wo + ow];
            }
          }
        }
  }

  std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

}  // namespace swdnet
