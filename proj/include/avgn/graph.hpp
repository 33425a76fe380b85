#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <vector>

#include "avgn/common.hpp"
#include "avgn/tensor.hpp"

// Reverse-mode autodiff on a flat tape. Nodes hold dense tensors; heavy ops
// (matmul, conv) run through Eigen. The tape is rebuilt per step, which keeps
// the graph dynamic and the engine small.

namespace avgn::ad {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
class Graph {
 public:
  using Tens = Tensor<T>;

  struct Node {
    Tens val;
    Tens grad;
    bool needs_grad = false;
    std::function<void(Graph&)> back;
  };

  int leaf(Tens v, bool needs_grad = false) {
    Node n;
    n.val = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Tens& val(int id) const { return nodes_[static_cast<size_t>(id)].val; }
  Tens& grad(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
  size_t size() const { return nodes_.size(); }

  void backward(int root) {
    require(val(root).numel() == 1, "backward: root must be a scalar");
    for (Node& n : nodes_) {
      if (n.needs_grad) {
        n.grad = Tens(n.val.shape);
      } else {
        n.grad = Tens();
      }
    }
    Node& r = nodes_[static_cast<size_t>(root)];
    require(r.needs_grad, "backward: root does not require grad");
    r.grad.fill(T(1));
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.needs_grad && n.back) n.back(*this);
    }
  }

  // ------------------------------------------------------------------ basics

  int add(int a, int b) {
    require(val(a).same_shape(val(b)), "add: shape mismatch");
    Tens out = val(a);
    const Tens& vb = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    return make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
      g.accum_scaled(a, g.grad(self), T(1));
      g.accum_scaled(b, g.grad(self), T(1));
    });
  }

  int sub(int a, int b) {
    require(val(a).same_shape(val(b)), "sub: shape mismatch");
    Tens out = val(a);
    const Tens& vb = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    return make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
      g.accum_scaled(a, g.grad(self), T(1));
      g.accum_scaled(b, g.grad(self), T(-1));
    });
  }

  int mul(int a, int b) {
    require(val(a).same_shape(val(b)), "mul: shape mismatch");
    Tens out = val(a);
    const Tens& vb = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    return make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      if (g.needs_grad(a)) {
        Tens& ga = g.grad(a);
        const Tens& vb2 = g.val(b);
        for (int64_t i = 0; i < gr.numel(); ++i) ga[i] += gr[i] * vb2[i];
      }
      if (g.needs_grad(b)) {
        Tens& gb = g.grad(b);
        const Tens& va = g.val(a);
        for (int64_t i = 0; i < gr.numel(); ++i) gb[i] += gr[i] * va[i];
      }
    });
  }

  int scale(int a, T s) {
    Tens out = val(a);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make(std::move(out), {a}, [a, s](Graph& g, int self) {
      g.accum_scaled(a, g.grad(self), s);
    });
  }

  int relu(int a) {
    Tens out = val(a);
    for (int64_t i = 0; i < out.numel(); ++i)
      if (out[i] < T(0)) out[i] = T(0);
    return make(std::move(out), {a}, [a](Graph& g, int self) {
      Tens& ga = g.grad(a);
      const Tens& va = g.val(a);
      const Tens& gr = g.grad(self);
      for (int64_t i = 0; i < gr.numel(); ++i)
        if (va[i] > T(0)) ga[i] += gr[i];
    });
  }

  int sigmoid(int a) {
    Tens out = val(a);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-out[i]));
    return make(std::move(out), {a}, [a](Graph& g, int self) {
      Tens& ga = g.grad(a);
      const Tens& y = g.val(self);
      const Tens& gr = g.grad(self);
      for (int64_t i = 0; i < gr.numel(); ++i) ga[i] += gr[i] * y[i] * (T(1) - y[i]);
    });
  }

  int reshape(int a, std::vector<int64_t> shape) {
    require(Tens::count(shape) == val(a).numel(), "reshape: element count mismatch");
    Tens out = val(a);
    out.shape = std::move(shape);
    return make(std::move(out), {a}, [a](Graph& g, int self) {
      g.accum_scaled(a, g.grad(self), T(1));  // same flat layout
    });
  }

  int sum_all(int a) {
    T s = T(0);
    for (int64_t i = 0; i < val(a).numel(); ++i) s += val(a)[i];
    Tens out({1});
    out[0] = s;
    return make(std::move(out), {a}, [a](Graph& g, int self) {
      const T gr = g.grad(self)[0];
      Tens& ga = g.grad(a);
      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += gr;
    });
  }

  int mean_all(int a) {
    const int64_t n = val(a).numel();
    return scale(sum_all(a), T(1) / static_cast<T>(n));
  }

  // -------------------------------------------------------------- linear alg

  // 2-D matmul with transpose flags: out = op(a) * op(b)
  int matmul(int a, int b, bool ta = false, bool tb = false) {
    const Tens& A = val(a);
    const Tens& B = val(b);
    require(A.rank() == 2 && B.rank() == 2, "matmul: rank-2 tensors required");
    const int64_t m = ta ? A.dim(1) : A.dim(0);
    const int64_t k = ta ? A.dim(0) : A.dim(1);
    const int64_t kb = tb ? B.dim(1) : B.dim(0);
    const int64_t n = tb ? B.dim(0) : B.dim(1);
    require(k == kb, "matmul: inner dimension mismatch");
    Tens out({m, n});
    gemm(out.ptr(), A.ptr(), A.dim(0), A.dim(1), ta, B.ptr(), B.dim(0), B.dim(1), tb, false);
    return make(std::move(out), {a, b}, [a, b, ta, tb](Graph& g, int self) {
      const Tens& A2 = g.val(a);
      const Tens& B2 = g.val(b);
      const Tens& dC = g.grad(self);
      if (g.needs_grad(a)) {
        // dA: ta ? op: A appears transposed
        if (!ta) {
          // dA = dC * op(B)^T
          gemm(g.grad(a).ptr(), dC.ptr(), dC.dim(0), dC.dim(1), false, B2.ptr(), B2.dim(0),
               B2.dim(1), !tb, true);
        } else {
          // A^T used: dA = op(B) * dC^T
          gemm(g.grad(a).ptr(), B2.ptr(), B2.dim(0), B2.dim(1), tb, dC.ptr(), dC.dim(0), dC.dim(1),
               true, true);
        }
      }
      if (g.needs_grad(b)) {
        if (!tb) {
          // dB = op(A)^T * dC
          gemm(g.grad(b).ptr(), A2.ptr(), A2.dim(0), A2.dim(1), !ta, dC.ptr(), dC.dim(0), dC.dim(1),
               false, true);
        } else {
          // B^T used: dB = dC^T * op(A)
          gemm(g.grad(b).ptr(), dC.ptr(), dC.dim(0), dC.dim(1), true, A2.ptr(), A2.dim(0),
               A2.dim(1), ta, true);
        }
      }
    });
  }

  // batched matmul over the leading dimension: [B,m,k] x [B,k,n]
  int bmm(int a, int b, bool ta = false, bool tb = false) {
    const Tens& A = val(a);
    const Tens& B = val(b);
    require(A.rank() == 3 && B.rank() == 3 && A.dim(0) == B.dim(0), "bmm: bad shapes");
    const int64_t nb = A.dim(0);
    const int64_t m = ta ? A.dim(2) : A.dim(1);
    const int64_t k = ta ? A.dim(1) : A.dim(2);
    const int64_t kb = tb ? B.dim(2) : B.dim(1);
    const int64_t n = tb ? B.dim(1) : B.dim(2);
    require(k == kb, "bmm: inner dimension mismatch");
    Tens out({nb, m, n});
    const int64_t sa = A.dim(1) * A.dim(2), sb = B.dim(1) * B.dim(2), so = m * n;
    for (int64_t i = 0; i < nb; ++i)
      gemm(out.ptr() + i * so, A.ptr() + i * sa, A.dim(1), A.dim(2), ta, B.ptr() + i * sb, B.dim(1),
           B.dim(2), tb, false);
    return make(std::move(out), {a, b}, [a, b, ta, tb, nb, sa, sb, so](Graph& g, int self) {
      const Tens& A2 = g.val(a);
      const Tens& B2 = g.val(b);
      const Tens& dC = g.grad(self);
      for (int64_t i = 0; i < nb; ++i) {
        if (g.needs_grad(a)) {
          if (!ta)
            gemm(g.grad(a).ptr() + i * sa, dC.ptr() + i * so, dC.dim(1), dC.dim(2), false,
                 B2.ptr() + i * sb, B2.dim(1), B2.dim(2), !tb, true);
          else
            gemm(g.grad(a).ptr() + i * sa, B2.ptr() + i * sb, B2.dim(1), B2.dim(2), tb,
                 dC.ptr() + i * so, dC.dim(1), dC.dim(2), true, true);
        }
        if (g.needs_grad(b)) {
          if (!tb)
            gemm(g.grad(b).ptr() + i * sb, A2.ptr() + i * sa, A2.dim(1), A2.dim(2), !ta,
                 dC.ptr() + i * so, dC.dim(1), dC.dim(2), false, true);
          else
            gemm(g.grad(b).ptr() + i * sb, dC.ptr() + i * so, dC.dim(1), dC.dim(2), true,
                 A2.ptr() + i * sa, A2.dim(1), A2.dim(2), ta, true);
        }
      }
    });
  }

  // y = x W^T + bias; x [N,Din], w [Dout,Din], bias [Dout]
  int linear(int x, int w, int bias) {
    const Tens& X = val(x);
    const Tens& W = val(w);
    const Tens& Bv = val(bias);
    require(X.rank() == 2 && W.rank() == 2 && Bv.rank() == 1, "linear: bad ranks");
    require(X.dim(1) == W.dim(1) && Bv.dim(0) == W.dim(0), "linear: shape mismatch");
    const int64_t n = X.dim(0), dout = W.dim(0);
    Tens out({n, dout});
    gemm(out.ptr(), X.ptr(), X.dim(0), X.dim(1), false, W.ptr(), W.dim(0), W.dim(1), true, false);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < dout; ++j) out.at(i, j) += Bv[j];
    return make(std::move(out), {x, w, bias}, [x, w, bias](Graph& g, int self) {
      const Tens& dY = g.grad(self);
      const Tens& X2 = g.val(x);
      const Tens& W2 = g.val(w);
      if (g.needs_grad(x))
        gemm(g.grad(x).ptr(), dY.ptr(), dY.dim(0), dY.dim(1), false, W2.ptr(), W2.dim(0), W2.dim(1),
             false, true);
      if (g.needs_grad(w))
        gemm(g.grad(w).ptr(), dY.ptr(), dY.dim(0), dY.dim(1), true, X2.ptr(), X2.dim(0), X2.dim(1),
             false, true);
      if (g.needs_grad(bias)) {
        Tens& db = g.grad(bias);
        for (int64_t i = 0; i < dY.dim(0); ++i)
          for (int64_t j = 0; j < dY.dim(1); ++j) db[j] += dY.at(i, j);
      }
    });
  }

  // --------------------------------------------------------------- softmaxes

  // softmax over the last axis of a rank-2 or rank-3 tensor
  int softmax_last(int a) {
    const Tens& A = val(a);
    require(A.rank() >= 2, "softmax_last: rank >= 2 required");
    const int64_t cols = A.shape.back();
    const int64_t rows = A.numel() / cols;
    Tens out = A;
    for (int64_t r = 0; r < rows; ++r) {
      T* p = out.ptr() + r * cols;
      T mx = p[0];
      for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, p[j]);
      T sum = T(0);
      for (int64_t j = 0; j < cols; ++j) {
        p[j] = std::exp(p[j] - mx);
        sum += p[j];
      }
      for (int64_t j = 0; j < cols; ++j) p[j] /= sum;
    }
    return make(std::move(out), {a}, [a, rows, cols](Graph& g, int self) {
      const Tens& y = g.val(self);
      const Tens& dy = g.grad(self);
      Tens& dx = g.grad(a);
      for (int64_t r = 0; r < rows; ++r) {
        const T* yp = y.ptr() + r * cols;
        const T* dyp = dy.ptr() + r * cols;
        T dot = T(0);
        for (int64_t j = 0; j < cols; ++j) dot += yp[j] * dyp[j];
        T* dxp = dx.ptr() + r * cols;
        for (int64_t j = 0; j < cols; ++j) dxp[j] += yp[j] * (dyp[j] - dot);
      }
    });
  }

  // log(sum(exp(row))) for each row of [R,C] -> [R]
  int logsumexp_rows(int a) {
    const Tens& A = val(a);
    require(A.rank() == 2, "logsumexp_rows: rank-2 required");
    const int64_t rows = A.dim(0), cols = A.dim(1);
    Tens out({rows});
    for (int64_t r = 0; r < rows; ++r) {
      const T* p = A.ptr() + r * cols;
      T mx = p[0];
      for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, p[j]);
      T sum = T(0);
      for (int64_t j = 0; j < cols; ++j) sum += std::exp(p[j] - mx);
      out[r] = mx + std::log(sum);
    }
    return make(std::move(out), {a}, [a, rows, cols](Graph& g, int self) {
      const Tens& A2 = g.val(a);
      const Tens& l = g.val(self);
      const Tens& dl = g.grad(self);
      Tens& dx = g.grad(a);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < cols; ++j)
          dx.at(r, j) += dl[r] * std::exp(A2.at(r, j) - l[r]);
    });
  }

  // Straight-through hard softmax: forward emits one-hot argmax rows of
  // softmax((logits + noise)/temp); backward uses the soft distribution.
  int hard_softmax_st(int logits, const Tens& noise, T temp) {
    const Tens& L = val(logits);
    require(L.same_shape(noise), "hard_softmax_st: noise shape mismatch");
    const int64_t cols = L.shape.back();
    const int64_t rows = L.numel() / cols;
    auto soft = std::make_shared<Tens>(L.shape);
    Tens out(L.shape);
    for (int64_t r = 0; r < rows; ++r) {
      const T* p = L.ptr() + r * cols;
      const T* np = noise.ptr() + r * cols;
      T* sp = soft->ptr() + r * cols;
      T mx = -std::numeric_limits<T>::infinity();
      int64_t arg = 0;
      for (int64_t j = 0; j < cols; ++j) {
        sp[j] = (p[j] + np[j]) / temp;
        if (sp[j] > mx) {
          mx = sp[j];
          arg = j;
        }
      }
      T sum = T(0);
      for (int64_t j = 0; j < cols; ++j) {
        sp[j] = std::exp(sp[j] - mx);
        sum += sp[j];
      }
      for (int64_t j = 0; j < cols; ++j) sp[j] /= sum;
      out.ptr()[r * cols + arg] = T(1);
    }
    return make(std::move(out), {logits}, [logits, soft, temp, rows, cols](Graph& g, int self) {
      const Tens& dy = g.grad(self);
      Tens& dx = g.grad(logits);
      for (int64_t r = 0; r < rows; ++r) {
        const T* yp = soft->ptr() + r * cols;
        const T* dyp = dy.ptr() + r * cols;
        T dot = T(0);
        for (int64_t j = 0; j < cols; ++j) dot += yp[j] * dyp[j];
        T* dxp = dx.ptr() + r * cols;
        for (int64_t j = 0; j < cols; ++j) dxp[j] += yp[j] * (dyp[j] - dot) / temp;
      }
    });
  }

  // ------------------------------------------------------------ row plumbing

  // [M1,D] + [M2,D] -> [M1+M2,D]
  int concat_rows(int a, int b) {
    const Tens& A = val(a);
    const Tens& B = val(b);
    require(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(1), "concat_rows: shape mismatch");
    Tens out({A.dim(0) + B.dim(0), A.dim(1)});
    std::copy(A.data.begin(), A.data.end(), out.data.begin());
    std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.numel());
    return make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      const int64_t na = g.val(a).numel();
      if (g.needs_grad(a)) {
        Tens& ga = g.grad(a);
        for (int64_t i = 0; i < na; ++i) ga[i] += gr[i];
      }
      if (g.needs_grad(b)) {
        Tens& gb = g.grad(b);
        for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += gr[na + i];
      }
    });
  }

  // [B,M,D] with shared [C,D] appended to every batch item -> [B,M+C,D]
  int append_rows_shared(int x, int t) {
    const Tens& X = val(x);
    const Tens& Tt = val(t);
    require(X.rank() == 3 && Tt.rank() == 2 && X.dim(2) == Tt.dim(1),
            "append_rows_shared: shape mismatch");
    const int64_t nb = X.dim(0), m = X.dim(1), c = Tt.dim(0), d = X.dim(2);
    Tens out({nb, m + c, d});
    for (int64_t b = 0; b < nb; ++b) {
      std::copy(X.ptr() + b * m * d, X.ptr() + (b + 1) * m * d, out.ptr() + b * (m + c) * d);
      std::copy(Tt.ptr(), Tt.ptr() + c * d, out.ptr() + b * (m + c) * d + m * d);
    }
    return make(std::move(out), {x, t}, [x, t, nb, m, c, d](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      for (int64_t b = 0; b < nb; ++b) {
        if (g.needs_grad(x)) {
          Tens& gx = g.grad(x);
          const T* src = gr.ptr() + b * (m + c) * d;
          T* dst = gx.ptr() + b * m * d;
          for (int64_t i = 0; i < m * d; ++i) dst[i] += src[i];
        }
        if (g.needs_grad(t)) {
          Tens& gt = g.grad(t);
          const T* src = gr.ptr() + b * (m + c) * d + m * d;
          for (int64_t i = 0; i < c * d; ++i) gt[i] += src[i];
        }
      }
    });
  }

  // [B,M,D] -> [B,hi-lo,D]
  int slice_rows3(int x, int64_t lo, int64_t hi) {
    const Tens& X = val(x);
    require(X.rank() == 3 && 0 <= lo && lo < hi && hi <= X.dim(1), "slice_rows3: bad range");
    const int64_t nb = X.dim(0), m = X.dim(1), d = X.dim(2), k = hi - lo;
    Tens out({nb, k, d});
    for (int64_t b = 0; b < nb; ++b)
      std::copy(X.ptr() + (b * m + lo) * d, X.ptr() + (b * m + hi) * d, out.ptr() + b * k * d);
    return make(std::move(out), {x}, [x, nb, m, d, lo, k](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      Tens& gx = g.grad(x);
      for (int64_t b = 0; b < nb; ++b) {
        const T* src = gr.ptr() + b * k * d;
        T* dst = gx.ptr() + (b * m + lo) * d;
        for (int64_t i = 0; i < k * d; ++i) dst[i] += src[i];
      }
    });
  }

  // [M,D] -> [hi-lo,D]
  int slice_rows2(int x, int64_t lo, int64_t hi) {
    const Tens& X = val(x);
    require(X.rank() == 2 && 0 <= lo && lo < hi && hi <= X.dim(0), "slice_rows2: bad range");
    const int64_t d = X.dim(1), k = hi - lo;
    Tens out({k, d});
    std::copy(X.ptr() + lo * d, X.ptr() + hi * d, out.ptr());
    return make(std::move(out), {x}, [x, lo, k, d](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      Tens& gx = g.grad(x);
      T* dst = gx.ptr() + lo * d;
      for (int64_t i = 0; i < k * d; ++i) dst[i] += gr[i];
    });
  }

  // [B,M,D] -> [M,D] for one batch item
  int batch_of(int x, int64_t b) {
    const Tens& X = val(x);
    require(X.rank() == 3 && 0 <= b && b < X.dim(0), "batch_of: bad index");
    const int64_t m = X.dim(1), d = X.dim(2);
    Tens out({m, d});
    std::copy(X.ptr() + b * m * d, X.ptr() + (b + 1) * m * d, out.ptr());
    return make(std::move(out), {x}, [x, b, m, d](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      Tens& gx = g.grad(x);
      T* dst = gx.ptr() + b * m * d;
      for (int64_t i = 0; i < m * d; ++i) dst[i] += gr[i];
    });
  }

  // [N,D] -> one row as [1,D]
  int row_of(int x, int64_t r) {
    const Tens& X = val(x);
    require(X.rank() == 2 && 0 <= r && r < X.dim(0), "row_of: bad index");
    const int64_t d = X.dim(1);
    Tens out({1, d});
    std::copy(X.ptr() + r * d, X.ptr() + (r + 1) * d, out.ptr());
    return make(std::move(out), {x}, [x, r, d](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      Tens& gx = g.grad(x);
      T* dst = gx.ptr() + r * d;
      for (int64_t i = 0; i < d; ++i) dst[i] += gr[i];
    });
  }

  // [P,D] * row-broadcast [1,D] (Hadamard against every row)
  int mul_rowvec(int x, int v) {
    const Tens& X = val(x);
    const Tens& V = val(v);
    require(X.rank() == 2 && V.numel() == X.dim(1), "mul_rowvec: shape mismatch");
    const int64_t p = X.dim(0), d = X.dim(1);
    Tens out = X;
    for (int64_t i = 0; i < p; ++i)
      for (int64_t j = 0; j < d; ++j) out.at(i, j) *= V[j];
    return make(std::move(out), {x, v}, [x, v, p, d](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      const Tens& X2 = g.val(x);
      const Tens& V2 = g.val(v);
      if (g.needs_grad(x)) {
        Tens& gx = g.grad(x);
        for (int64_t i = 0; i < p; ++i)
          for (int64_t j = 0; j < d; ++j) gx.at(i, j) += gr.at(i, j) * V2[j];
      }
      if (g.needs_grad(v)) {
        Tens& gv = g.grad(v);
        for (int64_t i = 0; i < p; ++i)
          for (int64_t j = 0; j < d; ++j) gv[j] += gr.at(i, j) * X2.at(i, j);
      }
    });
  }

  // column sums of [M,C] -> [C]
  int colsum(int x) {
    const Tens& X = val(x);
    require(X.rank() == 2, "colsum: rank-2 required");
    const int64_t m = X.dim(0), c = X.dim(1);
    Tens out({c});
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < c; ++j) out[j] += X.at(i, j);
    return make(std::move(out), {x}, [x, m, c](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      Tens& gx = g.grad(x);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < c; ++j) gx.at(i, j) += gr[j];
    });
  }

  // y[i,:] = x[i,:] / max(den[i], floor); zero-denominator guard for hard
  // assignments that empty a category
  int div_colvec_guarded(int x, int den, T floor_) {
    const Tens& X = val(x);
    const Tens& Dn = val(den);
    require(X.rank() == 2 && Dn.numel() == X.dim(0), "div_colvec_guarded: shape mismatch");
    const int64_t m = X.dim(0), d = X.dim(1);
    Tens out = X;
    for (int64_t i = 0; i < m; ++i) {
      const T dv = std::max(Dn[i], floor_);
      for (int64_t j = 0; j < d; ++j) out.at(i, j) /= dv;
    }
    return make(std::move(out), {x, den}, [x, den, floor_, m, d](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      const Tens& X2 = g.val(x);
      const Tens& Dn2 = g.val(den);
      for (int64_t i = 0; i < m; ++i) {
        const T dv = std::max(Dn2[i], floor_);
        if (g.needs_grad(x)) {
          Tens& gx = g.grad(x);
          for (int64_t j = 0; j < d; ++j) gx.at(i, j) += gr.at(i, j) / dv;
        }
        if (g.needs_grad(den) && Dn2[i] > floor_) {
          Tens& gd = g.grad(den);
          T acc = T(0);
          for (int64_t j = 0; j < d; ++j) acc += gr.at(i, j) * X2.at(i, j);
          gd[i] -= acc / (dv * dv);
        }
      }
    });
  }

  // diag of a square [B,B] -> [B]
  int gather_diag(int x) {
    const Tens& X = val(x);
    require(X.rank() == 2 && X.dim(0) == X.dim(1), "gather_diag: square matrix required");
    const int64_t n = X.dim(0);
    Tens out({n});
    for (int64_t i = 0; i < n; ++i) out[i] = X.at(i, i);
    return make(std::move(out), {x}, [x, n](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      Tens& gx = g.grad(x);
      for (int64_t i = 0; i < n; ++i) gx.at(i, i) += gr[i];
    });
  }

  // stack scalar nodes into [K]
  int stack_scalars(const std::vector<int>& ids) {
    require(!ids.empty(), "stack_scalars: empty list");
    Tens out({static_cast<int64_t>(ids.size())});
    bool ng = false;
    for (size_t k = 0; k < ids.size(); ++k) {
      require(val(ids[k]).numel() == 1, "stack_scalars: non-scalar input");
      out[static_cast<int64_t>(k)] = val(ids[k])[0];
      ng = ng || needs_grad(ids[k]);
    }
    Node n;
    n.val = std::move(out);
    n.needs_grad = ng;
    nodes_.push_back(std::move(n));
    const int self = static_cast<int>(nodes_.size()) - 1;
    if (ng) {
      nodes_.back().back = [ids, self](Graph& g) {
        const Tens& gr = g.grad(self);
        for (size_t k = 0; k < ids.size(); ++k)
          if (g.needs_grad(ids[k])) g.grad(ids[k])[0] += gr[static_cast<int64_t>(k)];
      };
    }
    return self;
  }

  // rows of [C,D] gathered per index -> [N,D]
  int gather_rows(int x, std::vector<int64_t> idx) {
    const Tens& X = val(x);
    require(X.rank() == 2, "gather_rows: rank-2 required");
    const int64_t d = X.dim(1);
    Tens out({static_cast<int64_t>(idx.size()), d});
    for (size_t n = 0; n < idx.size(); ++n) {
      require(0 <= idx[n] && idx[n] < X.dim(0), "gather_rows: index out of range");
      std::copy(X.ptr() + idx[n] * d, X.ptr() + (idx[n] + 1) * d,
                out.ptr() + static_cast<int64_t>(n) * d);
    }
    return make(std::move(out), {x}, [x, idx, d](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      Tens& gx = g.grad(x);
      for (size_t n = 0; n < idx.size(); ++n) {
        const T* src = gr.ptr() + static_cast<int64_t>(n) * d;
        T* dst = gx.ptr() + idx[n] * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }

  // --------------------------------------------------------- fused similarity

  // max over rows p of cosine(a, V_p); a is [D] or [1,D], V is [P,D].
  // Norms are floored at 1e-12 (dead-feature guard).
  int maxcos(int a, int v) {
    const Tens& A = val(a);
    const Tens& V = val(v);
    require(V.rank() == 2 && A.numel() == V.dim(1), "maxcos: shape mismatch");
    const int64_t p = V.dim(0), d = V.dim(1);
    const T eps = T(1e-12);
    T na = T(0);
    for (int64_t j = 0; j < d; ++j) na += A[j] * A[j];
    na = std::sqrt(na);
    const T gna = std::max(na, eps);
    T best = -std::numeric_limits<T>::infinity();
    int64_t best_p = 0;
    for (int64_t i = 0; i < p; ++i) {
      T nv = T(0), dot = T(0);
      for (int64_t j = 0; j < d; ++j) {
        nv += V.at(i, j) * V.at(i, j);
        dot += A[j] * V.at(i, j);
      }
      nv = std::sqrt(nv);
      const T c = dot / (gna * std::max(nv, eps));
      if (c > best) {
        best = c;
        best_p = i;
      }
    }
    Tens out({1});
    out[0] = best;
    return make(std::move(out), {a, v}, [a, v, best_p, d](Graph& g, int self) {
      const T eps2 = T(1e-12);
      const T go = g.grad(self)[0];
      const Tens& A2 = g.val(a);
      const Tens& V2 = g.val(v);
      const T c = g.val(self)[0];
      T na2 = T(0), nv2 = T(0);
      for (int64_t j = 0; j < d; ++j) {
        na2 += A2[j] * A2[j];
        nv2 += V2.at(best_p, j) * V2.at(best_p, j);
      }
      const T na = std::sqrt(na2), nv = std::sqrt(nv2);
      const T gna = std::max(na, eps2), gnv = std::max(nv, eps2);
      if (g.needs_grad(a)) {
        Tens& ga = g.grad(a);
        for (int64_t j = 0; j < d; ++j) {
          T t = V2.at(best_p, j) / (gna * gnv);
          if (na > eps2) t -= c * A2[j] / (na * gna);
          ga[j] += go * t;
        }
      }
      if (g.needs_grad(v)) {
        Tens& gv = g.grad(v);
        for (int64_t j = 0; j < d; ++j) {
          T t = A2[j] / (gna * gnv);
          if (nv > eps2) t -= c * V2.at(best_p, j) / (nv * gnv);
          gv.at(best_p, j) += go * t;
        }
      }
    });
  }

  // ------------------------------------------------------------- loss pieces

  // -sum_i log(max(p[i,i], floor)) over a square probability matrix
  int ce_identity_rows(int probs, T floor_) {
    const Tens& P = val(probs);
    require(P.rank() == 2 && P.dim(0) == P.dim(1), "ce_identity_rows: square matrix required");
    const int64_t c = P.dim(0);
    T loss = T(0);
    for (int64_t i = 0; i < c; ++i) loss -= std::log(std::max(P.at(i, i), floor_));
    Tens out({1});
    out[0] = loss;
    return make(std::move(out), {probs}, [probs, floor_, c](Graph& g, int self) {
      const T go = g.grad(self)[0];
      const Tens& P2 = g.val(probs);
      Tens& gp = g.grad(probs);
      for (int64_t i = 0; i < c; ++i)
        if (P2.at(i, i) > floor_) gp.at(i, i) -= go / P2.at(i, i);
    });
  }

  // sum of binary cross-entropies against constant targets; probabilities are
  // clamped to [clamp, 1-clamp] before the logs
  int bce_sum(int probs, const Tens& targets, T clamp) {
    const Tens& P = val(probs);
    require(P.numel() == targets.numel(), "bce_sum: target shape mismatch");
    auto tgt = std::make_shared<Tens>(targets);
    T loss = T(0);
    for (int64_t i = 0; i < P.numel(); ++i) {
      const T pc = std::min(std::max(P[i], clamp), T(1) - clamp);
      loss -= targets[i] * std::log(pc) + (T(1) - targets[i]) * std::log(T(1) - pc);
    }
    Tens out({1});
    out[0] = loss;
    return make(std::move(out), {probs}, [probs, tgt, clamp](Graph& g, int self) {
      const T go = g.grad(self)[0];
      const Tens& P2 = g.val(probs);
      Tens& gp = g.grad(probs);
      for (int64_t i = 0; i < P2.numel(); ++i) {
        if (P2[i] <= clamp || P2[i] >= T(1) - clamp) continue;
        gp[i] += go * (-(*tgt)[i] / P2[i] + (T(1) - (*tgt)[i]) / (T(1) - P2[i]));
      }
    });
  }

  // ------------------------------------------------------------- convolution

  // x [B,Cin,H,W], w [Cout,Cin,KH,KW], bias [Cout]
  int conv2d(int x, int w, int bias, int stride, int pad) {
    const Tens& X = val(x);
    const Tens& W = val(w);
    const Tens& Bv = val(bias);
    require(X.rank() == 4 && W.rank() == 4 && Bv.rank() == 1, "conv2d: bad ranks");
    require(X.dim(1) == W.dim(1) && Bv.dim(0) == W.dim(0), "conv2d: channel mismatch");
    const int64_t nb = X.dim(0), cin = X.dim(1), h = X.dim(2), wd = X.dim(3);
    const int64_t cout = W.dim(0), kh = W.dim(2), kw = W.dim(3);
    const int64_t oh = (h + 2 * pad - kh) / stride + 1;
    const int64_t ow = (wd + 2 * pad - kw) / stride + 1;
    require(oh >= 1 && ow >= 1, "conv2d: output would be empty");

    const int64_t krows = cin * kh * kw;
    auto cols = std::make_shared<std::vector<Tens>>();
    cols->reserve(static_cast<size_t>(nb));
    Tens out({nb, cout, oh, ow});
    for (int64_t b = 0; b < nb; ++b) {
      Tens col({krows, oh * ow});
      im2col(X.ptr() + b * cin * h * wd, cin, h, wd, kh, kw, stride, pad, oh, ow, col.ptr());
      gemm(out.ptr() + b * cout * oh * ow, W.ptr(), cout, krows, false, col.ptr(), krows, oh * ow,
           false, false);
      T* op = out.ptr() + b * cout * oh * ow;
      for (int64_t co = 0; co < cout; ++co)
        for (int64_t i = 0; i < oh * ow; ++i) op[co * oh * ow + i] += Bv[co];
      cols->push_back(std::move(col));
    }
    return make(std::move(out), {x, w, bias},
                [x, w, bias, cols, nb, cin, h, wd, cout, kh, kw, oh, ow, stride, pad, krows](
                    Graph& g, int self) {
                  const Tens& dY = g.grad(self);
                  const Tens& W2 = g.val(w);
                  for (int64_t b = 0; b < nb; ++b) {
                    const T* dyb = dY.ptr() + b * cout * oh * ow;
                    if (g.needs_grad(w))
                      gemm(g.grad(w).ptr(), dyb, cout, oh * ow, false,
                           (*cols)[static_cast<size_t>(b)].ptr(), krows, oh * ow, true, true);
                    if (g.needs_grad(bias)) {
                      Tens& db = g.grad(bias);
                      for (int64_t co = 0; co < cout; ++co) {
                        T acc = T(0);
                        for (int64_t i = 0; i < oh * ow; ++i) acc += dyb[co * oh * ow + i];
                        db[co] += acc;
                      }
                    }
                    if (g.needs_grad(x)) {
                      Tens dcol({krows, oh * ow});
                      gemm(dcol.ptr(), W2.ptr(), cout, krows, true, dyb, cout, oh * ow, false,
                           false);
                      col2im(dcol.ptr(), cin, h, wd, kh, kw, stride, pad, oh, ow,
                             g.grad(x).ptr() + b * cin * h * wd);
                    }
                  }
                });
  }

  // global average pool: [B,C,H,W] -> [B,C]
  int gap2d(int x) {
    const Tens& X = val(x);
    require(X.rank() == 4, "gap2d: rank-4 required");
    const int64_t nb = X.dim(0), c = X.dim(1), hw = X.dim(2) * X.dim(3);
    Tens out({nb, c});
    for (int64_t b = 0; b < nb; ++b)
      for (int64_t i = 0; i < c; ++i) {
        const T* p = X.ptr() + (b * c + i) * hw;
        T acc = T(0);
        for (int64_t k = 0; k < hw; ++k) acc += p[k];
        out.at(b, i) = acc / static_cast<T>(hw);
      }
    return make(std::move(out), {x}, [x, nb, c, hw](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      Tens& gx = g.grad(x);
      for (int64_t b = 0; b < nb; ++b)
        for (int64_t i = 0; i < c; ++i) {
          const T v = gr.at(b, i) / static_cast<T>(hw);
          T* p = gx.ptr() + (b * c + i) * hw;
          for (int64_t k = 0; k < hw; ++k) p[k] += v;
        }
    });
  }

  // [B,C,H,W] -> [B,H*W,C] (row-major spatial order: p = h*W + w)
  int chw_to_rows(int x) {
    const Tens& X = val(x);
    require(X.rank() == 4, "chw_to_rows: rank-4 required");
    const int64_t nb = X.dim(0), c = X.dim(1), hw = X.dim(2) * X.dim(3);
    Tens out({nb, hw, c});
    for (int64_t b = 0; b < nb; ++b)
      for (int64_t i = 0; i < c; ++i)
        for (int64_t k = 0; k < hw; ++k) out.at(b, k, i) = X[(b * c + i) * hw + k];
    return make(std::move(out), {x}, [x, nb, c, hw](Graph& g, int self) {
      const Tens& gr = g.grad(self);
      Tens& gx = g.grad(x);
      for (int64_t b = 0; b < nb; ++b)
        for (int64_t i = 0; i < c; ++i)
          for (int64_t k = 0; k < hw; ++k) gx[(b * c + i) * hw + k] += gr.at(b, k, i);
    });
  }

 private:
  std::vector<Node> nodes_;

  int make(Tens val, std::initializer_list<int> parents, std::function<void(Graph&, int)> back) {
    Node n;
    n.val = std::move(val);
    for (int p : parents) n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(p)].needs_grad;
    nodes_.push_back(std::move(n));
    const int self = static_cast<int>(nodes_.size()) - 1;
    if (nodes_.back().needs_grad)
      nodes_.back().back = [back, self](Graph& g) { back(g, self); };
    return self;
  }

  void accum_scaled(int id, const Tens& g, T s) {
    if (!needs_grad(id)) return;
    Tens& dst = grad(id);
    for (int64_t i = 0; i < g.numel(); ++i) dst[i] += s * g[i];
  }

  // C (+)= op(A) * op(B) with raw row-major buffers
  static void gemm(T* cptr, const T* aptr, int64_t ar, int64_t ac, bool ta, const T* bptr,
                   int64_t br, int64_t bc, bool tb, bool accumulate) {
    ECMap<T> A(aptr, ar, ac);
    ECMap<T> B(bptr, br, bc);
    const int64_t m = ta ? ac : ar;
    const int64_t n = tb ? br : bc;
    EMap<T> C(cptr, m, n);
    if (!ta && !tb) {
      if (accumulate) C.noalias() += A * B; else C.noalias() = A * B;
    } else if (ta && !tb) {
      if (accumulate) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
    } else if (!ta && tb) {
      if (accumulate) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
    } else {
      if (accumulate) C.noalias() += A.transpose() * B.transpose();
      else C.noalias() = A.transpose() * B.transpose();
    }
  }

  static void im2col(const T* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
                     int64_t stride, int64_t pad, int64_t oh, int64_t ow, T* col) {
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t ky = 0; ky < kh; ++ky)
        for (int64_t kx = 0; kx < kw; ++kx) {
          T* dst = col + ((ci * kh + ky) * kw + kx) * oh * ow;
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) {
              for (int64_t ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = T(0);
              continue;
            }
            const T* src = x + (ci * h + iy) * w;
            for (int64_t ox = 0; ox < ow; ++ox) {
              const int64_t ix = ox * stride + kx - pad;
              dst[oy * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
            }
          }
        }
  }

  static void col2im(const T* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
                     int64_t stride, int64_t pad, int64_t oh, int64_t ow, T* x) {
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t ky = 0; ky < kh; ++ky)
        for (int64_t kx = 0; kx < kw; ++kx) {
          const T* src = col + ((ci * kh + ky) * kw + kx) * oh * ow;
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            T* dst = x + (ci * h + iy) * w;
            for (int64_t ox = 0; ox < ow; ++ox) {
              const int64_t ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < w) dst[ix] += src[oy * ow + ox];
            }
          }
        }
  }
};

}  // namespace avgn::ad
