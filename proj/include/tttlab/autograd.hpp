#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tttlab/tensor.hpp"

namespace tttlab {

// Reverse-mode differentiation over a dynamically recorded computation.
// A Tape owns the nodes of one forward pass; backward() runs the reverse
// sweep in node-creation order (append-only, so descending ids are a valid
// reverse topological order). One tape per loss evaluation; tapes are
// independent, which is what makes episode- and batch-level parallelism safe.
template <typename T>
class Tape {
public:
    struct Node {
        Tensor<T> value;                 // owned value (empty when external)
        const Tensor<T>* external = nullptr;  // leased parameter storage
        Tensor<T> grad;
        bool requires_grad = false;
        bool has_grad = false;
        std::vector<int> parents;
        std::function<void(Tape&, int)> backward;  // null for leaves
    };

    const Tensor<T>& value(int id) const {
        const Node& n = nodes_[id];
        return n.external ? *n.external : n.value;
    }

    const Tensor<T>& grad(int id) const {
        const Node& n = nodes_[id];
        if (!n.has_grad) {
            zero_like_ = Tensor<T>(value(id).shape);
            return zero_like_;
        }
        return n.grad;
    }

    size_t size() const { return nodes_.size(); }

    // Leased parameter leaf; the caller keeps `p` alive for the tape's
    // lifetime. Gradients for unreachable parameters read back as zeros.
    int param(const Tensor<T>* p) {
        Node n;
        n.external = p;
        n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int constant(Tensor<T> v) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = false;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int make(Tensor<T> v, std::vector<int> parents, std::function<void(Tape&, int)> back,
             const char* checked_name) {
        if (checked_name) v.require_finite(checked_name);
        Node n;
        n.value = std::move(v);
        n.parents = std::move(parents);
        n.backward = std::move(back);
        for (int p : n.parents)
            if (nodes_[p].requires_grad) n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    void accum(int id, const Tensor<T>& g) {
        Node& n = nodes_[id];
        if (!n.requires_grad) return;
        if (!n.has_grad) {
            n.grad = g;
            n.has_grad = true;
        } else {
            T* d = n.grad.data.data();
            const T* s = g.data.data();
            for (size_t i = 0; i < n.grad.data.size(); ++i) d[i] += s[i];
        }
    }

    // Reverse sweep from a scalar loss node.
    void backward(int loss) {
        const Tensor<T>& lv = value(loss);
        if (lv.numel() != 1) throw ShapeError("backward: loss is not a scalar");
        lv.require_finite("loss");

        std::vector<char> reach(nodes_.size(), 0);
        std::vector<int> stack{loss};
        reach[loss] = 1;
        while (!stack.empty()) {
            int id = stack.back();
            stack.pop_back();
            for (int p : nodes_[id].parents) {
                if (!reach[p] && nodes_[p].requires_grad) {
                    reach[p] = 1;
                    stack.push_back(p);
                }
            }
        }

        accum(loss, Tensor<T>::full(lv.shape, T(1)));
        for (int id = loss; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!reach[id] || !n.backward || !n.has_grad) continue;
            n.grad.require_finite("gradient during backward sweep");
            n.backward(*this, id);
        }
    }

private:
    std::vector<Node> nodes_;
    mutable Tensor<T> zero_like_;
};

// ---------------------------------------------------------------------------
// Operations. Arithmetic ops validate their outputs for finiteness; pure
// data movement (gather/slice/concat/transpose/tile) does not.
// ---------------------------------------------------------------------------

template <typename T>
int op_add(Tape<T>& t, int a, int b) {
    const Tensor<T>&A = t.value(a), &B = t.value(b);
    if (!A.same_shape(B)) throw ShapeError("add: shape mismatch");
    Tensor<T> out(A.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] + B.data[i];
    return t.make(std::move(out), {a, b},
                  [a, b](Tape<T>& tp, int self) {
                      tp.accum(a, tp.grad(self));
                      tp.accum(b, tp.grad(self));
                  },
                  "add");
}

template <typename T>
int op_sub(Tape<T>& t, int a, int b) {
    const Tensor<T>&A = t.value(a), &B = t.value(b);
    if (!A.same_shape(B)) throw ShapeError("sub: shape mismatch");
    Tensor<T> out(A.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] - B.data[i];
    return t.make(std::move(out), {a, b},
                  [a, b](Tape<T>& tp, int self) {
                      tp.accum(a, tp.grad(self));
                      Tensor<T> gb(tp.value(b).shape);
                      const Tensor<T>& g = tp.grad(self);
                      for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] = -g.data[i];
                      tp.accum(b, gb);
                  },
                  "sub");
}

template <typename T>
int op_mul(Tape<T>& t, int a, int b) {
    const Tensor<T>&A = t.value(a), &B = t.value(b);
    if (!A.same_shape(B)) throw ShapeError("mul: shape mismatch");
    Tensor<T> out(A.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] * B.data[i];
    return t.make(std::move(out), {a, b},
                  [a, b](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      const Tensor<T>&A2 = tp.value(a), &B2 = tp.value(b);
                      Tensor<T> ga(A2.shape), gb(B2.shape);
                      for (size_t i = 0; i < g.data.size(); ++i) {
                          ga.data[i] = g.data[i] * B2.data[i];
                          gb.data[i] = g.data[i] * A2.data[i];
                      }
                      tp.accum(a, ga);
                      tp.accum(b, gb);
                  },
                  "mul");
}

template <typename T>
int op_scale(Tape<T>& t, int a, T c) {
    const Tensor<T>& A = t.value(a);
    Tensor<T> out(A.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] * c;
    return t.make(std::move(out), {a},
                  [a, c](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      Tensor<T> ga(g.shape);
                      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] = g.data[i] * c;
                      tp.accum(a, ga);
                  },
                  "scale");
}

// x[m,n] + row vector b[n], broadcast over rows.
template <typename T>
int op_add_rowvec(Tape<T>& t, int x, int b) {
    const Tensor<T>&X = t.value(x), &B = t.value(b);
    if (X.rank() != 2 || B.numel() != X.shape[1]) throw ShapeError("add_rowvec: shape mismatch");
    Tensor<T> out(X.shape);
    const int m = X.shape[0], n = X.shape[1];
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data[size_t(i) * n + j] = X.data[size_t(i) * n + j] + B.data[j];
    return t.make(std::move(out), {x, b},
                  [x, b, m, n](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      tp.accum(x, g);
                      Tensor<T> gb(tp.value(b).shape);
                      for (int i = 0; i < m; ++i)
                          for (int j = 0; j < n; ++j) gb.data[j] += g.data[size_t(i) * n + j];
                      tp.accum(b, gb);
                  },
                  "add_rowvec");
}

template <typename T>
int op_matmul(Tape<T>& t, int a, int b) {
    Tensor<T> out = matmul_val(t.value(a), t.value(b));
    return t.make(std::move(out), {a, b},
                  [a, b](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      const Tensor<T>&A2 = tp.value(a), &B2 = tp.value(b);
                      // dA = g * B^T, dB = A^T * g
                      Tensor<T> bt = transpose_val(B2);
                      Tensor<T> ga({A2.shape[0], A2.shape[1]});
                      mm_nn_acc(g.data.data(), bt.data.data(), ga.data.data(), g.shape[0],
                                g.shape[1], bt.shape[1]);
                      tp.accum(a, ga);
                      Tensor<T> gb({B2.shape[0], B2.shape[1]});
                      mm_tn_acc(A2.data.data(), g.data.data(), gb.data.data(), A2.shape[1],
                                A2.shape[0], g.shape[1]);
                      tp.accum(b, gb);
                  },
                  "matmul");
}

template <typename T>
int op_transpose(Tape<T>& t, int a) {
    return t.make(transpose_val(t.value(a)), {a},
                  [a](Tape<T>& tp, int self) { tp.accum(a, transpose_val(tp.grad(self))); },
                  nullptr);
}

template <typename T>
int op_gather_rows(Tape<T>& t, int x, std::vector<int> idx) {
    const Tensor<T>& X = t.value(x);
    if (X.rank() != 2) throw ShapeError("gather_rows: not 2-d");
    const int n = X.shape[1];
    for (int i : idx)
        if (i < 0 || i >= X.shape[0]) throw ShapeError("gather_rows: index out of range");
    Tensor<T> out({static_cast<int>(idx.size()), n});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy_n(&X.data[size_t(idx[r]) * n], n, &out.data[r * n]);
    return t.make(std::move(out), {x},
                  [x, idx, n](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      Tensor<T> gx(tp.value(x).shape);
                      for (size_t r = 0; r < idx.size(); ++r)
                          for (int j = 0; j < n; ++j)
                              gx.data[size_t(idx[r]) * n + j] += g.data[r * n + j];
                      tp.accum(x, gx);
                  },
                  nullptr);
}

template <typename T>
int op_tile_rows(Tape<T>& t, int x, int m) {
    const Tensor<T>& X = t.value(x);
    if (X.rank() != 2 || X.shape[0] != 1) throw ShapeError("tile_rows: expected [1,n]");
    const int n = X.shape[1];
    Tensor<T> out({m, n});
    for (int i = 0; i < m; ++i) std::copy_n(X.data.data(), n, &out.data[size_t(i) * n]);
    return t.make(std::move(out), {x},
                  [x, m, n](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      Tensor<T> gx({1, n});
                      for (int i = 0; i < m; ++i)
                          for (int j = 0; j < n; ++j) gx.data[j] += g.data[size_t(i) * n + j];
                      tp.accum(x, gx);
                  },
                  nullptr);
}

template <typename T>
int op_concat_rows(Tape<T>& t, int a, int b) {
    const Tensor<T>&A = t.value(a), &B = t.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[1])
        throw ShapeError("concat_rows: shape mismatch");
    const int ma = A.shape[0], mb = B.shape[0], n = A.shape[1];
    Tensor<T> out({ma + mb, n});
    std::copy(A.data.begin(), A.data.end(), out.data.begin());
    std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.data.size());
    return t.make(std::move(out), {a, b},
                  [a, b, ma, mb, n](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      Tensor<T> ga({ma, n}), gb({mb, n});
                      std::copy_n(g.data.begin(), size_t(ma) * n, ga.data.begin());
                      std::copy_n(g.data.begin() + size_t(ma) * n, size_t(mb) * n, gb.data.begin());
                      tp.accum(a, ga);
                      tp.accum(b, gb);
                  },
                  nullptr);
}

template <typename T>
int op_slice_rows(Tape<T>& t, int x, int r0, int r1) {
    const Tensor<T>& X = t.value(x);
    if (X.rank() != 2 || r0 < 0 || r1 > X.shape[0] || r0 >= r1)
        throw ShapeError("slice_rows: bad range");
    const int n = X.shape[1];
    Tensor<T> out({r1 - r0, n});
    std::copy_n(&X.data[size_t(r0) * n], size_t(r1 - r0) * n, out.data.begin());
    return t.make(std::move(out), {x},
                  [x, r0, r1, n](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      Tensor<T> gx(tp.value(x).shape);
                      std::copy(g.data.begin(), g.data.end(), gx.data.begin() + size_t(r0) * n);
                      tp.accum(x, gx);
                  },
                  nullptr);
}

template <typename T>
int op_slice_cols(Tape<T>& t, int x, int c0, int c1) {
    const Tensor<T>& X = t.value(x);
    if (X.rank() != 2 || c0 < 0 || c1 > X.shape[1] || c0 >= c1)
        throw ShapeError("slice_cols: bad range");
    const int m = X.shape[0], n = X.shape[1], w = c1 - c0;
    Tensor<T> out({m, w});
    for (int i = 0; i < m; ++i)
        std::copy_n(&X.data[size_t(i) * n + c0], w, &out.data[size_t(i) * w]);
    return t.make(std::move(out), {x},
                  [x, c0, m, n, w](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      Tensor<T> gx(tp.value(x).shape);
                      for (int i = 0; i < m; ++i)
                          for (int j = 0; j < w; ++j)
                              gx.data[size_t(i) * n + c0 + j] += g.data[size_t(i) * w + j];
                      tp.accum(x, gx);
                  },
                  nullptr);
}

template <typename T>
int op_concat_cols(Tape<T>& t, const std::vector<int>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty");
    const int m = t.value(parts[0]).shape[0];
    int n = 0;
    for (int p : parts) {
        const Tensor<T>& V = t.value(p);
        if (V.rank() != 2 || V.shape[0] != m) throw ShapeError("concat_cols: shape mismatch");
        n += V.shape[1];
    }
    Tensor<T> out({m, n});
    std::vector<int> offsets;
    int off = 0;
    for (int p : parts) {
        const Tensor<T>& V = t.value(p);
        offsets.push_back(off);
        for (int i = 0; i < m; ++i)
            std::copy_n(&V.data[size_t(i) * V.shape[1]], V.shape[1],
                        &out.data[size_t(i) * n + off]);
        off += V.shape[1];
    }
    std::vector<int> ps = parts;
    return t.make(std::move(out), parts,
                  [ps, offsets, m, n](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      for (size_t k = 0; k < ps.size(); ++k) {
                          const int w = tp.value(ps[k]).shape[1];
                          Tensor<T> gp({m, w});
                          for (int i = 0; i < m; ++i)
                              std::copy_n(&g.data[size_t(i) * n + offsets[k]], w,
                                          &gp.data[size_t(i) * w]);
                          tp.accum(ps[k], gp);
                      }
                  },
                  nullptr);
}

// Row-wise layer normalization with learned gain/bias. Population variance.
template <typename T>
int op_layer_norm(Tape<T>& t, int x, int gain, int bias, T eps) {
    const Tensor<T>&X = t.value(x), &G = t.value(gain), &B = t.value(bias);
    if (X.rank() != 2 || G.numel() != X.shape[1] || B.numel() != X.shape[1])
        throw ShapeError("layer_norm: shape mismatch");
    const int m = X.shape[0], n = X.shape[1];
    Tensor<T> out(X.shape);
    Tensor<T> xhat(X.shape);
    std::vector<T> inv_std(m);
    for (int i = 0; i < m; ++i) {
        const T* row = &X.data[size_t(i) * n];
        T mu = 0;
        for (int j = 0; j < n; ++j) mu += row[j];
        mu /= T(n);
        T var = 0;
        for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= T(n);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < n; ++j) {
            const T xh = (row[j] - mu) * is;
            xhat.data[size_t(i) * n + j] = xh;
            out.data[size_t(i) * n + j] = G.data[j] * xh + B.data[j];
        }
    }
    return t.make(std::move(out), {x, gain, bias},
                  [x, gain, bias, xhat, inv_std, m, n](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      const Tensor<T>& G2 = tp.value(gain);
                      Tensor<T> gx({m, n});
                      Tensor<T> gg({n}), gb({n});
                      for (int i = 0; i < m; ++i) {
                          const T* grow = &g.data[size_t(i) * n];
                          const T* xh = &xhat.data[size_t(i) * n];
                          T sum_dxh = 0, sum_dxh_xh = 0;
                          for (int j = 0; j < n; ++j) {
                              const T dxh = grow[j] * G2.data[j];
                              sum_dxh += dxh;
                              sum_dxh_xh += dxh * xh[j];
                              gg.data[j] += grow[j] * xh[j];
                              gb.data[j] += grow[j];
                          }
                          const T inv_n = T(1) / T(n);
                          for (int j = 0; j < n; ++j) {
                              const T dxh = grow[j] * G2.data[j];
                              gx.data[size_t(i) * n + j] =
                                  inv_std[i] * (dxh - sum_dxh * inv_n - xh[j] * sum_dxh_xh * inv_n);
                          }
                      }
                      tp.accum(x, gx);
                      tp.accum(gain, gg);
                      tp.accum(bias, gb);
                  },
                  "layer_norm");
}

// Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
template <typename T>
int op_gelu(Tape<T>& t, int x) {
    const Tensor<T>& X = t.value(x);
    Tensor<T> out(X.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        const T v = X.data[i];
        out.data[i] = T(0.5) * v * (T(1) + std::erf(v * T(M_SQRT1_2)));
    }
    return t.make(std::move(out), {x},
                  [x](Tape<T>& tp, int self) {
                      const Tensor<T>& g = tp.grad(self);
                      const Tensor<T>& X2 = tp.value(x);
                      Tensor<T> gx(X2.shape);
                      constexpr T inv_sqrt2pi = T(0.3989422804014326779);
                      for (size_t i = 0; i < gx.data.size(); ++i) {
                          const T v = X2.data[i];
                          const T cdf = T(0.5) * (T(1) + std::erf(v * T(M_SQRT1_2)));
                          const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
                          gx.data[i] = g.data[i] * (cdf + v * pdf);
                      }
                      tp.accum(x, gx);
                  },
                  "gelu");
}

template <typename T>
int op_softmax_rows(Tape<T>& t, int x) {
    const Tensor<T>& X = t.value(x);
    if (X.rank() != 2) throw ShapeError("softmax_rows: not 2-d");
    const int m = X.shape[0], n = X.shape[1];
    Tensor<T> out(X.shape);
    for (int i = 0; i < m; ++i) {
        const T* row = &X.data[size_t(i) * n];
        T mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        T sum = 0;
        for (int j = 0; j < n; ++j) {
            const T e = std::exp(row[j] - mx);
            out.data[size_t(i) * n + j] = e;
            sum += e;
        }
        const T inv = T(1) / sum;
        for (int j = 0; j < n; ++j) out.data[size_t(i) * n + j] *= inv;
    }
    return t.make(std::move(out), {x},
                  [x, m, n](Tape<T>& tp, int self) {
                      const Tensor<T>&g = tp.grad(self), &y = tp.value(self);
                      Tensor<T> gx({m, n});
                      for (int i = 0; i < m; ++i) {
                          const T* gr = &g.data[size_t(i) * n];
                          const T* yr = &y.data[size_t(i) * n];
                          T dot = 0;
                          for (int j = 0; j < n; ++j) dot += gr[j] * yr[j];
                          for (int j = 0; j < n; ++j)
                              gx.data[size_t(i) * n + j] = yr[j] * (gr[j] - dot);
                      }
                      tp.accum(x, gx);
                  },
                  "softmax_rows");
}

template <typename T>
int op_sum_all(Tape<T>& t, int x) {
    const Tensor<T>& X = t.value(x);
    T s = 0;
    for (const T& v : X.data) s += v;
    return t.make(Tensor<T>({1}, {s}), {x},
                  [x](Tape<T>& tp, int self) {
                      const T g = tp.grad(self).data[0];
                      tp.accum(x, Tensor<T>::full(tp.value(x).shape, g));
                  },
                  "sum");
}

template <typename T>
int op_mean_all(Tape<T>& t, int x) {
    const int64_t n = t.value(x).numel();
    return op_scale(t, op_sum_all(t, x), T(1) / T(n));
}

// Fused stable softmax + cross-entropy, mean over rows.
template <typename T>
int op_softmax_xent_mean(Tape<T>& t, int logits, std::vector<int> labels) {
    const Tensor<T>& X = t.value(logits);
    if (X.rank() != 2 || static_cast<int>(labels.size()) != X.shape[0])
        throw ShapeError("softmax_xent: label count mismatch");
    const int m = X.shape[0], n = X.shape[1];
    for (int l : labels)
        if (l < 0 || l >= n) throw ShapeError("softmax_xent: label out of range");
    T loss = 0;
    for (int i = 0; i < m; ++i) {
        const T* row = &X.data[size_t(i) * n];
        T mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        T sum = 0;
        for (int j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
        loss += std::log(sum) - (row[labels[i]] - mx);
    }
    loss /= T(m);
    return t.make(Tensor<T>({1}, {loss}), {logits},
                  [logits, labels, m, n](Tape<T>& tp, int self) {
                      const T g = tp.grad(self).data[0] / T(m);
                      const Tensor<T>& X2 = tp.value(logits);
                      Tensor<T> gx({m, n});
                      for (int i = 0; i < m; ++i) {
                          const T* row = &X2.data[size_t(i) * n];
                          T mx = row[0];
                          for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
                          T sum = 0;
                          for (int j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
                          const T inv = T(1) / sum;
                          for (int j = 0; j < n; ++j) {
                              T p = std::exp(row[j] - mx) * inv;
                              if (j == labels[i]) p -= T(1);
                              gx.data[size_t(i) * n + j] = g * p;
                          }
                      }
                      tp.accum(logits, gx);
                  },
                  "softmax_xent");
}

// Cuts the graph: downstream gradients stop here.
template <typename T>
int op_detach(Tape<T>& t, int x) {
    return t.constant(t.value(x));
}

// Mean of a list of scalar nodes, summed in list order.
template <typename T>
int op_mean_of(Tape<T>& t, const std::vector<int>& xs) {
    if (xs.empty()) throw ShapeError("mean_of: empty");
    int acc = xs[0];
    for (size_t i = 1; i < xs.size(); ++i) acc = op_add(t, acc, xs[i]);
    return op_scale(t, acc, T(1) / T(xs.size()));
}

}  // namespace tttlab
