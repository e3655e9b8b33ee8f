#pragma once

#include <string>

#include "tttlab/autograd.hpp"
#include "tttlab/optim.hpp"
#include "tttlab/rng.hpp"

namespace tttlab {

// Leases parameters into a tape on first use and remembers the node ids so
// gradients can be read back by name after backward().
template <typename T>
struct Leased {
    Tape<T>* tape;
    const ParamSet<T>* params;
    std::map<std::string, int> ids;

    int operator()(const std::string& name) {
        auto it = ids.find(name);
        if (it != ids.end()) return it->second;
        const int id = tape->param(&params->tensor(name));
        ids.emplace(name, id);
        return id;
    }
};

// Accumulate leaf gradients from a finished tape into `acc`, in lease-map
// (lexicographic) order so reductions are scheduling-independent.
template <typename T>
void accumulate_grads(GradMap<T>& acc, const Leased<T>& leased, const Tape<T>& tape) {
    for (const auto& [name, id] : leased.ids) {
        const Tensor<T>& g = tape.grad(id);
        auto it = acc.find(name);
        if (it == acc.end()) {
            acc.emplace(name, g);
        } else {
            for (size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
        }
    }
}

template <typename T>
void scale_grads(GradMap<T>& grads, T s) {
    for (auto& [name, g] : grads)
        for (T& v : g.data) v *= s;
}

inline constexpr double kLayerNormEps = 1e-5;

// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
// Parameters are looked up under `prefix` (ln1,attn,ln2,mlp).
template <typename T>
int transformer_block(Tape<T>& t, Leased<T>& L, const std::string& prefix, int x, int heads) {
    const int dim = t.value(x).shape[1];
    const int dh = dim / heads;

    int h = op_layer_norm(t, x, L(prefix + "ln1.g"), L(prefix + "ln1.b"), T(kLayerNormEps));
    int qkv = op_add_rowvec(t, op_matmul(t, h, L(prefix + "attn.wqkv")), L(prefix + "attn.bqkv"));
    std::vector<int> head_outs;
    const T inv_sqrt_dh = T(1) / std::sqrt(T(dh));
    for (int i = 0; i < heads; ++i) {
        int q = op_slice_cols(t, qkv, i * dh, (i + 1) * dh);
        int k = op_slice_cols(t, qkv, dim + i * dh, dim + (i + 1) * dh);
        int v = op_slice_cols(t, qkv, 2 * dim + i * dh, 2 * dim + (i + 1) * dh);
        int scores = op_scale(t, op_matmul(t, q, op_transpose(t, k)), inv_sqrt_dh);
        int attn = op_softmax_rows(t, scores);
        head_outs.push_back(op_matmul(t, attn, v));
    }
    int attn_out = op_concat_cols(t, head_outs);
    attn_out = op_add_rowvec(t, op_matmul(t, attn_out, L(prefix + "attn.wo")), L(prefix + "attn.bo"));
    x = op_add(t, x, attn_out);

    int h2 = op_layer_norm(t, x, L(prefix + "ln2.g"), L(prefix + "ln2.b"), T(kLayerNormEps));
    int m = op_add_rowvec(t, op_matmul(t, h2, L(prefix + "mlp.w1")), L(prefix + "mlp.b1"));
    m = op_gelu(t, m);
    m = op_add_rowvec(t, op_matmul(t, m, L(prefix + "mlp.w2")), L(prefix + "mlp.b2"));
    return op_add(t, x, m);
}

// ---- parameter initialization -------------------------------------------
// Every parameter draws from its own sub-stream derived from (seed, name),
// so init is independent of iteration order.

template <typename T>
Tensor<T> init_normal(std::vector<int> shape, uint64_t seed, const std::string& name, double std_dev) {
    Xoshiro256ss rng(derive_seed(seed, fnv1a64(name)));
    Tensor<T> t(std::move(shape));
    for (T& v : t.data) v = static_cast<T>(rng.normal(0.0, std_dev));
    return t;
}

inline constexpr double kInitStd = 0.02;

template <typename T>
void add_block_params(ParamSet<T>& p, const std::string& prefix, int dim, uint64_t seed) {
    const int hidden = 4 * dim;
    p.add(prefix + "ln1.g", Tensor<T>::full({dim}, T(1)));
    p.add(prefix + "ln1.b", Tensor<T>({dim}));
    p.add(prefix + "attn.wqkv", init_normal<T>({dim, 3 * dim}, seed, prefix + "attn.wqkv", kInitStd));
    p.add(prefix + "attn.bqkv", Tensor<T>({3 * dim}));
    p.add(prefix + "attn.wo", init_normal<T>({dim, dim}, seed, prefix + "attn.wo", kInitStd));
    p.add(prefix + "attn.bo", Tensor<T>({dim}));
    p.add(prefix + "ln2.g", Tensor<T>::full({dim}, T(1)));
    p.add(prefix + "ln2.b", Tensor<T>({dim}));
    p.add(prefix + "mlp.w1", init_normal<T>({dim, hidden}, seed, prefix + "mlp.w1", kInitStd));
    p.add(prefix + "mlp.b1", Tensor<T>({hidden}));
    p.add(prefix + "mlp.w2", init_normal<T>({hidden, dim}, seed, prefix + "mlp.w2", kInitStd));
    p.add(prefix + "mlp.b2", Tensor<T>({dim}));
}

}  // namespace tttlab
