#include "tttlab/heads.hpp"

namespace tttlab {

template <typename T>
HeadModel<T> HeadModel<T>::init(const HeadConfig& cfg, int encoder_dim, uint64_t seed) {
    cfg.validate();
    HeadModel<T> head;
    head.cfg = cfg;
    ParamSet<T>& p = head.params;
    if (cfg.kind == HeadConfig::Kind::LinearProbe) {
        p.add("head.cls.w", init_normal<T>({encoder_dim, cfg.num_classes}, seed, "head.cls.w", kInitStd));
        p.add("head.cls.b", Tensor<T>({cfg.num_classes}));
        return head;
    }
    p.add("head.proj.w", init_normal<T>({encoder_dim, cfg.dim}, seed, "head.proj.w", kInitStd));
    p.add("head.proj.b", Tensor<T>({cfg.dim}));
    for (int i = 0; i < cfg.depth; ++i)
        add_block_params(p, "head.blk" + std::to_string(i) + ".", cfg.dim, seed);
    p.add("head.norm.g", Tensor<T>::full({cfg.dim}, T(1)));
    p.add("head.norm.b", Tensor<T>({cfg.dim}));
    p.add("head.cls.w", init_normal<T>({cfg.dim, cfg.num_classes}, seed, "head.cls.w", kInitStd));
    p.add("head.cls.b", Tensor<T>({cfg.num_classes}));
    return head;
}

template <typename T>
int head_forward(Tape<T>& t, Leased<T>& L, const HeadConfig& cfg, int encoder_tokens) {
    const int rows = t.value(encoder_tokens).shape[0];
    if (cfg.kind == HeadConfig::Kind::LinearProbe) {
        // mean-pool the patch tokens (rows 1..P)
        const int np = rows - 1;
        Tensor<T> ones({1, np});
        std::fill(ones.data.begin(), ones.data.end(), T(1) / T(np));
        int pooled = op_matmul(t, t.constant(std::move(ones)),
                               op_slice_rows(t, encoder_tokens, 1, rows));
        return op_add_rowvec(t, op_matmul(t, pooled, L("head.cls.w")), L("head.cls.b"));
    }
    int x = op_add_rowvec(t, op_matmul(t, encoder_tokens, L("head.proj.w")), L("head.proj.b"));
    for (int i = 0; i < cfg.depth; ++i)
        x = transformer_block(t, L, "head.blk" + std::to_string(i) + ".", x, cfg.heads);
    x = op_layer_norm(t, x, L("head.norm.g"), L("head.norm.b"), T(kLayerNormEps));
    int cls = op_slice_rows(t, x, 0, 1);
    return op_add_rowvec(t, op_matmul(t, cls, L("head.cls.w")), L("head.cls.b"));
}

template <typename T>
ParamSet<T> init_rotation_head(int encoder_dim, uint64_t seed) {
    ParamSet<T> p;
    p.add("rot.w", init_normal<T>({encoder_dim, 4}, seed, "rot.w", kInitStd));
    p.add("rot.b", Tensor<T>({4}));
    return p;
}

template <typename T>
int rotation_head_forward(Tape<T>& t, Leased<T>& L, int encoder_tokens) {
    int cls = op_slice_rows(t, encoder_tokens, 0, 1);
    return op_add_rowvec(t, op_matmul(t, cls, L("rot.w")), L("rot.b"));
}

template struct HeadModel<float>;
template struct HeadModel<double>;
template int head_forward<float>(Tape<float>&, Leased<float>&, const HeadConfig&, int);
template int head_forward<double>(Tape<double>&, Leased<double>&, const HeadConfig&, int);
template ParamSet<float> init_rotation_head<float>(int, uint64_t);
template ParamSet<double> init_rotation_head<double>(int, uint64_t);
template int rotation_head_forward<float>(Tape<float>&, Leased<float>&, int);
template int rotation_head_forward<double>(Tape<double>&, Leased<double>&, int);

}  // namespace tttlab
