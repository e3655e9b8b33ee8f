#include "tttlab/mae.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>

namespace tttlab {

MaskSpec::MaskSpec(std::vector<int> m, int total) : masked(std::move(m)), total_patches(total) {
    for (size_t i = 0; i < masked.size(); ++i) {
        if (masked[i] < 0 || masked[i] >= total) throw ShapeError("mask: index out of range");
        if (i > 0 && masked[i] <= masked[i - 1])
            throw ShapeError("mask: indices not strictly increasing");
    }
}

std::vector<int> MaskSpec::visible() const {
    std::vector<int> vis;
    size_t k = 0;
    for (int i = 0; i < total_patches; ++i) {
        if (k < masked.size() && masked[k] == i)
            ++k;
        else
            vis.push_back(i);
    }
    return vis;
}

int mask_count(int total_patches, double ratio) {
    if (ratio < 0.0 || ratio >= 1.0) throw ConfigError("mask ratio outside [0,1)");
    // nearbyint under the default FE_TONEAREST mode rounds half to even.
    return static_cast<int>(std::nearbyint(ratio * total_patches));
}

MaskSpec sample_mask(int total_patches, double ratio, Xoshiro256ss& rng) {
    const int k = mask_count(total_patches, ratio);
    std::vector<int> idx(total_patches);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::vector<int> masked(idx.begin(), idx.begin() + k);
    std::sort(masked.begin(), masked.end());
    return MaskSpec(std::move(masked), total_patches);
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, int patch_size) {
    if (image.rank() != 3) throw ShapeError("patchify: expected [C,H,W]");
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (h % patch_size != 0 || w % patch_size != 0)
        throw ShapeError("patchify: extents not divisible by patch size");
    const int gh = h / patch_size, gw = w / patch_size;
    Tensor<T> out({gh * gw, c * patch_size * patch_size});
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            T* dst = &out.data[size_t(py * gw + px) * out.shape[1]];
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < patch_size; ++y)
                    for (int x = 0; x < patch_size; ++x)
                        *dst++ = image.data[(size_t(ch) * h + py * patch_size + y) * w +
                                            px * patch_size + x];
        }
    }
    return out;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, int channels, int height, int width) {
    if (patches.rank() != 2) throw ShapeError("unpatchify: expected [P, pd]");
    const int pd = patches.shape[1];
    const int patch_size = static_cast<int>(std::lround(std::sqrt(double(pd) / channels)));
    if (channels * patch_size * patch_size != pd)
        throw ShapeError("unpatchify: patch dim is not channels*p^2");
    if (height % patch_size != 0 || width % patch_size != 0)
        throw ShapeError("unpatchify: extents not divisible");
    const int gh = height / patch_size, gw = width / patch_size;
    if (gh * gw != patches.shape[0]) throw ShapeError("unpatchify: patch count mismatch");
    Tensor<T> img({channels, height, width});
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            const T* src = &patches.data[size_t(py * gw + px) * pd];
            for (int ch = 0; ch < channels; ++ch)
                for (int y = 0; y < patch_size; ++y)
                    for (int x = 0; x < patch_size; ++x)
                        img.data[(size_t(ch) * height + py * patch_size + y) * width +
                                 px * patch_size + x] = *src++;
        }
    }
    return img;
}

template <typename T>
MaeModel<T> MaeModel<T>::init(const MaeConfig& cfg, uint64_t seed) {
    cfg.validate();
    MaeModel<T> model;
    model.cfg = cfg;
    ParamSet<T>& p = model.params;
    const int d = cfg.encoder_dim, dd = cfg.decoder_dim, pd = cfg.patch_dim();
    const int np = cfg.num_patches();

    p.add("enc.pe.w", init_normal<T>({pd, d}, seed, "enc.pe.w", kInitStd));
    p.add("enc.pe.b", Tensor<T>({d}));
    p.add("enc.pos", init_normal<T>({1 + np, d}, seed, "enc.pos", kInitStd));
    p.add("enc.cls", init_normal<T>({1, d}, seed, "enc.cls", kInitStd));
    for (int i = 0; i < cfg.encoder_depth; ++i)
        add_block_params(p, "enc.blk" + std::to_string(i) + ".", d, seed);
    p.add("enc.norm.g", Tensor<T>::full({d}, T(1)));
    p.add("enc.norm.b", Tensor<T>({d}));

    p.add("dec.proj.w", init_normal<T>({d, dd}, seed, "dec.proj.w", kInitStd));
    p.add("dec.proj.b", Tensor<T>({dd}));
    p.add("dec.mask", init_normal<T>({1, dd}, seed, "dec.mask", kInitStd));
    p.add("dec.pos", init_normal<T>({1 + np, dd}, seed, "dec.pos", kInitStd));
    for (int i = 0; i < cfg.decoder_depth; ++i)
        add_block_params(p, "dec.blk" + std::to_string(i) + ".", dd, seed);
    p.add("dec.norm.g", Tensor<T>::full({dd}, T(1)));
    p.add("dec.norm.b", Tensor<T>({dd}));
    p.add("dec.out.w", init_normal<T>({dd, pd}, seed, "dec.out.w", kInitStd));
    p.add("dec.out.b", Tensor<T>({pd}));
    return model;
}

template <typename T>
int encode_visible(Tape<T>& t, Leased<T>& L, const MaeConfig& cfg, const Tensor<T>& patches,
                   const MaskSpec& mask) {
    if (patches.shape[0] != mask.total_patches || mask.total_patches != cfg.num_patches())
        throw ShapeError("encode: mask/patch count mismatch");
    const std::vector<int> vis = mask.visible();

    int x = t.constant(patches);
    x = op_gather_rows(t, x, vis);  // masked pixels never enter the graph
    x = op_add_rowvec(t, op_matmul(t, x, L("enc.pe.w")), L("enc.pe.b"));
    std::vector<int> pos_idx(vis.size());
    for (size_t i = 0; i < vis.size(); ++i) pos_idx[i] = 1 + vis[i];
    x = op_add(t, x, op_gather_rows(t, L("enc.pos"), pos_idx));

    int cls = op_add(t, L("enc.cls"), op_slice_rows(t, L("enc.pos"), 0, 1));
    x = op_concat_rows(t, cls, x);

    for (int i = 0; i < cfg.encoder_depth; ++i)
        x = transformer_block(t, L, "enc.blk" + std::to_string(i) + ".", x, cfg.heads);
    return op_layer_norm(t, x, L("enc.norm.g"), L("enc.norm.b"), T(kLayerNormEps));
}

template <typename T>
int encode_all(Tape<T>& t, Leased<T>& L, const MaeConfig& cfg, const Tensor<T>& patches) {
    return encode_visible(t, L, cfg, patches, MaskSpec({}, cfg.num_patches()));
}

template <typename T>
int decode_full(Tape<T>& t, Leased<T>& L, const MaeConfig& cfg, int visible_latents,
                const MaskSpec& mask) {
    const int np = cfg.num_patches();
    const std::vector<int> vis = mask.visible();
    const int v = static_cast<int>(vis.size());
    const int m = static_cast<int>(mask.masked.size());
    if (t.value(visible_latents).shape[0] != v + 1)
        throw ShapeError("decode: latent count does not match mask");

    int y = op_add_rowvec(t, op_matmul(t, visible_latents, L("dec.proj.w")), L("dec.proj.b"));
    int stacked = y;  // rows: [cls, visible..., mask tokens...]
    if (m > 0) stacked = op_concat_rows(t, y, op_tile_rows(t, L("dec.mask"), m));

    // Restore original patch order: cls, then patch 0..np-1.
    std::vector<int> perm(1 + np);
    perm[0] = 0;
    for (int r = 0; r < v; ++r) perm[1 + vis[r]] = 1 + r;
    for (int r = 0; r < m; ++r) perm[1 + mask.masked[r]] = 1 + v + r;
    int tokens = op_gather_rows(t, stacked, perm);
    tokens = op_add(t, tokens, L("dec.pos"));

    for (int i = 0; i < cfg.decoder_depth; ++i)
        tokens = transformer_block(t, L, "dec.blk" + std::to_string(i) + ".", tokens, cfg.heads);
    tokens = op_layer_norm(t, tokens, L("dec.norm.g"), L("dec.norm.b"), T(kLayerNormEps));
    tokens = op_slice_rows(t, tokens, 1, 1 + np);
    return op_add_rowvec(t, op_matmul(t, tokens, L("dec.out.w")), L("dec.out.b"));
}

// Standardize one patch row in place by its own mean/variance (+eps).
template <typename T>
static void normalize_patch_row(T* row, int n) {
    T mu = 0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= T(n);
    T var = 0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(n);
    const T inv = T(1) / std::sqrt(var + T(kPixelNormEps));
    for (int j = 0; j < n; ++j) row[j] = (row[j] - mu) * inv;
}

template <typename T>
int reconstruction_loss(Tape<T>& t, int pred, const Tensor<T>& target_patches,
                        const MaskSpec& mask, bool normalize_pixels) {
    const Tensor<T>& P = t.value(pred);
    if (!P.same_shape(target_patches)) throw ShapeError("reconstruction loss: shape mismatch");
    if (mask.masked.empty())
        throw ConfigError("reconstruction loss undefined for an empty mask");

    const int pd = target_patches.shape[1];
    Tensor<T> target({static_cast<int>(mask.masked.size()), pd});
    for (size_t r = 0; r < mask.masked.size(); ++r) {
        std::copy_n(&target_patches.data[size_t(mask.masked[r]) * pd], pd,
                    &target.data[r * pd]);
        if (normalize_pixels) normalize_patch_row(&target.data[r * pd], pd);
    }

    int pred_masked = op_gather_rows(t, pred, mask.masked);
    int diff = op_sub(t, pred_masked, t.constant(std::move(target)));
    return op_mean_all(t, op_mul(t, diff, diff));
}

template <typename T>
int mae_loss_masked(Tape<T>& t, Leased<T>& L, const MaeConfig& cfg, const Tensor<T>& image,
                    const MaskSpec& mask, bool normalize_pixels) {
    const Tensor<T> patches = patchify(image, cfg.patch_size);
    int latents = encode_visible(t, L, cfg, patches, mask);
    int pred = decode_full(t, L, cfg, latents, mask);
    return reconstruction_loss(t, pred, patches, mask, normalize_pixels);
}

template <typename T>
std::pair<int, MaskSpec> mae_loss(Tape<T>& t, Leased<T>& L, const MaeConfig& cfg,
                                  const Tensor<T>& image, double mask_ratio, Xoshiro256ss& rng,
                                  bool normalize_pixels) {
    MaskSpec mask = sample_mask(cfg.num_patches(), mask_ratio, rng);
    int loss = mae_loss_masked(t, L, cfg, image, mask, normalize_pixels);
    return {loss, std::move(mask)};
}

// explicit instantiations: 32-bit neural path, 64-bit verification path
template Tensor<float> patchify<float>(const Tensor<float>&, int);
template Tensor<double> patchify<double>(const Tensor<double>&, int);
template Tensor<float> unpatchify<float>(const Tensor<float>&, int, int, int);
template Tensor<double> unpatchify<double>(const Tensor<double>&, int, int, int);
template struct MaeModel<float>;
template struct MaeModel<double>;
template int encode_visible<float>(Tape<float>&, Leased<float>&, const MaeConfig&,
                                   const Tensor<float>&, const MaskSpec&);
template int encode_visible<double>(Tape<double>&, Leased<double>&, const MaeConfig&,
                                    const Tensor<double>&, const MaskSpec&);
template int encode_all<float>(Tape<float>&, Leased<float>&, const MaeConfig&,
                               const Tensor<float>&);
template int encode_all<double>(Tape<double>&, Leased<double>&, const MaeConfig&,
                                const Tensor<double>&);
template int decode_full<float>(Tape<float>&, Leased<float>&, const MaeConfig&, int,
                                const MaskSpec&);
template int decode_full<double>(Tape<double>&, Leased<double>&, const MaeConfig&, int,
                                 const MaskSpec&);
template int reconstruction_loss<float>(Tape<float>&, int, const Tensor<float>&, const MaskSpec&,
                                        bool);
template int reconstruction_loss<double>(Tape<double>&, int, const Tensor<double>&,
                                         const MaskSpec&, bool);
template int mae_loss_masked<float>(Tape<float>&, Leased<float>&, const MaeConfig&,
                                    const Tensor<float>&, const MaskSpec&, bool);
template int mae_loss_masked<double>(Tape<double>&, Leased<double>&, const MaeConfig&,
                                     const Tensor<double>&, const MaskSpec&, bool);
template std::pair<int, MaskSpec> mae_loss<float>(Tape<float>&, Leased<float>&, const MaeConfig&,
                                                  const Tensor<float>&, double, Xoshiro256ss&,
                                                  bool);
template std::pair<int, MaskSpec> mae_loss<double>(Tape<double>&, Leased<double>&,
                                                   const MaeConfig&, const Tensor<double>&,
                                                   double, Xoshiro256ss&, bool);

}  // namespace tttlab
