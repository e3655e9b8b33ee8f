#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tttlab/nn.hpp"

namespace tttlab {

struct MaeConfig {
    int image_size = 32;   // height
    int image_width = 0;   // 0 means square
    int channels = 1;
    int patch_size = 8;
    int encoder_dim = 64;
    int encoder_depth = 4;
    int decoder_dim = 32;
    int decoder_depth = 2;
    int heads = 4;
    double mask_ratio = 0.75;
    bool normalize_pixels = true;

    int width() const { return image_width > 0 ? image_width : image_size; }
    int num_patches() const { return (image_size / patch_size) * (width() / patch_size); }
    int patch_dim() const { return channels * patch_size * patch_size; }

    void validate() const {
        if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0 ||
            width() % patch_size != 0)
            throw ConfigError("mae: image extents must be divisible by patch-size");
        if (mask_ratio < 0.0 || mask_ratio >= 1.0)
            throw ConfigError("mae: mask-ratio outside [0,1)");
        if (encoder_dim % heads != 0 || decoder_dim % heads != 0)
            throw ConfigError("mae: dims must be divisible by heads");
        if (channels <= 0 || encoder_depth <= 0 || decoder_depth <= 0)
            throw ConfigError("mae: non-positive extent");
    }
};

// Strictly increasing masked patch indices.
struct MaskSpec {
    std::vector<int> masked;
    int total_patches = 0;

    MaskSpec() = default;
    MaskSpec(std::vector<int> m, int total);

    std::vector<int> visible() const;
    size_t masked_count() const { return masked.size(); }
};

// Exact-size mask count: round-half-to-even of ratio * total.
int mask_count(int total_patches, double ratio);

// Uniform subset of exact size via Fisher-Yates over patch indices, first k.
MaskSpec sample_mask(int total_patches, double ratio, Xoshiro256ss& rng);

// The masked autoencoder: encoder f, decoder g, mask and class tokens.
template <typename T>
struct MaeModel {
    MaeConfig cfg;
    ParamSet<T> params;

    static MaeModel init(const MaeConfig& cfg, uint64_t seed);

    bool is_encoder_param(const std::string& name) const { return name.rfind("enc.", 0) == 0; }
    bool is_decoder_param(const std::string& name) const {
        return name.rfind("dec.", 0) == 0 && name != "dec.mask";
    }
    // Mask token and class token, optimized in TTT even with the decoder frozen.
    bool is_token_param(const std::string& name) const {
        return name == "dec.mask" || name == "enc.cls";
    }
};

// [C,H,W] -> [num_patches, C*p*p], patches row-major over the patch grid.
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, int patch_size);

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, int channels, int height, int width);

// Encoder over visible patches only, class token prepended (output row 0).
template <typename T>
int encode_visible(Tape<T>& tape, Leased<T>& L, const MaeConfig& cfg, const Tensor<T>& patches,
                   const MaskSpec& mask);

// Full-image encoding (empty mask).
template <typename T>
int encode_all(Tape<T>& tape, Leased<T>& L, const MaeConfig& cfg, const Tensor<T>& patches);

// Decoder over all token positions; masked slots filled with the mask token.
// Returns reconstructed patches [num_patches, patch_dim].
template <typename T>
int decode_full(Tape<T>& tape, Leased<T>& L, const MaeConfig& cfg, int visible_latents,
                const MaskSpec& mask);

inline constexpr double kPixelNormEps = 1e-6;

// Mean squared error over masked patches only; optionally standardizes each
// target patch by its own mean/variance first.
template <typename T>
int reconstruction_loss(Tape<T>& tape, int pred, const Tensor<T>& target_patches,
                        const MaskSpec& mask, bool normalize_pixels);

// Reconstruction loss for a caller-supplied mask (batching draws masks
// up front so compute can parallelize deterministically).
template <typename T>
int mae_loss_masked(Tape<T>& tape, Leased<T>& L, const MaeConfig& cfg, const Tensor<T>& image,
                    const MaskSpec& mask, bool normalize_pixels);

// Composition: patchify, sample a mask, encode visible, decode, score.
template <typename T>
std::pair<int, MaskSpec> mae_loss(Tape<T>& tape, Leased<T>& L, const MaeConfig& cfg,
                                  const Tensor<T>& image, double mask_ratio, Xoshiro256ss& rng,
                                  bool normalize_pixels);

}  // namespace tttlab
