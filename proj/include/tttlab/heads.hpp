#pragma once

#include "tttlab/mae.hpp"

namespace tttlab {

struct HeadConfig {
    enum class Kind { LinearProbe, VitProbe };
    Kind kind = Kind::VitProbe;
    int dim = 64;    // vit-probe block width
    int depth = 2;   // vit-probe blocks
    int heads = 4;
    int num_classes = 8;

    void validate() const {
        if (num_classes < 2) throw ConfigError("head: need at least 2 classes");
        if (kind == Kind::VitProbe && (dim % heads != 0 || depth <= 0))
            throw ConfigError("head: bad vit-probe dims");
    }
};

// Main-task head h: either a single affine map on mean-pooled encoder
// features (linear-probe) or a small transformer over the encoder tokens
// with class-token readout (vit-probe).
template <typename T>
struct HeadModel {
    HeadConfig cfg;
    ParamSet<T> params;

    static HeadModel init(const HeadConfig& cfg, int encoder_dim, uint64_t seed);
};

// Encoder tokens [1+P, D] (row 0 = class token) -> logits [1, K].
template <typename T>
int head_forward(Tape<T>& tape, Leased<T>& L, const HeadConfig& cfg, int encoder_tokens);

// Four-way rotation-prediction head on the class-token feature.
template <typename T>
ParamSet<T> init_rotation_head(int encoder_dim, uint64_t seed);

template <typename T>
int rotation_head_forward(Tape<T>& tape, Leased<T>& L, int encoder_tokens);

}  // namespace tttlab
