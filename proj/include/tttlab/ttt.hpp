#pragma once

#include "tttlab/heads.hpp"
#include "tttlab/regimes.hpp"

namespace tttlab {

struct TttConfig {
    int steps = 20;
    OptimizerConfig optimizer;  // SGD lr 5e-3, momentum 0.9, weight decay 0.2
    int masked_copies = 32;     // independently masked copies of x per step
    double mask_ratio = 0.75;
    bool train_decoder = true;
    enum class SslTask { Mae, Rotation } ssl_task = SslTask::Mae;

    TttConfig() {
        optimizer.kind = OptimizerConfig::Kind::SgdMomentum;
        optimizer.learning_rate = 5e-3;
        optimizer.momentum = 0.9;
        optimizer.weight_decay = 0.2;
    }

    void validate() const {
        if (steps < 0) throw ConfigError("ttt: steps < 0");
        if (masked_copies < 1) throw ConfigError("ttt: masked-copies < 1");
        if (mask_ratio < 0.0 || mask_ratio >= 1.0) throw ConfigError("ttt: mask-ratio outside [0,1)");
        optimizer.validate();
    }
};

// Per-episode record; entry i describes the state after i update steps
// (entry 0 = before adaptation). loss_recon is the ssl batch loss at that
// state; loss_main/pred come from the unmasked input through h0 and are
// instrumentation only.
struct EpisodeTrace {
    std::vector<double> loss_recon;
    std::vector<double> loss_main;
    std::vector<int> pred;
    int final_pred = -1;
    double wall_time_seconds = 0.0;
    uint64_t rng_draws = 0;
};

// Frozen f0, g0, h0 plus fresh optimizer-state templates. Every episode
// starts from a clone of this and never mutates it.
struct ModelSnapshot {
    MaeModel<float> mae;
    HeadModel<float> head;
    ParamSet<float> rotation_head;  // empty unless the rotation variant is used

    uint64_t hash() const {
        uint64_t h = mae.params.state_hash();
        h ^= head.params.state_hash() + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        h ^= rotation_head.state_hash() + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        return h;
    }
};

struct AdaptResult {
    MaeModel<float> adapted;            // f_x, g_x
    ParamSet<float> adapted_rotation;   // rotation variant only
    EpisodeTrace trace;
};

// Eq.-2-style per-input adaptation: cfg.steps gradient steps, each on
// masked_copies independently masked copies of the same x. h0 is never
// updated; with train_decoder off the decoder gradients are discarded while
// the mask token and class token keep training.
AdaptResult ttt_adapt(const ModelSnapshot& snapshot, const Tensor<float>& x, const TttConfig& cfg,
                      uint64_t seed, int label = -1);

// Adapt, predict on the unmasked input with h0 ∘ f_x, then discard f_x, g_x.
std::pair<int, EpisodeTrace> ttt_predict(const ModelSnapshot& snapshot, const Tensor<float>& x,
                                         const TttConfig& cfg, uint64_t seed, int label = -1);

struct TttEvalResult {
    std::vector<double> accuracy_vs_step;  // length steps+1
    std::vector<EpisodeTrace> traces;      // one per test input, input order
    std::vector<std::string> ids;
    std::vector<int> labels;
    double wall_time_seconds = 0.0;
};

// Independent episodes over a test set; per-episode seeds derive from the
// stable sample ids, so results are invariant to test-set order.
TttEvalResult evaluate_ttt(const ModelSnapshot& snapshot, const Dataset& test_set,
                           const TttConfig& cfg, uint64_t master_seed);

// Cross-entropy of predicting a sampled 90-degree rotation of x.
int rotation_ssl_loss(Tape<float>& tape, Leased<float>& L_enc, Leased<float>& L_rot,
                      const MaeConfig& cfg, const Tensor<float>& x, Xoshiro256ss& rng);

// All-rotations mode: the four rotations of x tile the batch exactly once.
int rotation_ssl_loss_all(Tape<float>& tape, Leased<float>& L_enc, Leased<float>& L_rot,
                          const MaeConfig& cfg, const Tensor<float>& x);

}  // namespace tttlab
