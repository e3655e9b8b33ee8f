#pragma once

#include "tttlab/augment.hpp"
#include "tttlab/heads.hpp"

namespace tttlab {

struct RegimeConfig {
    enum class Regime { Probe, FineTune, Joint };
    Regime regime = Regime::Probe;
    int epochs = 15;
    int batch_size = 64;
    OptimizerConfig optimizer;  // AdamW lr 1e-3 by default, see defaults below
    AugmentConfig augment;
    bool cosine_lr = true;  // decays to zero by the last step

    void validate() const {
        if (epochs < 0) throw ConfigError("regime: epochs < 0");
        if (batch_size < 1) throw ConfigError("regime: batch-size < 1");
        optimizer.validate();
    }
};

// Pretraining budget: 40 epochs, batch 64, AdamW lr 1e-3, cosine decay to 0.
RegimeConfig default_pretrain_config();
// Head training budget: 15 epochs, batch 64, AdamW lr 1e-3, cosine decay.
RegimeConfig default_head_config();

struct EpochMetrics {
    int epoch;
    std::string split;
    double loss_main;   // NaN when not applicable
    double loss_recon;  // NaN when not applicable
    double accuracy;    // NaN when not applicable
};

using MetricsLog = std::vector<EpochMetrics>;

// MAE pretraining on the source distribution: returns f0, g0 in place.
MetricsLog pretrain_mae(MaeModel<float>& model, const Dataset& dataset, const RegimeConfig& cfg,
                        uint64_t seed);

// Eq.-1-style probing: only the head trains, the encoder stays frozen.
MetricsLog train_probe(const MaeModel<float>& frozen_encoder, HeadModel<float>& head,
                       const Dataset& dataset, const RegimeConfig& cfg, uint64_t seed);

// End-to-end supervised fine-tuning of encoder + head; decoder untouched.
MetricsLog train_finetune(MaeModel<float>& model, HeadModel<float>& head, const Dataset& dataset,
                          const RegimeConfig& cfg, uint64_t seed);

// Joint training: main loss + reconstruction loss (unweighted sum) on the
// same batch, fresh random masks on the reconstruction branch.
MetricsLog train_joint(MaeModel<float>& model, HeadModel<float>& head, const Dataset& dataset,
                       const RegimeConfig& cfg, uint64_t seed);

namespace detail {
// Shared supervised loop. ls_weight = 0 skips the reconstruction branch
// entirely (fine-tuning); ls_weight > 0 adds it and opens the decoder group.
MetricsLog train_supervised(MaeModel<float>& model, HeadModel<float>& head, const Dataset& dataset,
                            const RegimeConfig& cfg, uint64_t seed, float ls_weight);
}  // namespace detail

// Rotation-prediction head trained on frozen encoder features (used by the
// rotation TTT comparison variant).
ParamSet<float> train_rotation_head(const MaeModel<float>& frozen_encoder, const Dataset& dataset,
                                    int epochs, uint64_t seed);

// Fixed-model accuracy of head ∘ encoder over a dataset.
double eval_accuracy(const MaeModel<float>& model, const HeadModel<float>& head,
                     const Dataset& dataset);

void write_metrics_csv(const std::string& path, const MetricsLog& log,
                       const std::string& config_echo);

}  // namespace tttlab
