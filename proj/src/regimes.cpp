#include "tttlab/regimes.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "tttlab/parallel.hpp"

namespace tttlab {

namespace {

constexpr uint64_t kTagShuffle = 0x5348;  // stream tags
constexpr uint64_t kTagAugment = 0x4155;
constexpr uint64_t kTagMask = 0x4d41;
constexpr uint64_t kTagRotation = 0x524f;

double cosine_lr(double base, int64_t step, int64_t total_steps) {
    if (total_steps <= 1) return base;
    return base * 0.5 * (1.0 + std::cos(M_PI * double(step) / double(total_steps)));
}

struct BatchItem {
    Tensor<float> image;
    int label = 0;
    MaskSpec mask;  // reconstruction branch only
    int rotation = -1;
};

// Evaluates per-item losses on separate tapes in parallel, then folds
// gradients and scalars in item order.
struct BatchOutcome {
    GradMap<float> grads;
    double loss_main = 0.0;
    double loss_recon = 0.0;
    int correct = 0;
};

}  // namespace

RegimeConfig default_pretrain_config() {
    RegimeConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 64;
    cfg.optimizer.kind = OptimizerConfig::Kind::AdamW;
    cfg.optimizer.learning_rate = 1e-3;
    cfg.optimizer.weight_decay = 0.05;
    cfg.cosine_lr = true;
    return cfg;
}

RegimeConfig default_head_config() {
    RegimeConfig cfg = default_pretrain_config();
    cfg.epochs = 15;
    return cfg;
}

MetricsLog pretrain_mae(MaeModel<float>& model, const Dataset& dataset, const RegimeConfig& cfg,
                        uint64_t seed) {
    cfg.validate();
    audit_training_transforms(cfg.augment);
    if (dataset.empty()) throw ConfigError("pretrain: empty dataset");

    Xoshiro256ss shuffle_rng(derive_seed(seed, kTagShuffle));
    Xoshiro256ss aug_rng(derive_seed(seed, kTagAugment));
    Xoshiro256ss mask_rng(derive_seed(seed, kTagMask));

    const int n = static_cast<int>(dataset.size());
    const int batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t total_steps = int64_t(cfg.epochs) * batches_per_epoch;
    int64_t step = 0;

    MetricsLog log;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int batch_count = 0;
        for (int base = 0; base < n; base += cfg.batch_size) {
            const int bsz = std::min(cfg.batch_size, n - base);
            std::vector<BatchItem> items(bsz);
            for (int i = 0; i < bsz; ++i) {
                const Sample& s = dataset.samples[order[base + i]];
                items[i].image = apply_augment(s.image, cfg.augment, aug_rng);
                items[i].mask =
                    sample_mask(model.cfg.num_patches(), model.cfg.mask_ratio, mask_rng);
            }

            std::vector<std::unique_ptr<Tape<float>>> tapes(bsz);
            std::vector<Leased<float>> leases(bsz);
            std::vector<double> losses(bsz);
            parallel_for(bsz, [&](int i) {
                tapes[i] = std::make_unique<Tape<float>>();
                leases[i] = Leased<float>{tapes[i].get(), &model.params, {}};
                const int loss = mae_loss_masked(*tapes[i], leases[i], model.cfg, items[i].image,
                                                 items[i].mask, model.cfg.normalize_pixels);
                losses[i] = tapes[i]->value(loss).data[0];
                tapes[i]->backward(loss);
            });

            GradMap<float> grads;
            double batch_loss = 0.0;
            for (int i = 0; i < bsz; ++i) {
                accumulate_grads(grads, leases[i], *tapes[i]);
                batch_loss += losses[i];
            }
            scale_grads(grads, 1.0f / float(bsz));
            batch_loss /= bsz;
            if (!std::isfinite(batch_loss))
                throw NumericError("pretraining diverged at epoch " + std::to_string(epoch));

            OptimizerConfig opt = cfg.optimizer;
            if (cfg.cosine_lr) opt.learning_rate = cosine_lr(opt.learning_rate, step, total_steps);
            optimizer_step(model.params, grads, opt);
            ++step;
            epoch_loss += batch_loss;
            ++batch_count;
        }
        log.push_back({epoch, "train", std::nan(""), epoch_loss / batch_count, std::nan("")});
    }
    return log;
}

namespace {

// One supervised step item: main-task loss, optional reconstruction branch.
struct SupervisedItemResult {
    double loss_main = 0.0;
    double loss_recon = std::nan("");
    bool correct = false;
};

}  // namespace

namespace detail {

MetricsLog train_supervised(MaeModel<float>& model, HeadModel<float>& head, const Dataset& dataset,
                            const RegimeConfig& cfg, uint64_t seed, float ls_weight) {
    cfg.validate();
    audit_training_transforms(cfg.augment);
    if (dataset.empty()) throw ConfigError("train: empty dataset");
    const bool joint = ls_weight != 0.0f;

    Xoshiro256ss shuffle_rng(derive_seed(seed, kTagShuffle));
    Xoshiro256ss aug_rng(derive_seed(seed, kTagAugment));
    Xoshiro256ss mask_rng(derive_seed(seed, kTagMask));

    const int n = static_cast<int>(dataset.size());
    const int batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t total_steps = int64_t(cfg.epochs) * batches_per_epoch;
    int64_t step = 0;

    MetricsLog log;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_main = 0.0, epoch_recon = 0.0;
        int batch_count = 0, correct = 0, seen = 0;
        for (int base = 0; base < n; base += cfg.batch_size) {
            const int bsz = std::min(cfg.batch_size, n - base);
            std::vector<BatchItem> items(bsz);
            for (int i = 0; i < bsz; ++i) {
                const Sample& s = dataset.samples[order[base + i]];
                items[i].image = apply_augment(s.image, cfg.augment, aug_rng);
                items[i].label = s.label;
                if (joint)
                    items[i].mask =
                        sample_mask(model.cfg.num_patches(), model.cfg.mask_ratio, mask_rng);
            }

            std::vector<std::unique_ptr<Tape<float>>> tapes(bsz);
            std::vector<Leased<float>> model_leases(bsz), head_leases(bsz);
            std::vector<SupervisedItemResult> results(bsz);
            parallel_for(bsz, [&](int i) {
                tapes[i] = std::make_unique<Tape<float>>();
                Tape<float>& t = *tapes[i];
                model_leases[i] = Leased<float>{&t, &model.params, {}};
                head_leases[i] = Leased<float>{&t, &head.params, {}};
                const Tensor<float> patches = patchify(items[i].image, model.cfg.patch_size);
                const int tokens = encode_all(t, model_leases[i], model.cfg, patches);
                const int logits = head_forward(t, head_leases[i], head.cfg, tokens);
                int loss = op_softmax_xent_mean(t, logits, {items[i].label});
                results[i].loss_main = t.value(loss).data[0];
                const auto& lg = t.value(logits).data;
                results[i].correct =
                    int(std::max_element(lg.begin(), lg.end()) - lg.begin()) == items[i].label;
                if (joint) {
                    const int recon = mae_loss_masked(t, model_leases[i], model.cfg,
                                                      items[i].image, items[i].mask,
                                                      model.cfg.normalize_pixels);
                    results[i].loss_recon = t.value(recon).data[0];
                    loss = op_add(t, loss, op_scale(t, recon, ls_weight));
                }
                t.backward(loss);
            });

            GradMap<float> model_grads, head_grads;
            double batch_main = 0.0, batch_recon = 0.0;
            for (int i = 0; i < bsz; ++i) {
                accumulate_grads(model_grads, model_leases[i], *tapes[i]);
                accumulate_grads(head_grads, head_leases[i], *tapes[i]);
                batch_main += results[i].loss_main;
                if (joint) batch_recon += results[i].loss_recon;
                correct += results[i].correct;
            }
            seen += bsz;
            scale_grads(model_grads, 1.0f / float(bsz));
            scale_grads(head_grads, 1.0f / float(bsz));
            batch_main /= bsz;
            batch_recon /= bsz;
            if (!std::isfinite(batch_main) || (joint && !std::isfinite(batch_recon)))
                throw NumericError("training diverged at epoch " + std::to_string(epoch));

            if (!joint) {
                // fine-tuning scope: encoder + head only, decoder untouched
                for (auto it = model_grads.begin(); it != model_grads.end();)
                    it = model.is_encoder_param(it->first) ? std::next(it)
                                                           : model_grads.erase(it);
            }

            OptimizerConfig opt = cfg.optimizer;
            if (cfg.cosine_lr) opt.learning_rate = cosine_lr(opt.learning_rate, step, total_steps);
            optimizer_step(model.params, model_grads, opt);
            optimizer_step(head.params, head_grads, opt);
            ++step;
            epoch_main += batch_main;
            epoch_recon += batch_recon;
            ++batch_count;
        }
        log.push_back({epoch, "train", epoch_main / batch_count,
                       joint ? epoch_recon / batch_count : std::nan(""),
                       double(correct) / double(seen)});
    }
    return log;
}

}  // namespace detail

MetricsLog train_probe(const MaeModel<float>& frozen_encoder, HeadModel<float>& head,
                       const Dataset& dataset, const RegimeConfig& cfg, uint64_t seed) {
    cfg.validate();
    audit_training_transforms(cfg.augment);
    if (dataset.empty()) throw ConfigError("probe: empty dataset");

    Xoshiro256ss shuffle_rng(derive_seed(seed, kTagShuffle));
    Xoshiro256ss aug_rng(derive_seed(seed, kTagAugment));

    const int n = static_cast<int>(dataset.size());
    const int batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t total_steps = int64_t(cfg.epochs) * batches_per_epoch;
    int64_t step = 0;

    MetricsLog log;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int batch_count = 0, correct = 0, seen = 0;
        for (int base = 0; base < n; base += cfg.batch_size) {
            const int bsz = std::min(cfg.batch_size, n - base);
            std::vector<BatchItem> items(bsz);
            for (int i = 0; i < bsz; ++i) {
                const Sample& s = dataset.samples[order[base + i]];
                items[i].image = apply_augment(s.image, cfg.augment, aug_rng);
                items[i].label = s.label;
            }

            std::vector<std::unique_ptr<Tape<float>>> tapes(bsz);
            std::vector<Leased<float>> head_leases(bsz);
            std::vector<SupervisedItemResult> results(bsz);
            parallel_for(bsz, [&](int i) {
                tapes[i] = std::make_unique<Tape<float>>();
                Tape<float>& t = *tapes[i];
                Leased<float> enc_lease{&t, &frozen_encoder.params, {}};
                head_leases[i] = Leased<float>{&t, &head.params, {}};
                const Tensor<float> patches = patchify(items[i].image, frozen_encoder.cfg.patch_size);
                // frozen features: the graph is cut so no encoder gradients exist
                const int tokens =
                    op_detach(t, encode_all(t, enc_lease, frozen_encoder.cfg, patches));
                const int logits = head_forward(t, head_leases[i], head.cfg, tokens);
                const int loss = op_softmax_xent_mean(t, logits, {items[i].label});
                results[i].loss_main = t.value(loss).data[0];
                const auto& lg = t.value(logits).data;
                results[i].correct =
                    int(std::max_element(lg.begin(), lg.end()) - lg.begin()) == items[i].label;
                t.backward(loss);
            });

            GradMap<float> head_grads;
            double batch_loss = 0.0;
            for (int i = 0; i < bsz; ++i) {
                accumulate_grads(head_grads, head_leases[i], *tapes[i]);
                batch_loss += results[i].loss_main;
                correct += results[i].correct;
            }
            seen += bsz;
            scale_grads(head_grads, 1.0f / float(bsz));
            batch_loss /= bsz;
            if (!std::isfinite(batch_loss))
                throw NumericError("probe training diverged at epoch " + std::to_string(epoch));

            OptimizerConfig opt = cfg.optimizer;
            if (cfg.cosine_lr) opt.learning_rate = cosine_lr(opt.learning_rate, step, total_steps);
            optimizer_step(head.params, head_grads, opt);
            ++step;
            epoch_loss += batch_loss;
            ++batch_count;
        }
        log.push_back({epoch, "train", epoch_loss / batch_count, std::nan(""),
                       double(correct) / double(seen)});
    }
    return log;
}

MetricsLog train_finetune(MaeModel<float>& model, HeadModel<float>& head, const Dataset& dataset,
                          const RegimeConfig& cfg, uint64_t seed) {
    return detail::train_supervised(model, head, dataset, cfg, seed, 0.0f);
}

MetricsLog train_joint(MaeModel<float>& model, HeadModel<float>& head, const Dataset& dataset,
                       const RegimeConfig& cfg, uint64_t seed) {
    return detail::train_supervised(model, head, dataset, cfg, seed, 1.0f);
}

ParamSet<float> train_rotation_head(const MaeModel<float>& frozen_encoder, const Dataset& dataset,
                                    int epochs, uint64_t seed) {
    if (dataset.empty()) throw ConfigError("rotation head: empty dataset");
    ParamSet<float> rot = init_rotation_head<float>(frozen_encoder.cfg.encoder_dim, seed);
    Xoshiro256ss shuffle_rng(derive_seed(seed, kTagShuffle));
    Xoshiro256ss rot_rng(derive_seed(seed, kTagRotation));

    const int n = static_cast<int>(dataset.size());
    const int batch_size = 64;
    OptimizerConfig opt;
    opt.kind = OptimizerConfig::Kind::AdamW;
    opt.learning_rate = 1e-3;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (int base = 0; base < n; base += batch_size) {
            const int bsz = std::min(batch_size, n - base);
            std::vector<BatchItem> items(bsz);
            for (int i = 0; i < bsz; ++i) {
                items[i].rotation = static_cast<int>(rot_rng.bounded(4));
                items[i].image =
                    rot90(dataset.samples[order[base + i]].image, items[i].rotation);
            }
            std::vector<std::unique_ptr<Tape<float>>> tapes(bsz);
            std::vector<Leased<float>> rot_leases(bsz);
            parallel_for(bsz, [&](int i) {
                tapes[i] = std::make_unique<Tape<float>>();
                Tape<float>& t = *tapes[i];
                Leased<float> enc_lease{&t, &frozen_encoder.params, {}};
                rot_leases[i] = Leased<float>{&t, &rot, {}};
                const Tensor<float> patches = patchify(items[i].image, frozen_encoder.cfg.patch_size);
                const int tokens =
                    op_detach(t, encode_all(t, enc_lease, frozen_encoder.cfg, patches));
                const int logits = rotation_head_forward(t, rot_leases[i], tokens);
                t.backward(op_softmax_xent_mean(t, logits, {items[i].rotation}));
            });
            GradMap<float> grads;
            for (int i = 0; i < bsz; ++i) accumulate_grads(grads, rot_leases[i], *tapes[i]);
            scale_grads(grads, 1.0f / float(bsz));
            optimizer_step(rot, grads, opt);
        }
    }
    return rot;
}

double eval_accuracy(const MaeModel<float>& model, const HeadModel<float>& head,
                     const Dataset& dataset) {
    if (dataset.empty()) throw ConfigError("eval: empty dataset");
    const int n = static_cast<int>(dataset.size());
    std::vector<char> correct(n, 0);
    parallel_for(n, [&](int i) {
        Tape<float> t;
        Leased<float> Lm{&t, &model.params, {}};
        Leased<float> Lh{&t, &head.params, {}};
        const Tensor<float> patches = patchify(dataset.samples[i].image, model.cfg.patch_size);
        const int tokens = encode_all(t, Lm, model.cfg, patches);
        const int logits = head_forward(t, Lh, head.cfg, tokens);
        const auto& lg = t.value(logits).data;
        correct[i] = int(std::max_element(lg.begin(), lg.end()) - lg.begin()) ==
                     dataset.samples[i].label;
    });
    int sum = 0;
    for (char c : correct) sum += c;
    return double(sum) / double(n);
}

void write_metrics_csv(const std::string& path, const MetricsLog& log,
                       const std::string& config_echo) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "# tttlab " << kVersion << "\n";
    if (!config_echo.empty()) f << "# config: " << config_echo << "\n";
    f << "epoch,split,loss_main,loss_recon,accuracy\n";
    char buf[64];
    auto fmt = [&](double v) -> std::string {
        if (std::isnan(v)) return "";
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return buf;
    };
    for (const auto& row : log)
        f << row.epoch << "," << row.split << "," << fmt(row.loss_main) << ","
          << fmt(row.loss_recon) << "," << fmt(row.accuracy) << "\n";
    if (!f) throw IoError("write failed for '" + path + "'");
}

}  // namespace tttlab
