#include "tttlab/ttt.hpp"

#include <chrono>
#include <cmath>
#include <memory>

#include "tttlab/parallel.hpp"

namespace tttlab {

namespace {

// Unmasked prediction through h0: returns (pred, main loss or NaN).
std::pair<int, double> main_eval(const MaeModel<float>& mae, const HeadModel<float>& head,
                                 const Tensor<float>& x, int label) {
    Tape<float> t;
    Leased<float> Lm{&t, &mae.params, {}};
    Leased<float> Lh{&t, &head.params, {}};
    const Tensor<float> patches = patchify(x, mae.cfg.patch_size);
    const int tokens = encode_all(t, Lm, mae.cfg, patches);
    const int logits = head_forward(t, Lh, head.cfg, tokens);
    const auto& lg = t.value(logits).data;
    const int pred = int(std::max_element(lg.begin(), lg.end()) - lg.begin());
    double loss = std::nan("");
    if (label >= 0) loss = t.value(op_softmax_xent_mean(t, logits, {label})).data[0];
    return {pred, loss};
}

// One ssl batch: builds per-copy graphs, returns the mean loss, and (when
// `learn` is true) accumulates gradients into `grads` in copy order.
double ssl_batch(const MaeModel<float>& mae, const ParamSet<float>* rot_params,
                 const Tensor<float>& x, const TttConfig& cfg, Xoshiro256ss& rng,
                 GradMap<float>* grads) {
    if (cfg.ssl_task == TttConfig::SslTask::Rotation) {
        Tape<float> t;
        Leased<float> Lm{&t, &mae.params, {}};
        Leased<float> Lr{&t, rot_params, {}};
        const int loss = rotation_ssl_loss_all(t, Lm, Lr, mae.cfg, x);
        const double value = t.value(loss).data[0];
        if (grads) {
            t.backward(loss);
            accumulate_grads(*grads, Lm, t);
            accumulate_grads(*grads, Lr, t);
        }
        return value;
    }

    const int copies = cfg.masked_copies;
    std::vector<MaskSpec> masks;
    masks.reserve(copies);
    for (int i = 0; i < copies; ++i)
        masks.push_back(sample_mask(mae.cfg.num_patches(), cfg.mask_ratio, rng));

    std::vector<std::unique_ptr<Tape<float>>> tapes(copies);
    std::vector<Leased<float>> leases(copies);
    std::vector<double> losses(copies);
    parallel_for(copies, [&](int i) {
        tapes[i] = std::make_unique<Tape<float>>();
        leases[i] = Leased<float>{tapes[i].get(), &mae.params, {}};
        const int loss = mae_loss_masked(*tapes[i], leases[i], mae.cfg, x, masks[i],
                                         mae.cfg.normalize_pixels);
        losses[i] = tapes[i]->value(loss).data[0];
        if (grads) tapes[i]->backward(loss);
    });

    double mean = 0.0;
    for (int i = 0; i < copies; ++i) {
        mean += losses[i];
        if (grads) accumulate_grads(*grads, leases[i], *tapes[i]);
    }
    if (grads) scale_grads(*grads, 1.0f / float(copies));
    return mean / copies;
}

}  // namespace

int rotation_ssl_loss(Tape<float>& t, Leased<float>& L_enc, Leased<float>& L_rot,
                      const MaeConfig& cfg, const Tensor<float>& x, Xoshiro256ss& rng) {
    const int r = static_cast<int>(rng.bounded(4));
    const Tensor<float> patches = patchify(rot90(x, r), cfg.patch_size);
    const int tokens = encode_all(t, L_enc, cfg, patches);
    const int logits = rotation_head_forward(t, L_rot, tokens);
    return op_softmax_xent_mean(t, logits, {r});
}

int rotation_ssl_loss_all(Tape<float>& t, Leased<float>& L_enc, Leased<float>& L_rot,
                          const MaeConfig& cfg, const Tensor<float>& x) {
    std::vector<int> losses;
    for (int r = 0; r < 4; ++r) {
        const Tensor<float> patches = patchify(rot90(x, r), cfg.patch_size);
        const int tokens = encode_all(t, L_enc, cfg, patches);
        const int logits = rotation_head_forward(t, L_rot, tokens);
        losses.push_back(op_softmax_xent_mean(t, logits, {r}));
    }
    return op_mean_of(t, losses);
}

AdaptResult ttt_adapt(const ModelSnapshot& snapshot, const Tensor<float>& x, const TttConfig& cfg,
                      uint64_t seed, int label) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const bool rotation = cfg.ssl_task == TttConfig::SslTask::Rotation;
    if (rotation && snapshot.rotation_head.size() == 0)
        throw ConfigError("rotation ssl requested but snapshot has no rotation head");

    AdaptResult res;
    res.adapted = snapshot.mae;                   // clone, fresh from f0/g0
    res.adapted_rotation = snapshot.rotation_head;
    Xoshiro256ss rng(seed);

    EpisodeTrace& trace = res.trace;
    trace.loss_recon.resize(cfg.steps + 1);
    trace.loss_main.resize(cfg.steps + 1);
    trace.pred.resize(cfg.steps + 1);

    std::tie(trace.pred[0], trace.loss_main[0]) = main_eval(res.adapted, snapshot.head, x, label);

    for (int step = 1; step <= cfg.steps; ++step) {
        GradMap<float> grads;
        trace.loss_recon[step - 1] =
            ssl_batch(res.adapted, &res.adapted_rotation, x, cfg, rng, &grads);

        if (!cfg.train_decoder) {
            // decoder gradients discarded; mask/class tokens keep training
            for (auto it = grads.begin(); it != grads.end();)
                it = res.adapted.is_decoder_param(it->first) ? grads.erase(it) : std::next(it);
        }

        GradMap<float> rot_grads;
        if (rotation)
            for (auto it = grads.begin(); it != grads.end();)
                if (it->first.rfind("rot.", 0) == 0) {
                    rot_grads.emplace(it->first, std::move(it->second));
                    it = grads.erase(it);
                } else {
                    ++it;
                }

        optimizer_step(res.adapted.params, grads, cfg.optimizer);
        if (rotation) optimizer_step(res.adapted_rotation, rot_grads, cfg.optimizer);

        std::tie(trace.pred[step], trace.loss_main[step]) =
            main_eval(res.adapted, snapshot.head, x, label);
    }

    // ssl loss at the final state, fresh batch
    trace.loss_recon[cfg.steps] =
        ssl_batch(res.adapted, &res.adapted_rotation, x, cfg, rng, nullptr);

    trace.final_pred = trace.pred[cfg.steps];
    trace.rng_draws = rng.draw_count();
    trace.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

std::pair<int, EpisodeTrace> ttt_predict(const ModelSnapshot& snapshot, const Tensor<float>& x,
                                         const TttConfig& cfg, uint64_t seed, int label) {
    AdaptResult res = ttt_adapt(snapshot, x, cfg, seed, label);
    // f_x and g_x go out of scope here: the caller sees only the snapshot
    return {res.trace.final_pred, std::move(res.trace)};
}

TttEvalResult evaluate_ttt(const ModelSnapshot& snapshot, const Dataset& test_set,
                           const TttConfig& cfg, uint64_t master_seed) {
    if (test_set.empty()) throw ConfigError("evaluate_ttt: empty test set");
    const auto t0 = std::chrono::steady_clock::now();
    const int n = static_cast<int>(test_set.size());

    TttEvalResult out;
    out.traces.resize(n);
    out.ids.resize(n);
    out.labels.resize(n);
    // Episode seeds derive from stable sample ids: permuting the test set
    // permutes results without changing any individual trace.
    parallel_for(n, [&](int i) {
        const Sample& s = test_set.samples[i];
        const uint64_t seed = derive_seed(master_seed, fnv1a64(s.id));
        out.traces[i] = ttt_adapt(snapshot, s.image, cfg, seed, s.label).trace;
        out.ids[i] = s.id;
        out.labels[i] = s.label;
    });

    out.accuracy_vs_step.assign(cfg.steps + 1, 0.0);
    for (int i = 0; i < n; ++i)
        for (int s = 0; s <= cfg.steps; ++s)
            out.accuracy_vs_step[s] += out.traces[i].pred[s] == out.labels[i] ? 1.0 : 0.0;
    for (double& a : out.accuracy_vs_step) a /= n;
    out.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace tttlab
