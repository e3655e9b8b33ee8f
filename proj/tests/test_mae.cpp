#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "tttlab/mae.hpp"

using namespace tttlab;
using tttlab::testing::gradcheck;
using tttlab::testing::random_tensor;

namespace {

Tensor<float> random_image(int c, int h, int w, uint64_t seed) {
    Xoshiro256ss rng(seed);
    Tensor<float> img({c, h, w});
    for (float& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

MaeConfig micro_config() {
    // 2-patch configuration over an 8x16 image, one 8x8 patch masked
    MaeConfig cfg;
    cfg.image_size = 8;
    cfg.image_width = 16;
    cfg.channels = 1;
    cfg.patch_size = 8;
    cfg.encoder_dim = 8;
    cfg.encoder_depth = 1;
    cfg.decoder_dim = 8;
    cfg.decoder_depth = 1;
    cfg.heads = 2;
    cfg.mask_ratio = 0.5;
    return cfg;
}

}  // namespace

TEST_CASE("patchify: 1x32x32 with patch 8 gives 16 patches of 64 values") {
    const Tensor<float> img = random_image(1, 32, 32, 1);
    const Tensor<float> p = patchify(img, 8);
    CHECK(p.shape == std::vector<int>{16, 64});
}

TEST_CASE("patchify of a constant image yields constant patches") {
    const Tensor<float> img = Tensor<float>::full({1, 32, 32}, 0.37f);
    const Tensor<float> p = patchify(img, 8);
    for (float v : p.data) CHECK(v == 0.37f);
}

TEST_CASE("unpatchify inverts patchify bit-exactly") {
    const Tensor<float> img = random_image(2, 16, 24, 2);
    const Tensor<float> p = patchify(img, 8);
    const Tensor<float> back = unpatchify(p, 2, 16, 24);
    CHECK(back.shape == img.shape);
    CHECK(back.data == img.data);
}

TEST_CASE("patchify rejects non-divisible extents") {
    const Tensor<float> img = random_image(1, 30, 32, 3);
    CHECK_THROWS_AS(patchify(img, 8), ShapeError);
}

TEST_CASE("mask counts are exact for the ablation ratios and round half to even") {
    CHECK(mask_count(16, 0.5) == 8);
    CHECK(mask_count(16, 0.75) == 12);
    CHECK(mask_count(16, 0.9) == 14);  // 14.4 rounds down
    CHECK(mask_count(2, 0.75) == 2);   // 1.5 rounds to even 2
    CHECK(mask_count(6, 0.75) == 4);   // 4.5 rounds to even 4
    CHECK(mask_count(2, 0.25) == 0);   // 0.5 rounds to even 0
    CHECK_THROWS_AS(mask_count(16, 1.0), ConfigError);
    CHECK_THROWS_AS(mask_count(16, -0.1), ConfigError);
}

TEST_CASE("sample_mask: exact sizes, sorted unique indices") {
    for (double ratio : {0.5, 0.75, 0.9}) {
        for (int total : {16, 32, 64}) {
            Xoshiro256ss rng(99);
            const MaskSpec m = sample_mask(total, ratio, rng);
            CHECK(static_cast<int>(m.masked.size()) == mask_count(total, ratio));
            for (size_t i = 1; i < m.masked.size(); ++i) CHECK(m.masked[i] > m.masked[i - 1]);
            if (!m.masked.empty()) CHECK(m.masked.back() < total);
        }
    }
}

TEST_CASE("sample_mask with ratio 0 is empty") {
    Xoshiro256ss rng(1);
    CHECK(sample_mask(16, 0.0, rng).masked.empty());
}

TEST_CASE("golden mask for seed 42, total 16, ratio 0.75") {
    // Frozen output of Fisher-Yates under the spec PRNG (independent
    // reference implementation, run once).
    Xoshiro256ss rng(42);
    const MaskSpec m = sample_mask(16, 0.75, rng);
    CHECK(m.masked == std::vector<int>{0, 2, 3, 4, 6, 7, 8, 10, 11, 13, 14, 15});
    CHECK(m.visible() == std::vector<int>{1, 5, 9, 12});
}

TEST_CASE("encoder sequence lengths: visible patches plus class token") {
    const MaeConfig cfg;  // 16 patches
    MaeModel<float> model = MaeModel<float>::init(cfg, 5);
    const Tensor<float> patches = patchify(random_image(1, 32, 32, 6), 8);

    Xoshiro256ss rng(42);
    const MaskSpec m75 = sample_mask(16, 0.75, rng);
    Tape<float> t;
    Leased<float> L{&t, &model.params, {}};
    CHECK(t.value(encode_visible(t, L, cfg, patches, m75)).shape[0] == 5);

    Tape<float> t2;
    Leased<float> L2{&t2, &model.params, {}};
    CHECK(t2.value(encode_all(t2, L2, cfg, patches)).shape[0] == 17);
}

TEST_CASE("visible-only encoding: NaN-poisoned masked patches change nothing") {
    const MaeConfig cfg;
    MaeModel<float> model = MaeModel<float>::init(cfg, 7);
    const Tensor<float> patches = patchify(random_image(1, 32, 32, 8), 8);
    Xoshiro256ss rng(42);
    const MaskSpec mask = sample_mask(16, 0.75, rng);

    Tensor<float> poisoned = patches;
    for (int idx : mask.masked)
        for (int j = 0; j < poisoned.shape[1]; ++j) poisoned.at(idx, j) = std::nanf("");

    Tape<float> ta;
    Leased<float> La{&ta, &model.params, {}};
    const Tensor<float> clean = ta.value(encode_visible(ta, La, cfg, patches, mask));
    Tape<float> tb;
    Leased<float> Lb{&tb, &model.params, {}};
    const Tensor<float> dirty = tb.value(encode_visible(tb, Lb, cfg, poisoned, mask));
    CHECK(clean.data == dirty.data);  // bit-identical
}

TEST_CASE("transformer block is permutation-equivariant over tokens") {
    Xoshiro256ss rng(20);
    ParamSet<double> ps;
    add_block_params(ps, "blk.", 8, 3);
    const Tensor<double> x = random_tensor<double>({5, 8}, rng);
    Tensor<double> xp = x;  // swap token rows 1 and 3
    for (int j = 0; j < 8; ++j) std::swap(xp.at(1, j), xp.at(3, j));

    Tape<double> ta;
    Leased<double> La{&ta, &ps, {}};
    const Tensor<double> y = ta.value(transformer_block(ta, La, "blk.", ta.constant(x), 2));
    Tape<double> tb;
    Leased<double> Lb{&tb, &ps, {}};
    const Tensor<double> yp = tb.value(transformer_block(tb, Lb, "blk.", tb.constant(xp), 2));

    for (int i = 0; i < 5; ++i) {
        const int src = i == 1 ? 3 : i == 3 ? 1 : i;
        for (int j = 0; j < 8; ++j)
            CHECK(yp.at(i, j) == doctest::Approx(y.at(src, j)).epsilon(1e-12));
    }
}

TEST_CASE("decode_full covers every patch position with the right shape") {
    const MaeConfig cfg;
    MaeModel<float> model = MaeModel<float>::init(cfg, 9);
    const Tensor<float> patches = patchify(random_image(1, 32, 32, 10), 8);
    Xoshiro256ss rng(42);
    const MaskSpec mask = sample_mask(16, 0.75, rng);
    Tape<float> t;
    Leased<float> L{&t, &model.params, {}};
    const int latents = encode_visible(t, L, cfg, patches, mask);
    const int pred = decode_full(t, L, cfg, latents, mask);
    CHECK(t.value(pred).shape == std::vector<int>{16, 64});
}

TEST_CASE("zero-initialized model reconstructs identical patches everywhere") {
    const MaeConfig cfg;
    MaeModel<float> model = MaeModel<float>::init(cfg, 11);
    for (auto& [name, e] : model.params) std::fill(e.value.data.begin(), e.value.data.end(), 0.0f);
    const Tensor<float> patches = patchify(random_image(1, 32, 32, 12), 8);
    Xoshiro256ss rng(42);
    const MaskSpec mask = sample_mask(16, 0.75, rng);
    Tape<float> t;
    Leased<float> L{&t, &model.params, {}};
    const Tensor<float> pred =
        t.value(decode_full(t, L, cfg, encode_visible(t, L, cfg, patches, mask), mask));
    for (int i = 1; i < 16; ++i)
        for (int j = 0; j < 64; ++j) CHECK(pred.at(i, j) == pred.at(0, j));
}

TEST_CASE("gradients flow into the mask token whenever patches are masked") {
    const MaeConfig cfg;
    MaeModel<float> model = MaeModel<float>::init(cfg, 13);
    const Tensor<float> img = random_image(1, 32, 32, 14);
    Tape<float> t;
    Leased<float> L{&t, &model.params, {}};
    Xoshiro256ss rng(42);
    auto [loss, mask] = mae_loss(t, L, cfg, img, 0.75, rng, true);
    t.backward(loss);
    const Tensor<float>& g = t.grad(L.ids.at("dec.mask"));
    double norm = 0;
    for (float v : g.data) norm += double(v) * v;
    CHECK(norm > 0.0);
}

TEST_CASE("reconstruction loss: perfect prediction scores zero") {
    Tape<float> t;
    Xoshiro256ss rng(15);
    Tensor<float> target({4, 6});
    for (float& v : target.data) v = static_cast<float>(rng.uniform());
    const int pred = t.constant(target);
    const MaskSpec mask({0, 2}, 4);
    CHECK(t.value(reconstruction_loss(t, pred, target, mask, false)).data[0] == 0.0f);
}

TEST_CASE("reconstruction loss: constant offset c on one masked patch gives c^2") {
    Tape<float> t;
    Tensor<float> target = Tensor<float>::full({4, 6}, 0.25f);
    Tensor<float> pred_t = target;
    for (int j = 0; j < 6; ++j) pred_t.at(2, j) += 0.3f;
    const MaskSpec mask({2}, 4);
    const float loss =
        t.value(reconstruction_loss(t, t.constant(pred_t), target, mask, false)).data[0];
    CHECK(loss == doctest::Approx(0.09).epsilon(1e-5));
}

TEST_CASE("reconstruction loss rejects an empty mask") {
    Tape<float> t;
    Tensor<float> target({4, 6});
    CHECK_THROWS_AS(reconstruction_loss(t, t.constant(target), target, MaskSpec({}, 4), false),
                    ConfigError);
}

TEST_CASE("pixel normalization survives a zero-variance patch via the epsilon guard") {
    Tape<float> t;
    Tensor<float> target = Tensor<float>::full({2, 8}, 0.5f);  // zero-variance rows
    Tensor<float> pred_t = Tensor<float>::full({2, 8}, 0.7f);
    const MaskSpec mask({1}, 2);
    const float loss =
        t.value(reconstruction_loss(t, t.constant(pred_t), target, mask, true)).data[0];
    CHECK(std::isfinite(loss));
    // the normalized constant target is exactly zero, so the loss is pred^2
    CHECK(loss == doctest::Approx(0.49).epsilon(1e-5));
}

TEST_CASE("loss locality: unmasked target patches never affect the loss") {
    Xoshiro256ss rng(16);
    Tensor<float> target({4, 6});
    for (float& v : target.data) v = static_cast<float>(rng.uniform());
    Tensor<float> pred_t({4, 6});
    for (float& v : pred_t.data) v = static_cast<float>(rng.uniform());
    const MaskSpec mask({0, 3}, 4);

    Tape<float> ta;
    const float before =
        ta.value(reconstruction_loss(ta, ta.constant(pred_t), target, mask, false)).data[0];
    Tensor<float> perturbed = target;
    for (int j = 0; j < 6; ++j) perturbed.at(1, j) += 5.0f;  // unmasked patch
    Tape<float> tb;
    const float after =
        tb.value(reconstruction_loss(tb, tb.constant(pred_t), perturbed, mask, false)).data[0];
    CHECK(before == after);
}

TEST_CASE("mae_loss is finite, positive, and bit-deterministic under a fixed seed") {
    const MaeConfig cfg;
    MaeModel<float> model = MaeModel<float>::init(cfg, 17);
    const Tensor<float> img = random_image(1, 32, 32, 18);

    auto run = [&]() {
        Tape<float> t;
        Leased<float> L{&t, &model.params, {}};
        Xoshiro256ss rng(123);
        return t.value(mae_loss(t, L, cfg, img, 0.75, rng, true).first).data[0];
    };
    const float a = run(), b = run();
    CHECK(a > 0.0f);
    CHECK(std::isfinite(a));
    CHECK(a == b);
}

TEST_CASE("loss decreases over 50 full-batch steps on a fixed image and mask") {
    const MaeConfig cfg;
    MaeModel<float> model = MaeModel<float>::init(cfg, 19);
    const Tensor<float> img = random_image(1, 32, 32, 20);
    Xoshiro256ss rng(42);
    const MaskSpec mask = sample_mask(16, 0.75, rng);

    OptimizerConfig opt;
    opt.kind = OptimizerConfig::Kind::AdamW;
    opt.learning_rate = 1e-3;
    double first = 0, last = 0;
    for (int step = 0; step < 50; ++step) {
        Tape<float> t;
        Leased<float> L{&t, &model.params, {}};
        const int loss = mae_loss_masked(t, L, cfg, img, mask, true);
        last = t.value(loss).data[0];
        if (step == 0) first = last;
        t.backward(loss);
        GradMap<float> grads;
        accumulate_grads(grads, L, t);
        optimizer_step(model.params, grads, opt);
    }
    CHECK(last < first);
}

TEST_CASE("parameter inventory is a pure function of the config") {
    const MaeConfig cfg;
    MaeModel<float> a = MaeModel<float>::init(cfg, 1);
    MaeModel<float> b = MaeModel<float>::init(cfg, 2);
    CHECK(a.params.names() == b.params.names());
    CHECK(a.params.scalar_count() == b.params.scalar_count());
    for (const auto& [name, e] : a.params)
        CHECK(e.value.shape == b.params.tensor(name).shape);
}

TEST_CASE("gradcheck: full mae loss on the 2-patch micro-config (64-bit)") {
    MaeConfig cfg = micro_config();
    MaeModel<double> model = MaeModel<double>::init(cfg, 23);
    Xoshiro256ss rng(24);
    Tensor<double> img({1, 8, 16});  // 1x2 patch grid
    for (double& v : img.data) v = rng.uniform();
    const MaskSpec mask({1}, 2);

    for (bool normalize : {true, false}) {
        auto build = [&, normalize](Tape<double>& t, Leased<double>& L) {
            return mae_loss_masked(t, L, cfg, img, mask, normalize);
        };
        const auto r = gradcheck<double>(model.params, build, 1e-5);
        CAPTURE(normalize);
        CHECK(r.rel_l2 < 1e-6);
    }
}
