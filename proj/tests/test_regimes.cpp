#include <doctest.h>

#include <cmath>

#include "tttlab/regimes.hpp"
#include "tttlab/shapes.hpp"

using namespace tttlab;

namespace {

MaeConfig tiny_mae() {
    MaeConfig cfg;
    cfg.encoder_dim = 16;
    cfg.encoder_depth = 1;
    cfg.decoder_dim = 8;
    cfg.decoder_depth = 1;
    cfg.heads = 2;
    return cfg;
}

HeadConfig tiny_head(HeadConfig::Kind kind = HeadConfig::Kind::VitProbe) {
    HeadConfig cfg;
    cfg.kind = kind;
    cfg.dim = 16;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.num_classes = 8;
    return cfg;
}

RegimeConfig tiny_budget(int epochs) {
    RegimeConfig cfg = default_pretrain_config();
    cfg.epochs = epochs;
    cfg.batch_size = 16;
    return cfg;
}

}  // namespace

TEST_CASE("pretrain with zero epochs leaves the model unchanged") {
    MaeModel<float> model = MaeModel<float>::init(tiny_mae(), 1);
    const uint64_t before = model.params.value_hash();
    const Dataset ds = gen_shapeset(2, 2);
    const MetricsLog log = pretrain_mae(model, ds, tiny_budget(0), 3);
    CHECK(model.params.value_hash() == before);
    CHECK(log.empty());
}

TEST_CASE("pretraining reduces the reconstruction loss (smoke)") {
    MaeModel<float> model = MaeModel<float>::init(tiny_mae(), 4);
    const Dataset ds = gen_shapeset(4, 5);
    const MetricsLog log = pretrain_mae(model, ds, tiny_budget(6), 6);
    REQUIRE(log.size() == 6);
    CHECK(log.back().loss_recon < log.front().loss_recon);
    for (const auto& row : log) CHECK(row.split == "train");
}

TEST_CASE("pretraining is bit-deterministic under a fixed seed") {
    const Dataset ds = gen_shapeset(2, 7);
    MaeModel<float> a = MaeModel<float>::init(tiny_mae(), 8);
    MaeModel<float> b = MaeModel<float>::init(tiny_mae(), 8);
    pretrain_mae(a, ds, tiny_budget(2), 9);
    pretrain_mae(b, ds, tiny_budget(2), 9);
    CHECK(save_params_bytes(a.params) == save_params_bytes(b.params));
}

TEST_CASE("probing trains the head only; the encoder stays bit-identical") {
    MaeModel<float> model = MaeModel<float>::init(tiny_mae(), 10);
    const uint64_t frozen = model.params.value_hash();
    HeadModel<float> head = HeadModel<float>::init(tiny_head(), 16, 11);
    const uint64_t head_before = head.params.value_hash();
    const Dataset ds = gen_shapeset(4, 12);
    train_probe(model, head, ds, tiny_budget(2), 13);
    CHECK(model.params.value_hash() == frozen);
    CHECK(head.params.value_hash() != head_before);
}

TEST_CASE("probe training beats chance on the source set (smoke)") {
    MaeModel<float> model = MaeModel<float>::init(tiny_mae(), 14);
    const Dataset ds = gen_shapeset(8, 15);
    pretrain_mae(model, ds, tiny_budget(4), 16);
    HeadModel<float> head = HeadModel<float>::init(tiny_head(), 16, 17);
    RegimeConfig cfg = tiny_budget(8);
    train_probe(model, head, ds, cfg, 18);
    const double acc = eval_accuracy(model, head, ds);
    MESSAGE("probe source accuracy: ", acc);
    CHECK(acc > 1.0 / 8.0);
}

TEST_CASE("linear probe trains strictly fewer parameters than vit probe") {
    const HeadModel<float> lin =
        HeadModel<float>::init(tiny_head(HeadConfig::Kind::LinearProbe), 16, 1);
    const HeadModel<float> vit = HeadModel<float>::init(tiny_head(), 16, 1);
    CHECK(lin.params.scalar_count() < vit.params.scalar_count());
}

TEST_CASE("fine-tuning changes encoder and head but never the decoder") {
    MaeModel<float> model = MaeModel<float>::init(tiny_mae(), 20);
    HeadModel<float> head = HeadModel<float>::init(tiny_head(), 16, 21);
    const Dataset ds = gen_shapeset(2, 22);

    uint64_t dec_before = 1469598103934665603ull;
    uint64_t enc_before = dec_before;
    for (const auto& [name, e] : model.params) {
        uint64_t& h = model.is_decoder_param(name) || name == "dec.mask" ? dec_before : enc_before;
        h = fnv1a64(e.value.data.data(), e.value.data.size() * sizeof(float), h);
    }
    train_finetune(model, head, ds, tiny_budget(1), 23);
    uint64_t dec_after = 1469598103934665603ull;
    uint64_t enc_after = dec_after;
    for (const auto& [name, e] : model.params) {
        uint64_t& h = model.is_decoder_param(name) || name == "dec.mask" ? dec_after : enc_after;
        h = fnv1a64(e.value.data.data(), e.value.data.size() * sizeof(float), h);
    }
    CHECK(dec_after == dec_before);
    CHECK(enc_after != enc_before);
}

TEST_CASE("zero-epoch fine-tuning is the identity") {
    MaeModel<float> model = MaeModel<float>::init(tiny_mae(), 24);
    HeadModel<float> head = HeadModel<float>::init(tiny_head(), 16, 25);
    const Dataset ds = gen_shapeset(2, 26);
    const uint64_t m0 = model.params.value_hash(), h0 = head.params.value_hash();
    train_finetune(model, head, ds, tiny_budget(0), 27);
    CHECK(model.params.value_hash() == m0);
    CHECK(head.params.value_hash() == h0);
}

TEST_CASE("joint training with the ssl branch weight forced to zero equals fine-tuning") {
    const Dataset ds = gen_shapeset(2, 30);
    MaeModel<float> m1 = MaeModel<float>::init(tiny_mae(), 31);
    MaeModel<float> m2 = MaeModel<float>::init(tiny_mae(), 31);
    HeadModel<float> h1 = HeadModel<float>::init(tiny_head(), 16, 32);
    HeadModel<float> h2 = HeadModel<float>::init(tiny_head(), 16, 32);
    train_finetune(m1, h1, ds, tiny_budget(2), 33);
    detail::train_supervised(m2, h2, ds, tiny_budget(2), 33, 0.0f);
    CHECK(save_params_bytes(m1.params) == save_params_bytes(m2.params));
    CHECK(save_params_bytes(h1.params) == save_params_bytes(h2.params));
}

TEST_CASE("joint training records both loss channels and touches the decoder") {
    MaeModel<float> model = MaeModel<float>::init(tiny_mae(), 34);
    HeadModel<float> head = HeadModel<float>::init(tiny_head(), 16, 35);
    const Dataset ds = gen_shapeset(2, 36);
    uint64_t dec_before = 0;
    for (const auto& [name, e] : model.params)
        if (model.is_decoder_param(name))
            dec_before = fnv1a64(e.value.data.data(), e.value.data.size() * sizeof(float), dec_before);
    const MetricsLog log = train_joint(model, head, ds, tiny_budget(2), 37);
    for (const auto& row : log) {
        CHECK(std::isfinite(row.loss_main));
        CHECK(std::isfinite(row.loss_recon));
    }
    uint64_t dec_after = 0;
    for (const auto& [name, e] : model.params)
        if (model.is_decoder_param(name))
            dec_after = fnv1a64(e.value.data.data(), e.value.data.size() * sizeof(float), dec_after);
    CHECK(dec_after != dec_before);
}

TEST_CASE("fine-tune source accuracy is reported against probing (report only)") {
    const Dataset ds = gen_shapeset(4, 40);
    MaeModel<float> base = MaeModel<float>::init(tiny_mae(), 41);
    pretrain_mae(base, ds, tiny_budget(3), 42);

    MaeModel<float> mp = base;
    HeadModel<float> hp = HeadModel<float>::init(tiny_head(), 16, 43);
    train_probe(mp, hp, ds, tiny_budget(4), 44);
    MaeModel<float> mf = base;
    HeadModel<float> hf = HeadModel<float>::init(tiny_head(), 16, 43);
    train_finetune(mf, hf, ds, tiny_budget(4), 44);
    MESSAGE("probe acc: ", eval_accuracy(mp, hp, ds), ", finetune acc: ", eval_accuracy(mf, hf, ds));
}

TEST_CASE("metrics csv carries the documented header and the config echo") {
    const MetricsLog log{{0, "train", 0.5, std::nan(""), 0.25}};
    const std::string path = "/tmp/tttlab_metrics_test.csv";
    write_metrics_csv(path, log, "{\"seed\":1}");
    std::ifstream f(path);
    std::string l1, l2, l3, l4;
    std::getline(f, l1);
    std::getline(f, l2);
    std::getline(f, l3);
    std::getline(f, l4);
    CHECK(l1.rfind("# tttlab", 0) == 0);
    CHECK(l2.rfind("# config:", 0) == 0);
    CHECK(l3 == "epoch,split,loss_main,loss_recon,accuracy");
    CHECK(l4 == "0,train,0.5,,0.25");
}

TEST_CASE("rotation head training runs and is deterministic") {
    const Dataset ds = gen_shapeset(2, 50);
    MaeModel<float> model = MaeModel<float>::init(tiny_mae(), 51);
    const ParamSet<float> a = train_rotation_head(model, ds, 2, 52);
    const ParamSet<float> b = train_rotation_head(model, ds, 2, 52);
    CHECK(a.value_hash() == b.value_hash());
    CHECK(a.contains("rot.w"));
}
