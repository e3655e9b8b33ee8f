#include <doctest.h>

#include "gradcheck.hpp"
#include "tttlab/autograd.hpp"
#include "tttlab/mae.hpp"
#include "tttlab/optim.hpp"
#include "tttlab/rng.hpp"

using namespace tttlab;
using tttlab::testing::gradcheck;
using tttlab::testing::random_tensor;

TEST_CASE("splitmix64 matches the published sequence") {
    uint64_t s = 0;
    CHECK(splitmix64(s) == 0xe220a8397b1dcdafull);
    CHECK(splitmix64(s) == 0x6e789e6aa1b965f4ull);
    CHECK(splitmix64(s) == 0x06c45d188009454full);
}

TEST_CASE("xoshiro256** golden draws, seed 42") {
    Xoshiro256ss rng(42);
    CHECK(rng.next_u64() == 0x15780b2e0c2ec716ull);
    CHECK(rng.next_u64() == 0x6104d9866d113a7eull);
    CHECK(rng.next_u64() == 0xae17533239e499a1ull);
    CHECK(rng.next_u64() == 0xecb8ad4703b360a1ull);
    CHECK(rng.draw_count() == 4);
}

TEST_CASE("uniform and bounded draws stay in range and are deterministic") {
    Xoshiro256ss rng(7);
    CHECK(rng.uniform() == doctest::Approx(0.7005764821796896).epsilon(1e-15));
    CHECK(rng.uniform() == doctest::Approx(0.2787512294737843).epsilon(1e-15));
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(rng.bounded(13) < 13);
    }
}

TEST_CASE("normal draws have roughly unit moments") {
    Xoshiro256ss rng(123);
    double sum = 0, sum_sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sum_sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(sum_sq / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("tensor shape/data mismatch is rejected") {
    CHECK_THROWS_AS(Tensor<float>({2, 3}, {1.0f, 2.0f}), ShapeError);
    CHECK_THROWS_AS(Tensor<float>({0, 3}), ShapeError);
}

TEST_CASE("backward of sum is all ones") {
    ParamSet<double> ps;
    ps.add("p", Tensor<double>({3}, {1.0, 2.0, 3.0}));
    Tape<double> t;
    Leased<double> L{&t, &ps, {}};
    t.backward(op_sum_all(t, L("p")));
    const Tensor<double>& g = t.grad(L.ids.at("p"));
    for (double v : g.data) CHECK(v == 1.0);
}

TEST_CASE("backward of sum of squares doubles the values") {
    ParamSet<double> ps;
    ps.add("p", Tensor<double>({3}, {1.0, 2.0, 3.0}));
    Tape<double> t;
    Leased<double> L{&t, &ps, {}};
    const int p = L("p");
    t.backward(op_sum_all(t, op_mul(t, p, p)));
    const Tensor<double>& g = t.grad(p);
    CHECK(g.data[0] == 2.0);
    CHECK(g.data[1] == 4.0);
    CHECK(g.data[2] == 6.0);
}

TEST_CASE("parameters not reachable from the loss read back zero gradients") {
    ParamSet<double> ps;
    ps.add("used", Tensor<double>({2}, {1.0, 2.0}));
    ps.add("unused", Tensor<double>({2}, {5.0, 5.0}));
    Tape<double> t;
    Leased<double> L{&t, &ps, {}};
    const int used = L("used");
    const int unused = L("unused");
    t.backward(op_sum_all(t, used));
    for (double v : t.grad(unused).data) CHECK(v == 0.0);
}

TEST_CASE("backward rejects non-scalar loss and non-finite loss") {
    ParamSet<double> ps;
    ps.add("p", Tensor<double>({3}, {1.0, 2.0, 3.0}));
    Tape<double> t;
    Leased<double> L{&t, &ps, {}};
    CHECK_THROWS_AS(t.backward(L("p")), ShapeError);

    Tape<double> t2;
    const int inf = t2.constant(Tensor<double>({1}, {1e308}));
    CHECK_THROWS_AS(op_mul(t2, inf, inf), NumericError);  // overflow surfaces immediately
}

// ---- per-layer finite-difference checks (64-bit, rel l2 < 1e-6) ----------

TEST_CASE("gradcheck: affine layer") {
    Xoshiro256ss rng(11);
    ParamSet<double> ps;
    ps.add("x", random_tensor<double>({3, 4}, rng));
    ps.add("w", random_tensor<double>({4, 5}, rng, 0.5));
    ps.add("b", random_tensor<double>({5}, rng, 0.2));
    auto build = [](Tape<double>& t, Leased<double>& L) {
        const int y = op_add_rowvec(t, op_matmul(t, L("x"), L("w")), L("b"));
        return op_mean_all(t, op_mul(t, y, y));
    };
    const auto r = gradcheck<double>(ps, build, 1e-5);
    CHECK(r.rel_l2 < 1e-6);
}

TEST_CASE("gradcheck: layer normalization") {
    Xoshiro256ss rng(12);
    ParamSet<double> ps;
    ps.add("x", random_tensor<double>({4, 5}, rng));
    ps.add("g", random_tensor<double>({5}, rng, 0.5));
    ps.add("b", random_tensor<double>({5}, rng, 0.5));
    Tensor<double> c = random_tensor<double>({4, 5}, rng);
    auto build = [c](Tape<double>& t, Leased<double>& L) {
        const int y = op_layer_norm(t, L("x"), L("g"), L("b"), 1e-5);
        const int yc = op_mul(t, y, t.constant(c));
        return op_mean_all(t, op_mul(t, yc, yc));
    };
    const auto r = gradcheck<double>(ps, build, 1e-5);
    CHECK(r.rel_l2 < 1e-6);
}

TEST_CASE("gradcheck: gelu and softmax rows") {
    Xoshiro256ss rng(13);
    ParamSet<double> ps;
    ps.add("x", random_tensor<double>({3, 6}, rng));
    Tensor<double> c = random_tensor<double>({3, 6}, rng);
    auto build = [c](Tape<double>& t, Leased<double>& L) {
        const int y = op_softmax_rows(t, op_gelu(t, L("x")));
        return op_mean_all(t, op_mul(t, y, t.constant(c)));
    };
    const auto r = gradcheck<double>(ps, build, 1e-6);
    CHECK(r.rel_l2 < 1e-6);
}

TEST_CASE("gradcheck: attention/mixing block") {
    Xoshiro256ss rng(14);
    ParamSet<double> ps;
    ps.add("x", random_tensor<double>({3, 4}, rng));
    add_block_params(ps, "blk.", 4, 99);
    // break the zero-bias symmetry so the check is generic
    for (auto& [name, e] : ps)
        if (name != "x")
            for (size_t i = 0; i < e.value.data.size(); ++i)
                e.value.data[i] += 0.1 * rng.normal();
    auto build = [](Tape<double>& t, Leased<double>& L) {
        const int y = transformer_block(t, L, "blk.", L("x"), 2);
        return op_mean_all(t, op_mul(t, y, y));
    };
    const auto r = gradcheck<double>(ps, build, 1e-6);
    CHECK(r.rel_l2 < 1e-6);
}

TEST_CASE("gradcheck: softmax cross-entropy") {
    Xoshiro256ss rng(15);
    ParamSet<double> ps;
    ps.add("logits", random_tensor<double>({3, 5}, rng));
    auto build = [](Tape<double>& t, Leased<double>& L) {
        return op_softmax_xent_mean(t, L("logits"), {1, 0, 4});
    };
    const auto r = gradcheck<double>(ps, build, 1e-6);
    CHECK(r.rel_l2 < 1e-6);
}

TEST_CASE("gradcheck: masked reconstruction loss") {
    Xoshiro256ss rng(16);
    ParamSet<double> ps;
    ps.add("pred", random_tensor<double>({4, 6}, rng));
    Tensor<double> target = random_tensor<double>({4, 6}, rng);
    const MaskSpec mask({1, 3}, 4);
    for (bool normalize : {false, true}) {
        auto build = [&, normalize](Tape<double>& t, Leased<double>& L) {
            return reconstruction_loss(t, L("pred"), target, mask, normalize);
        };
        const auto r = gradcheck<double>(ps, build, 1e-6);
        CHECK(r.rel_l2 < 1e-6);
    }
}

TEST_CASE("gradcheck: 32-bit composite model stays within float tolerances") {
    Xoshiro256ss rng(17);
    ParamSet<float> ps;
    ps.add("x", random_tensor<float>({4, 8}, rng));
    add_block_params(ps, "blk.", 8, 5);
    // target close to the initial output keeps the loss well conditioned for
    // 32-bit finite differences
    Tensor<float> target;
    {
        Tape<float> t;
        Leased<float> L{&t, &ps, {}};
        target = t.value(transformer_block(t, L, "blk.", L("x"), 2));
        for (float& v : target.data) v += 0.1f * static_cast<float>(rng.normal());
    }
    auto build = [target](Tape<float>& t, Leased<float>& L) {
        const int y = transformer_block(t, L, "blk.", L("x"), 2);
        const int diff = op_sub(t, y, t.constant(target));
        return op_mean_all(t, op_mul(t, diff, diff));
    };
    const auto r = gradcheck<float>(ps, build, 1e-3f);
    CHECK(r.rel_l2 < 1e-3);
    CHECK(r.worst_coord < 1e-2);
}

// ---- optimizers -----------------------------------------------------------

TEST_CASE("sgd momentum single step matches hand arithmetic") {
    ParamSet<float> ps;
    ps.add("p", Tensor<float>({1}, {1.0f}));
    GradMap<float> g;
    g.emplace("p", Tensor<float>({1}, {0.5f}));
    OptimizerConfig cfg;
    cfg.kind = OptimizerConfig::Kind::SgdMomentum;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    sgd_momentum_step(ps, g, cfg);
    CHECK(ps.entry("p").m.data[0] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(ps.tensor("p").data[0] == doctest::Approx(0.95).epsilon(1e-7));
}

TEST_CASE("sgd with zero learning rate updates buffers but not params") {
    ParamSet<float> ps;
    ps.add("p", Tensor<float>({1}, {1.0f}));
    GradMap<float> g;
    g.emplace("p", Tensor<float>({1}, {2.0f}));
    OptimizerConfig cfg;
    cfg.learning_rate = 0.0;
    sgd_momentum_step(ps, g, cfg);
    CHECK(ps.tensor("p").data[0] == 1.0f);
    CHECK(ps.entry("p").m.data[0] == 2.0f);
}

TEST_CASE("sgd momentum accumulates over two steps: drop 0.1 then 0.19") {
    ParamSet<float> ps;
    ps.add("p", Tensor<float>({1}, {1.0f}));
    GradMap<float> g;
    g.emplace("p", Tensor<float>({1}, {1.0f}));
    OptimizerConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;
    sgd_momentum_step(ps, g, cfg);
    CHECK(ps.tensor("p").data[0] == doctest::Approx(0.9).epsilon(1e-6));
    sgd_momentum_step(ps, g, cfg);
    CHECK(ps.tensor("p").data[0] == doctest::Approx(0.71).epsilon(1e-6));
}

TEST_CASE("adamw: zero gradient and zero decay leave params untouched") {
    ParamSet<float> ps;
    ps.add("p", Tensor<float>({2}, {1.0f, -2.0f}));
    GradMap<float> g;
    g.emplace("p", Tensor<float>({2}));
    OptimizerConfig cfg;
    cfg.kind = OptimizerConfig::Kind::AdamW;
    cfg.learning_rate = 0.1;
    for (int i = 0; i < 5; ++i) adamw_step(ps, g, cfg);
    CHECK(ps.tensor("p").data[0] == 1.0f);
    CHECK(ps.tensor("p").data[1] == -2.0f);
}

TEST_CASE("adamw single step with unit gradient lands near 0.9") {
    ParamSet<float> ps;
    ps.add("p", Tensor<float>({1}, {1.0f}));
    GradMap<float> g;
    g.emplace("p", Tensor<float>({1}, {1.0f}));
    OptimizerConfig cfg;
    cfg.kind = OptimizerConfig::Kind::AdamW;
    cfg.learning_rate = 0.1;
    adamw_step(ps, g, cfg);
    // mhat = vhat = 1 after bias correction, so p <- 1 - 0.1 / (1 + eps)
    CHECK(ps.tensor("p").data[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adamw pure decoupled decay: p = 0.99 after one step") {
    ParamSet<float> ps;
    ps.add("p", Tensor<float>({1}, {1.0f}));
    GradMap<float> g;
    g.emplace("p", Tensor<float>({1}));
    OptimizerConfig cfg;
    cfg.kind = OptimizerConfig::Kind::AdamW;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.1;
    adamw_step(ps, g, cfg);
    CHECK(ps.tensor("p").data[0] == doctest::Approx(0.99).epsilon(1e-6));
}

TEST_CASE("optimizer rejects shape-mismatched gradients") {
    ParamSet<float> ps;
    ps.add("p", Tensor<float>({2}));
    GradMap<float> g;
    g.emplace("p", Tensor<float>({3}));
    OptimizerConfig cfg;
    CHECK_THROWS_AS(sgd_momentum_step(ps, g, cfg), ShapeError);
}

TEST_CASE("cloning a ParamSet clones optimizer state; the clone never leaks back") {
    ParamSet<float> ps;
    ps.add("p", Tensor<float>({2}, {1.0f, 1.0f}));
    GradMap<float> g;
    g.emplace("p", Tensor<float>({2}, {1.0f, 1.0f}));
    OptimizerConfig cfg;
    cfg.learning_rate = 0.1;
    sgd_momentum_step(ps, g, cfg);
    const uint64_t before = ps.state_hash();

    ParamSet<float> clone = ps;
    CHECK(clone.state_hash() == before);
    sgd_momentum_step(clone, g, cfg);
    CHECK(ps.state_hash() == before);
    CHECK(clone.state_hash() != before);
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
    Xoshiro256ss rng(21);
    ParamSet<float> ps;
    ps.add("b.weight", random_tensor<float>({3, 4}, rng));
    ps.add("a.bias", random_tensor<float>({7}, rng));
    const std::string bytes = save_params_bytes(ps);
    CHECK(bytes.substr(0, 4) == "TTTL");
    const ParamSet<float> back = load_params_bytes(bytes);
    CHECK(back.value_hash() == ps.value_hash());
    CHECK(save_params_bytes(back) == bytes);

    // entries are lexicographic: a.bias first
    const uint32_t name_len = static_cast<uint8_t>(bytes[12]);
    CHECK(name_len == 6);
    CHECK(bytes.substr(16, 6) == "a.bias");
}

TEST_CASE("truncated or corrupt checkpoints raise i/o errors") {
    ParamSet<float> ps;
    ps.add("p", Tensor<float>({4}, {1, 2, 3, 4}));
    const std::string bytes = save_params_bytes(ps);
    CHECK_THROWS_AS(load_params_bytes(bytes.substr(0, bytes.size() - 3)), IoError);
    CHECK_THROWS_AS(load_params_bytes("XXXX" + bytes.substr(4)), IoError);
    CHECK_THROWS_AS(load_params_bytes(bytes + "extra"), IoError);
}
