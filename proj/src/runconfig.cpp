#include "tttlab/runconfig.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "tttlab/shapes.hpp"

namespace tttlab {

namespace {

OptimizerConfig::Kind optimizer_kind_from(const ConfigDoc& doc, const std::string& section) {
    const std::string v = doc.get_string(section, "optimizer");
    if (v == "adamw") return OptimizerConfig::Kind::AdamW;
    if (v == "sgd-momentum" || v == "sgd") return OptimizerConfig::Kind::SgdMomentum;
    doc.fail(section, "optimizer", "expected adamw or sgd-momentum, got '" + v + "'");
}

void read_optimizer(const ConfigDoc& doc, const std::string& sec, OptimizerConfig& opt) {
    if (doc.has(sec, "optimizer")) opt.kind = optimizer_kind_from(doc, sec);
    if (doc.has(sec, "learning-rate")) opt.learning_rate = doc.get_double(sec, "learning-rate");
    if (doc.has(sec, "momentum")) opt.momentum = doc.get_double(sec, "momentum");
    if (doc.has(sec, "weight-decay")) opt.weight_decay = doc.get_double(sec, "weight-decay");
    if (doc.has(sec, "beta1")) opt.beta1 = doc.get_double(sec, "beta1");
    if (doc.has(sec, "beta2")) opt.beta2 = doc.get_double(sec, "beta2");
    if (doc.has(sec, "epsilon")) opt.epsilon = doc.get_double(sec, "epsilon");
}

void read_regime_common(const ConfigDoc& doc, const std::string& sec, RegimeConfig& cfg) {
    if (doc.has(sec, "epochs")) cfg.epochs = static_cast<int>(doc.get_int(sec, "epochs"));
    if (doc.has(sec, "batch-size")) cfg.batch_size = static_cast<int>(doc.get_int(sec, "batch-size"));
    if (doc.has(sec, "cosine-lr")) cfg.cosine_lr = doc.get_bool(sec, "cosine-lr");
    if (doc.has(sec, "crop-pad")) cfg.augment.crop_pad = static_cast<int>(doc.get_int(sec, "crop-pad"));
    if (doc.has(sec, "flip-prob")) cfg.augment.flip_prob = doc.get_double(sec, "flip-prob");
    read_optimizer(doc, sec, cfg.optimizer);
}

const std::set<std::pair<std::string, std::string>>& known_keys() {
    static const std::set<std::pair<std::string, std::string>> keys = [] {
        std::set<std::pair<std::string, std::string>> k;
        k.insert({"run", "seed"});
        k.insert({"run", "out"});
        for (const char* key : {"kind", "train-per-class", "test-per-class", "train-seed",
                                "test-seed", "train-images", "train-labels", "test-images",
                                "test-labels"})
            k.insert({"dataset", key});
        for (const char* key : {"image-size", "channels", "patch-size", "encoder-dim",
                                "encoder-depth", "decoder-dim", "decoder-depth", "heads",
                                "mask-ratio", "normalize-pixels"})
            k.insert({"mae", key});
        for (const char* sec : {"pretrain", "regime"})
            for (const char* key : {"regime", "epochs", "batch-size", "cosine-lr", "crop-pad",
                                    "flip-prob", "optimizer", "learning-rate", "momentum",
                                    "weight-decay", "beta1", "beta2", "epsilon"})
                k.insert({sec, key});
        for (const char* key : {"kind", "dim", "depth", "heads"}) k.insert({"head", key});
        for (const char* key : {"steps", "masked-copies", "mask-ratio", "train-decoder",
                                "ssl-task", "optimizer", "learning-rate", "momentum",
                                "weight-decay", "beta1", "beta2", "epsilon"})
            k.insert({"ttt", key});
        k.insert({"corruptions", "list"});
        for (const char* key : {"d", "sigma1", "sigma", "w", "r11", "basis-seed",
                                "corruption-seed", "samples", "alphas"})
            k.insert({"theory", key});
        return k;
    }();
    return keys;
}

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

std::vector<double> parse_alpha_grid(const std::string& text) {
    double start = 0, step = 0, end = 0;
    const auto c1 = text.find(':');
    const auto c2 = text.rfind(':');
    if (c1 == std::string::npos || c2 == c1)
        throw ConfigError("alpha grid must be start:step:end, got '" + text + "'");
    try {
        size_t p = 0;
        start = std::stod(text.substr(0, c1), &p);
        step = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
        end = std::stod(text.substr(c2 + 1));
    } catch (const std::exception&) {
        throw ConfigError("malformed alpha grid '" + text + "'");
    }
    if (step <= 0 || end < start) throw ConfigError("malformed alpha grid '" + text + "'");
    std::vector<double> grid;
    for (int i = 0;; ++i) {
        const double a = start + i * step;
        if (a > end + 1e-12) break;
        grid.push_back(a);
        if (grid.size() > 10000) throw ConfigError("alpha grid too large");
    }
    return grid;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_doc(ConfigDoc::parse_file(path));
}

RunConfig RunConfig::from_doc(const ConfigDoc& doc) {
    for (const auto& [sec, key] : doc.entries())
        if (!known_keys().count({sec, key}))
            throw ConfigError(doc.origin() + ":" + std::to_string(doc.line_of(sec, key)) +
                              ": unknown field [" + sec + "] " + key);

    RunConfig cfg;
    cfg.pretrain = default_pretrain_config();
    cfg.regime = default_head_config();
    cfg.seed = doc.get_u64("run", "seed");  // required
    if (doc.has("run", "out")) cfg.out_dir = doc.get_string("run", "out");

    auto& ds = cfg.dataset;
    if (doc.has("dataset", "kind")) ds.kind = doc.get_string("dataset", "kind");
    if (ds.kind != "shapeset" && ds.kind != "raw")
        doc.fail("dataset", "kind", "expected shapeset or raw, got '" + ds.kind + "'");
    if (doc.has("dataset", "train-per-class"))
        ds.train_per_class = static_cast<int>(doc.get_int("dataset", "train-per-class"));
    if (doc.has("dataset", "test-per-class"))
        ds.test_per_class = static_cast<int>(doc.get_int("dataset", "test-per-class"));
    if (doc.has("dataset", "train-seed")) ds.train_seed = doc.get_u64("dataset", "train-seed");
    if (doc.has("dataset", "test-seed")) ds.test_seed = doc.get_u64("dataset", "test-seed");
    if (ds.kind == "raw") {
        ds.train_images = doc.get_string("dataset", "train-images");
        ds.train_labels = doc.get_string("dataset", "train-labels");
        ds.test_images = doc.get_string("dataset", "test-images");
        ds.test_labels = doc.get_string("dataset", "test-labels");
    }

    auto& m = cfg.mae;
    if (doc.has("mae", "image-size")) m.image_size = static_cast<int>(doc.get_int("mae", "image-size"));
    if (doc.has("mae", "channels")) m.channels = static_cast<int>(doc.get_int("mae", "channels"));
    if (doc.has("mae", "patch-size")) m.patch_size = static_cast<int>(doc.get_int("mae", "patch-size"));
    if (doc.has("mae", "encoder-dim")) m.encoder_dim = static_cast<int>(doc.get_int("mae", "encoder-dim"));
    if (doc.has("mae", "encoder-depth")) m.encoder_depth = static_cast<int>(doc.get_int("mae", "encoder-depth"));
    if (doc.has("mae", "decoder-dim")) m.decoder_dim = static_cast<int>(doc.get_int("mae", "decoder-dim"));
    if (doc.has("mae", "decoder-depth")) m.decoder_depth = static_cast<int>(doc.get_int("mae", "decoder-depth"));
    if (doc.has("mae", "heads")) m.heads = static_cast<int>(doc.get_int("mae", "heads"));
    if (doc.has("mae", "mask-ratio")) m.mask_ratio = doc.get_double("mae", "mask-ratio");
    if (doc.has("mae", "normalize-pixels")) m.normalize_pixels = doc.get_bool("mae", "normalize-pixels");
    m.validate();

    read_regime_common(doc, "pretrain", cfg.pretrain);
    read_regime_common(doc, "regime", cfg.regime);
    if (doc.has("regime", "regime")) {
        const std::string r = doc.get_string("regime", "regime");
        if (r == "probe")
            cfg.regime.regime = RegimeConfig::Regime::Probe;
        else if (r == "finetune")
            cfg.regime.regime = RegimeConfig::Regime::FineTune;
        else if (r == "joint")
            cfg.regime.regime = RegimeConfig::Regime::Joint;
        else
            doc.fail("regime", "regime", "expected probe|finetune|joint, got '" + r + "'");
    }

    auto& h = cfg.head;
    if (doc.has("head", "kind")) {
        const std::string k = doc.get_string("head", "kind");
        if (k == "vit-probe")
            h.kind = HeadConfig::Kind::VitProbe;
        else if (k == "linear-probe")
            h.kind = HeadConfig::Kind::LinearProbe;
        else
            doc.fail("head", "kind", "expected vit-probe or linear-probe, got '" + k + "'");
    }
    if (doc.has("head", "dim")) h.dim = static_cast<int>(doc.get_int("head", "dim"));
    if (doc.has("head", "depth")) h.depth = static_cast<int>(doc.get_int("head", "depth"));
    if (doc.has("head", "heads")) h.heads = static_cast<int>(doc.get_int("head", "heads"));

    auto& t = cfg.ttt;
    if (doc.has("ttt", "steps")) t.steps = static_cast<int>(doc.get_int("ttt", "steps"));
    if (doc.has("ttt", "masked-copies"))
        t.masked_copies = static_cast<int>(doc.get_int("ttt", "masked-copies"));
    if (doc.has("ttt", "mask-ratio")) t.mask_ratio = doc.get_double("ttt", "mask-ratio");
    if (doc.has("ttt", "train-decoder")) t.train_decoder = doc.get_bool("ttt", "train-decoder");
    if (doc.has("ttt", "ssl-task")) {
        const std::string s = doc.get_string("ttt", "ssl-task");
        if (s == "mae")
            t.ssl_task = TttConfig::SslTask::Mae;
        else if (s == "rotation")
            t.ssl_task = TttConfig::SslTask::Rotation;
        else
            doc.fail("ttt", "ssl-task", "expected mae or rotation, got '" + s + "'");
    }
    read_optimizer(doc, "ttt", t.optimizer);
    t.validate();

    if (doc.has("corruptions", "list"))
        for (const std::string& item : doc.get_list("corruptions", "list"))
            cfg.corruptions.push_back(parse_corruption_spec(item));

    auto& th = cfg.theory;
    if (doc.has("theory", "d")) th.d = static_cast<int>(doc.get_int("theory", "d"));
    if (doc.has("theory", "sigma1")) th.sigma1 = doc.get_double("theory", "sigma1");
    if (doc.has("theory", "sigma")) th.sigma = doc.get_double("theory", "sigma");
    if (doc.has("theory", "w")) th.w = doc.get_double("theory", "w");
    if (doc.has("theory", "r11")) th.r11 = doc.get_double("theory", "r11");
    if (doc.has("theory", "basis-seed")) th.basis_seed = doc.get_u64("theory", "basis-seed");
    if (doc.has("theory", "corruption-seed"))
        th.corruption_seed = doc.get_u64("theory", "corruption-seed");
    if (doc.has("theory", "samples")) th.samples = doc.get_int("theory", "samples");
    if (doc.has("theory", "alphas"))
        th.alphas = parse_alpha_grid(doc.get_string("theory", "alphas"));
    return cfg;
}

std::string RunConfig::echo() const {
    nlohmann::json j;  // nlohmann objects keep keys sorted: deterministic dumps
    j["run"] = {{"seed", seed}, {"out", out_dir}};
    j["dataset"] = {{"kind", dataset.kind},
                    {"train_per_class", dataset.train_per_class},
                    {"test_per_class", dataset.test_per_class},
                    {"train_seed", dataset.train_seed},
                    {"test_seed", dataset.test_seed},
                    {"train_images", dataset.train_images},
                    {"train_labels", dataset.train_labels},
                    {"test_images", dataset.test_images},
                    {"test_labels", dataset.test_labels}};
    j["mae"] = {{"image_size", mae.image_size},
                {"channels", mae.channels},
                {"patch_size", mae.patch_size},
                {"encoder_dim", mae.encoder_dim},
                {"encoder_depth", mae.encoder_depth},
                {"decoder_dim", mae.decoder_dim},
                {"decoder_depth", mae.decoder_depth},
                {"heads", mae.heads},
                {"mask_ratio", mae.mask_ratio},
                {"normalize_pixels", mae.normalize_pixels}};
    auto opt_json = [](const OptimizerConfig& o) {
        return nlohmann::json{{"kind", o.kind == OptimizerConfig::Kind::AdamW ? "adamw"
                                                                              : "sgd-momentum"},
                              {"learning_rate", o.learning_rate},
                              {"momentum", o.momentum},
                              {"weight_decay", o.weight_decay},
                              {"beta1", o.beta1},
                              {"beta2", o.beta2},
                              {"epsilon", o.epsilon}};
    };
    auto regime_json = [&](const RegimeConfig& r) {
        return nlohmann::json{{"epochs", r.epochs},
                              {"batch_size", r.batch_size},
                              {"cosine_lr", r.cosine_lr},
                              {"crop_pad", r.augment.crop_pad},
                              {"flip_prob", r.augment.flip_prob},
                              {"optimizer", opt_json(r.optimizer)}};
    };
    j["pretrain"] = regime_json(pretrain);
    j["regime"] = regime_json(regime);
    j["regime"]["regime"] = regime.regime == RegimeConfig::Regime::Probe      ? "probe"
                            : regime.regime == RegimeConfig::Regime::FineTune ? "finetune"
                                                                              : "joint";
    j["head"] = {{"kind", head.kind == HeadConfig::Kind::VitProbe ? "vit-probe" : "linear-probe"},
                 {"dim", head.dim},
                 {"depth", head.depth},
                 {"heads", head.heads},
                 {"num_classes", head.num_classes}};
    j["ttt"] = {{"steps", ttt.steps},
                {"masked_copies", ttt.masked_copies},
                {"mask_ratio", ttt.mask_ratio},
                {"train_decoder", ttt.train_decoder},
                {"ssl_task", ttt.ssl_task == TttConfig::SslTask::Mae ? "mae" : "rotation"},
                {"optimizer", opt_json(ttt.optimizer)}};
    nlohmann::json corr = nlohmann::json::array();
    for (const auto& c : corruptions)
        corr.push_back(std::string(corruption_kind_name(c.kind)) + ":" +
                       std::to_string(c.severity));
    j["corruptions"] = corr;
    j["theory"] = {{"d", theory.d},
                   {"sigma1", theory.sigma1},
                   {"sigma", theory.sigma},
                   {"w", theory.w},
                   {"r11", theory.r11 ? nlohmann::json(*theory.r11) : nlohmann::json()},
                   {"basis_seed",
                    theory.basis_seed ? nlohmann::json(*theory.basis_seed) : nlohmann::json()},
                   {"corruption_seed", theory.corruption_seed},
                   {"samples", theory.samples},
                   {"alphas", theory.alphas.empty() ? std::string("0.01:0.01:0.5")
                                                    : (fmt_double(theory.alphas.front()) +
                                                       std::string(":...:") +
                                                       fmt_double(theory.alphas.back()))}};
    return j.dump();
}

Dataset build_train_set(const DatasetSpec& spec) {
    if (spec.kind == "raw") return load_raw_dataset(spec.train_images, spec.train_labels);
    return gen_shapeset(spec.train_per_class, spec.train_seed);
}

Dataset build_test_set(const DatasetSpec& spec) {
    if (spec.kind == "raw") return load_raw_dataset(spec.test_images, spec.test_labels);
    return gen_shapeset(spec.test_per_class, spec.test_seed);
}

}  // namespace tttlab
