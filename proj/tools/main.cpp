// tttlab command line: pretrain | train-head | ttt-eval | theory | corrupt-preview
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tttlab/artifacts.hpp"
#include "tttlab/runconfig.hpp"
#include "tttlab/shapes.hpp"
#include "tttlab/svg.hpp"

namespace fs = std::filesystem;
using namespace tttlab;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
};

RunConfig load_config(const CommonArgs& args) {
    RunConfig cfg = RunConfig::from_file(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    fs::create_directories(cfg.out_dir);
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

MaeModel<float> load_mae(const RunConfig& cfg, const std::string& path) {
    MaeModel<float> model = MaeModel<float>::init(cfg.mae, derive_seed(cfg.seed, fnv1a64("init")));
    ParamSet<float> loaded = load_params_file(path);
    if (loaded.names() != model.params.names())
        throw ConfigError("checkpoint '" + path + "' does not match the configured mae model");
    for (auto& [name, entry] : loaded) {
        if (!entry.value.same_shape(model.params.tensor(name)))
            throw ConfigError("checkpoint '" + path + "': shape mismatch for '" + name + "'");
        model.params.tensor(name) = entry.value;
    }
    return model;
}

HeadModel<float> load_head(const RunConfig& cfg, const std::string& path, int num_classes) {
    HeadConfig hc = cfg.head;
    hc.num_classes = num_classes;
    HeadModel<float> head = HeadModel<float>::init(hc, cfg.mae.encoder_dim,
                                                   derive_seed(cfg.seed, fnv1a64("head")));
    ParamSet<float> loaded = load_params_file(path);
    if (loaded.names() != head.params.names())
        throw ConfigError("checkpoint '" + path + "' does not match the configured head");
    for (auto& [name, entry] : loaded) head.params.tensor(name) = entry.value;
    return head;
}

int cmd_pretrain(const CommonArgs& args) {
    const RunConfig cfg = load_config(args);
    const Dataset train = build_train_set(cfg.dataset);
    MaeModel<float> model = MaeModel<float>::init(cfg.mae, derive_seed(cfg.seed, fnv1a64("init")));
    const MetricsLog log = pretrain_mae(model, train, cfg.pretrain, derive_seed(cfg.seed, fnv1a64("pretrain")));
    save_params_file(model.params, out_path(cfg, "mae.tttl"));
    write_metrics_csv(out_path(cfg, "pretrain_metrics.csv"), log, cfg.echo());
    std::cout << "pretrained " << model.params.scalar_count() << " params on " << train.size()
              << " images; final recon loss " << format_double(log.back().loss_recon) << "\n";
    std::cout << "wrote " << out_path(cfg, "mae.tttl") << "\n";
    return 0;
}

int cmd_train_head(const CommonArgs& args, const std::string& regime_flag,
                   const std::string& mae_ckpt) {
    RunConfig cfg = load_config(args);
    if (!regime_flag.empty()) {
        if (regime_flag == "probe")
            cfg.regime.regime = RegimeConfig::Regime::Probe;
        else if (regime_flag == "finetune")
            cfg.regime.regime = RegimeConfig::Regime::FineTune;
        else if (regime_flag == "joint")
            cfg.regime.regime = RegimeConfig::Regime::Joint;
        else
            throw ConfigError("--regime must be probe|finetune|joint, got '" + regime_flag + "'");
    }
    const Dataset train = build_train_set(cfg.dataset);
    MaeModel<float> model =
        load_mae(cfg, mae_ckpt.empty() ? out_path(cfg, "mae.tttl") : mae_ckpt);
    HeadConfig hc = cfg.head;
    hc.num_classes = train.num_classes;
    HeadModel<float> head =
        HeadModel<float>::init(hc, cfg.mae.encoder_dim, derive_seed(cfg.seed, fnv1a64("head")));

    const uint64_t seed = derive_seed(cfg.seed, fnv1a64("train-head"));
    MetricsLog log;
    switch (cfg.regime.regime) {
        case RegimeConfig::Regime::Probe:
            log = train_probe(model, head, train, cfg.regime, seed);
            break;
        case RegimeConfig::Regime::FineTune:
            log = train_finetune(model, head, train, cfg.regime, seed);
            save_params_file(model.params, out_path(cfg, "mae_finetuned.tttl"));
            break;
        case RegimeConfig::Regime::Joint:
            log = train_joint(model, head, train, cfg.regime, seed);
            save_params_file(model.params, out_path(cfg, "mae_joint.tttl"));
            break;
    }
    save_params_file(head.params, out_path(cfg, "head.tttl"));
    write_metrics_csv(out_path(cfg, "train_metrics.csv"), log, cfg.echo());
    std::cout << "trained head (" << head.params.scalar_count() << " params); final accuracy "
              << format_double(log.back().accuracy) << "\n";
    std::cout << "wrote " << out_path(cfg, "head.tttl") << "\n";
    return 0;
}

int cmd_ttt_eval(const CommonArgs& args, const std::vector<std::string>& corruption_flags,
                 const std::string& optimizer_flag, int steps_flag, const std::string& ssl_flag,
                 int copies_flag, const std::string& mae_ckpt, const std::string& head_ckpt,
                 bool emit_svg) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = load_config(args);
    if (steps_flag >= 0) cfg.ttt.steps = steps_flag;
    if (copies_flag >= 1) cfg.ttt.masked_copies = copies_flag;
    if (!optimizer_flag.empty()) {
        if (optimizer_flag == "sgd")
            cfg.ttt.optimizer.kind = OptimizerConfig::Kind::SgdMomentum;
        else if (optimizer_flag == "adamw") {
            cfg.ttt.optimizer.kind = OptimizerConfig::Kind::AdamW;
            cfg.ttt.optimizer.learning_rate = 1e-3;
        } else {
            throw ConfigError("--optimizer must be sgd or adamw");
        }
    }
    if (!ssl_flag.empty()) {
        if (ssl_flag == "mae")
            cfg.ttt.ssl_task = TttConfig::SslTask::Mae;
        else if (ssl_flag == "rotation")
            cfg.ttt.ssl_task = TttConfig::SslTask::Rotation;
        else
            throw ConfigError("--ssl must be mae or rotation");
    }
    if (!corruption_flags.empty()) {
        cfg.corruptions.clear();
        for (const auto& c : corruption_flags) cfg.corruptions.push_back(parse_corruption_spec(c));
    }
    cfg.ttt.validate();

    const Dataset test = build_test_set(cfg.dataset);
    ModelSnapshot snapshot;
    snapshot.mae = load_mae(cfg, mae_ckpt.empty() ? out_path(cfg, "mae.tttl") : mae_ckpt);
    snapshot.head =
        load_head(cfg, head_ckpt.empty() ? out_path(cfg, "head.tttl") : head_ckpt,
                  test.num_classes);
    if (cfg.ttt.ssl_task == TttConfig::SslTask::Rotation) {
        const Dataset train = build_train_set(cfg.dataset);
        snapshot.rotation_head = train_rotation_head(
            snapshot.mae, train, 10, derive_seed(cfg.seed, fnv1a64("rotation-head")));
    }

    const uint64_t eval_seed = derive_seed(cfg.seed, fnv1a64("ttt-eval"));
    std::vector<CorruptionSummary> summaries;
    std::vector<PlotSeries> series;
    auto run_one = [&](const std::string& label, const Dataset& ds) {
        TttEvalResult res = evaluate_ttt(snapshot, ds, cfg.ttt, eval_seed);
        std::string fname = "traces_" + label + ".csv";
        for (char& c : fname)
            if (c == ':') c = '_';
        write_trace_csv(out_path(cfg, fname), res, cfg.echo());
        PlotSeries ps;
        ps.name = label;
        for (size_t s = 0; s < res.accuracy_vs_step.size(); ++s) {
            ps.x.push_back(double(s));
            ps.y.push_back(res.accuracy_vs_step[s]);
        }
        series.push_back(std::move(ps));
        std::cout << label << ": baseline " << format_double(res.accuracy_vs_step.front())
                  << " -> ttt " << format_double(res.accuracy_vs_step.back()) << "\n";
        summaries.push_back({label, std::move(res)});
    };

    if (cfg.corruptions.empty()) {
        run_one("none", test);
    } else {
        for (const auto& spec : cfg.corruptions) {
            const std::string label = std::string(corruption_kind_name(spec.kind)) + ":" +
                                      std::to_string(spec.severity);
            run_one(label, corrupt_dataset(test, spec, derive_seed(cfg.seed, fnv1a64("corrupt"))));
        }
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream jf(out_path(cfg, "summary.json"));
    if (!jf) throw IoError("cannot open summary.json");
    jf << ttt_summary_json(summaries, cfg.echo(), wall);
    if (emit_svg)
        write_line_plot(out_path(cfg, "accuracy_vs_step.svg"), "TTT accuracy vs step", "step",
                        "accuracy", series);
    std::cout << "wrote " << out_path(cfg, "summary.json") << "\n";
    return 0;
}

int cmd_theory(const CommonArgs& args, int d, double sigma1, double sigma, double w, double r11,
               bool have_r11, uint64_t basis_seed, bool have_basis_seed, uint64_t corruption_seed,
               const std::string& alphas, int64_t samples, uint64_t seed, bool emit_svg) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = RunConfig::from_file(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    fs::create_directories(cfg.out_dir);

    TheorySpec& th = cfg.theory;
    if (d > 0) th.d = d;
    if (sigma1 > 0) th.sigma1 = sigma1;
    if (sigma > 0) th.sigma = sigma;
    th.w = w;
    if (have_r11) th.r11 = r11;
    if (have_basis_seed) th.basis_seed = basis_seed;
    th.corruption_seed = corruption_seed;
    if (samples > 0) th.samples = samples;
    if (!alphas.empty()) th.alphas = parse_alpha_grid(alphas);
    if (th.alphas.empty()) th.alphas = default_alpha_grid();
    cfg.seed = seed;

    WorldSpec spec;
    spec.d = th.d;
    spec.sigma1 = th.sigma1;
    spec.sigma = th.sigma;
    spec.w = th.w;
    spec.basis_seed = th.basis_seed;
    spec.r11 = th.r11;
    spec.corruption_seed = th.corruption_seed;
    const LinearWorld world = make_world(spec);

    const TheoremReport report =
        theorem_check(world, th.alphas, th.samples, derive_seed(cfg.seed, fnv1a64("risk")));

    // The proof's reduction works in the U = I frame; verify the closed form
    // there even when the risk sweep uses a rotated basis.
    WorldSpec aspec = spec;
    aspec.basis_seed.reset();
    const LinearWorld aworld = make_world(aspec);
    const AlignmentResult alignment =
        alignment_derivative(aworld, th.samples, derive_seed(cfg.seed, fnv1a64("alignment")));

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_risk_csv(out_path(cfg, "risk_vs_alpha.csv"), report, cfg.echo());
    std::ofstream jf(out_path(cfg, "theorem.json"));
    if (!jf) throw IoError("cannot open theorem.json");
    jf << theorem_report_json(report, &alignment, cfg.echo(), wall);
    if (emit_svg) {
        PlotSeries ps;
        ps.name = "risk(alpha)";
        ps.x.push_back(0.0);
        ps.y.push_back(report.risk0);
        for (size_t i = 0; i < report.alphas.size(); ++i) {
            ps.x.push_back(report.alphas[i]);
            ps.y.push_back(report.risks[i]);
        }
        write_line_plot(out_path(cfg, "risk_vs_alpha.svg"), "Prediction risk vs alpha", "alpha",
                        "risk", {ps});
    }

    std::cout << "r11 = " << format_double(report.r11) << "\n";
    std::cout << "risk(0) = " << format_double(report.risk0) << " +- "
              << format_double(report.se0) << "\n";
    std::cout << "min risk = " << format_double(report.risk_min) << " at alpha = "
              << format_double(report.argmin_alpha) << "\n";
    std::cout << "alignment derivative: mc = " << format_double(alignment.monte_carlo)
              << " closed form = " << format_double(alignment.closed_form) << "\n";
    std::cout << (report.pass ? "PASS" : "FAIL") << ": " << report.note << "\n";
    std::cout << "wrote " << out_path(cfg, "theorem.json") << "\n";
    return report.pass || !report.assumption_ok ? 0 : 3;
}

int cmd_corrupt_preview(const std::string& out_dir, uint64_t seed) {
    fs::create_directories(out_dir);
    const Dataset probe = gen_shapeset(1, seed);
    const auto kinds = all_corruption_kind_names();
    const int cell = 32, gap = 2;
    const int cols = 6;  // clean + severities 1..5
    const int rows = static_cast<int>(kinds.size());
    Tensor<float> sheet({1, rows * (cell + gap) - gap, cols * (cell + gap) - gap});
    std::fill(sheet.data.begin(), sheet.data.end(), 1.0f);
    for (int r = 0; r < rows; ++r) {
        const Tensor<float>& base = probe.samples[r % probe.samples.size()].image;
        for (int cidx = 0; cidx < cols; ++cidx) {
            Tensor<float> img = base;
            if (cidx > 0) {
                CorruptionSpec spec{corruption_kind_from_name(kinds[r]), cidx};
                Xoshiro256ss rng(derive_seed(seed, fnv1a64(kinds[r]) + cidx));
                img = corrupt(base, spec, rng);
            }
            for (int y = 0; y < cell; ++y)
                for (int x = 0; x < cell; ++x)
                    sheet.data[size_t(r * (cell + gap) + y) * sheet.shape[2] +
                               cidx * (cell + gap) + x] = img.data[size_t(y) * cell + x];
        }
    }
    const std::string path = (fs::path(out_dir) / "corruption_preview.pgm").string();
    write_pgm(sheet, path);
    std::cout << "wrote " << path << " (rows: ";
    for (size_t i = 0; i < kinds.size(); ++i) std::cout << (i ? ", " : "") << kinds[i];
    std::cout << "; cols: clean + severity 1..5)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tttlab: test-time training with masked autoencoders, at desk scale"};
    app.require_subcommand(1);

    CommonArgs common;
    int rc = 0;
    std::function<int()> run;

    auto* pre = app.add_subcommand("pretrain", "MAE reconstruction pretraining on the source set");
    pre->add_option("--config", common.config_path, "run configuration file")->required();
    pre->add_option("--out", common.out_dir, "output directory (overrides [run] out)");
    pre->callback([&]() { run = [&]() { return cmd_pretrain(common); }; });

    auto* th = app.add_subcommand("train-head", "train the main-task head (probe/finetune/joint)");
    static std::string regime_flag, mae_ckpt;
    th->add_option("--config", common.config_path, "run configuration file")->required();
    th->add_option("--out", common.out_dir, "output directory");
    th->add_option("--regime", regime_flag, "probe|finetune|joint")
        ->check(CLI::IsMember({"probe", "finetune", "joint"}));
    th->add_option("--mae-checkpoint", mae_ckpt, "pretrained MAE checkpoint (default <out>/mae.tttl)");
    th->callback([&]() { run = [&]() { return cmd_train_head(common, regime_flag, mae_ckpt); }; });

    auto* ev = app.add_subcommand("ttt-eval", "per-input test-time training over a test set");
    static std::vector<std::string> corruption_flags;
    static std::string optimizer_flag, ssl_flag, head_ckpt, mae_ckpt2;
    static int steps_flag = -1, copies_flag = -1;
    static bool svg_flag = false;
    ev->add_option("--config", common.config_path, "run configuration file")->required();
    ev->add_option("--out", common.out_dir, "output directory");
    ev->add_option("--corruption", corruption_flags, "kind:severity (repeatable)");
    ev->add_option("--optimizer", optimizer_flag, "sgd|adamw")
        ->check(CLI::IsMember({"sgd", "adamw"}));
    ev->add_option("--steps", steps_flag, "TTT gradient steps");
    ev->add_option("--copies", copies_flag, "masked copies per step");
    ev->add_option("--ssl", ssl_flag, "mae|rotation")->check(CLI::IsMember({"mae", "rotation"}));
    ev->add_option("--mae-checkpoint", mae_ckpt2, "MAE checkpoint");
    ev->add_option("--head-checkpoint", head_ckpt, "head checkpoint");
    ev->add_flag("--svg", svg_flag, "emit accuracy-vs-step SVG plot");
    ev->callback([&]() {
        run = [&]() {
            return cmd_ttt_eval(common, corruption_flags, optimizer_flag, steps_flag, ssl_flag,
                                copies_flag, mae_ckpt2, head_ckpt, svg_flag);
        };
    });

    auto* theory = app.add_subcommand("theory", "linear/PCA analysis: risk sweep and closed forms");
    static int d = 0;
    static double sigma1 = 0, sigma = 0, w = 1.0, r11 = 0.0;
    static uint64_t basis_seed = 0, corruption_seed = 0, seed = 42;
    static std::string alphas;
    static int64_t samples = 0;
    static bool theory_svg = false;
    theory->add_option("--config", common.config_path, "optional run configuration file");
    theory->add_option("--out", common.out_dir, "output directory");
    theory->add_option("--d", d, "dimension");
    theory->add_option("--sigma1", sigma1, "top eigenvalue");
    theory->add_option("--sigma", sigma, "bulk eigenvalue");
    theory->add_option("--w", w, "label weight");
    auto* r11_opt = theory->add_option("--r11", r11, "controlled corruption alignment in [0,1]");
    auto* basis_opt = theory->add_option("--basis-seed", basis_seed,
                                         "random-orthogonal basis seed (absent: U = I)");
    theory->add_option("--corruption-seed", corruption_seed, "corruption stream seed");
    theory->add_option("--alphas", alphas, "grid start:step:end (default 0.01:0.01:0.5)");
    theory->add_option("--samples", samples, "Monte Carlo samples per grid point");
    theory->add_option("--seed", seed, "Monte Carlo master seed");
    theory->add_flag("--svg", theory_svg, "emit risk-vs-alpha SVG plot");
    theory->callback([&, r11_opt, basis_opt]() {
        run = [&, r11_opt, basis_opt]() {
            return cmd_theory(common, d, sigma1, sigma, w, r11, r11_opt->count() > 0, basis_seed,
                              basis_opt->count() > 0, corruption_seed, alphas, samples, seed,
                              theory_svg);
        };
    });

    auto* cp = app.add_subcommand("corrupt-preview", "PGM contact sheet of all corruptions");
    static std::string cp_out = ".";
    static uint64_t cp_seed = 7;
    cp->add_option("--out", cp_out, "output directory");
    cp->add_option("--seed", cp_seed, "probe image seed");
    cp->callback([&]() { run = [&]() { return cmd_corrupt_preview(cp_out, cp_seed); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems are config errors
    }

    try {
        rc = run();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return rc;
}
