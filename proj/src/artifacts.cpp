#include "tttlab/artifacts.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "tttlab/corrupt.hpp"

namespace tttlab {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_trace_csv(const std::string& path, const TttEvalResult& result,
                     const std::string& config_echo) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "# tttlab " << kVersion << "\n";
    f << "# config: " << config_echo << "\n";
    f << "image_id,step,loss_recon,loss_main,pred,correct\n";
    for (size_t i = 0; i < result.traces.size(); ++i) {
        const EpisodeTrace& tr = result.traces[i];
        for (size_t s = 0; s < tr.pred.size(); ++s)
            f << result.ids[i] << "," << s << "," << format_double(tr.loss_recon[s]) << ","
              << format_double(tr.loss_main[s]) << "," << tr.pred[s] << ","
              << (tr.pred[s] == result.labels[i] ? 1 : 0) << "\n";
    }
    if (!f) throw IoError("write failed for '" + path + "'");
}

void write_risk_csv(const std::string& path, const TheoremReport& report,
                    const std::string& config_echo) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "# tttlab " << kVersion << "\n";
    f << "# config: " << config_echo << "\n";
    f << "alpha,risk,se\n";
    f << "0," << format_double(report.risk0) << "," << format_double(report.se0) << "\n";
    for (size_t i = 0; i < report.alphas.size(); ++i)
        f << format_double(report.alphas[i]) << "," << format_double(report.risks[i]) << ","
          << format_double(report.ses[i]) << "\n";
    if (!f) throw IoError("write failed for '" + path + "'");
}

std::string theorem_report_json(const TheoremReport& report, const AlignmentResult* alignment,
                                const std::string& config_echo, double wall_time_seconds) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["config"] = config_echo;
    j["r11"] = report.r11;
    j["assumption_ok"] = report.assumption_ok;
    j["pass"] = report.pass;
    j["note"] = report.note;
    j["risk_at_zero"] = {{"estimate", report.risk0}, {"se", report.se0}};
    j["risk_at_argmin"] = {{"alpha", report.argmin_alpha},
                           {"estimate", report.risk_min},
                           {"se", report.se_min}};
    nlohmann::json grid = nlohmann::json::array();
    for (size_t i = 0; i < report.alphas.size(); ++i)
        grid.push_back({{"alpha", report.alphas[i]},
                        {"risk", report.risks[i]},
                        {"se", report.ses[i]}});
    j["grid"] = grid;
    if (alignment) {
        j["alignment_derivative"] = {{"monte_carlo", alignment->monte_carlo},
                                     {"se", alignment->std_error},
                                     {"closed_form", alignment->closed_form},
                                     {"samples", alignment->n},
                                     {"within_3_se",
                                      std::abs(alignment->monte_carlo - alignment->closed_form) <=
                                          3.0 * alignment->std_error}};
    }
    j["wall_time_seconds"] = wall_time_seconds;
    return j.dump(2) + "\n";
}

std::string ttt_summary_json(const std::vector<CorruptionSummary>& summaries,
                             const std::string& config_echo, double wall_time_seconds) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["config"] = config_echo;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : summaries) {
        nlohmann::json e;
        e["corruption"] = s.corruption;
        e["accuracy_vs_step"] = s.result.accuracy_vs_step;
        e["baseline_accuracy"] = s.result.accuracy_vs_step.front();
        e["final_accuracy"] = s.result.accuracy_vs_step.back();
        e["images"] = s.result.ids.size();
        arr.push_back(e);
    }
    j["results"] = arr;
    j["wall_time_seconds"] = wall_time_seconds;
    return j.dump(2) + "\n";
}

Dataset corrupt_dataset(const Dataset& ds, const CorruptionSpec& spec, uint64_t seed) {
    spec.validate();
    Dataset out = ds;
    const uint64_t spec_tag =
        fnv1a64(std::string(corruption_kind_name(spec.kind)) + ":" + std::to_string(spec.severity));
    for (auto& s : out.samples) {
        Xoshiro256ss rng(derive_seed(seed ^ spec_tag, fnv1a64(s.id)));
        s.image = corrupt(s.image, spec, rng);
    }
    return out;
}

}  // namespace tttlab
