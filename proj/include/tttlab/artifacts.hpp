#pragma once

#include <string>

#include "tttlab/corrupt.hpp"
#include "tttlab/theory.hpp"
#include "tttlab/ttt.hpp"

namespace tttlab {

// Rows: image_id,step,loss_recon,loss_main,pred,correct
void write_trace_csv(const std::string& path, const TttEvalResult& result,
                     const std::string& config_echo);

// Rows: alpha,risk,se (alpha = 0 baseline first).
void write_risk_csv(const std::string& path, const TheoremReport& report,
                    const std::string& config_echo);

std::string theorem_report_json(const TheoremReport& report, const AlignmentResult* alignment,
                                const std::string& config_echo, double wall_time_seconds);

// Per-corruption accuracy summary with config echo and version.
struct CorruptionSummary {
    std::string corruption;  // "kind:severity" or "none"
    TttEvalResult result;
};

std::string ttt_summary_json(const std::vector<CorruptionSummary>& summaries,
                             const std::string& config_echo, double wall_time_seconds);

// Corrupt every sample with a per-image stream derived from (seed, spec, id).
Dataset corrupt_dataset(const Dataset& ds, const CorruptionSpec& spec, uint64_t seed);

std::string format_double(double v);  // canonical %.10g, "nan" for NaN

}  // namespace tttlab
