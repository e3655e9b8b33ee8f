#pragma once

#include "tttlab/configfile.hpp"
#include "tttlab/corrupt.hpp"
#include "tttlab/heads.hpp"
#include "tttlab/regimes.hpp"
#include "tttlab/theory.hpp"
#include "tttlab/ttt.hpp"

namespace tttlab {

struct DatasetSpec {
    std::string kind = "shapeset";  // shapeset | raw
    int train_per_class = 512;
    int test_per_class = 8;
    uint64_t train_seed = 1;
    uint64_t test_seed = 2;
    std::string train_images, train_labels, test_images, test_labels;  // raw mode
};

struct TheorySpec {
    int d = 8;
    double sigma1 = 4.0, sigma = 1.0, w = 1.0;
    std::optional<double> r11 = 0.6;
    std::optional<uint64_t> basis_seed;  // absent -> U = I
    uint64_t corruption_seed = 0;
    int64_t samples = 20000;
    std::vector<double> alphas;  // defaults to {0.01..0.5} step 0.01
};

// Everything that determines a run. Echoed verbatim (as canonical JSON) into
// every output artifact together with the tool version.
struct RunConfig {
    uint64_t seed = 42;
    DatasetSpec dataset;
    MaeConfig mae;
    RegimeConfig pretrain;  // reconstruction pretraining budget
    RegimeConfig regime;    // head-training budget
    HeadConfig head;
    TttConfig ttt;
    TheorySpec theory;
    std::vector<CorruptionSpec> corruptions;
    std::string out_dir = ".";

    static RunConfig from_file(const std::string& path);
    static RunConfig from_doc(const ConfigDoc& doc);

    // Canonical single-line JSON echo (sorted keys, deterministic floats).
    std::string echo() const;
};

// "start:step:end" inclusive grid.
std::vector<double> parse_alpha_grid(const std::string& text);

Dataset build_train_set(const DatasetSpec& spec);
Dataset build_test_set(const DatasetSpec& spec);

}  // namespace tttlab
