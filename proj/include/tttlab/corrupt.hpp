#pragma once

#include <array>
#include <string>
#include <vector>

#include "tttlab/data.hpp"
#include "tttlab/rng.hpp"

namespace tttlab {

// Evaluation-only distribution shifts. Nothing here may be reachable from a
// training pipeline; the regimes module asserts that through the transform
// audit.
enum class CorruptionKind {
    GaussianNoise,
    ShotNoise,
    DefocusBlur,
    Contrast,
    Brightness,
    Pixelate,
    Quantize,
};

struct CorruptionSpec {
    CorruptionKind kind;
    int severity;  // 1..5

    void validate() const;
};

const char* corruption_kind_name(CorruptionKind k);
CorruptionKind corruption_kind_from_name(const std::string& name);
std::vector<std::string> all_corruption_kind_names();

// Parse "kind:severity".
CorruptionSpec parse_corruption_spec(const std::string& text);

// Severity tables (index 0 = severity 1):
//   gaussian-noise std            {0.04, 0.08, 0.12, 0.18, 0.26}
//   shot-noise photon scale       {250, 100, 50, 25, 12}
//   defocus-blur box radius       {1, 1, 2, 2, 3} applied {1, 2, 1, 2, 2} times
//   contrast factor (mean pivot)  {0.75, 0.6, 0.45, 0.3, 0.15}
//   brightness offset             {0.08, 0.16, 0.24, 0.32, 0.4}
//   pixelate downscale factor     {1.33, 2, 2.67, 4, 8}, nearest-neighbor round trip
//   quantize levels               {24, 16, 12, 8, 5}
// Output is clamped to [0,1].
Tensor<float> corrupt(const Tensor<float>& image, const CorruptionSpec& spec, Xoshiro256ss& rng);

}  // namespace tttlab
