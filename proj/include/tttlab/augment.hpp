#pragma once

#include <string>
#include <vector>

#include "tttlab/data.hpp"
#include "tttlab/rng.hpp"

namespace tttlab {

// Training-time augmentations: zero-pad-and-crop plus horizontal flip.
// This is the complete set; the audit below is checked by every regime
// against the corruption kinds to keep evaluation shifts out of training.
struct AugmentConfig {
    int crop_pad = 2;
    double flip_prob = 0.5;

    std::vector<std::string> transform_names() const {
        std::vector<std::string> names;
        if (crop_pad > 0) names.push_back("pad-crop");
        if (flip_prob > 0) names.push_back("horizontal-flip");
        return names;
    }
};

Tensor<float> apply_augment(const Tensor<float>& image, const AugmentConfig& cfg,
                            Xoshiro256ss& rng);

// Throws ConfigError if any training transform name collides with an
// evaluation corruption kind.
void audit_training_transforms(const AugmentConfig& cfg);

}  // namespace tttlab
