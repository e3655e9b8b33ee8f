#include "tttlab/augment.hpp"

#include <algorithm>

#include "tttlab/common.hpp"
#include "tttlab/corrupt.hpp"

namespace tttlab {

Tensor<float> apply_augment(const Tensor<float>& image, const AugmentConfig& cfg,
                            Xoshiro256ss& rng) {
    if (image.rank() != 3) throw ShapeError("augment: expected [C,H,W]");
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    Tensor<float> out = image;

    if (cfg.crop_pad > 0) {
        const int p = cfg.crop_pad;
        const int oy = static_cast<int>(rng.bounded(2 * p + 1)) - p;
        const int ox = static_cast<int>(rng.bounded(2 * p + 1)) - p;
        Tensor<float> shifted({c, h, w});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int sy = y + oy, sx = x + ox;
                    shifted.data[(size_t(ch) * h + y) * w + x] =
                        (sy >= 0 && sy < h && sx >= 0 && sx < w)
                            ? out.data[(size_t(ch) * h + sy) * w + sx]
                            : 0.0f;
                }
        out = std::move(shifted);
    }

    if (cfg.flip_prob > 0 && rng.uniform() < cfg.flip_prob) {
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w / 2; ++x)
                    std::swap(out.data[(size_t(ch) * h + y) * w + x],
                              out.data[(size_t(ch) * h + y) * w + (w - 1 - x)]);
    }
    return out;
}

void audit_training_transforms(const AugmentConfig& cfg) {
    const auto corruptions = all_corruption_kind_names();
    for (const auto& name : cfg.transform_names())
        for (const auto& bad : corruptions)
            if (name == bad)
                throw ConfigError("training transform '" + name +
                                  "' collides with an evaluation corruption");
}

}  // namespace tttlab
