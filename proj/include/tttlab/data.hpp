#pragma once

#include <string>
#include <vector>

#include "tttlab/tensor.hpp"

namespace tttlab {

// One labeled image; pixels in [0,1].
struct Sample {
    Tensor<float> image;  // [C,H,W]
    int label = 0;
    std::string id;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 0;

    size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

// "TTTD" binary image container: magic, version u32, count u32, channels u32,
// height u32, width u32, then count*C*H*W bytes (u8; value/255 -> float).
// Labels ride in a separate CSV `id,label`.
void save_raw_dataset(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path);
Dataset load_raw_dataset(const std::string& images_path, const std::string& labels_path);

// Grayscale PGM (P5), for corruption contact sheets.
void write_pgm(const Tensor<float>& image, const std::string& path);

// Rotate a square [C,H,W] image by k*90 degrees counter-clockwise.
template <typename T>
Tensor<T> rot90(const Tensor<T>& image, int k) {
    if (image.rank() != 3) throw ShapeError("rot90: expected [C,H,W]");
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (h != w) throw ShapeError("rot90: image must be square");
    Tensor<T> out = image;
    for (int turn = 0; turn < ((k % 4) + 4) % 4; ++turn) {
        Tensor<T> next({c, h, w});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    next.data[(size_t(ch) * h + y) * w + x] =
                        out.data[(size_t(ch) * h + x) * w + (w - 1 - y)];
        out = std::move(next);
    }
    return out;
}

}  // namespace tttlab
