#include "tttlab/corrupt.hpp"

#include <algorithm>
#include <cmath>

#include "tttlab/common.hpp"

namespace tttlab {

namespace {

constexpr double kGaussStd[5] = {0.04, 0.08, 0.12, 0.18, 0.26};
constexpr double kShotScale[5] = {250, 100, 50, 25, 12};
constexpr int kBlurRadius[5] = {1, 1, 2, 2, 3};
constexpr int kBlurPasses[5] = {1, 2, 1, 2, 2};
constexpr double kContrast[5] = {0.75, 0.6, 0.45, 0.3, 0.15};
constexpr double kBrightness[5] = {0.08, 0.16, 0.24, 0.32, 0.4};
constexpr double kPixelate[5] = {1.33, 2.0, 2.67, 4.0, 8.0};
constexpr int kQuantize[5] = {24, 16, 12, 8, 5};

void clamp01(Tensor<float>& img) {
    for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

// Knuth's product-of-uniforms Poisson sampler; exact and deterministic.
long poisson_draw(double lambda, Xoshiro256ss& rng) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    long k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.uniform();
    } while (p > limit);
    return k - 1;
}

// Box blur with clamp-to-edge, one channel plane at a time.
void box_blur_plane(std::vector<float>& plane, int h, int w, int radius) {
    std::vector<float> tmp(plane.size());
    const float inv = 1.0f / float(2 * radius + 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int dx = -radius; dx <= radius; ++dx)
                acc += plane[size_t(y) * w + std::clamp(x + dx, 0, w - 1)];
            tmp[size_t(y) * w + x] = acc * inv;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int dy = -radius; dy <= radius; ++dy)
                acc += tmp[size_t(std::clamp(y + dy, 0, h - 1)) * w + x];
            plane[size_t(y) * w + x] = acc * inv;
        }
}

}  // namespace

void CorruptionSpec::validate() const {
    if (severity < 1 || severity > 5) throw ConfigError("corruption severity outside 1..5");
}

const char* corruption_kind_name(CorruptionKind k) {
    switch (k) {
        case CorruptionKind::GaussianNoise: return "gaussian-noise";
        case CorruptionKind::ShotNoise: return "shot-noise";
        case CorruptionKind::DefocusBlur: return "defocus-blur";
        case CorruptionKind::Contrast: return "contrast";
        case CorruptionKind::Brightness: return "brightness";
        case CorruptionKind::Pixelate: return "pixelate";
        case CorruptionKind::Quantize: return "quantize";
    }
    throw ConfigError("unknown corruption kind");
}

std::vector<std::string> all_corruption_kind_names() {
    return {"gaussian-noise", "shot-noise", "defocus-blur", "contrast",
            "brightness",     "pixelate",   "quantize"};
}

CorruptionKind corruption_kind_from_name(const std::string& name) {
    const auto names = all_corruption_kind_names();
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<CorruptionKind>(i);
    throw ConfigError("unknown corruption kind '" + name + "'");
}

CorruptionSpec parse_corruption_spec(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw ConfigError("corruption spec must be kind:severity, got '" + text + "'");
    CorruptionSpec spec;
    spec.kind = corruption_kind_from_name(text.substr(0, colon));
    try {
        spec.severity = std::stoi(text.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("bad corruption severity in '" + text + "'");
    }
    spec.validate();
    return spec;
}

Tensor<float> corrupt(const Tensor<float>& image, const CorruptionSpec& spec, Xoshiro256ss& rng) {
    spec.validate();
    if (image.rank() != 3) throw ShapeError("corrupt: expected [C,H,W]");
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    const int s = spec.severity - 1;
    Tensor<float> out = image;

    switch (spec.kind) {
        case CorruptionKind::GaussianNoise: {
            const double std_dev = kGaussStd[s];
            for (float& v : out.data) v += static_cast<float>(rng.normal(0.0, std_dev));
            break;
        }
        case CorruptionKind::ShotNoise: {
            const double scale = kShotScale[s];
            for (float& v : out.data)
                v = static_cast<float>(
                    poisson_draw(std::clamp(double(v), 0.0, 1.0) * scale, rng) / scale);
            break;
        }
        case CorruptionKind::DefocusBlur: {
            for (int pass = 0; pass < kBlurPasses[s]; ++pass)
                for (int ch = 0; ch < c; ++ch) {
                    std::vector<float> plane(out.data.begin() + size_t(ch) * h * w,
                                             out.data.begin() + size_t(ch + 1) * h * w);
                    box_blur_plane(plane, h, w, kBlurRadius[s]);
                    std::copy(plane.begin(), plane.end(), out.data.begin() + size_t(ch) * h * w);
                }
            break;
        }
        case CorruptionKind::Contrast: {
            double mean = 0.0;
            for (float v : out.data) mean += v;
            mean /= double(out.data.size());
            const double f = kContrast[s];
            for (float& v : out.data) v = static_cast<float>(mean + (v - mean) * f);
            break;
        }
        case CorruptionKind::Brightness: {
            const float off = static_cast<float>(kBrightness[s]);
            for (float& v : out.data) v += off;
            break;
        }
        case CorruptionKind::Pixelate: {
            const double f = kPixelate[s];
            const int dh = std::max(1, static_cast<int>(std::lround(h / f)));
            const int dw = std::max(1, static_cast<int>(std::lround(w / f)));
            for (int ch = 0; ch < c; ++ch) {
                std::vector<float> down(size_t(dh) * dw);
                for (int y = 0; y < dh; ++y)
                    for (int x = 0; x < dw; ++x) {
                        const int sy = std::min(h - 1, int((y + 0.5) * h / dh));
                        const int sx = std::min(w - 1, int((x + 0.5) * w / dw));
                        down[size_t(y) * dw + x] = out.data[(size_t(ch) * h + sy) * w + sx];
                    }
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        const int sy = std::min(dh - 1, int((y + 0.5) * dh / h));
                        const int sx = std::min(dw - 1, int((x + 0.5) * dw / w));
                        out.data[(size_t(ch) * h + y) * w + x] = down[size_t(sy) * dw + sx];
                    }
            }
            break;
        }
        case CorruptionKind::Quantize: {
            const float q = static_cast<float>(kQuantize[s] - 1);
            for (float& v : out.data)
                v = std::round(std::clamp(v, 0.0f, 1.0f) * q) / q;
            break;
        }
    }
    clamp01(out);
    return out;
}

}  // namespace tttlab
