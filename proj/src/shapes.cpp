#include "tttlab/shapes.hpp"

#include <algorithm>
#include <cmath>

#include "tttlab/rng.hpp"

namespace tttlab {

namespace {

constexpr int kSize = 32;

struct Vec2 {
    double x, y;
};

double sd_box(double px, double py, double bx, double by) {
    const double dx = std::abs(px) - bx;
    const double dy = std::abs(py) - by;
    const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
    return std::sqrt(ox * ox + oy * oy) + std::min(std::max(dx, dy), 0.0);
}

double sd_disk(double px, double py, double r) { return std::sqrt(px * px + py * py) - r; }

// Convex polygon interior via edge half-planes (negative inside).
double sd_triangle(double px, double py, double r) {
    const Vec2 v[3] = {{0.0, -r}, {-0.9 * r, 0.7 * r}, {0.9 * r, 0.7 * r}};
    double d = -1e9;
    for (int i = 0; i < 3; ++i) {
        const Vec2 a = v[i], b = v[(i + 1) % 3];
        const double ex = b.x - a.x, ey = b.y - a.y;
        const double len = std::sqrt(ex * ex + ey * ey);
        // outward normal for counter-clockwise winding
        const double nx = ey / len, ny = -ex / len;
        d = std::max(d, (px - a.x) * nx + (py - a.y) * ny);
    }
    return d;
}

double coverage(double sdf) { return std::clamp(0.5 - sdf, 0.0, 1.0); }

}  // namespace

const char* shape_class_name(int label) {
    static const char* names[kShapeSetClasses] = {"disk",          "square", "triangle",
                                                  "cross",         "ring",   "bar-horizontal",
                                                  "bar-vertical",  "checker"};
    if (label < 0 || label >= kShapeSetClasses) throw ConfigError("shape class out of range");
    return names[label];
}

Dataset gen_shapeset(int n_per_class, uint64_t seed) {
    if (n_per_class < 1) throw ConfigError("gen_shapeset: n-per-class must be >= 1");
    Dataset ds;
    ds.num_classes = kShapeSetClasses;
    int index = 0;
    for (int i = 0; i < n_per_class; ++i) {
        for (int label = 0; label < kShapeSetClasses; ++label, ++index) {
            Xoshiro256ss rng(derive_seed(seed, static_cast<uint64_t>(index)));
            const double cx = rng.uniform(11.0, 21.0);
            const double cy = rng.uniform(11.0, 21.0);
            const double r = rng.uniform(5.5, 9.5);
            const double fg = rng.uniform(0.55, 0.95);
            const double bg = rng.uniform(0.02, 0.15);
            const double amp = rng.uniform(0.02, 0.05);
            const double f1x = rng.uniform(0.15, 0.45), f1y = rng.uniform(0.15, 0.45);
            const double f2x = rng.uniform(0.15, 0.45), f2y = rng.uniform(0.15, 0.45);
            const double p1 = rng.uniform(0.0, 2.0 * M_PI), p2 = rng.uniform(0.0, 2.0 * M_PI);
            const int cell = 2 + static_cast<int>(rng.bounded(3));

            Sample s;
            s.image = Tensor<float>({1, kSize, kSize});
            s.label = label;
            s.id = "shape-" + std::to_string(index);
            for (int y = 0; y < kSize; ++y) {
                for (int x = 0; x < kSize; ++x) {
                    const double px = (x + 0.5) - cx, py = (y + 0.5) - cy;
                    double cov = 0.0;
                    switch (label) {
                        case 0: cov = coverage(sd_disk(px, py, r)); break;
                        case 1: cov = coverage(sd_box(px, py, 0.78 * r, 0.78 * r)); break;
                        case 2: cov = coverage(sd_triangle(px, py, r)); break;
                        case 3:
                            cov = coverage(std::min(sd_box(px, py, 0.9 * r, 0.3 * r),
                                                    sd_box(px, py, 0.3 * r, 0.9 * r)));
                            break;
                        case 4:
                            cov = coverage(std::abs(sd_disk(px, py, 0.72 * r)) - 0.28 * r);
                            break;
                        case 5: cov = coverage(sd_box(px, py, 0.95 * r, 0.3 * r)); break;
                        case 6: cov = coverage(sd_box(px, py, 0.3 * r, 0.95 * r)); break;
                        case 7: {
                            const double inside = coverage(sd_box(px, py, 0.85 * r, 0.85 * r));
                            const long ix = static_cast<long>(std::floor(px / cell));
                            const long iy = static_cast<long>(std::floor(py / cell));
                            cov = ((ix + iy) % 2 + 2) % 2 == 0 ? inside : 0.0;
                            break;
                        }
                        default: break;
                    }
                    const double tex = amp * 0.5 *
                                       (std::sin(f1x * x + f1y * y + p1) +
                                        std::sin(f2x * x + f2y * y + p2));
                    const double v = bg + (fg - bg) * cov + tex;
                    s.image.data[size_t(y) * kSize + x] =
                        static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

}  // namespace tttlab
