#pragma once

#include "tttlab/data.hpp"

namespace tttlab {

// Procedural 8-class 32x32 grayscale dataset: disk, square, triangle, cross,
// ring, bar-horizontal, bar-vertical, checker. Position, scale and intensity
// are randomized per sample; a gentle additive texture keeps reconstruction
// non-trivial. The disk class is rotation-invariant by construction.
inline constexpr int kShapeSetClasses = 8;

const char* shape_class_name(int label);

Dataset gen_shapeset(int n_per_class, uint64_t seed);

}  // namespace tttlab
