#pragma once

#include <cstdint>
#include <string>

#include "flowleak/fl/client.hpp"

namespace flowleak::data {

// Procedural grayscale dataset: class k always draws shape kind k, with
// position, scale, and intensity randomized per image. Classes cycle i % classes
// so any n divisible by the class count is exactly stratified. Images are
// (1, size, size) with values in [0,1]; per-image streams are derived from the
// dataset seed, so generation is order-independent and deterministic.
//
// Shape kinds, in class order: filled rectangle, horizontal stripes, plus
// cross, checkerboard, filled disk, diagonal stripes, hollow rectangle,
// diagonal cross, vertical stripes, ring.
fl::ClientDataset gen_shapes_dataset(std::size_t n, int size, int classes, std::uint64_t seed);

// Human-readable name of the shape drawn for a class, for reports.
std::string shape_class_name(int cls);

}  // namespace flowleak::data
