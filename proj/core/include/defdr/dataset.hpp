#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "defdr/image.hpp"
#include "defdr/prng.hpp"

namespace defdr {

// Ordered list of (image, class id). All images share one geometry.
struct LabeledDataset {
    std::vector<std::pair<ImageTensor, int>> items;
    int class_count = 0;

    size_t size() const { return items.size(); }
    const ImageTensor& image(size_t i) const { return items[i].first; }
    int label(size_t i) const { return items[i].second; }
};

constexpr int kShapeClassCount = 5;

// Synthetic 5-class set: filled circle, square outline, triangle,
// plus-cross, horizontal stripes. Randomized position/scale/colors plus
// uniform noise of amplitude 0.05. Labels are balanced within +-1 and the
// result is a pure function of the seed.
LabeledDataset gen_shapes_dataset(uint64_t seed, int n, int image_side);

// CSV manifest `path,label`, one PPM per row, paths relative to base_dir.
// Errors carry the 1-based data row number.
LabeledDataset load_manifest(const std::string& csv_text,
                             const std::string& base_dir);

// Writes images as PPM files plus a manifest.csv into dir.
void save_dataset(const LabeledDataset& ds, const std::string& dir,
                  const std::string& prefix = "img");

}  // namespace defdr
