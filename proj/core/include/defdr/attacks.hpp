#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defdr/classifier.hpp"
#include "defdr/dataset.hpp"
#include "defdr/image.hpp"
#include "defdr/prng.hpp"

namespace defdr {

// Square patch geometry and target. Fixed placement pins the top-left
// corner; Random draws a fresh fully-in-bounds corner per use.
struct PatchSpec {
    enum class Placement { Fixed, Random };

    int side = 8;
    Placement placement = Placement::Random;
    int row = 0;  // Fixed only
    int col = 0;
    int target_class = 0;
};

// Binary pasting mask; for a patch spec the 1-region is one side x side
// square.
struct MaskMatrix {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> bits;

    uint8_t at(int r, int c) const {
        return bits[static_cast<size_t>(r) * width + c];
    }
};

struct TrainedPatch {
    ImageTensor pixels;  // side x side x 3, clamped like any image
    PatchSpec spec;
    int epochs_trained = 0;
    double final_success_rate = 0.0;
};

// Ranges for Expectation over Transformation draws.
struct EotParams {
    int max_translation = 0;      // pixels, both axes
    double max_rotation = 0.0;    // degrees, in [0, 45]
    double brightness_lo = 1.0;   // multiplicative, lo <= 1 <= hi
    double brightness_hi = 1.0;

    void validate() const;
    static EotParams identity() { return EotParams{}; }
};

struct Transform {
    int d_row = 0;
    int d_col = 0;
    double angle_deg = 0.0;
    double brightness = 1.0;
};

struct MaskResult {
    MaskMatrix mask;
    int row = 0;
    int col = 0;
};

// Builds the pasting mask for an h x w image. Random placement draws the
// corner uniformly over all fully-in-bounds positions (row first, then
// column).
MaskResult make_mask(int h, int w, const PatchSpec& spec, Prng& rng);

// The blend x* = (1 - m) .* x + m .* P with P translated to the corner.
ImageTensor apply_patch(const ImageTensor& x, const ImageTensor& patch,
                        const MaskMatrix& mask, int row, int col);

// Independent uniform draws: translation, rotation, brightness (in that
// order; each range consumes its draws even when degenerate).
Transform sample_transform(Prng& rng, const EotParams& eot);

// Rotation about the patch center with bilinear interpolation (sources
// outside the patch read neutral gray 0.5), then brightness multiply, then
// clamp. Translation is not resampled here; it offsets the paste corner.
ImageTensor apply_transform(const ImageTensor& patch, const Transform& t);

// Pulls a gradient on the transformed patch back to the original pixels.
// The forward map is linear (constant bilinear weights times brightness)
// except where clamping saturated an output; those entries pass nothing.
std::vector<double> transform_backward(const ImageTensor& patch,
                                       const Transform& t,
                                       const std::vector<double>& grad_out);

// Fixed-location patch training: ascend log P(target | x with patch) with
// respect to the patch pixels over `epochs` passes of dataset-size steps.
TrainedPatch train_patch_lavan(const ClassifierModel& model,
                               const LabeledDataset& data,
                               const PatchSpec& spec, int epochs, double lr,
                               Prng& rng);

// Universal patch training: every step draws a fresh location and a fresh
// transform; the gradient flows through the transform's linear map.
TrainedPatch train_patch_googleap(const ClassifierModel& model,
                                  const LabeledDataset& data,
                                  const PatchSpec& spec, const EotParams& eot,
                                  int epochs, double lr, Prng& rng);

struct AttackStats {
    double targeted_success = 0.0;    // over images whose label != target
    double accuracy_under_attack = 0.0;
};

AttackStats attack_success_rate(const ClassifierModel& model,
                                const TrainedPatch& patch,
                                const LabeledDataset& data, Prng& rng);

// Patch artifact: PPM of the pixels plus a JSON sidecar
// {side, placement, target_class, epochs_trained, seed} at path + ".json".
void save_patch(const TrainedPatch& patch, const std::string& ppm_path,
                uint64_t seed);
TrainedPatch load_patch(const std::string& ppm_path);

}  // namespace defdr
