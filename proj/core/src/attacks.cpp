#include "defdr/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "defdr/ppm.hpp"

namespace defdr {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNeutralGray = 0.5;

void check_patch_fits(int h, int w, const PatchSpec& spec) {
    if (spec.side < 2) throw std::invalid_argument("patch side must be >= 2");
    if (spec.side > std::min(h, w))
        throw std::invalid_argument("patch side exceeds image");
    if (spec.placement == PatchSpec::Placement::Fixed) {
        if (spec.row < 0 || spec.col < 0 || spec.row + spec.side > h ||
            spec.col + spec.side > w)
            throw std::invalid_argument("fixed patch placement out of bounds");
    }
}

MaskMatrix square_mask(int h, int w, int side, int row, int col) {
    MaskMatrix m;
    m.height = h;
    m.width = w;
    m.bits.assign(static_cast<size_t>(h) * w, 0);
    for (int r = row; r < row + side; ++r)
        for (int c = col; c < col + side; ++c)
            m.bits[static_cast<size_t>(r) * w + c] = 1;
    return m;
}

struct BilinearTap {
    int idx;        // source pixel flat (r * side + c), -1 for neutral gray
    double weight;
};

// The four taps feeding one rotated output pixel.
void rotation_taps(int side, double angle_deg, int out_r, int out_c,
                   BilinearTap taps[4]) {
    double center = (side - 1) * 0.5;
    double rad = angle_deg * kPi / 180.0;
    double cs = std::cos(rad), sn = std::sin(rad);
    double dy = out_r - center, dx = out_c - center;
    // inverse rotation: where this output pixel reads from
    double sy = center + cs * dy + sn * dx;
    double sx = center - sn * dy + cs * dx;
    int y0 = static_cast<int>(std::floor(sy));
    int x0 = static_cast<int>(std::floor(sx));
    double fy = sy - y0, fx = sx - x0;
    const double wts[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx),
                           fy * fx};
    const int offs[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    for (int k = 0; k < 4; ++k) {
        int y = y0 + offs[k][0], x = x0 + offs[k][1];
        bool inside = y >= 0 && y < side && x >= 0 && x < side;
        taps[k] = BilinearTap{inside ? y * side + x : -1, wts[k]};
    }
}

}  // namespace

void EotParams::validate() const {
    if (max_translation < 0)
        throw std::invalid_argument("eot: negative translation range");
    if (max_rotation < 0.0 || max_rotation > 45.0)
        throw std::invalid_argument("eot: rotation range must be in [0, 45]");
    if (!(brightness_lo <= 1.0 && 1.0 <= brightness_hi))
        throw std::invalid_argument("eot: brightness range must bracket 1");
}

MaskResult make_mask(int h, int w, const PatchSpec& spec, Prng& rng) {
    check_patch_fits(h, w, spec);
    int row = spec.row, col = spec.col;
    if (spec.placement == PatchSpec::Placement::Random) {
        row = rng.uniform_int(0, h - spec.side);
        col = rng.uniform_int(0, w - spec.side);
    }
    return MaskResult{square_mask(h, w, spec.side, row, col), row, col};
}

ImageTensor apply_patch(const ImageTensor& x, const ImageTensor& patch,
                        const MaskMatrix& mask, int row, int col) {
    if (mask.height != x.height() || mask.width != x.width())
        throw std::invalid_argument("apply_patch: mask/image size mismatch");
    if (row < 0 || col < 0 || row + patch.height() > x.height() ||
        col + patch.width() > x.width())
        throw std::invalid_argument("apply_patch: patch out of bounds");

    ImageTensor out = x;
    for (int r = 0; r < x.height(); ++r)
        for (int c = 0; c < x.width(); ++c) {
            if (!mask.at(r, c)) continue;
            for (int ch = 0; ch < 3; ++ch)
                out.set(r, c, ch, patch.at(r - row, c - col, ch));
        }
    return out;
}

Transform sample_transform(Prng& rng, const EotParams& eot) {
    eot.validate();
    Transform t;
    t.d_row = rng.uniform_int(-eot.max_translation, eot.max_translation);
    t.d_col = rng.uniform_int(-eot.max_translation, eot.max_translation);
    t.angle_deg = rng.uniform(-eot.max_rotation, eot.max_rotation);
    t.brightness = rng.uniform(eot.brightness_lo, eot.brightness_hi);
    return t;
}

ImageTensor apply_transform(const ImageTensor& patch, const Transform& t) {
    int side = patch.height();
    std::vector<double> out(static_cast<size_t>(side) * side * 3);
    BilinearTap taps[4];
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            rotation_taps(side, t.angle_deg, r, c, taps);
            for (int ch = 0; ch < 3; ++ch) {
                double v = 0.0;
                for (const BilinearTap& tap : taps) {
                    double src = tap.idx < 0
                                     ? kNeutralGray
                                     : patch.data()[tap.idx * 3 + ch];
                    v += tap.weight * src;
                }
                out[(static_cast<size_t>(r) * side + c) * 3 + ch] =
                    v * t.brightness;  // ImageTensor ctor clamps
            }
        }
    return ImageTensor(side, side, std::move(out));
}

std::vector<double> transform_backward(const ImageTensor& patch,
                                       const Transform& t,
                                       const std::vector<double>& grad_out) {
    int side = patch.height();
    if (grad_out.size() != patch.size())
        throw std::invalid_argument("transform_backward: gradient size mismatch");
    std::vector<double> grad_in(patch.size(), 0.0);
    BilinearTap taps[4];
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            rotation_taps(side, t.angle_deg, r, c, taps);
            for (int ch = 0; ch < 3; ++ch) {
                // redo the forward value to know whether clamping saturated
                double v = 0.0;
                for (const BilinearTap& tap : taps)
                    v += tap.weight * (tap.idx < 0
                                           ? kNeutralGray
                                           : patch.data()[tap.idx * 3 + ch]);
                v *= t.brightness;
                if (v < 0.0 || v > 1.0) continue;  // saturated, no gradient
                double g = grad_out[(static_cast<size_t>(r) * side + c) * 3 + ch] *
                           t.brightness;
                for (const BilinearTap& tap : taps)
                    if (tap.idx >= 0)
                        grad_in[tap.idx * 3 + ch] += tap.weight * g;
            }
        }
    return grad_in;
}

namespace {

ImageTensor random_patch(int side, Prng& rng) {
    std::vector<double> px(static_cast<size_t>(side) * side * 3);
    for (double& v : px) v = rng.next_double();
    return ImageTensor(side, side, std::move(px));
}

void check_attack_inputs(const ClassifierModel& model,
                         const LabeledDataset& data, const PatchSpec& spec) {
    if (data.size() == 0) throw std::invalid_argument("attack: empty dataset");
    if (spec.target_class < 0 || spec.target_class >= model.class_count)
        throw std::invalid_argument("attack: target class out of range");
    check_patch_fits(data.image(0).height(), data.image(0).width(), spec);
}

// Shared ascent step: paste `paste` at (row, col), read back the gradient
// of log P(target) over the pasted region.
std::vector<double> pasted_region_grad(const ClassifierModel& model,
                                       const ImageTensor& img,
                                       const ImageTensor& paste,
                                       const MaskMatrix& mask, int row,
                                       int col, int target) {
    ImageTensor attacked = apply_patch(img, paste, mask, row, col);
    auto [logp, grad] = logprob_input_grad(model, attacked, target);
    (void)logp;
    int side = paste.height();
    std::vector<double> region(static_cast<size_t>(side) * side * 3);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
            for (int ch = 0; ch < 3; ++ch)
                region[(static_cast<size_t>(r) * side + c) * 3 + ch] =
                    grad.at(row + r, col + c, ch);
    return region;
}

void ascend_clamped(ImageTensor& patch, const std::vector<double>& grad,
                    double lr) {
    int side = patch.height();
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                size_t i = (static_cast<size_t>(r) * side + c) * 3 + ch;
                patch.set(r, c, ch, patch.at(r, c, ch) + lr * grad[i]);
            }
}

}  // namespace

TrainedPatch train_patch_lavan(const ClassifierModel& model,
                               const LabeledDataset& data,
                               const PatchSpec& spec, int epochs, double lr,
                               Prng& rng) {
    if (spec.placement != PatchSpec::Placement::Fixed)
        throw std::invalid_argument("train_patch_lavan: placement must be Fixed");
    check_attack_inputs(model, data, spec);

    TrainedPatch patch;
    patch.spec = spec;
    patch.pixels = random_patch(spec.side, rng);
    patch.epochs_trained = epochs;

    const ImageTensor& first = data.image(0);
    MaskMatrix mask =
        square_mask(first.height(), first.width(), spec.side, spec.row, spec.col);

    long steps = static_cast<long>(epochs) * static_cast<long>(data.size());
    for (long s = 0; s < steps; ++s) {
        int idx = rng.uniform_int(0, static_cast<int>(data.size()) - 1);
        std::vector<double> grad =
            pasted_region_grad(model, data.image(idx), patch.pixels, mask,
                               spec.row, spec.col, spec.target_class);
        ascend_clamped(patch.pixels, grad, lr);
    }

    patch.final_success_rate =
        attack_success_rate(model, patch, data, rng).targeted_success;
    return patch;
}

TrainedPatch train_patch_googleap(const ClassifierModel& model,
                                  const LabeledDataset& data,
                                  const PatchSpec& spec, const EotParams& eot,
                                  int epochs, double lr, Prng& rng) {
    if (spec.placement != PatchSpec::Placement::Random)
        throw std::invalid_argument(
            "train_patch_googleap: placement must be Random");
    check_attack_inputs(model, data, spec);
    eot.validate();

    TrainedPatch patch;
    patch.spec = spec;
    patch.pixels = random_patch(spec.side, rng);
    patch.epochs_trained = epochs;

    int h = data.image(0).height(), w = data.image(0).width();
    long steps = static_cast<long>(epochs) * static_cast<long>(data.size());
    for (long s = 0; s < steps; ++s) {
        int idx = rng.uniform_int(0, static_cast<int>(data.size()) - 1);
        MaskResult placed = make_mask(h, w, spec, rng);
        Transform t = sample_transform(rng, eot);
        // translation shifts the paste corner, clamped back into bounds
        int row = std::clamp(placed.row + t.d_row, 0, h - spec.side);
        int col = std::clamp(placed.col + t.d_col, 0, w - spec.side);
        MaskMatrix mask = square_mask(h, w, spec.side, row, col);

        ImageTensor warped = apply_transform(patch.pixels, t);
        std::vector<double> region_grad = pasted_region_grad(
            model, data.image(idx), warped, mask, row, col, spec.target_class);
        std::vector<double> grad =
            transform_backward(patch.pixels, t, region_grad);
        ascend_clamped(patch.pixels, grad, lr);
    }

    patch.final_success_rate =
        attack_success_rate(model, patch, data, rng).targeted_success;
    return patch;
}

AttackStats attack_success_rate(const ClassifierModel& model,
                                const TrainedPatch& patch,
                                const LabeledDataset& data, Prng& rng) {
    if (data.size() == 0)
        throw std::invalid_argument("attack_success_rate: empty dataset");
    int h = data.image(0).height(), w = data.image(0).width();
    check_patch_fits(h, w, patch.spec);

    size_t targeted_hits = 0, targeted_total = 0, correct = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        MaskResult placed = make_mask(h, w, patch.spec, rng);
        ImageTensor attacked =
            apply_patch(data.image(i), patch.pixels, placed.mask, placed.row,
                        placed.col);
        int pred = predict(model, attacked);
        if (pred == data.label(i)) ++correct;
        if (data.label(i) != patch.spec.target_class) {
            ++targeted_total;
            if (pred == patch.spec.target_class) ++targeted_hits;
        }
    }
    AttackStats st;
    st.accuracy_under_attack =
        static_cast<double>(correct) / static_cast<double>(data.size());
    st.targeted_success =
        targeted_total == 0
            ? 0.0
            : static_cast<double>(targeted_hits) /
                  static_cast<double>(targeted_total);
    return st;
}

void save_patch(const TrainedPatch& patch, const std::string& ppm_path,
                uint64_t seed) {
    save_ppm_file(patch.pixels, ppm_path);

    nlohmann::json j;
    j["side"] = patch.spec.side;
    if (patch.spec.placement == PatchSpec::Placement::Random) {
        j["placement"] = "random";
    } else {
        j["placement"] = {{"row", patch.spec.row}, {"col", patch.spec.col}};
    }
    j["target_class"] = patch.spec.target_class;
    j["epochs_trained"] = patch.epochs_trained;
    j["seed"] = seed;

    std::ofstream out(ppm_path + ".json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + ppm_path + ".json");
    out << j.dump(2) << '\n';
}

TrainedPatch load_patch(const std::string& ppm_path) {
    TrainedPatch patch;
    patch.pixels = load_ppm_file(ppm_path);
    if (patch.pixels.height() != patch.pixels.width())
        throw std::runtime_error("patch pixels must be square");

    std::ifstream in(ppm_path + ".json");
    if (!in) throw std::runtime_error("cannot open " + ppm_path + ".json");
    nlohmann::json j = nlohmann::json::parse(in);

    patch.spec.side = j.at("side").get<int>();
    if (patch.spec.side != patch.pixels.height())
        throw std::runtime_error("patch sidecar side disagrees with pixels");
    const auto& pl = j.at("placement");
    if (pl.is_string() && pl.get<std::string>() == "random") {
        patch.spec.placement = PatchSpec::Placement::Random;
    } else if (pl.is_object()) {
        patch.spec.placement = PatchSpec::Placement::Fixed;
        patch.spec.row = pl.at("row").get<int>();
        patch.spec.col = pl.at("col").get<int>();
    } else {
        throw std::runtime_error("patch sidecar has malformed placement");
    }
    patch.spec.target_class = j.at("target_class").get<int>();
    patch.epochs_trained = j.at("epochs_trained").get<int>();
    return patch;
}

}  // namespace defdr
