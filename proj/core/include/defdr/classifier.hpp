#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defdr/dataset.hpp"
#include "defdr/image.hpp"
#include "defdr/prng.hpp"

namespace defdr {

// conv(3x3, pad 1) -> relu -> maxpool 2x2 -> conv -> relu -> maxpool
// -> dense -> softmax. Two pools, so image_side must be divisible by 4.
struct ModelParams {
    std::vector<double> conv1_w;  // [8][3][3][3], oc-major
    std::vector<double> conv1_b;  // [8]
    std::vector<double> conv2_w;  // [16][8][3][3]
    std::vector<double> conv2_b;  // [16]
    std::vector<double> dense_w;  // [class][feature]
    std::vector<double> dense_b;  // [class]

    void resize_like(int image_side, int class_count);
    void fill(double v);
    // this += scale * other, elementwise across all six tensors
    void axpy(double scale, const ModelParams& other);
    void scale(double s);
};

struct ClassifierModel {
    int image_side = 0;
    int class_count = 0;
    ModelParams params;

    ClassifierModel() = default;
    ClassifierModel(int image_side, int class_count);

    static constexpr int kConv1Out = 8;
    static constexpr int kConv2Out = 16;
    int feature_count() const {
        int q = image_side / 4;
        return kConv2Out * q * q;
    }
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    uint64_t seed = 42;
};

struct ForwardResult {
    std::vector<double> logits;
    std::vector<double> probs;
};

ForwardResult forward(const ClassifierModel& model, const ImageTensor& img);

// Gradient of the mean cross-entropy over a batch. input_grads[i] holds
// d loss / d pixel in the image's own (row, column, channel) layout.
struct InputGradient {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // (row, column, channel) order, unclamped

    double at(int r, int c, int ch) const {
        return data[(static_cast<size_t>(r) * width + c) * 3 + ch];
    }
};

struct BatchGradients {
    double loss = 0.0;
    ModelParams param_grads;
    std::vector<InputGradient> input_grads;
};

BatchGradients loss_and_gradients(
    const ClassifierModel& model,
    const std::vector<std::pair<ImageTensor, int>>& batch,
    bool want_param_grads = true, bool want_input_grads = true);

// log P(target | img) and its exact gradient with respect to the pixels.
// The attack trainers ascend this.
std::pair<double, InputGradient> logprob_input_grad(
    const ClassifierModel& model, const ImageTensor& img, int target);

struct TrainResult {
    ClassifierModel model;
    std::vector<double> loss_history;  // mean loss per epoch
};

// He-initialized SGD with momentum over shuffled mini-batches. All
// randomness (init + shuffles) comes from the supplied generator, so a
// fixed seed reproduces the parameters bit for bit.
TrainResult train_classifier(const LabeledDataset& data,
                             const TrainConfig& cfg, Prng& rng);

// Fraction of items whose argmax matches the label; argmax ties break
// toward the lowest class index.
double accuracy(const ClassifierModel& model, const LabeledDataset& data);

int predict(const ClassifierModel& model, const ImageTensor& img);

// Flat binary checkpoint: magic "DFDR", version u32, then each tensor as
// (rank u32, dims u32..., payload of little-endian 64-bit reals). See
// docs/checkpoint_format.md for the full layout.
void save_checkpoint(const ClassifierModel& model, const std::string& path);
ClassifierModel load_checkpoint(const std::string& path);

}  // namespace defdr
