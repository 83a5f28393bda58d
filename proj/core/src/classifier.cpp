#include "defdr/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace defdr {
namespace {

constexpr int C1 = ClassifierModel::kConv1Out;
constexpr int C2 = ClassifierModel::kConv2Out;

inline size_t plane_idx(int c, int y, int x, int side) {
    return (static_cast<size_t>(c) * side + y) * side + x;
}

// 3x3 convolution, stride 1, zero padding 1. Shift-and-accumulate order so
// the inner loop runs over contiguous rows.
void conv3x3_forward(const double* in, int ic_n, const double* w,
                     const double* b, double* out, int oc_n, int side) {
    for (int oc = 0; oc < oc_n; ++oc) {
        double* op = out + plane_idx(oc, 0, 0, side);
        std::fill(op, op + static_cast<size_t>(side) * side, b[oc]);
        for (int ic = 0; ic < ic_n; ++ic) {
            const double* ip = in + plane_idx(ic, 0, 0, side);
            const double* wk = w + ((static_cast<size_t>(oc) * ic_n + ic) * 9);
            for (int ky = 0; ky < 3; ++ky) {
                int y0 = std::max(0, 1 - ky);
                int y1 = std::min(side - 1, side - ky);
                for (int kx = 0; kx < 3; ++kx) {
                    double wv = wk[ky * 3 + kx];
                    if (wv == 0.0) continue;
                    int x0 = std::max(0, 1 - kx);
                    int x1 = std::min(side - 1, side - kx);
                    for (int y = y0; y <= y1; ++y) {
                        double* orow = op + static_cast<size_t>(y) * side;
                        const double* irow =
                            ip + static_cast<size_t>(y + ky - 1) * side + (kx - 1);
                        for (int x = x0; x <= x1; ++x)
                            orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
}

// Backward of conv3x3_forward. Any of dw/db/din may be null to skip that
// piece. dw/db are accumulated into, din is accumulated into.
void conv3x3_backward(const double* in, int ic_n, const double* w,
                      const double* dout, int oc_n, int side, double* dw,
                      double* db, double* din) {
    if (db) {
        for (int oc = 0; oc < oc_n; ++oc) {
            const double* dp = dout + plane_idx(oc, 0, 0, side);
            double acc = 0.0;
            for (int i = 0; i < side * side; ++i) acc += dp[i];
            db[oc] += acc;
        }
    }
    for (int oc = 0; oc < oc_n; ++oc) {
        const double* dp = dout + plane_idx(oc, 0, 0, side);
        for (int ic = 0; ic < ic_n; ++ic) {
            const double* ip = in + plane_idx(ic, 0, 0, side);
            double* dinp = din ? din + plane_idx(ic, 0, 0, side) : nullptr;
            const size_t wbase = (static_cast<size_t>(oc) * ic_n + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int y0 = std::max(0, 1 - ky);
                int y1 = std::min(side - 1, side - ky);
                for (int kx = 0; kx < 3; ++kx) {
                    int x0 = std::max(0, 1 - kx);
                    int x1 = std::min(side - 1, side - kx);
                    double wv = w[wbase + ky * 3 + kx];
                    double wacc = 0.0;
                    for (int y = y0; y <= y1; ++y) {
                        const double* drow = dp + static_cast<size_t>(y) * side;
                        const double* irow =
                            ip + static_cast<size_t>(y + ky - 1) * side + (kx - 1);
                        if (dw)
                            for (int x = x0; x <= x1; ++x)
                                wacc += drow[x] * irow[x];
                        if (dinp) {
                            double* dirow = dinp +
                                            static_cast<size_t>(y + ky - 1) * side +
                                            (kx - 1);
                            for (int x = x0; x <= x1; ++x)
                                dirow[x] += wv * drow[x];
                        }
                    }
                    if (dw) dw[wbase + ky * 3 + kx] += wacc;
                }
            }
        }
    }
}

// 2x2 max pool, stride 2, over already-rectified activations. Ties go to
// the first maximal element in scan order; argmax stores the winning flat
// plane offset for the backward pass.
void maxpool2_forward(const double* in, int planes, int side, double* out,
                      int* argmax) {
    int half = side / 2;
    for (int c = 0; c < planes; ++c) {
        const double* ip = in + plane_idx(c, 0, 0, side);
        for (int y = 0; y < half; ++y) {
            for (int x = 0; x < half; ++x) {
                int base = 2 * y * side + 2 * x;
                int best = base;
                double bv = ip[base];
                int cands[3] = {base + 1, base + side, base + side + 1};
                for (int t : cands)
                    if (ip[t] > bv) {
                        bv = ip[t];
                        best = t;
                    }
                size_t o = plane_idx(c, y, x, half);
                out[o] = bv;
                argmax[o] = best;
            }
        }
    }
}

struct Workspace {
    int side = 0, half = 0, quarter = 0, classes = 0;
    std::vector<double> in, z1, r1, p1, z2, r2, p2;
    std::vector<int> arg1, arg2;
    std::vector<double> logits, probs;
    // backward scratch
    std::vector<double> dz2, dp1, dz1, din;

    void resize(const ClassifierModel& m) {
        side = m.image_side;
        half = side / 2;
        quarter = side / 4;
        classes = m.class_count;
        size_t s2 = static_cast<size_t>(side) * side;
        size_t h2 = static_cast<size_t>(half) * half;
        size_t q2 = static_cast<size_t>(quarter) * quarter;
        in.assign(3 * s2, 0.0);
        z1.assign(C1 * s2, 0.0);
        r1.assign(C1 * s2, 0.0);
        p1.assign(C1 * h2, 0.0);
        z2.assign(C2 * h2, 0.0);
        r2.assign(C2 * h2, 0.0);
        p2.assign(C2 * q2, 0.0);
        arg1.assign(C1 * h2, 0);
        arg2.assign(C2 * q2, 0);
        logits.assign(classes, 0.0);
        probs.assign(classes, 0.0);
    }
};

void image_to_planes(const ImageTensor& img, std::vector<double>& planes) {
    int side = img.height();
    const double* src = img.data().data();
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            for (int c = 0; c < 3; ++c)
                planes[plane_idx(c, y, x, side)] =
                    src[(static_cast<size_t>(y) * side + x) * 3 + c];
}

void run_forward(const ClassifierModel& m, const ImageTensor& img,
                 Workspace& ws) {
    if (img.height() != m.image_side || img.width() != m.image_side)
        throw std::invalid_argument("forward: image does not match model side");

    image_to_planes(img, ws.in);
    const ModelParams& p = m.params;

    conv3x3_forward(ws.in.data(), 3, p.conv1_w.data(), p.conv1_b.data(),
                    ws.z1.data(), C1, ws.side);
    for (size_t i = 0; i < ws.z1.size(); ++i)
        ws.r1[i] = ws.z1[i] > 0.0 ? ws.z1[i] : 0.0;
    maxpool2_forward(ws.r1.data(), C1, ws.side, ws.p1.data(), ws.arg1.data());

    conv3x3_forward(ws.p1.data(), C1, p.conv2_w.data(), p.conv2_b.data(),
                    ws.z2.data(), C2, ws.half);
    for (size_t i = 0; i < ws.z2.size(); ++i)
        ws.r2[i] = ws.z2[i] > 0.0 ? ws.z2[i] : 0.0;
    maxpool2_forward(ws.r2.data(), C2, ws.half, ws.p2.data(), ws.arg2.data());

    // p2 in plane order is exactly the flattened feature vector
    int features = static_cast<int>(ws.p2.size());
    for (int k = 0; k < ws.classes; ++k) {
        const double* wrow = p.dense_w.data() + static_cast<size_t>(k) * features;
        double acc = p.dense_b[k];
        for (int i = 0; i < features; ++i) acc += wrow[i] * ws.p2[i];
        ws.logits[k] = acc;
    }

    double mx = *std::max_element(ws.logits.begin(), ws.logits.end());
    double sum = 0.0;
    for (int k = 0; k < ws.classes; ++k) {
        ws.probs[k] = std::exp(ws.logits[k] - mx);
        sum += ws.probs[k];
    }
    for (int k = 0; k < ws.classes; ++k) ws.probs[k] /= sum;
}

// Backward from dlogits. Fills ws.din (plane layout) when din is wanted.
void run_backward(const ClassifierModel& m, Workspace& ws,
                  const std::vector<double>& dlogits, ModelParams* grads,
                  bool want_input) {
    const ModelParams& p = m.params;
    int features = static_cast<int>(ws.p2.size());

    std::vector<double> dfeat(features, 0.0);
    for (int k = 0; k < ws.classes; ++k) {
        double g = dlogits[k];
        const double* wrow = p.dense_w.data() + static_cast<size_t>(k) * features;
        if (grads) {
            double* dwrow =
                grads->dense_w.data() + static_cast<size_t>(k) * features;
            for (int i = 0; i < features; ++i) dwrow[i] += g * ws.p2[i];
            grads->dense_b[k] += g;
        }
        for (int i = 0; i < features; ++i) dfeat[i] += g * wrow[i];
    }

    // pool2 + relu2 backward
    ws.dz2.assign(ws.z2.size(), 0.0);
    size_t h2 = static_cast<size_t>(ws.half) * ws.half;
    for (int c = 0; c < C2; ++c)
        for (size_t i = 0; i < static_cast<size_t>(ws.quarter) * ws.quarter; ++i) {
            size_t o = static_cast<size_t>(c) * ws.quarter * ws.quarter + i;
            size_t src = static_cast<size_t>(c) * h2 + ws.arg2[o];
            if (ws.z2[src] > 0.0) ws.dz2[src] += dfeat[o];
        }

    ws.dp1.assign(ws.p1.size(), 0.0);
    conv3x3_backward(ws.p1.data(), C1, p.conv2_w.data(), ws.dz2.data(), C2,
                     ws.half, grads ? grads->conv2_w.data() : nullptr,
                     grads ? grads->conv2_b.data() : nullptr, ws.dp1.data());

    // pool1 + relu1 backward
    ws.dz1.assign(ws.z1.size(), 0.0);
    size_t s2 = static_cast<size_t>(ws.side) * ws.side;
    for (int c = 0; c < C1; ++c)
        for (size_t i = 0; i < h2; ++i) {
            size_t o = static_cast<size_t>(c) * h2 + i;
            size_t src = static_cast<size_t>(c) * s2 + ws.arg1[o];
            if (ws.z1[src] > 0.0) ws.dz1[src] += ws.dp1[o];
        }

    if (want_input) ws.din.assign(ws.in.size(), 0.0);
    conv3x3_backward(ws.in.data(), 3, p.conv1_w.data(), ws.dz1.data(), C1,
                     ws.side, grads ? grads->conv1_w.data() : nullptr,
                     grads ? grads->conv1_b.data() : nullptr,
                     want_input ? ws.din.data() : nullptr);
}

InputGradient planes_to_grad(const std::vector<double>& planes, int side) {
    InputGradient g;
    g.height = side;
    g.width = side;
    g.data.resize(static_cast<size_t>(side) * side * 3);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            for (int c = 0; c < 3; ++c)
                g.data[(static_cast<size_t>(y) * side + x) * 3 + c] =
                    planes[plane_idx(c, y, x, side)];
    return g;
}

}  // namespace

void ModelParams::resize_like(int image_side, int class_count) {
    int q = image_side / 4;
    conv1_w.assign(static_cast<size_t>(C1) * 3 * 9, 0.0);
    conv1_b.assign(C1, 0.0);
    conv2_w.assign(static_cast<size_t>(C2) * C1 * 9, 0.0);
    conv2_b.assign(C2, 0.0);
    dense_w.assign(static_cast<size_t>(class_count) * C2 * q * q, 0.0);
    dense_b.assign(class_count, 0.0);
}

void ModelParams::fill(double v) {
    for (auto* t : {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense_w, &dense_b})
        std::fill(t->begin(), t->end(), v);
}

void ModelParams::axpy(double s, const ModelParams& o) {
    auto upd = [s](std::vector<double>& a, const std::vector<double>& b) {
        for (size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
    };
    upd(conv1_w, o.conv1_w);
    upd(conv1_b, o.conv1_b);
    upd(conv2_w, o.conv2_w);
    upd(conv2_b, o.conv2_b);
    upd(dense_w, o.dense_w);
    upd(dense_b, o.dense_b);
}

void ModelParams::scale(double s) {
    for (auto* t : {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense_w, &dense_b})
        for (double& v : *t) v *= s;
}

ClassifierModel::ClassifierModel(int image_side_, int class_count_)
    : image_side(image_side_), class_count(class_count_) {
    if (image_side <= 0 || image_side % 4 != 0)
        throw std::invalid_argument(
            "ClassifierModel: image_side must be a positive multiple of 4");
    if (class_count < 2)
        throw std::invalid_argument("ClassifierModel: need at least 2 classes");
    params.resize_like(image_side, class_count);
}

ForwardResult forward(const ClassifierModel& model, const ImageTensor& img) {
    Workspace ws;
    ws.resize(model);
    run_forward(model, img, ws);
    return ForwardResult{ws.logits, ws.probs};
}

BatchGradients loss_and_gradients(
    const ClassifierModel& model,
    const std::vector<std::pair<ImageTensor, int>>& batch,
    bool want_param_grads, bool want_input_grads) {
    if (batch.empty())
        throw std::invalid_argument("loss_and_gradients: empty batch");

    BatchGradients out;
    out.param_grads.resize_like(model.image_side, model.class_count);

    Workspace ws;
    ws.resize(model);
    double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<double> dlogits(model.class_count);

    for (const auto& [img, label] : batch) {
        if (label < 0 || label >= model.class_count)
            throw std::invalid_argument("loss_and_gradients: label out of range");
        run_forward(model, img, ws);
        out.loss += -std::log(std::max(ws.probs[label], 1e-300)) * inv_b;
        for (int k = 0; k < model.class_count; ++k)
            dlogits[k] = (ws.probs[k] - (k == label ? 1.0 : 0.0)) * inv_b;
        run_backward(model, ws, dlogits,
                     want_param_grads ? &out.param_grads : nullptr,
                     want_input_grads);
        if (want_input_grads)
            out.input_grads.push_back(planes_to_grad(ws.din, model.image_side));
    }
    return out;
}

std::pair<double, InputGradient> logprob_input_grad(
    const ClassifierModel& model, const ImageTensor& img, int target) {
    if (target < 0 || target >= model.class_count)
        throw std::invalid_argument("logprob_input_grad: target out of range");
    Workspace ws;
    ws.resize(model);
    run_forward(model, img, ws);
    double logp = std::log(std::max(ws.probs[target], 1e-300));
    // d log p_t / d logit_k = delta_tk - p_k
    std::vector<double> dlogits(model.class_count);
    for (int k = 0; k < model.class_count; ++k)
        dlogits[k] = (k == target ? 1.0 : 0.0) - ws.probs[k];
    run_backward(model, ws, dlogits, nullptr, true);
    return {logp, planes_to_grad(ws.din, model.image_side)};
}

TrainResult train_classifier(const LabeledDataset& data, const TrainConfig& cfg,
                             Prng& rng) {
    if (data.size() == 0)
        throw std::invalid_argument("train_classifier: empty dataset");
    if (cfg.epochs < 1 || cfg.batch_size < 1)
        throw std::invalid_argument("train_classifier: bad config");

    int side = data.image(0).height();
    TrainResult result;
    result.model = ClassifierModel(side, data.class_count);
    ModelParams& p = result.model.params;

    // He init: normal with scale sqrt(2 / fan_in), biases zero
    auto he_fill = [&rng](std::vector<double>& w, int fan_in) {
        double s = std::sqrt(2.0 / fan_in);
        for (double& v : w) v = s * rng.normal();
    };
    he_fill(p.conv1_w, 3 * 9);
    he_fill(p.conv2_w, C1 * 9);
    he_fill(p.dense_w, result.model.feature_count());

    ModelParams velocity;
    velocity.resize_like(side, data.class_count);

    size_t n = data.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = 0; i + 1 < n; ++i) {
            size_t j = static_cast<size_t>(
                rng.uniform_int(static_cast<int>(i), static_cast<int>(n) - 1));
            std::swap(order[i], order[j]);
        }
        double epoch_loss = 0.0;
        for (size_t start = 0; start < n; start += cfg.batch_size) {
            size_t stop = std::min(n, start + cfg.batch_size);
            std::vector<std::pair<ImageTensor, int>> batch;
            batch.reserve(stop - start);
            for (size_t i = start; i < stop; ++i)
                batch.push_back(data.items[order[i]]);
            BatchGradients g =
                loss_and_gradients(result.model, batch, true, false);
            epoch_loss += g.loss * static_cast<double>(batch.size());
            velocity.scale(cfg.momentum);
            velocity.axpy(-cfg.learning_rate, g.param_grads);
            p.axpy(1.0, velocity);
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(n));
    }
    return result;
}

int predict(const ClassifierModel& model, const ImageTensor& img) {
    ForwardResult r = forward(model, img);
    int best = 0;
    for (int k = 1; k < model.class_count; ++k)
        if (r.probs[k] > r.probs[best]) best = k;
    return best;
}

double accuracy(const ClassifierModel& model, const LabeledDataset& data) {
    if (data.size() == 0)
        throw std::invalid_argument("accuracy: empty dataset");
    size_t hits = 0;
    for (size_t i = 0; i < data.size(); ++i)
        if (predict(model, data.image(i)) == data.label(i)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double d) {
    uint64_t v = std::bit_cast<uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_tensor(std::vector<uint8_t>& out, const std::vector<double>& t,
                const std::vector<uint32_t>& dims) {
    put_u32(out, static_cast<uint32_t>(dims.size()));
    size_t count = 1;
    for (uint32_t d : dims) {
        put_u32(out, d);
        count *= d;
    }
    if (count != t.size())
        throw std::runtime_error("checkpoint: tensor size mismatch");
    for (double v : t) put_f64(out, v);
}

struct Reader {
    const std::vector<uint8_t>& b;
    size_t i = 0;

    uint32_t u32() {
        if (i + 4 > b.size()) throw std::runtime_error("checkpoint: truncated");
        uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<uint32_t>(b[i + k]) << (8 * k);
        i += 4;
        return v;
    }
    double f64() {
        if (i + 8 > b.size()) throw std::runtime_error("checkpoint: truncated");
        uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= static_cast<uint64_t>(b[i + k]) << (8 * k);
        i += 8;
        return std::bit_cast<double>(v);
    }
    std::vector<double> tensor(std::vector<uint32_t>* dims_out) {
        uint32_t rank = u32();
        if (rank > 8) throw std::runtime_error("checkpoint: bad tensor rank");
        size_t count = 1;
        std::vector<uint32_t> dims(rank);
        for (uint32_t k = 0; k < rank; ++k) {
            dims[k] = u32();
            count *= dims[k];
        }
        if (count > (1u << 28)) throw std::runtime_error("checkpoint: tensor too large");
        std::vector<double> t(count);
        for (size_t k = 0; k < count; ++k) t[k] = f64();
        if (dims_out) *dims_out = dims;
        return t;
    }
};

}  // namespace

void save_checkpoint(const ClassifierModel& m, const std::string& path) {
    std::vector<uint8_t> out = {'D', 'F', 'D', 'R'};
    put_u32(out, 1);  // version
    uint32_t q = static_cast<uint32_t>(m.image_side / 4);
    uint32_t classes = static_cast<uint32_t>(m.class_count);
    put_tensor(out, m.params.conv1_w, {C1, 3, 3, 3});
    put_tensor(out, m.params.conv1_b, {C1});
    put_tensor(out, m.params.conv2_w, {C2, C1, 3, 3});
    put_tensor(out, m.params.conv2_b, {C2});
    put_tensor(out, m.params.dense_w, {classes, C2 * q * q});
    put_tensor(out, m.params.dense_b, {classes});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
}

ClassifierModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || bytes[0] != 'D' || bytes[1] != 'F' ||
        bytes[2] != 'D' || bytes[3] != 'R')
        throw std::runtime_error("checkpoint: bad magic");
    Reader r{bytes, 4};
    uint32_t version = r.u32();
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version");

    std::vector<uint32_t> dims;
    auto c1w = r.tensor(&dims);
    if (dims != std::vector<uint32_t>{C1, 3, 3, 3})
        throw std::runtime_error("checkpoint: unexpected conv1 shape");
    auto c1b = r.tensor(nullptr);
    auto c2w = r.tensor(&dims);
    if (dims != std::vector<uint32_t>{C2, C1, 3, 3})
        throw std::runtime_error("checkpoint: unexpected conv2 shape");
    auto c2b = r.tensor(nullptr);
    auto dw = r.tensor(&dims);
    if (dims.size() != 2)
        throw std::runtime_error("checkpoint: unexpected dense shape");
    uint32_t classes = dims[0], features = dims[1];
    auto db = r.tensor(nullptr);

    if (features % C2 != 0)
        throw std::runtime_error("checkpoint: dense features not divisible");
    uint32_t qq = features / C2;
    uint32_t q = static_cast<uint32_t>(std::lround(std::sqrt(double(qq))));
    if (q * q != qq) throw std::runtime_error("checkpoint: non-square features");

    ClassifierModel m(static_cast<int>(q * 4), static_cast<int>(classes));
    m.params.conv1_w = std::move(c1w);
    m.params.conv1_b = std::move(c1b);
    m.params.conv2_w = std::move(c2w);
    m.params.conv2_b = std::move(c2b);
    m.params.dense_w = std::move(dw);
    m.params.dense_b = std::move(db);
    return m;
}

}  // namespace defdr
