#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <unistd.h>

#include "defdr/classifier.hpp"
#include "defdr/dataset.hpp"

using namespace defdr;

namespace {

ImageTensor random_image(int side, Prng& rng) {
    std::vector<double> px(static_cast<size_t>(side) * side * 3);
    for (double& v : px) v = rng.next_double();
    return ImageTensor(side, side, px);
}

ClassifierModel random_model(int side, int classes, Prng& rng) {
    ClassifierModel m(side, classes);
    auto fill = [&rng](std::vector<double>& w, double scale) {
        for (double& v : w) v = scale * rng.normal();
    };
    fill(m.params.conv1_w, 0.35);
    fill(m.params.conv1_b, 0.05);
    fill(m.params.conv2_w, 0.18);
    fill(m.params.conv2_b, 0.05);
    fill(m.params.dense_w, 0.07);
    fill(m.params.dense_b, 0.05);
    return m;
}

double batch_loss(const ClassifierModel& m,
                  const std::vector<std::pair<ImageTensor, int>>& batch) {
    return loss_and_gradients(m, batch, false, false).loss;
}

std::vector<std::vector<double>*> param_tensors(ClassifierModel& m) {
    return {&m.params.conv1_w, &m.params.conv1_b, &m.params.conv2_w,
            &m.params.conv2_b, &m.params.dense_w, &m.params.dense_b};
}

std::vector<const std::vector<double>*> param_tensors_const(
    const ModelParams& p) {
    return {&p.conv1_w, &p.conv1_b, &p.conv2_w, &p.conv2_b, &p.dense_w,
            &p.dense_b};
}

}  // namespace

TEST_CASE("all-zero weights give uniform probabilities") {
    ClassifierModel m(16, 5);
    Prng rng(1);
    ForwardResult r = forward(m, random_image(16, rng));
    for (double p : r.probs) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax is a probability vector and preserves the argmax") {
    Prng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        ClassifierModel m = random_model(16, 5, rng);
        ForwardResult r = forward(m, random_image(16, rng));
        double sum = 0.0;
        for (double p : r.probs) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        int amax_l = 0, amax_p = 0;
        for (int k = 1; k < 5; ++k) {
            if (r.logits[k] > r.logits[amax_l]) amax_l = k;
            if (r.probs[k] > r.probs[amax_p]) amax_p = k;
        }
        CHECK(amax_l == amax_p);
    }
}

TEST_CASE("forward rejects mismatched image sizes") {
    ClassifierModel m(16, 5);
    Prng rng(3);
    CHECK_THROWS_AS(forward(m, random_image(32, rng)), std::invalid_argument);
}

TEST_CASE("a saturated correct prediction has near-zero loss and gradients") {
    ClassifierModel m(16, 5);
    m.params.dense_b[2] = 50.0;  // certain class 2
    Prng rng(4);
    BatchGradients g =
        loss_and_gradients(m, {{random_image(16, rng), 2}}, true, true);
    CHECK(g.loss < 1e-8);
    for (const auto* t : param_tensors_const(g.param_grads))
        for (double v : *t) CHECK(std::abs(v) < 1e-8);
    for (double v : g.input_grads[0].data) CHECK(std::abs(v) < 1e-8);
}

TEST_CASE("analytic parameter gradients match central finite differences") {
    Prng rng(42);
    ClassifierModel m = random_model(16, 5, rng);
    std::vector<std::pair<ImageTensor, int>> batch = {
        {random_image(16, rng), 1}, {random_image(16, rng), 4}};

    BatchGradients g = loss_and_gradients(m, batch, true, false);
    auto grads = param_tensors_const(g.param_grads);
    auto params = param_tensors(m);

    const double h = 1e-4;
    int checked = 0;
    for (int draw = 0; draw < 200; ++draw) {
        int t = rng.uniform_int(0, static_cast<int>(params.size()) - 1);
        int i = rng.uniform_int(0, static_cast<int>(params[t]->size()) - 1);
        double saved = (*params[t])[i];
        (*params[t])[i] = saved + h;
        double up = batch_loss(m, batch);
        (*params[t])[i] = saved - h;
        double down = batch_loss(m, batch);
        (*params[t])[i] = saved;
        double fd = (up - down) / (2.0 * h);
        double an = (*grads[t])[i];
        double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        CHECK(std::abs(fd - an) / denom <= 1e-4);
        ++checked;
    }
    CHECK(checked == 200);
}

TEST_CASE("analytic input gradients match central finite differences") {
    Prng rng(43);
    ClassifierModel m = random_model(16, 5, rng);
    ImageTensor img = random_image(16, rng);
    std::vector<std::pair<ImageTensor, int>> batch = {{img, 3}};

    BatchGradients g = loss_and_gradients(m, batch, false, true);
    const InputGradient& gi = g.input_grads[0];

    const double h = 1e-4;
    for (int draw = 0; draw < 50; ++draw) {
        size_t i = static_cast<size_t>(
            rng.uniform_int(0, static_cast<int>(img.size()) - 1));
        // nudge the raw pixel; stay away from the clamp boundary
        std::vector<double> px = img.data();
        if (px[i] < 2 * h || px[i] > 1.0 - 2 * h) continue;
        px[i] += h;
        double up = batch_loss(m, {{ImageTensor(16, 16, px), 3}});
        px[i] -= 2 * h;
        double down = batch_loss(m, {{ImageTensor(16, 16, px), 3}});
        double fd = (up - down) / (2.0 * h);
        double an = gi.data[i];
        double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        CHECK(std::abs(fd - an) / denom <= 1e-4);
    }
}

TEST_CASE("logprob_input_grad is the negated cross-entropy input gradient") {
    Prng rng(44);
    ClassifierModel m = random_model(16, 5, rng);
    ImageTensor img = random_image(16, rng);
    auto [logp, grad] = logprob_input_grad(m, img, 2);
    BatchGradients g = loss_and_gradients(m, {{img, 2}}, false, true);
    CHECK(logp == doctest::Approx(-g.loss).epsilon(1e-12));
    for (size_t i = 0; i < grad.data.size(); ++i)
        CHECK(grad.data[i] ==
              doctest::Approx(-g.input_grads[0].data[i]).epsilon(1e-12));
}

TEST_CASE("training is deterministic and never hurts versus init") {
    LabeledDataset ds = gen_shapes_dataset(99, 60, 16);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.seed = 7;

    Prng r1(cfg.seed), r2(cfg.seed);
    TrainResult a = train_classifier(ds, cfg, r1);
    TrainResult b = train_classifier(ds, cfg, r2);
    CHECK(a.loss_history.size() == static_cast<size_t>(cfg.epochs));
    CHECK(a.model.params.conv1_w == b.model.params.conv1_w);
    CHECK(a.model.params.conv2_w == b.model.params.conv2_w);
    CHECK(a.model.params.dense_w == b.model.params.dense_w);
    CHECK(a.loss_history == b.loss_history);

    // random-init accuracy as the baseline: zero learning rate keeps init
    Prng r3(cfg.seed);
    TrainConfig zero = cfg;
    zero.epochs = 1;
    zero.learning_rate = 0.0;
    TrainResult init = train_classifier(ds, zero, r3);
    CHECK(accuracy(a.model, ds) >= accuracy(init.model, ds));
}

TEST_CASE("trained on the shapes set: train accuracy reaches 0.95") {
    LabeledDataset ds = gen_shapes_dataset(1234, 2000, 32);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.9;
    cfg.seed = 42;
    Prng rng(cfg.seed);
    TrainResult res = train_classifier(ds, cfg, rng);
    CHECK(accuracy(res.model, ds) >= 0.95);
    CHECK(res.loss_history.size() == 30);
    CHECK(res.loss_history.back() < res.loss_history.front());
}

TEST_CASE("accuracy counts argmax hits with ties toward lower classes") {
    // zero conv stack, bias picks class 0 for every input
    ClassifierModel m(16, 5);
    m.params.dense_b[0] = 1.0;
    LabeledDataset ds = gen_shapes_dataset(55, 5, 16);

    LabeledDataset quarter = ds;
    quarter.items.resize(4);
    quarter.items[0].second = 0;
    quarter.items[1].second = 1;
    quarter.items[2].second = 2;
    quarter.items[3].second = 3;
    CHECK(accuracy(m, quarter) == doctest::Approx(0.25));

    LabeledDataset all_zero = ds;
    for (auto& item : all_zero.items) item.second = 0;
    CHECK(accuracy(m, all_zero) == doctest::Approx(1.0));

    // exact ties (all-zero model) resolve to class 0
    ClassifierModel zero(16, 5);
    CHECK(predict(zero, ds.image(0)) == 0);
}

TEST_CASE("accuracy is additive over concatenated datasets") {
    Prng rng(66);
    ClassifierModel m = random_model(16, 5, rng);
    LabeledDataset d1 = gen_shapes_dataset(10, 20, 16);
    LabeledDataset d2 = gen_shapes_dataset(20, 30, 16);
    LabeledDataset cat = d1;
    cat.items.insert(cat.items.end(), d2.items.begin(), d2.items.end());
    double expect = (accuracy(m, d1) * 20 + accuracy(m, d2) * 30) / 50.0;
    CHECK(accuracy(m, cat) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    Prng rng(77);
    ClassifierModel m = random_model(32, 5, rng);
    std::string path = (std::filesystem::temp_directory_path() /
                        ("defdr_ckpt_" + std::to_string(::getpid()) + ".bin"))
                           .string();
    save_checkpoint(m, path);
    ClassifierModel back = load_checkpoint(path);
    CHECK(back.image_side == 32);
    CHECK(back.class_count == 5);
    CHECK(back.params.conv1_w == m.params.conv1_w);
    CHECK(back.params.conv2_w == m.params.conv2_w);
    CHECK(back.params.dense_w == m.params.dense_w);
    CHECK(back.params.dense_b == m.params.dense_b);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects garbage") {
    std::string path = (std::filesystem::temp_directory_path() /
                        ("defdr_bad_" + std::to_string(::getpid()) + ".bin"))
                           .string();
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("NOPE", f);
    std::fclose(f);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::filesystem::remove(path);
}
