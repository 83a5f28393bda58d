#pragma once

#include <memory>
#include <string>

#include "defdr/image.hpp"
#include "defdr/svd.hpp"
#include "defdr/tsne.hpp"

namespace defdr {

// Method selector plus the tunable information fraction and the
// method-specific knobs. Identity is the no-op used for baselines.
struct DefenseConfig {
    enum class Method { Identity, Svd, Tsne };

    Method method = Method::Svd;
    double info = 0.95;

    InfoMode svd_mode = InfoMode::SigmaMass;

    TsneConfig tsne;
    int block = 4;
    uint64_t tsne_seed = kDefaultTsneSeed;

    std::string method_name() const;
    static Method method_from_name(const std::string& name);
};

// Per-image precomputation shared by every info value; the tuning sweep
// factors/embeds each image once and replays the cheap part per grid point.
class DefensePlan {
public:
    DefensePlan(const ImageTensor& img, const DefenseConfig& cfg);
    ImageTensor apply(double info) const;

private:
    DefenseConfig::Method method_;
    InfoMode svd_mode_;
    std::unique_ptr<SvdPlan> svd_;
    std::unique_ptr<TsnePlan> tsne_;
    ImageTensor original_;
};

ImageTensor defend(const ImageTensor& img, const DefenseConfig& cfg);

}  // namespace defdr
