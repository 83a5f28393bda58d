#include "defdr/defense.hpp"

#include <stdexcept>

namespace defdr {

std::string DefenseConfig::method_name() const {
    switch (method) {
        case Method::Identity: return "identity";
        case Method::Svd: return "svd";
        case Method::Tsne: return "tsne";
    }
    return "?";
}

DefenseConfig::Method DefenseConfig::method_from_name(const std::string& name) {
    if (name == "svd") return Method::Svd;
    if (name == "tsne") return Method::Tsne;
    if (name == "identity") return Method::Identity;
    throw std::invalid_argument("unknown defense method '" + name + "'");
}

DefensePlan::DefensePlan(const ImageTensor& img, const DefenseConfig& cfg)
    : method_(cfg.method), svd_mode_(cfg.svd_mode) {
    switch (cfg.method) {
        case DefenseConfig::Method::Identity:
            original_ = img;
            break;
        case DefenseConfig::Method::Svd:
            svd_ = std::make_unique<SvdPlan>(img);
            break;
        case DefenseConfig::Method::Tsne:
            tsne_ = std::make_unique<TsnePlan>(img, cfg.tsne, cfg.block,
                                               cfg.tsne_seed);
            break;
    }
}

ImageTensor DefensePlan::apply(double info) const {
    switch (method_) {
        case DefenseConfig::Method::Identity: return original_;
        case DefenseConfig::Method::Svd: return svd_->apply(info, svd_mode_);
        case DefenseConfig::Method::Tsne: return tsne_->apply(info);
    }
    throw std::logic_error("DefensePlan: bad method");
}

ImageTensor defend(const ImageTensor& img, const DefenseConfig& cfg) {
    return DefensePlan(img, cfg).apply(cfg.info);
}

}  // namespace defdr
