#pragma once

#include <vector>

#include "defdr/image.hpp"
#include "defdr/matrix.hpp"

namespace defdr {

// Full factorization M = u * diag(sigma) * vt with r = min(m, n) terms.
// u is m x r with orthonormal columns, vt is r x n with orthonormal rows,
// sigma is descending and non-negative.
struct SvdFactors {
    Mat u;                      // m x r
    std::vector<double> sigma;  // r, descending
    Mat vt;                     // r x n
    int m = 0;
    int n = 0;

    int rank_bound() const { return static_cast<int>(sigma.size()); }
};

// One-sided Jacobi SVD. Accuracy contract: reconstruction within
// 1e-8 * max(1, ||M||_F) and orthonormality defects below 1e-8.
SvdFactors svd_channel(const Mat& M);

// How the cumulative share of sigma is measured when mapping the
// information fraction to a rank. Mass follows the sigma values
// themselves; Energy uses their squares (ablation mode).
enum class InfoMode { SigmaMass, SigmaEnergy };

// Smallest k whose leading share of the sigma mass reaches info.
int rank_for_info(const std::vector<double>& sigma, double info,
                  InfoMode mode = InfoMode::SigmaMass);

// Truncated reconstruction sum_{i<k} sigma_i * u_i * v_i^T.
Mat reconstruct_rank_k(const SvdFactors& f, int k);

// Per-image precomputation so an info sweep only pays for factorization
// once. Each color channel is factored independently.
class SvdPlan {
public:
    explicit SvdPlan(const ImageTensor& img);
    ImageTensor apply(double info, InfoMode mode = InfoMode::SigmaMass) const;

private:
    int height_;
    int width_;
    SvdFactors channels_[3];
};

// Truncated-SVD defense: factor each channel, keep the smallest rank
// capturing fraction `info` of singular-value mass, reconstruct, clamp.
ImageTensor defend_svd(const ImageTensor& img, double info,
                       InfoMode mode = InfoMode::SigmaMass);

}  // namespace defdr
