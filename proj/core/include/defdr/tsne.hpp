#pragma once

#include <vector>

#include "defdr/image.hpp"
#include "defdr/matrix.hpp"
#include "defdr/prng.hpp"

namespace defdr {

enum class TsneKernel { StudentT, Gaussian };

struct TsneConfig {
    double perplexity = 10.0;
    int embed_dim = 2;
    int iterations = 500;
    double learning_rate = 100.0;
    double momentum_early = 0.5;   // before momentum_switch_iter
    double momentum_late = 0.8;
    int momentum_switch_iter = 250;
    double early_exaggeration = 4.0;
    int exaggeration_iters = 100;
    TsneKernel kernel = TsneKernel::StudentT;

    void validate(int point_count) const;
};

// Symmetric, zero-diagonal, sums to one. Stored dense; point counts stay
// small enough that O(n^2) is the right trade.
using AffinityMatrix = Mat;

struct SigmaSearchResult {
    double sigma = 0.0;
    double achieved_perplexity = 0.0;
    bool converged = false;
};

// Bandwidth search for one point: binary search on sigma (50 iterations,
// bracket [1e-10, 1e10]) until 2^H(p_.|i) matches the target within 1e-3
// relative. Degenerate rows fall back to the bracket midpoint with
// converged = false.
SigmaSearchResult sigma_for_perplexity(const std::vector<double>& sq_dists_row,
                                       double target_perplexity);

// Conditional affinities per row, then the symmetrized joint
// p_ij = (p_{j|i} + p_{i|j}) / 2n. Zero distances between duplicate points
// are lifted by 1e-12.
AffinityMatrix pairwise_affinities(const Mat& points, double perplexity);

struct LowDimAffinities {
    AffinityMatrix q;
    Mat kernel_terms;  // unnormalized similarities, zero diagonal
};

// Normalized low-dimensional similarities; q is floored at 1e-12.
LowDimAffinities low_dim_affinities(const Mat& y, TsneKernel kernel);

// KL(P||Q) over off-diagonal pairs, natural log; p = 0 terms contribute 0.
double kl_cost(const AffinityMatrix& p, const AffinityMatrix& q);

struct TsneResult {
    Mat y;  // n x embed_dim
    std::vector<double> cost_history;  // KL against the unexaggerated P
};

// Gradient descent with momentum on the KL cost, early exaggeration for
// the first exaggeration_iters steps, Y initialized as Gaussian * 1e-2
// from the supplied generator.
TsneResult tsne_embed(const Mat& points, const TsneConfig& cfg, Prng& rng);

constexpr uint64_t kDefaultTsneSeed = 0x5EEDDEFD;

// Block-embedding defense: split the image into block x block tiles, embed
// the tiles, recompute row-normalized similarity weights in the embedding,
// then blend each tile with its similarity-weighted neighborhood:
// out_i = info * tile_i + (1 - info) * sum_j w_ij tile_j.
ImageTensor defend_tsne(const ImageTensor& x, const TsneConfig& cfg,
                        double info, int block,
                        uint64_t seed = kDefaultTsneSeed);

// Per-image precomputation (tiling, embedding, weights) so an info sweep
// only pays for the embedding once.
class TsnePlan {
public:
    TsnePlan(const ImageTensor& img, const TsneConfig& cfg, int block,
             uint64_t seed = kDefaultTsneSeed);
    ImageTensor apply(double info) const;

private:
    int height_, width_, block_;
    Mat tiles_;     // n_tiles x (block*block*3)
    Mat neighbor_;  // n_tiles x dim, precomputed sum_j w_ij tile_j
};

}  // namespace defdr
