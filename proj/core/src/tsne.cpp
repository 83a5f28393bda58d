#include "defdr/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace defdr {
namespace {

constexpr double kQFloor = 1e-12;
constexpr double kDupDistLift = 1e-12;

// Shannon entropy (bits) of the Gaussian row conditional at bandwidth
// sigma; also writes the conditionals when out != nullptr.
double row_entropy(const std::vector<double>& sq_dists, double sigma,
                   std::vector<double>* out) {
    double inv = 1.0 / (2.0 * sigma * sigma);
    // subtract the max exponent for stability
    double best = -1e300;
    for (double d : sq_dists) best = std::max(best, -d * inv);
    double sum = 0.0;
    std::vector<double> p(sq_dists.size());
    for (size_t j = 0; j < sq_dists.size(); ++j) {
        p[j] = std::exp(-sq_dists[j] * inv - best);
        sum += p[j];
    }
    double h = 0.0;
    for (size_t j = 0; j < sq_dists.size(); ++j) {
        p[j] /= sum;
        if (p[j] > 0.0) h -= p[j] * std::log2(p[j]);
    }
    if (out) *out = std::move(p);
    return h;
}

Mat squared_distances(const Mat& points) {
    int n = points.rows;
    Mat d(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double acc = 0.0;
            const double* pi = points.row_ptr(i);
            const double* pj = points.row_ptr(j);
            for (int k = 0; k < points.cols; ++k) {
                double diff = pi[k] - pj[k];
                acc += diff * diff;
            }
            if (acc == 0.0) acc = kDupDistLift;  // duplicate points
            d(i, j) = acc;
            d(j, i) = acc;
        }
    return d;
}

}  // namespace

void TsneConfig::validate(int point_count) const {
    if (perplexity <= 0.0 || perplexity >= point_count)
        throw std::invalid_argument(
            "tsne: perplexity must be positive and below the point count");
    if (embed_dim < 1) throw std::invalid_argument("tsne: embed_dim must be >= 1");
    if (iterations < 1) throw std::invalid_argument("tsne: iterations must be >= 1");
    if (learning_rate <= 0.0)
        throw std::invalid_argument("tsne: learning_rate must be positive");
}

SigmaSearchResult sigma_for_perplexity(const std::vector<double>& sq_dists_row,
                                       double target_perplexity) {
    if (sq_dists_row.size() < 2)
        throw std::invalid_argument("sigma_for_perplexity: need >= 2 neighbors");
    if (target_perplexity <= 0.0 ||
        target_perplexity >= static_cast<double>(sq_dists_row.size()))
        throw std::invalid_argument("sigma_for_perplexity: target out of range");
    for (double d : sq_dists_row)
        if (!std::isfinite(d) || d < 0.0)
            throw std::invalid_argument("sigma_for_perplexity: bad distance");

    // geometric bisection: the bracket spans twenty decades, so halving in
    // log space is what actually converges in 50 steps
    double lo = 1e-10, hi = 1e10;
    SigmaSearchResult res;
    for (int it = 0; it < 50; ++it) {
        double mid = std::sqrt(lo * hi);
        double perp = std::exp2(row_entropy(sq_dists_row, mid, nullptr));
        if (std::abs(perp - target_perplexity) <=
            1e-3 * target_perplexity) {
            res.sigma = mid;
            res.achieved_perplexity = perp;
            res.converged = true;
            return res;
        }
        // perplexity grows monotonically with sigma
        if (perp > target_perplexity)
            hi = mid;
        else
            lo = mid;
    }
    res.sigma = std::sqrt(lo * hi);
    res.achieved_perplexity =
        std::exp2(row_entropy(sq_dists_row, res.sigma, nullptr));
    res.converged = std::abs(res.achieved_perplexity - target_perplexity) <=
                    1e-3 * target_perplexity;
    return res;
}

AffinityMatrix pairwise_affinities(const Mat& points, double perplexity) {
    int n = points.rows;
    if (n < 3) throw std::invalid_argument("pairwise_affinities: need >= 3 points");
    if (perplexity >= n)
        throw std::invalid_argument("pairwise_affinities: perplexity >= n");

    Mat d = squared_distances(points);
    Mat cond(n, n);  // p_{j|i} in row i
    std::vector<double> row(n - 1), p;
    for (int i = 0; i < n; ++i) {
        int t = 0;
        for (int j = 0; j < n; ++j)
            if (j != i) row[t++] = d(i, j);
        SigmaSearchResult s = sigma_for_perplexity(row, perplexity);
        row_entropy(row, s.sigma, &p);
        t = 0;
        for (int j = 0; j < n; ++j)
            if (j != i) cond(i, j) = p[t++];
    }

    AffinityMatrix joint(n, n);
    double scale = 1.0 / (2.0 * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i) joint(i, j) = (cond(i, j) + cond(j, i)) * scale;
    return joint;
}

LowDimAffinities low_dim_affinities(const Mat& y, TsneKernel kernel) {
    int n = y.rows;
    if (n < 3) throw std::invalid_argument("low_dim_affinities: need >= 3 points");

    LowDimAffinities out;
    out.kernel_terms = Mat(n, n);
    out.q = Mat(n, n);
    double z = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double acc = 0.0;
            const double* yi = y.row_ptr(i);
            const double* yj = y.row_ptr(j);
            for (int k = 0; k < y.cols; ++k) {
                double diff = yi[k] - yj[k];
                acc += diff * diff;
            }
            double t = kernel == TsneKernel::StudentT ? 1.0 / (1.0 + acc)
                                                      : std::exp(-acc);
            out.kernel_terms(i, j) = t;
            out.kernel_terms(j, i) = t;
            z += 2.0 * t;
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i) out.q(i, j) = std::max(out.kernel_terms(i, j) / z, kQFloor);
    return out;
}

double kl_cost(const AffinityMatrix& p, const AffinityMatrix& q) {
    if (p.rows != q.rows || p.cols != q.cols)
        throw std::invalid_argument("kl_cost: dimension mismatch");
    double c = 0.0;
    for (int i = 0; i < p.rows; ++i)
        for (int j = 0; j < p.cols; ++j) {
            if (i == j) continue;
            double pij = p(i, j);
            if (pij > 0.0) c += pij * std::log(pij / q(i, j));
        }
    return c;
}

TsneResult tsne_embed(const Mat& points, const TsneConfig& cfg, Prng& rng) {
    int n = points.rows;
    if (n < 3) throw std::invalid_argument("tsne_embed: need >= 3 points");
    cfg.validate(n);

    AffinityMatrix p = pairwise_affinities(points, cfg.perplexity);

    TsneResult res;
    res.y = Mat(n, cfg.embed_dim);
    for (double& v : res.y.a) v = 1e-2 * rng.normal();

    Mat velocity(n, cfg.embed_dim);
    Mat grad(n, cfg.embed_dim);

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        double exa = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
        LowDimAffinities low = low_dim_affinities(res.y, cfg.kernel);

        std::fill(grad.a.begin(), grad.a.end(), 0.0);
        for (int i = 0; i < n; ++i) {
            double* gi = grad.row_ptr(i);
            const double* yi = res.y.row_ptr(i);
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                double mult = 4.0 * (exa * p(i, j) - low.q(i, j));
                if (cfg.kernel == TsneKernel::StudentT)
                    mult *= low.kernel_terms(i, j);
                const double* yj = res.y.row_ptr(j);
                for (int k = 0; k < cfg.embed_dim; ++k)
                    gi[k] += mult * (yi[k] - yj[k]);
            }
        }

        // history tracks the true objective, not the exaggerated surrogate
        res.cost_history.push_back(kl_cost(p, low.q));

        double momentum = iter < cfg.momentum_switch_iter ? cfg.momentum_early
                                                          : cfg.momentum_late;
        for (size_t k = 0; k < res.y.a.size(); ++k) {
            velocity.a[k] =
                momentum * velocity.a[k] - cfg.learning_rate * grad.a[k];
            res.y.a[k] += velocity.a[k];
        }
    }
    return res;
}

namespace {

Mat image_tiles(const ImageTensor& img, int block) {
    if (block < 1 || img.height() % block != 0 || img.width() % block != 0)
        throw std::invalid_argument("defend_tsne: block must divide both dims");
    int ty = img.height() / block, tx = img.width() / block;
    int n = ty * tx;
    if (n < 3)
        throw std::invalid_argument("defend_tsne: need at least 3 tiles");

    Mat tiles(n, block * block * 3);
    for (int t = 0; t < n; ++t) {
        int r0 = (t / tx) * block, c0 = (t % tx) * block;
        double* row = tiles.row_ptr(t);
        int k = 0;
        for (int r = 0; r < block; ++r)
            for (int c = 0; c < block; ++c)
                for (int ch = 0; ch < 3; ++ch)
                    row[k++] = img.at(r0 + r, c0 + c, ch);
    }
    return tiles;
}

}  // namespace

TsnePlan::TsnePlan(const ImageTensor& img, const TsneConfig& cfg, int block,
                   uint64_t seed)
    : height_(img.height()), width_(img.width()), block_(block),
      tiles_(image_tiles(img, block)) {
    Prng rng(seed);
    TsneResult emb = tsne_embed(tiles_, cfg, rng);

    // similarity weights in the embedding, row-normalized, zero diagonal
    LowDimAffinities low = low_dim_affinities(emb.y, cfg.kernel);
    int n = tiles_.rows;
    neighbor_ = Mat(n, tiles_.cols);
    for (int i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) row_sum += low.kernel_terms(i, j);
        double* out = neighbor_.row_ptr(i);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double w = low.kernel_terms(i, j) / row_sum;
            const double* tj = tiles_.row_ptr(j);
            for (int k = 0; k < tiles_.cols; ++k) out[k] += w * tj[k];
        }
    }
}

ImageTensor TsnePlan::apply(double info) const {
    if (!(info > 0.0 && info <= 1.0))
        throw std::invalid_argument("defend_tsne: info must be in (0,1]");
    int tx = width_ / block_;
    std::vector<double> data(static_cast<size_t>(height_) * width_ * 3);
    for (int t = 0; t < tiles_.rows; ++t) {
        int r0 = (t / tx) * block_, c0 = (t % tx) * block_;
        const double* tile = tiles_.row_ptr(t);
        const double* nb = neighbor_.row_ptr(t);
        int k = 0;
        for (int r = 0; r < block_; ++r)
            for (int c = 0; c < block_; ++c)
                for (int ch = 0; ch < 3; ++ch) {
                    double v = info * tile[k] + (1.0 - info) * nb[k];
                    data[(static_cast<size_t>(r0 + r) * width_ + (c0 + c)) * 3 +
                         ch] = v;
                    ++k;
                }
    }
    return ImageTensor(height_, width_, std::move(data));
}

ImageTensor defend_tsne(const ImageTensor& x, const TsneConfig& cfg,
                        double info, int block, uint64_t seed) {
    return TsnePlan(x, cfg, block, seed).apply(info);
}

}  // namespace defdr
