#include "defdr/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace defdr {
namespace {

// Orthogonalizes the columns of B (m x n, m >= n) in place with one-sided
// Jacobi rotations, accumulating them into V (n x n). On return the columns
// of B are mutually orthogonal: B = U * diag(sigma) with sigma_j = ||B_j||.
void jacobi_orthogonalize(Mat& B, Mat& V) {
    const int m = B.rows, n = B.cols;
    const double tol = 1e-15;
    const int max_sweeps = 60;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int i = 0; i < m; ++i) {
                    double bp = B(i, p), bq = B(i, q);
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;

                double zeta = (beta - alpha) / (2.0 * gamma);
                double t = (zeta >= 0 ? 1.0 : -1.0) /
                           (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;

                for (int i = 0; i < m; ++i) {
                    double bp = B(i, p), bq = B(i, q);
                    B(i, p) = c * bp - s * bq;
                    B(i, q) = s * bp + c * bq;
                }
                for (int i = 0; i < n; ++i) {
                    double vp = V(i, p), vq = V(i, q);
                    V(i, p) = c * vp - s * vq;
                    V(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
}

// Replaces near-null columns of U with an orthonormal completion so the
// orthogonality contract holds even for rank-deficient input.
void complete_null_columns(Mat& U, const std::vector<double>& sigma,
                           double sigma_floor) {
    const int m = U.rows, r = U.cols;
    int next_axis = 0;
    for (int j = 0; j < r; ++j) {
        if (sigma[j] > sigma_floor) continue;
        // try canonical axes until one survives projection
        for (; next_axis < m; ++next_axis) {
            std::vector<double> v(m, 0.0);
            v[next_axis] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (int t = 0; t < r; ++t) {
                    if (t == j) continue;
                    if (sigma[t] <= sigma_floor && t > j) continue;  // not built yet
                    double dot = 0.0;
                    for (int i = 0; i < m; ++i) dot += v[i] * U(i, t);
                    for (int i = 0; i < m; ++i) v[i] -= dot * U(i, t);
                }
            }
            double norm = 0.0;
            for (int i = 0; i < m; ++i) norm += v[i] * v[i];
            norm = std::sqrt(norm);
            if (norm > 0.5) {
                for (int i = 0; i < m; ++i) U(i, j) = v[i] / norm;
                ++next_axis;
                break;
            }
        }
    }
}

SvdFactors svd_tall(const Mat& M) {
    const int m = M.rows, n = M.cols;  // m >= n
    Mat B = M;
    Mat V(n, n);
    for (int i = 0; i < n; ++i) V(i, i) = 1.0;

    jacobi_orthogonalize(B, V);

    std::vector<double> sigma(n);
    for (int j = 0; j < n; ++j) {
        double norm = 0.0;
        for (int i = 0; i < m; ++i) norm += B(i, j) * B(i, j);
        sigma[j] = std::sqrt(norm);
    }

    // sort descending, permuting columns of B and V along
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sigma[a] > sigma[b]; });

    SvdFactors f;
    f.m = m;
    f.n = n;
    f.sigma.resize(n);
    f.u = Mat(m, n);
    Mat v_sorted(n, n);
    for (int j = 0; j < n; ++j) {
        int src = order[j];
        f.sigma[j] = sigma[src];
        for (int i = 0; i < n; ++i) v_sorted(i, j) = V(i, src);
        if (sigma[src] > 0.0)
            for (int i = 0; i < m; ++i) f.u(i, j) = B(i, src) / sigma[src];
    }

    double sigma_floor = std::max(f.sigma[0], 1.0) * 1e-13;
    complete_null_columns(f.u, f.sigma, sigma_floor);

    f.vt = Mat(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) f.vt(i, j) = v_sorted(j, i);
    return f;
}

Mat transpose(const Mat& M) {
    Mat T(M.cols, M.rows);
    for (int i = 0; i < M.rows; ++i)
        for (int j = 0; j < M.cols; ++j) T(j, i) = M(i, j);
    return T;
}

Mat channel_matrix(const ImageTensor& img, int ch) {
    Mat M(img.height(), img.width());
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c) M(r, c) = img.at(r, c, ch);
    return M;
}

}  // namespace

SvdFactors svd_channel(const Mat& M) {
    if (M.rows < 1 || M.cols < 1)
        throw std::invalid_argument("svd_channel: empty matrix");
    for (double v : M.a)
        if (!std::isfinite(v))
            throw std::invalid_argument("svd_channel: non-finite entry");

    if (M.rows >= M.cols) return svd_tall(M);

    // Factor the transpose and swap the roles of u and v.
    SvdFactors t = svd_tall(transpose(M));
    SvdFactors f;
    f.m = M.rows;
    f.n = M.cols;
    f.sigma = t.sigma;
    f.u = transpose(t.vt);  // m x r
    f.vt = transpose(t.u);  // r x n
    return f;
}

int rank_for_info(const std::vector<double>& sigma, double info, InfoMode mode) {
    if (sigma.empty()) throw std::invalid_argument("rank_for_info: empty sigma");
    if (!(info > 0.0 && info <= 1.0))
        throw std::invalid_argument("rank_for_info: info must be in (0,1]");

    double total = 0.0;
    for (double s : sigma) total += mode == InfoMode::SigmaMass ? s : s * s;
    if (total <= 0.0)
        throw std::invalid_argument("rank_for_info: all-zero sigma");

    double cum = 0.0;
    for (size_t k = 0; k < sigma.size(); ++k) {
        cum += mode == InfoMode::SigmaMass ? sigma[k] : sigma[k] * sigma[k];
        if (cum / total >= info) return static_cast<int>(k) + 1;
    }
    return static_cast<int>(sigma.size());
}

Mat reconstruct_rank_k(const SvdFactors& f, int k) {
    if (k < 1 || k > f.rank_bound())
        throw std::invalid_argument("reconstruct_rank_k: k out of range");
    Mat out(f.m, f.n);
    for (int t = 0; t < k; ++t) {
        double s = f.sigma[t];
        if (s == 0.0) continue;
        for (int i = 0; i < f.m; ++i) {
            double us = s * f.u(i, t);
            double* row = out.row_ptr(i);
            const double* vrow = f.vt.row_ptr(t);
            for (int j = 0; j < f.n; ++j) row[j] += us * vrow[j];
        }
    }
    return out;
}

SvdPlan::SvdPlan(const ImageTensor& img)
    : height_(img.height()), width_(img.width()) {
    for (int ch = 0; ch < 3; ++ch)
        channels_[ch] = svd_channel(channel_matrix(img, ch));
}

ImageTensor SvdPlan::apply(double info, InfoMode mode) const {
    std::vector<double> data(static_cast<size_t>(height_) * width_ * 3);
    for (int ch = 0; ch < 3; ++ch) {
        const SvdFactors& f = channels_[ch];
        // all-zero channel reconstructs to zero at any rank
        int k = f.sigma[0] > 0.0 ? rank_for_info(f.sigma, info, mode) : 1;
        Mat rec = reconstruct_rank_k(f, k);
        for (int r = 0; r < height_; ++r)
            for (int c = 0; c < width_; ++c)
                data[(static_cast<size_t>(r) * width_ + c) * 3 + ch] = rec(r, c);
    }
    return ImageTensor(height_, width_, std::move(data));
}

ImageTensor defend_svd(const ImageTensor& img, double info, InfoMode mode) {
    return SvdPlan(img).apply(info, mode);
}

}  // namespace defdr
