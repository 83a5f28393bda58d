#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "defdr/dataset.hpp"
#include "defdr/prng.hpp"
#include "defdr/svd.hpp"

using namespace defdr;

namespace {

// Test-side oracle: eigenvalues of the symmetric matrix M^T M by classic
// two-sided cyclic Jacobi. Independent of the production factorization.
std::vector<double> singular_values_via_gram(const Mat& m) {
    int n = m.cols;
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < m.rows; ++k) acc += m(k, i) * m(k, j);
            a(i, j) = acc;
        }

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (int k = 0; k < n; ++k) {
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> sv(n);
    for (int i = 0; i < n; ++i) sv[i] = std::sqrt(std::max(0.0, a(i, i)));
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

Mat random_matrix(int rows, int cols, Prng& rng) {
    Mat m(rows, cols);
    for (double& v : m.a) v = rng.uniform(-1.0, 1.0);
    return m;
}

double frob(const Mat& m) {
    double acc = 0.0;
    for (double v : m.a) acc += v * v;
    return std::sqrt(acc);
}

double max_abs_orthodefect_cols(const Mat& u) {
    double worst = 0.0;
    for (int i = 0; i < u.cols; ++i)
        for (int j = 0; j < u.cols; ++j) {
            double dot = 0.0;
            for (int k = 0; k < u.rows; ++k) dot += u(k, i) * u(k, j);
            worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    return worst;
}

double max_abs_orthodefect_rows(const Mat& vt) {
    double worst = 0.0;
    for (int i = 0; i < vt.rows; ++i)
        for (int j = 0; j < vt.rows; ++j) {
            double dot = 0.0;
            for (int k = 0; k < vt.cols; ++k) dot += vt(i, k) * vt(j, k);
            worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    return worst;
}

double recon_error(const Mat& m, const SvdFactors& f, int k) {
    Mat rec = reconstruct_rank_k(f, k);
    double acc = 0.0;
    for (size_t i = 0; i < m.a.size(); ++i) {
        double d = m.a[i] - rec.a[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

void check_contract(const Mat& m, const SvdFactors& f) {
    REQUIRE(static_cast<int>(f.sigma.size()) == std::min(m.rows, m.cols));
    for (size_t i = 0; i + 1 < f.sigma.size(); ++i)
        CHECK(f.sigma[i] >= f.sigma[i + 1]);
    for (double s : f.sigma) CHECK(s >= 0.0);
    CHECK(max_abs_orthodefect_cols(f.u) <= 1e-8);
    CHECK(max_abs_orthodefect_rows(f.vt) <= 1e-8);
    CHECK(recon_error(m, f, f.rank_bound()) <= 1e-8 * std::max(1.0, frob(m)));
}

}  // namespace

TEST_CASE("identity matrix has unit singular values") {
    Mat m(3, 3);
    for (int i = 0; i < 3; ++i) m(i, i) = 1.0;
    SvdFactors f = svd_channel(m);
    for (double s : f.sigma) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    check_contract(m, f);
}

TEST_CASE("diagonal matrix keeps its diagonal as sigma") {
    Mat m(3, 3);
    m(0, 0) = 3.0;
    m(1, 1) = 2.0;
    m(2, 2) = 1.0;
    SvdFactors f = svd_channel(m);
    CHECK(f.sigma[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(f.sigma[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(f.sigma[2] == doctest::Approx(1.0).epsilon(1e-12));

    Mat k1 = reconstruct_rank_k(f, 1);
    CHECK(k1(0, 0) == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(std::abs(k1(1, 1)) < 1e-10);
    CHECK(std::abs(k1(2, 2)) < 1e-10);
}

TEST_CASE("random 8x8: reconstruction and the Gram eigen-oracle agree") {
    Prng rng(123);
    Mat m = random_matrix(8, 8, rng);
    SvdFactors f = svd_channel(m);
    check_contract(m, f);

    std::vector<double> oracle = singular_values_via_gram(m);
    for (int i = 0; i < 8; ++i)
        CHECK(f.sigma[i] == doctest::Approx(oracle[i]).epsilon(1e-6));
}

TEST_CASE("svd contract holds across 100 random matrices") {
    Prng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        int rows = rng.uniform_int(8, 32);
        int cols = rng.uniform_int(8, 32);
        Mat m = random_matrix(rows, cols, rng);
        SvdFactors f = svd_channel(m);
        check_contract(m, f);
    }
}

TEST_CASE("rank-deficient input still satisfies orthogonality") {
    // constant matrix has rank 1; the null columns need completion
    Mat m(6, 6);
    for (double& v : m.a) v = 0.7;
    SvdFactors f = svd_channel(m);
    check_contract(m, f);
    CHECK(f.sigma[0] == doctest::Approx(0.7 * 6.0).epsilon(1e-10));
    for (size_t i = 1; i < f.sigma.size(); ++i) CHECK(f.sigma[i] < 1e-10);
}

TEST_CASE("Eckart-Young: truncation error equals the sigma tail") {
    Prng rng(321);
    Mat m = random_matrix(12, 10, rng);
    SvdFactors f = svd_channel(m);
    double prev = 1e300;
    for (int k = 1; k <= f.rank_bound(); ++k) {
        double tail = 0.0;
        for (int i = k; i < f.rank_bound(); ++i) tail += f.sigma[i] * f.sigma[i];
        double err = recon_error(m, f, k);
        CHECK(err == doctest::Approx(std::sqrt(tail)).epsilon(1e-6));
        CHECK(err <= prev + 1e-12);  // non-increasing in k
        prev = err;
    }
}

TEST_CASE("svd rejects bad input") {
    Mat m(2, 2);
    m(0, 0) = std::nan("");
    CHECK_THROWS_AS(svd_channel(m), std::invalid_argument);
    Prng rng(5);
    Mat ok = random_matrix(4, 4, rng);
    SvdFactors f = svd_channel(ok);
    CHECK_THROWS_AS(reconstruct_rank_k(f, 0), std::invalid_argument);
    CHECK_THROWS_AS(reconstruct_rank_k(f, 5), std::invalid_argument);
}

TEST_CASE("rank_for_info hand-checked cumulative sums") {
    // oracle: cumulative mass 10/20=0.5, 15/20=0.75, ...
    std::vector<double> sigma = {10, 5, 3, 2};
    CHECK(rank_for_info(sigma, 0.75) == 2);
    CHECK(rank_for_info(sigma, 0.5) == 1);
    CHECK(rank_for_info(sigma, 0.76) == 3);
    CHECK(rank_for_info(sigma, 1.0) == 4);
    CHECK(rank_for_info({1.0}, 0.01) == 1);
    CHECK(rank_for_info({1.0}, 1.0) == 1);
    CHECK(rank_for_info({3.0, 1.0, 0.0, 0.0}, 1.0) == 2);  // nonzero count
}

TEST_CASE("rank_for_info rejects degenerate input") {
    CHECK_THROWS_AS(rank_for_info({0.0, 0.0}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(rank_for_info({1.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(rank_for_info({1.0}, 1.5), std::invalid_argument);
}

TEST_CASE("rank_for_info is monotone in the info fraction") {
    Prng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        int n = rng.uniform_int(2, 24);
        std::vector<double> sigma(n);
        double last = rng.uniform(0.5, 2.0);
        for (int i = 0; i < n; ++i) {
            sigma[i] = last;
            last *= rng.uniform(0.3, 1.0);
        }
        int prev = 0;
        for (double info = 0.05; info <= 1.0; info += 0.05) {
            int k = rank_for_info(sigma, std::min(info, 1.0));
            CHECK(k >= prev);
            prev = k;
        }
    }
}

TEST_CASE("energy mode needs fewer ranks than mass mode") {
    std::vector<double> sigma = {10, 5, 3, 2};
    // squares concentrate mass up front
    CHECK(rank_for_info(sigma, 0.72, InfoMode::SigmaEnergy) == 1);
    CHECK(rank_for_info(sigma, 0.72, InfoMode::SigmaMass) == 2);
}

TEST_CASE("defend_svd at full info is the identity up to quantization") {
    LabeledDataset ds = gen_shapes_dataset(17, 5, 32);
    const ImageTensor& img = ds.image(0);
    ImageTensor out = defend_svd(img, 1.0);
    REQUIRE(out.height() == img.height());
    REQUIRE(out.width() == img.width());
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(std::abs(out.data()[i] - img.data()[i]) <= 1.0 / 255.0);
}

TEST_CASE("constant image is unchanged for any info fraction") {
    ImageTensor img(8, 8, std::vector<double>(8 * 8 * 3, 0.4));
    for (double info : {0.3, 0.9, 1.0}) {
        ImageTensor out = defend_svd(img, info);
        for (double v : out.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-9));
    }
}

TEST_CASE("defend_svd keeps shape and range, lower info keeps lower rank") {
    LabeledDataset ds = gen_shapes_dataset(29, 5, 32);
    SvdPlan plan(ds.image(1));
    ImageTensor strong = plan.apply(0.5);
    ImageTensor weak = plan.apply(0.99);
    CHECK(strong.height() == 32);
    for (double v : strong.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // the aggressive truncation should move the image more
    double d_strong = 0.0, d_weak = 0.0;
    for (size_t i = 0; i < strong.size(); ++i) {
        d_strong += std::abs(strong.data()[i] - ds.image(1).data()[i]);
        d_weak += std::abs(weak.data()[i] - ds.image(1).data()[i]);
    }
    CHECK(d_strong >= d_weak);
}
