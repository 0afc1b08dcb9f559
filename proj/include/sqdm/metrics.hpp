#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "sqdm/linalg.hpp"
#include "sqdm/rng.hpp"
#include "sqdm/squeeze.hpp"

namespace sqdm {

struct PRPoint {
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    int k = 0;
};

inline double f_score(double precision, double recall) {
    const double sum = precision + recall;
    if (sum == 0.0) return 0.0;
    return 2.0 * precision * recall / sum;
}

namespace detail {

// Empirical quantile with linear interpolation between order statistics.
inline double quantile_linear(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Squared 1-D Wasserstein-2 between two sorted samples. Equal sizes pair
// order statistics directly; otherwise both quantile functions are read on
// a common grid with linear interpolation.
inline double w2_squared_1d(const std::vector<double>& a,
                            const std::vector<double>& b) {
    if (a.size() == b.size()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            acc += d * d;
        }
        return acc / static_cast<double>(a.size());
    }
    const std::size_t grid = std::max(a.size(), b.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < grid; ++j) {
        const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(grid);
        const double d = quantile_linear(a, q) - quantile_linear(b, q);
        acc += d * d;
    }
    return acc / static_cast<double>(grid);
}

}  // namespace detail

// Sliced Wasserstein-2 distance: sqrt of the mean, over random unit
// directions, of the squared 1-D W2 between the projected samples.
// Consumes D normals per projection direction from rng.
inline double sliced_wasserstein2(const Matrix& a, const Matrix& b,
                                  int num_projections, Rng& rng) {
    if (a.rows == 0 || b.rows == 0)
        throw std::invalid_argument("sliced_wasserstein2: empty sample set");
    if (a.cols != b.cols)
        throw std::invalid_argument("sliced_wasserstein2: dimension mismatch");
    if (num_projections < 1)
        throw std::invalid_argument("sliced_wasserstein2: need >= 1 projection");
    const std::size_t dim = a.cols;
    std::vector<double> dir(dim);
    std::vector<double> pa(a.rows);
    std::vector<double> pb(b.rows);
    double acc = 0.0;
    for (int p = 0; p < num_projections; ++p) {
        double nrm = 0.0;
        do {
            rng.fill_normal(dir);
            nrm = norm2(dir);
        } while (nrm < 1e-12);
        for (double& d : dir) d /= nrm;
        for (std::size_t i = 0; i < a.rows; ++i)
            pa[i] = dot(a.row(i), std::span<const double>(dir));
        for (std::size_t i = 0; i < b.rows; ++i)
            pb[i] = dot(b.row(i), std::span<const double>(dir));
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        acc += detail::w2_squared_1d(pa, pb);
    }
    return std::sqrt(acc / num_projections);
}

// k-NN precision/recall (manifold cover with k-th neighbor radii, Euclidean
// distance in raw sample space). precision: fraction of generated points
// inside the union of k-NN balls of real points; recall: roles swapped.
// Brute-force O(N^2) neighbor search; adequate for desk-scale N.
inline PRPoint precision_recall_knn(const Matrix& real, const Matrix& gen, int k) {
    if (k < 1) throw std::invalid_argument("precision_recall_knn: k must be >= 1");
    if (real.rows <= static_cast<std::size_t>(k) ||
        gen.rows <= static_cast<std::size_t>(k))
        throw std::invalid_argument("precision_recall_knn: need more than k points per set");
    if (real.cols != gen.cols)
        throw std::invalid_argument("precision_recall_knn: dimension mismatch");

    auto sq_dist = [](std::span<const double> x, std::span<const double> y) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - y[i];
            acc += d * d;
        }
        return acc;
    };

    // squared radius of the k-NN ball around each row, self excluded
    auto knn_radii_sq = [&](const Matrix& pts) {
        std::vector<double> radii(pts.rows);
        std::vector<double> dists;
        dists.reserve(pts.rows - 1);
        for (std::size_t i = 0; i < pts.rows; ++i) {
            dists.clear();
            for (std::size_t j = 0; j < pts.rows; ++j) {
                if (j == i) continue;
                dists.push_back(sq_dist(pts.row(i), pts.row(j)));
            }
            std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
            radii[i] = dists[k - 1];
        }
        return radii;
    };

    auto covered_fraction = [&](const Matrix& queries, const Matrix& centers,
                                const std::vector<double>& radii_sq) {
        std::size_t covered = 0;
        for (std::size_t i = 0; i < queries.rows; ++i) {
            for (std::size_t j = 0; j < centers.rows; ++j) {
                if (sq_dist(queries.row(i), centers.row(j)) <= radii_sq[j]) {
                    ++covered;
                    break;
                }
            }
        }
        return static_cast<double>(covered) / static_cast<double>(queries.rows);
    };

    const std::vector<double> real_radii = knn_radii_sq(real);
    const std::vector<double> gen_radii = knn_radii_sq(gen);
    PRPoint pr;
    pr.k = k;
    pr.precision = covered_fraction(gen, real, real_radii);
    pr.recall = covered_fraction(real, gen, gen_radii);
    pr.f_score = f_score(pr.precision, pr.recall);
    return pr;
}

// Empirical variance along the principal direction and averaged orthogonal
// variance, pooled over the D/n feature groups of each row. Also returns the
// full pooled n x n covariance (mean-centered, 1/(count-1)).
struct CovarianceDiagnostic {
    double var_parallel = 0.0;
    double var_perp = 0.0;
    Matrix covariance;
};

inline CovarianceDiagnostic covariance_diagnostic(const Matrix& samples,
                                                  const PrincipalDirection& direction) {
    if (samples.rows < 2)
        throw std::invalid_argument("covariance_diagnostic: need at least 2 samples");
    const std::size_t n = direction.v.size();
    if (n == 0 || samples.cols % n != 0)
        throw std::invalid_argument("covariance_diagnostic: columns not a multiple of n");
    const std::size_t groups = samples.cols / n;
    const std::size_t count = samples.rows * groups;

    std::vector<double> mean(n, 0.0);
    for (std::size_t i = 0; i < samples.rows; ++i)
        for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t j = 0; j < n; ++j) mean[j] += samples(i, g * n + j);
    for (double& m : mean) m /= static_cast<double>(count);

    Matrix cov(n, n);
    std::vector<double> c(n);
    for (std::size_t i = 0; i < samples.rows; ++i) {
        for (std::size_t g = 0; g < groups; ++g) {
            for (std::size_t j = 0; j < n; ++j) c[j] = samples(i, g * n + j) - mean[j];
            for (std::size_t x = 0; x < n; ++x)
                for (std::size_t y = 0; y < n; ++y) cov(x, y) += c[x] * c[y];
        }
    }
    const double denom = static_cast<double>(count) - 1.0;
    for (double& v : cov.data) v /= denom;

    CovarianceDiagnostic diag;
    const std::vector<double> cv = mat_vec(cov, direction.v);
    diag.var_parallel =
        dot(std::span<const double>(direction.v), std::span<const double>(cv));
    double trace = 0.0;
    for (std::size_t j = 0; j < n; ++j) trace += cov(j, j);
    diag.var_perp = n > 1 ? (trace - diag.var_parallel) / (static_cast<double>(n) - 1.0)
                          : diag.var_parallel;
    diag.covariance = std::move(cov);
    return diag;
}

}  // namespace sqdm
