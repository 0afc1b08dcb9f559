#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqdm/linalg.hpp"
#include "sqdm/schedule.hpp"

namespace sqdm {

// Unit direction of the top principal component, canonicalized so the first
// nonzero component is positive (the operators only see v v^T, so the sign
// is free; fixing it keeps serialized runs reproducible).
struct PrincipalDirection {
    std::vector<double> v;
    int n = 0;
    double explained_variance_ratio = 0.0;
};

inline PrincipalDirection make_direction(std::vector<double> v,
                                         double explained_variance_ratio = 0.0) {
    PrincipalDirection d;
    d.n = static_cast<int>(v.size());
    if (d.n < 1) throw std::invalid_argument("direction needs dimension >= 1");
    const double nrm = norm2(v);
    if (!(std::fabs(nrm - 1.0) <= 1e-12))
        throw std::invalid_argument("direction must be unit length, got norm " +
                                    std::to_string(nrm));
    for (double& c : v) {
        if (c != 0.0) {
            if (c < 0.0)
                for (double& x : v) x = -x;
            break;
        }
    }
    d.v = std::move(v);
    d.explained_variance_ratio = explained_variance_ratio;
    return d;
}

enum class SqueezeVariant { sdm, hdm };

inline std::string variant_name(SqueezeVariant v) {
    return v == SqueezeVariant::sdm ? "sdm" : "hdm";
}

inline SqueezeVariant parse_variant(const std::string& s) {
    if (s == "sdm") return SqueezeVariant::sdm;
    if (s == "hdm") return SqueezeVariant::hdm;
    throw std::invalid_argument("unknown variant '" + s + "' (want sdm or hdm)");
}

// s0 > 0 squeezes (shrinks variance along v), s0 < 0 antisqueezes.
// With time_dependent set, the effective strength follows s(t) = s0 * beta_t / beta_max.
struct SqueezeSpec {
    SqueezeVariant variant = SqueezeVariant::sdm;
    double s0 = 0.0;
    PrincipalDirection direction;
    bool time_dependent = true;
};

inline SqueezeSpec make_squeeze_spec(SqueezeVariant variant, double s0,
                                     PrincipalDirection direction,
                                     bool time_dependent = true) {
    if (!std::isfinite(s0) || std::fabs(s0) > 5.0)
        throw std::invalid_argument("squeeze strength s0 must be finite with |s0| <= 5");
    if (variant == SqueezeVariant::hdm && direction.n < 2)
        throw std::invalid_argument("hdm variant needs ambient dimension >= 2");
    SqueezeSpec spec;
    spec.variant = variant;
    spec.s0 = s0;
    spec.direction = std::move(direction);
    spec.time_dependent = time_dependent;
    return spec;
}

inline double strength_at(const SqueezeSpec& spec, const NoiseSchedule& schedule,
                          int t) {
    const double beta = schedule.beta_at(t);  // also validates 1 <= t <= T
    if (!spec.time_dependent) return spec.s0;
    return spec.s0 * beta / schedule.beta_max;
}

// In-place n-dimensional squeeze, rank-1 form, O(n). The s == 0 branch is a
// contract, not an optimization: strength zero must leave the state
// bit-identical so the whole pipeline reduces exactly to an isotropic DDPM.
inline void apply_in_place(const SqueezeSpec& spec, double s, std::span<double> x) {
    const std::size_t n = spec.direction.v.size();
    if (x.size() != n)
        throw std::invalid_argument("squeeze apply: vector has dimension " +
                                    std::to_string(x.size()) + ", expected " +
                                    std::to_string(n));
    if (s == 0.0) return;
    const std::span<const double> v{spec.direction.v};
    const double proj = dot(v, x);
    if (spec.variant == SqueezeVariant::sdm) {
        const double scale = std::expm1(-s);
        for (std::size_t i = 0; i < n; ++i) x[i] += v[i] * scale * proj;
    } else {
        const double c_par = std::exp(-s);
        const double c_perp = std::exp(s / (static_cast<double>(n) - 1.0));
        for (std::size_t i = 0; i < n; ++i)
            x[i] = c_perp * x[i] + (c_par - c_perp) * proj * v[i];
    }
}

inline std::vector<double> apply(const SqueezeSpec& spec, double s,
                                 std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end());
    apply_in_place(spec, s, y);
    return y;
}

// S(s)^{-1} == S(-s) for both variants: the SDM case is the Sherman-Morrison
// rank-1 inverse I + v v^T (e^{s} - 1), the HDM case inverts each eigenvalue.
inline void apply_inverse_in_place(const SqueezeSpec& spec, double s,
                                   std::span<double> x) {
    apply_in_place(spec, -s, x);
}

inline std::vector<double> apply_inverse(const SqueezeSpec& spec, double s,
                                         std::span<const double> x) {
    return apply(spec, -s, x);
}

// Tiled application to a flat state of dimension D = groups * n. Each
// n-dimensional feature group is squeezed independently.
inline void apply_tiled_in_place(const SqueezeSpec& spec, double s,
                                 std::span<double> x) {
    const std::size_t n = spec.direction.v.size();
    if (n == 0 || x.size() % n != 0)
        throw std::invalid_argument("tiled apply: state dimension " +
                                    std::to_string(x.size()) +
                                    " is not a multiple of " + std::to_string(n));
    if (s == 0.0) return;
    for (std::size_t off = 0; off < x.size(); off += n)
        apply_in_place(spec, s, x.subspan(off, n));
}

inline void apply_inverse_tiled_in_place(const SqueezeSpec& spec, double s,
                                         std::span<double> x) {
    apply_tiled_in_place(spec, -s, x);
}

// Dense operator, direct formula evaluation. Oracle form for tests and the
// drift report; guarded so nobody materializes image-sized operators.
inline Matrix materialize_matrix(const SqueezeSpec& spec, double s) {
    const std::size_t n = spec.direction.v.size();
    if (n > 64) throw std::invalid_argument("materialize_matrix: n > 64");
    const std::vector<double>& v = spec.direction.v;
    Matrix m(n, n);
    if (spec.variant == SqueezeVariant::sdm) {
        const double scale = std::expm1(-s);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) m(i, j) = v[i] * v[j] * scale;
            m(i, i) += 1.0;
        }
    } else {
        const double c_par = std::exp(-s);
        const double c_perp = std::exp(s / (static_cast<double>(n) - 1.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j)
                m(i, j) = (c_par - c_perp) * v[i] * v[j];
            m(i, i) += c_perp;
        }
    }
    return m;
}

// Drift factor R_t = S_t^{-1} S_{t-1} of the whitened forward process, plus
// its deviation ||R_t - I||_2. Both variants are rank-structured in v, so
// the deviation has a closed form in ds = s(t) - s(t-1):
//   parallel eigenvalue ratio e^{ds}, orthogonal e^{-ds/(n-1)} (HDM only).
struct DriftFactor {
    Matrix r;
    double deviation = 0.0;
};

inline DriftFactor drift_factor(const SqueezeSpec& spec,
                                const NoiseSchedule& schedule, int t) {
    if (t < 2 || t > schedule.T)
        throw std::invalid_argument("drift_factor needs 2 <= t <= T");
    const double ds = strength_at(spec, schedule, t) - strength_at(spec, schedule, t - 1);
    const std::size_t n = spec.direction.v.size();
    const std::vector<double>& v = spec.direction.v;
    DriftFactor out;
    out.r = Matrix(n, n);
    if (spec.variant == SqueezeVariant::sdm) {
        const double scale = std::expm1(ds);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) out.r(i, j) = v[i] * v[j] * scale;
            out.r(i, i) += 1.0;
        }
        out.deviation = std::fabs(scale);
    } else {
        const double r_par = std::exp(ds);
        const double r_perp = std::exp(-ds / (static_cast<double>(n) - 1.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j)
                out.r(i, j) = (r_par - r_perp) * v[i] * v[j];
            out.r(i, i) += r_perp;
        }
        out.deviation = std::max(std::fabs(std::expm1(ds)),
                                 std::fabs(std::expm1(-ds / (static_cast<double>(n) - 1.0))));
    }
    return out;
}

// Top principal component of sample rows by power iteration on the
// mean-centered covariance (1/(N-1) normalization). Deterministic start at
// e1, falling back to later basis vectors if the iterate collapses; tolerance
// 1e-10 on the eigenvector change, at most 10^4 iterations.
inline PrincipalDirection estimate_principal_direction(const Matrix& samples) {
    const std::size_t n_rows = samples.rows;
    const std::size_t n = samples.cols;
    if (n_rows < 2)
        throw std::invalid_argument("principal direction needs at least 2 samples");
    std::vector<double> mean(n, 0.0);
    for (std::size_t i = 0; i < n_rows; ++i)
        for (std::size_t j = 0; j < n; ++j) mean[j] += samples(i, j);
    for (double& m : mean) m /= static_cast<double>(n_rows);

    Matrix cov(n, n);
    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n_rows; ++i) {
        for (std::size_t j = 0; j < n; ++j) centered[j] = samples(i, j) - mean[j];
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) cov(a, b) += centered[a] * centered[b];
    }
    for (double& c : cov.data) c /= static_cast<double>(n_rows - 1);

    double trace = 0.0;
    for (std::size_t j = 0; j < n; ++j) trace += cov(j, j);
    if (!(trace > 1e-18))
        throw std::runtime_error("principal direction undefined: zero-variance data");

    constexpr int max_iters = 10000;
    constexpr double tol = 1e-10;
    std::vector<double> w(n, 0.0);
    std::vector<double> next(n);
    std::size_t start_axis = 0;
    w[0] = 1.0;
    bool converged = false;
    for (int iter = 0; iter < max_iters && !converged; ++iter) {
        next = mat_vec(cov, w);
        const double nrm = norm2(next);
        if (nrm <= 1e-14 * trace) {
            // start vector lies in the kernel; restart along the next axis
            if (++start_axis >= n)
                throw std::runtime_error("principal direction power iteration stalled");
            std::fill(w.begin(), w.end(), 0.0);
            w[start_axis] = 1.0;
            continue;
        }
        for (double& x : next) x /= nrm;
        // sign-aligned change between consecutive iterates
        const double align = dot(std::span<const double>(next),
                                 std::span<const double>(w)) >= 0.0
                                 ? 1.0
                                 : -1.0;
        double delta = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            delta = std::max(delta, std::fabs(next[j] - align * w[j]));
        w = next;
        converged = delta < tol;
    }
    if (!converged)
        throw std::runtime_error("principal direction power iteration did not converge");

    const std::vector<double> cw = mat_vec(cov, w);
    const double lambda = dot(std::span<const double>(w), std::span<const double>(cw));
    return make_direction(std::move(w), lambda / trace);
}

}  // namespace sqdm
