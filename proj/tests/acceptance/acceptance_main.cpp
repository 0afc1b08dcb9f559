// Acceptance suite: eight end-to-end criteria, one pass/fail line each.
// Usage: sqdm_acceptance [--criterion N] [--out DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sqdm/data.hpp"
#include "sqdm/denoiser.hpp"
#include "sqdm/diffusion.hpp"
#include "sqdm/linalg.hpp"
#include "sqdm/metrics.hpp"
#include "sqdm/rng.hpp"
#include "sqdm/schedule.hpp"
#include "sqdm/squeeze.hpp"
#include "sqdm/sweep.hpp"
#include "sqdm/verify.hpp"
#include "support/isotropic_ddpm.hpp"
#include "support/oracles.hpp"

using namespace sqdm;

namespace {

struct Criterion {
    int number;
    std::string name;
    std::function<std::string()> run;  // empty string = pass, else failure detail
};

std::string fail(const std::string& msg) { return msg; }

template <typename T>
std::string num(T v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

PrincipalDirection e1(int n = 3) {
    std::vector<double> v(n, 0.0);
    v[0] = 1.0;
    return make_direction(std::move(v));
}

PrincipalDirection oblique3() {
    std::vector<double> v = {2.0, -1.0, 0.5};
    const double nrm = norm2(v);
    for (double& x : v) x /= nrm;
    return make_direction(std::move(v));
}

// -------------------------------------------------------------------------
// 1. marginal covariance: Monte Carlo within 3%, dense accumulation to 1e-12
// -------------------------------------------------------------------------
std::string criterion_marginal_covariance() {
    const NoiseSchedule schedule = build_linear_schedule(10, 1e-2, 0.2);
    const std::vector<double> x0 = {0.3, -0.7, 1.1};
    const std::size_t n_traj = 200000;
    const int checkpoints[3] = {1, 5, 10};
    for (const SqueezeVariant variant : {SqueezeVariant::sdm, SqueezeVariant::hdm}) {
        for (const double s0 : {-0.4, 0.0, 0.4}) {
            const DiffusionConfig config =
                make_diffusion_config(schedule, make_squeeze_spec(variant, s0, e1()), 3);

            // closed form vs dense brute force, 1e-12
            for (const int t : checkpoints) {
                const MarginalParams p = marginal_params(config, x0, t);
                const Matrix sigma = dense_marginal_covariance(config, t);
                const double var_par = sigma(0, 0);
                const double var_perp = (sigma(1, 1) + sigma(2, 2)) / 2.0;
                if (std::fabs(p.var_parallel - var_par) > 1e-12 ||
                    std::fabs(p.var_perp - var_perp) > 1e-12)
                    return fail("dense accumulation mismatch at " +
                                variant_name(variant) + " s0=" + num(s0) +
                                " t=" + num(t) + ": " + num(p.var_parallel) + " vs " +
                                num(var_par));
            }

            // Monte Carlo over iterated forward steps, 3% relative on diagonals
            double sum[3][3] = {};     // [checkpoint][axis]
            double sum_sq[3][3] = {};
            for (std::size_t i = 0; i < n_traj; ++i) {
                Rng rng(515, streams::chain_base + i);
                std::vector<double> x = x0;
                int ci = 0;
                for (int t = 1; t <= 10; ++t) {
                    x = forward_step(config, x, t, rng);
                    if (t == checkpoints[ci]) {
                        for (int j = 0; j < 3; ++j) {
                            sum[ci][j] += x[j];
                            sum_sq[ci][j] += x[j] * x[j];
                        }
                        ++ci;
                    }
                }
            }
            for (int ci = 0; ci < 3; ++ci) {
                const MarginalParams p = marginal_params(config, x0, checkpoints[ci]);
                const double expected[3] = {p.var_parallel, p.var_perp, p.var_perp};
                for (int j = 0; j < 3; ++j) {
                    const double mean = sum[ci][j] / n_traj;
                    const double var =
                        (sum_sq[ci][j] - n_traj * mean * mean) / (n_traj - 1.0);
                    const double rel = std::fabs(var - expected[j]) / expected[j];
                    if (rel > 0.03)
                        return fail("mc covariance off by " + num(rel) + " at " +
                                    variant_name(variant) + " s0=" + num(s0) + " t=" +
                                    num(checkpoints[ci]) + " axis " + num(j));
                }
            }
        }
    }
    return {};
}

// -------------------------------------------------------------------------
// 2. bitwise DDPM reduction at s0 = 0 against the isotropic reference
// -------------------------------------------------------------------------
std::string criterion_ddpm_reduction() {
    Rng meta(99, 0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 3;
        const int groups = 1 + static_cast<int>(meta.uniform_below(3));
        const int dim = n * groups;
        const int T = 5 + static_cast<int>(meta.uniform_below(26));
        const DiffusionConfig config = make_diffusion_config(
            build_linear_schedule(T, 1e-3, 0.05),
            make_squeeze_spec(meta.uniform() < 0.5 ? SqueezeVariant::sdm
                                                   : SqueezeVariant::hdm,
                              0.0, e1(n)),
            dim);
        std::vector<double> x(dim);
        meta.fill_normal(x);
        const int t = 1 + static_cast<int>(meta.uniform_below(T));
        const std::uint64_t seed = meta.next_u64();

        {
            Rng a(seed, 1), b(seed, 1);
            if (forward_step(config, x, t, a) !=
                ref_ddpm::forward_step(config.schedule, x, t, b))
                return fail("forward_step mismatch in trial " + num(trial));
        }
        {
            Rng a(seed, 2), b(seed, 2);
            const auto [xs, es] = marginal_sample(config, x, t, a);
            const auto [xr, er] = ref_ddpm::marginal_sample(config.schedule, x, t, b);
            if (xs != xr || es != er)
                return fail("marginal_sample mismatch in trial " + num(trial));
        }
        const DenoiserFn fake = [](std::span<const double> v, int tt) {
            std::vector<double> out(v.begin(), v.end());
            for (double& y : out) y = 0.25 * y - 0.002 * tt;
            return out;
        };
        {
            const int t_prev = static_cast<int>(meta.uniform_below(t));
            Rng a(seed, 3), b(seed, 3);
            if (reverse_step(config, fake, x, t, t_prev, a) !=
                ref_ddpm::reverse_step(config.schedule, fake, x, t, t_prev, b))
                return fail("reverse_step mismatch in trial " + num(trial));
        }
        {
            const int steps = 1 + static_cast<int>(meta.uniform_below(5));
            const ResampledSchedule inference = resample_schedule(config.schedule, steps);
            const Rng root(seed, streams::chain_base);
            const Matrix got = sample_chain(config, fake, 2, inference, root);
            const Matrix want =
                ref_ddpm::sample_chain(config.schedule, fake, 2, inference, root, dim);
            if (got.data != want.data)
                return fail("sample_chain mismatch in trial " + num(trial));
        }
    }
    return {};
}

// -------------------------------------------------------------------------
// 3. operator algebra: determinant, Sherman-Morrison, round trips
// -------------------------------------------------------------------------
std::string criterion_operator_algebra() {
    for (const int n : {2, 3, 8}) {
        const SqueezeSpec hdm = make_squeeze_spec(SqueezeVariant::hdm, 0.1, e1(n));
        for (double s = -2.0; s <= 2.0 + 1e-9; s += 0.1) {
            const double det = determinant(materialize_matrix(hdm, s));
            if (std::fabs(det - 1.0) > 1e-10)
                return fail("det(HDM) = " + num(det) + " at n=" + num(n) +
                            " s=" + num(s));
        }
    }
    Rng rng(7001, 0);
    const SqueezeSpec sdm = make_squeeze_spec(SqueezeVariant::sdm, -0.4, oblique3());
    for (const double s : {-1.5, -0.4, 0.0, 0.3, 1.5}) {
        const Matrix dense_inv = inverse(materialize_matrix(sdm, s));
        for (int i = 0; i < 100; ++i) {
            std::vector<double> x(3);
            rng.fill_normal(x);
            const std::vector<double> fast = apply_inverse(sdm, s, x);
            const std::vector<double> want = mat_vec(dense_inv, x);
            for (int j = 0; j < 3; ++j)
                if (std::fabs(fast[j] - want[j]) > 1e-12 * (1.0 + norm2(x)))
                    return fail("sherman-morrison mismatch at s=" + num(s));
        }
    }
    for (const SqueezeVariant variant : {SqueezeVariant::sdm, SqueezeVariant::hdm}) {
        const SqueezeSpec spec = make_squeeze_spec(variant, -0.4, oblique3());
        for (int i = 0; i < 1000; ++i) {
            const double s = 4.0 * rng.uniform() - 2.0;
            std::vector<double> x(3);
            rng.fill_normal(x);
            const std::vector<double> round = apply_inverse(spec, s, apply(spec, s, x));
            for (int j = 0; j < 3; ++j)
                if (std::fabs(round[j] - x[j]) > 1e-12 * (1.0 + norm2(x)))
                    return fail("round trip drifted for " + variant_name(variant));
        }
    }
    return {};
}

// -------------------------------------------------------------------------
// 4. drift bound: closed form to 1e-14, below 1e-3 (T=1000) / 1.3e-2 (T=50)
// -------------------------------------------------------------------------
std::string criterion_drift_bound() {
    const SqueezeSpec spec = make_squeeze_spec(SqueezeVariant::sdm, -0.4, oblique3());
    {
        const NoiseSchedule schedule = build_linear_schedule(1000, 1e-4, 0.02);
        double max_dev = 0.0;
        for (int t = 2; t <= 1000; ++t) {
            const DriftFactor d = drift_factor(spec, schedule, t);
            Matrix r_minus_i = d.r;
            for (int j = 0; j < 3; ++j) r_minus_i(j, j) -= 1.0;
            const double dense_norm = spectral_norm_sym(r_minus_i);
            const double dbeta = schedule.beta_at(t) - schedule.beta_at(t - 1);
            const double closed = std::fabs(std::expm1(-0.4 * dbeta / 0.02));
            if (std::fabs(dense_norm - closed) > 1e-14)
                return fail("dense ||R-I|| " + num(dense_norm) + " vs closed form " +
                            num(closed) + " at t=" + num(t));
            if (std::fabs(d.deviation - closed) > 1e-14)
                return fail("deviation field off closed form at t=" + num(t));
            max_dev = std::max(max_dev, dense_norm);
        }
        if (!(max_dev < 1e-3))
            return fail("T=1000 max deviation " + num(max_dev) + " not below 1e-3");
    }
    {
        const NoiseSchedule schedule = build_linear_schedule(50, 1e-4, 0.02);
        double max_dev = 0.0;
        for (int t = 2; t <= 50; ++t)
            max_dev = std::max(max_dev, drift_factor(spec, schedule, t).deviation);
        if (!(max_dev < 1.3e-2))
            return fail("T=50 max deviation " + num(max_dev) + " not below 1.3e-2");
    }
    return {};
}

// -------------------------------------------------------------------------
// 5. gradients: 20 random configurations vs central finite differences
// -------------------------------------------------------------------------
std::string criterion_gradients() {
    Rng rng(2718, 0);
    const NoiseSchedule schedule = build_linear_schedule(40, 1e-3, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
        const int dim = 2 + static_cast<int>(rng.uniform_below(5));
        const int layers = 1 + static_cast<int>(rng.uniform_below(2));
        std::vector<int> hidden;
        for (int l = 0; l < layers; ++l)
            hidden.push_back(4 + static_cast<int>(rng.uniform_below(9)));
        const int temb = rng.uniform() < 0.5 ? 4 : 8;
        DenoiserParams params =
            init_denoiser(make_denoiser_config(dim, hidden, temb), rng.next_u64());
        std::vector<TrainingPair> batch(2);
        for (TrainingPair& pair : batch) {
            pair.t = 1 + static_cast<int>(rng.uniform_below(40));
            pair.x_t_sq.resize(dim);
            pair.target.resize(dim);
            rng.fill_normal(pair.x_t_sq);
            rng.fill_normal(pair.target);
        }
        const double err = max_gradient_error(params, batch, schedule.T);
        if (!(err < 1e-4))
            return fail("gradient error " + num(err) + " in trial " + num(trial));
    }
    return {};
}

// -------------------------------------------------------------------------
// 6. pca: planted eigenvector vs full eigendecomposition oracle
// -------------------------------------------------------------------------
std::string criterion_pca() {
    Rng rng(31415, 0);
    Matrix rot(3, 3);
    const double a = 0.6, b = 0.35;
    // two-axis rotation, so the planted top eigenvector is fully oblique
    rot(0, 0) = std::cos(a);
    rot(0, 1) = -std::sin(a);
    rot(1, 0) = std::sin(a) * std::cos(b);
    rot(1, 1) = std::cos(a) * std::cos(b);
    rot(1, 2) = -std::sin(b);
    rot(2, 0) = std::sin(a) * std::sin(b);
    rot(2, 1) = std::cos(a) * std::sin(b);
    rot(2, 2) = std::cos(b);
    Matrix diag(3, 3);
    diag(0, 0) = 4.0;
    diag(1, 1) = 1.0;
    diag(2, 2) = 0.25;
    const Matrix cov = matmul(matmul(rot, diag), transpose(rot));
    const Matrix l = cholesky(cov);
    const std::size_t n = 100000;
    Matrix samples(n, 3);
    std::vector<double> z(3);
    for (std::size_t i = 0; i < n; ++i) {
        rng.fill_normal(z);
        for (int r = 0; r < 3; ++r) {
            double acc = 0.0;
            for (int c = 0; c <= r; ++c) acc += l(r, c) * z[c];
            samples(i, r) = acc;
        }
    }
    const PrincipalDirection est = estimate_principal_direction(samples);

    std::vector<double> mean(3, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) mean[j] += samples(i, j);
    for (double& m : mean) m /= n;
    Matrix emp(3, 3);
    for (std::size_t i = 0; i < n; ++i)
        for (int x = 0; x < 3; ++x)
            for (int y = 0; y < 3; ++y)
                emp(x, y) += (samples(i, x) - mean[x]) * (samples(i, y) - mean[y]);
    for (double& v : emp.data) v /= (n - 1.0);
    const EigenSym eig = jacobi_eigen(emp);
    double cosine = 0.0;
    for (int j = 0; j < 3; ++j) cosine += est.v[j] * eig.vectors(j, 0);
    const double angle = std::acos(std::min(1.0, std::fabs(cosine)));
    if (!(angle < 1e-2))
        return fail("angular error " + num(angle) + " rad vs eigendecomposition");
    return {};
}

// -------------------------------------------------------------------------
// 7. metric sanity: PR corner cases and the SW2 quantile oracle
// -------------------------------------------------------------------------
std::string criterion_metrics() {
    Rng rng(1618, 0);
    Matrix a(500, 3);
    for (double& v : a.data) v = rng.normal();
    const PRPoint same = precision_recall_knn(a, a, 3);
    if (same.precision != 1.0 || same.recall != 1.0)
        return fail("identical sets scored (" + num(same.precision) + ", " +
                    num(same.recall) + ")");
    Matrix far = a;
    for (double& v : far.data) v += 1e6;
    const PRPoint split = precision_recall_knn(a, far, 3);
    if (split.precision != 0.0 || split.recall != 0.0)
        return fail("separated sets scored (" + num(split.precision) + ", " +
                    num(split.recall) + ")");

    Rng proj(1619, 0);
    if (sliced_wasserstein2(a, a, 64, proj) != 0.0)
        return fail("sw2 of a set against itself is nonzero");

    Matrix ga(10000, 2), gb(10000, 2);
    for (double& v : ga.data) v = rng.normal();
    for (std::size_t i = 0; i < gb.rows; ++i) {
        gb(i, 0) = rng.normal() + 2.0;
        gb(i, 1) = rng.normal();
    }
    Rng proj2(1620, 0);
    const double got = sliced_wasserstein2(ga, gb, 128, proj2);
    const double want = oracle::sliced_w2_fixed_projections(ga, gb, 10);
    const double rel = std::fabs(got - want) / want;
    if (!(rel < 0.05))
        return fail("sw2 " + num(got) + " vs quantile oracle " + num(want) +
                    " (rel " + num(rel) + ")");
    return {};
}

// -------------------------------------------------------------------------
// 8. toy sweep: trains everywhere, baseline beats the untrained model 2x
// -------------------------------------------------------------------------
std::string g_sweep_out_dir = "acceptance_sweep_out";

std::string criterion_toy_sweep() {
    SweepOptions opts;
    opts.grid = {-0.6, -0.4, -0.2, 0.0, 0.2, 0.4};
    opts.seeds = {1, 2, 3};
    opts.variant = SqueezeVariant::sdm;
    opts.timesteps = 1000;
    opts.inference_steps = 50;
    opts.denoiser.hidden = {48, 48};
    opts.denoiser.time_embed_dim = 16;
    opts.train.steps = 3000;
    opts.train.batch_size = 48;
    opts.train.lr = 2e-3;
    // EMA horizon matched to the step count: 0.999^3000 ~ 0.05, so the
    // shadow actually tracks the trained weights at this scale
    opts.train.ema_decay = 0.999;
    opts.num_samples = 1500;
    opts.sw2_projections = 64;
    opts.pr_k = 3;
    opts.pr_real_cap = 1500;
    opts.out_dir = g_sweep_out_dir;

    const Matrix dataset = generate(default_sweep_dataset(2000), 4242);
    const std::vector<SweepCell> cells = run_sweep(opts, dataset, &std::cout);
    if (cells.size() != 18) return fail("expected 18 cells, got " + num(cells.size()));

    for (const SweepCell& cell : cells)
        if (cell.diverged)
            return fail("cell s0=" + num(cell.s0) + " seed=" + num(cell.seed) +
                        " diverged");

    for (const SweepCell& cell : cells) {
        if (cell.s0 != 0.0) continue;
        const double ratio = cell.sw2 / cell.sw2_untrained;
        if (!(ratio <= 0.5))
            return fail("baseline seed " + num(cell.seed) + ": trained sw2 " +
                        num(cell.sw2) + " is " + num(ratio) +
                        " of the untrained value " + num(cell.sw2_untrained));
    }

    namespace fs = std::filesystem;
    const fs::path csv = fs::path(g_sweep_out_dir) / "sweep.csv";
    if (!fs::exists(csv)) return fail("sweep.csv missing");
    std::ifstream is(csv);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++lines;
    if (lines != 19) return fail("sweep.csv has " + num(lines) + " lines, want 19");
    for (const SweepCell& cell : cells)
        if (!fs::exists(cell.manifest_path))
            return fail("missing manifest " + cell.manifest_path);

    // report-only: the per-s0 mean sw2 profile (the U-shape is not asserted)
    std::printf("  sweep profile (s0 -> mean sw2 over seeds):\n");
    for (const double s0 : opts.grid) {
        double acc = 0.0;
        int count = 0;
        for (const SweepCell& cell : cells)
            if (cell.s0 == s0) {
                acc += cell.sw2;
                ++count;
            }
        std::printf("    % .2f -> %.4f\n", s0, acc / count);
    }
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc)
            only = std::atoi(argv[++i]);
        else if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc)
            g_sweep_out_dir = argv[++i];
    }

    const std::vector<Criterion> criteria = {
        {1, "marginal covariance oracle (MC 3%, dense 1e-12)",
         criterion_marginal_covariance},
        {2, "bitwise DDPM reduction at s0=0 (1000 cases)", criterion_ddpm_reduction},
        {3, "operator algebra (det, Sherman-Morrison, round trips)",
         criterion_operator_algebra},
        {4, "drift bound (closed form 1e-14; <1e-3 / <1.3e-2)", criterion_drift_bound},
        {5, "gradient correctness (20 configs, fd < 1e-4)", criterion_gradients},
        {6, "pca recovery (angular error < 1e-2 rad)", criterion_pca},
        {7, "metric sanity (PR corners, SW2 oracle 5%)", criterion_metrics},
        {8, "toy sweep (18 cells, baseline <= 50% untrained)", criterion_toy_sweep},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        if (only != 0 && c.number != only) continue;
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        try {
            detail = c.run();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
        if (detail.empty()) {
            std::printf("[PASS] criterion %d: %s (%.1f s)\n", c.number, c.name.c_str(),
                        seconds);
        } else {
            std::printf("[FAIL] criterion %d: %s (%.1f s)\n       %s\n", c.number,
                        c.name.c_str(), seconds, detail.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
