#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqdm/linalg.hpp"
#include "sqdm/rng.hpp"
#include "sqdm/schedule.hpp"
#include "sqdm/squeeze.hpp"

namespace sqdm {

// How training-time states are jumped directly to timestep t:
//   exact_marginal - per-axis standard deviations of the exact t-step marginal
//   single_matrix  - sqrt(1 - abar_t) * S_t * eps approximation
enum class TrainingJump { exact_marginal, single_matrix };

struct DiffusionConfig {
    NoiseSchedule schedule;
    SqueezeSpec spec;
    int data_dim = 0;  // D, a multiple of spec.direction.n
    TrainingJump jump = TrainingJump::exact_marginal;
};

inline DiffusionConfig make_diffusion_config(NoiseSchedule schedule, SqueezeSpec spec,
                                             int data_dim,
                                             TrainingJump jump = TrainingJump::exact_marginal) {
    if (data_dim < 1 || data_dim % spec.direction.n != 0)
        throw std::invalid_argument("data_dim must be a positive multiple of n = " +
                                    std::to_string(spec.direction.n));
    DiffusionConfig c;
    c.schedule = std::move(schedule);
    c.spec = std::move(spec);
    c.data_dim = data_dim;
    c.jump = jump;
    return c;
}

// (x_t^sq, squeezed-noise target, t) triple for the MSE objective. The target
// is exactly S_t(s(t)) eps for the eps that built x_t_sq.
struct TrainingPair {
    std::vector<double> x_t_sq;
    std::vector<double> target;
    int t = 0;
};

// Axis-decomposed Gaussian marginal of the squeezed forward process at t:
// mean sqrt(abar_t) x0; per-feature-group variance var_parallel along v and
// var_perp on the orthogonal complement.
struct MarginalParams {
    std::vector<double> mean;
    double var_parallel = 0.0;
    double var_perp = 0.0;
};

namespace detail {

inline void check_dim(const DiffusionConfig& config, std::size_t got,
                      const char* what) {
    if (got != static_cast<std::size_t>(config.data_dim))
        throw std::invalid_argument(std::string(what) + ": dimension " +
                                    std::to_string(got) + ", expected " +
                                    std::to_string(config.data_dim));
}

// Accumulates the marginal covariance eigenvalues by the recurrence
// var(t) = alpha_t var(t-1) + (1 - alpha_t) sigma(t)^2, one term of the
// unrolled sum per step.
inline std::pair<double, double> marginal_axis_variances(const DiffusionConfig& config,
                                                         int t) {
    config.schedule.index(t);  // validate range
    const double n = static_cast<double>(config.spec.direction.n);
    double var_par = 0.0;
    double var_perp = 0.0;
    for (int i = 1; i <= t; ++i) {
        const double a = config.schedule.alpha_at(i);
        const double s = strength_at(config.spec, config.schedule, i);
        const double sigma_par_sq = std::exp(-2.0 * s);
        const double sigma_perp_sq = config.spec.variant == SqueezeVariant::sdm
                                         ? 1.0
                                         : std::exp(2.0 * s / (n - 1.0));
        var_par = a * var_par + (1.0 - a) * sigma_par_sq;
        var_perp = a * var_perp + (1.0 - a) * sigma_perp_sq;
    }
    return {var_par, var_perp};
}

// mean + A_t eps with A_t the axis-decomposed standard deviation. Shared by
// marginal_sample and make_training_pair so both see the same draw.
inline std::vector<double> marginal_state_from_eps(const DiffusionConfig& config,
                                                   std::span<const double> x0, int t,
                                                   std::span<const double> eps) {
    const double sqrt_abar = std::sqrt(config.schedule.alpha_bar_at(t));
    const int dim = config.data_dim;
    std::vector<double> x(dim);
    if (config.spec.s0 == 0.0) {
        // isotropic reduction; must stay bit-identical to a plain DDPM jump
        const double sd = std::sqrt(1.0 - config.schedule.alpha_bar_at(t));
        for (int i = 0; i < dim; ++i) x[i] = sqrt_abar * x0[i] + sd * eps[i];
        return x;
    }
    const auto [var_par, var_perp] = marginal_axis_variances(config, t);
    const double sd_par = std::sqrt(var_par);
    const double sd_perp = std::sqrt(var_perp);
    const std::vector<double>& v = config.spec.direction.v;
    const int n = config.spec.direction.n;
    for (int off = 0; off < dim; off += n) {
        double proj = 0.0;
        for (int j = 0; j < n; ++j) proj += v[j] * eps[off + j];
        for (int j = 0; j < n; ++j) {
            const double par = proj * v[j];
            x[off + j] = sqrt_abar * x0[off + j] + sd_par * par +
                         sd_perp * (eps[off + j] - par);
        }
    }
    return x;
}

}  // namespace detail

// Single squeezed forward step: sqrt(alpha_t) x_{t-1} + sqrt(1-alpha_t) S_t eps.
// Consumes exactly D standard normals.
inline std::vector<double> forward_step(const DiffusionConfig& config,
                                        std::span<const double> x_prev, int t,
                                        Rng& rng) {
    detail::check_dim(config, x_prev.size(), "forward_step");
    const double a = config.schedule.alpha_at(t);
    std::vector<double> eps(config.data_dim);
    rng.fill_normal(eps);
    apply_tiled_in_place(config.spec, strength_at(config.spec, config.schedule, t),
                         eps);
    const double sqrt_a = std::sqrt(a);
    const double sd = std::sqrt(1.0 - a);
    std::vector<double> x(config.data_dim);
    for (int i = 0; i < config.data_dim; ++i) x[i] = sqrt_a * x_prev[i] + sd * eps[i];
    return x;
}

inline MarginalParams marginal_params(const DiffusionConfig& config,
                                      std::span<const double> x0, int t) {
    detail::check_dim(config, x0.size(), "marginal_params");
    MarginalParams p;
    const double sqrt_abar = std::sqrt(config.schedule.alpha_bar_at(t));
    p.mean.resize(config.data_dim);
    for (int i = 0; i < config.data_dim; ++i) p.mean[i] = sqrt_abar * x0[i];
    const auto [vp, vq] = detail::marginal_axis_variances(config, t);
    p.var_parallel = vp;
    p.var_perp = vq;
    return p;
}

// Direct jump to timestep t from the exact marginal. Returns the state and
// the standard-normal draw used. Consumes exactly D standard normals.
inline std::pair<std::vector<double>, std::vector<double>> marginal_sample(
    const DiffusionConfig& config, std::span<const double> x0, int t, Rng& rng) {
    detail::check_dim(config, x0.size(), "marginal_sample");
    std::vector<double> eps(config.data_dim);
    rng.fill_normal(eps);
    std::vector<double> x = detail::marginal_state_from_eps(config, x0, t, eps);
    return {std::move(x), std::move(eps)};
}

// One (x_t^sq, target, t) draw for training. Consumes exactly D standard
// normals; the target is S_t(s(t)) applied to that very draw.
inline TrainingPair make_training_pair(const DiffusionConfig& config,
                                       std::span<const double> x0, int t, Rng& rng) {
    detail::check_dim(config, x0.size(), "make_training_pair");
    std::vector<double> eps(config.data_dim);
    rng.fill_normal(eps);
    TrainingPair pair;
    pair.t = t;
    pair.target = eps;
    apply_tiled_in_place(config.spec, strength_at(config.spec, config.schedule, t),
                         pair.target);
    if (config.jump == TrainingJump::single_matrix) {
        const double sqrt_abar = std::sqrt(config.schedule.alpha_bar_at(t));
        const double sd = std::sqrt(1.0 - config.schedule.alpha_bar_at(t));
        pair.x_t_sq.resize(config.data_dim);
        for (int i = 0; i < config.data_dim; ++i)
            pair.x_t_sq[i] = sqrt_abar * x0[i] + sd * pair.target[i];
    } else {
        pair.x_t_sq = detail::marginal_state_from_eps(config, x0, t, eps);
    }
    return pair;
}

// Noise predictor interface: squeezed state + timestep in, squeezed-noise
// prediction out.
using DenoiserFn = std::function<std::vector<double>(std::span<const double>, int)>;

// Whiten-denoise-resqueeze ancestral step from t down to t_prev (t_prev = 0
// finishes the chain). Consumes D standard normals when t_prev >= 1, none at
// the final step. For t_prev == t-1 the posterior uses the stored schedule
// quantities verbatim; for strided hops it uses the effective
// alpha = abar_t / abar_{t_prev}.
inline std::vector<double> reverse_step(const DiffusionConfig& config,
                                        const DenoiserFn& denoiser,
                                        std::span<const double> x_t_sq, int t,
                                        int t_prev, Rng& rng) {
    detail::check_dim(config, x_t_sq.size(), "reverse_step");
    if (t_prev < 0 || t_prev >= t) throw std::invalid_argument("need t > t_prev >= 0");
    config.schedule.index(t);

    std::vector<double> eps_hat = denoiser(x_t_sq, t);
    detail::check_dim(config, eps_hat.size(), "reverse_step denoiser output");

    const double s_t = strength_at(config.spec, config.schedule, t);
    std::vector<double> x_tilde(x_t_sq.begin(), x_t_sq.end());
    apply_inverse_tiled_in_place(config.spec, s_t, x_tilde);
    apply_inverse_tiled_in_place(config.spec, s_t, eps_hat);

    const double abar_t = config.schedule.alpha_bar_at(t);
    double alpha_eff;
    double beta_tilde;
    if (t_prev == t - 1) {
        alpha_eff = config.schedule.alpha_at(t);
        beta_tilde = config.schedule.beta_tilde_at(t);
    } else {
        const double abar_prev = config.schedule.alpha_bar_at(t_prev);
        alpha_eff = abar_t / abar_prev;
        beta_tilde = (1.0 - abar_prev) / (1.0 - abar_t) * (1.0 - alpha_eff);
    }
    const double eps_coef = (1.0 - alpha_eff) / std::sqrt(1.0 - abar_t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_eff);
    for (int i = 0; i < config.data_dim; ++i)
        x_tilde[i] = inv_sqrt_alpha * (x_tilde[i] - eps_coef * eps_hat[i]);
    if (t_prev >= 1) {
        const double sd = std::sqrt(beta_tilde);
        for (int i = 0; i < config.data_dim; ++i) x_tilde[i] += sd * rng.normal();
    }

    // S_0 convention: the final resqueeze uses s(t=1)
    const double s_prev = strength_at(config.spec, config.schedule,
                                      t_prev >= 1 ? t_prev : 1);
    apply_tiled_in_place(config.spec, s_prev, x_tilde);
    return x_tilde;
}

// Observer for intermediate chain states: called after each reverse step
// with the timestep just reached and the current batch of states.
using ChainObserver = std::function<void(int t_reached, const Matrix& states)>;

// Full reverse chain over an inference schedule. Sample i draws from the
// stream rng.stream() + i, so cells can share a seed without overlap; each
// chain consumes exactly (num steps) * D standard normals (D for the
// initial state, D per step except the final one).
inline Matrix sample_chain(const DiffusionConfig& config, const DenoiserFn& denoiser,
                           std::size_t num_samples,
                           const ResampledSchedule& inference, const Rng& rng_root,
                           const ChainObserver& observer = nullptr) {
    const std::vector<int>& taus = inference.timesteps;
    if (taus.empty()) throw std::invalid_argument("empty inference schedule");
    Matrix states(num_samples, config.data_dim);
    std::vector<Rng> rngs;
    rngs.reserve(num_samples);
    const int t_top = taus.back();
    const double s_top = strength_at(config.spec, config.schedule, t_top);
    for (std::size_t i = 0; i < num_samples; ++i) {
        Rng rng(rng_root.seed(), rng_root.stream() + i);
        rng.fill_normal(states.row(i));
        apply_tiled_in_place(config.spec, s_top, states.row(i));
        rngs.push_back(rng);
    }
    if (observer && num_samples > 0) observer(t_top, states);
    for (std::size_t k = taus.size(); k-- > 0;) {
        const int t = taus[k];
        const int t_prev = (k == 0) ? 0 : taus[k - 1];
        for (std::size_t i = 0; i < num_samples; ++i) {
            const std::vector<double> next =
                reverse_step(config, denoiser, states.row(i), t, t_prev, rngs[i]);
            std::copy(next.begin(), next.end(), states.row(i).begin());
        }
        if (observer && num_samples > 0) observer(t_prev, states);
    }
    return states;
}

}  // namespace sqdm
