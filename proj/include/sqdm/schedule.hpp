#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqdm {

// Discrete-time variance schedule. Timesteps are 1-indexed in the math and
// 0-indexed in storage; every access goes through the *_at(t) helpers so the
// off-by-one convention lives in exactly one place. alpha_bar_at(0) == 1 is
// part of the contract (it is what forces beta_tilde[1] == 0).
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;        // beta[t-1] = beta_t
    std::vector<double> alpha;       // 1 - beta_t
    std::vector<double> alpha_bar;   // prod_{i<=t} alpha_i
    std::vector<double> beta_tilde;  // (1 - abar_{t-1}) / (1 - abar_t) * beta_t
    double beta_max = 0.0;           // max_t beta_t, the s(t) normalizer

    double beta_at(int t) const { return beta[index(t)]; }
    double alpha_at(int t) const { return alpha[index(t)]; }
    double beta_tilde_at(int t) const { return beta_tilde[index(t)]; }
    double alpha_bar_at(int t) const {
        if (t == 0) return 1.0;
        return alpha_bar[index(t)];
    }

    int index(int t) const {
        if (t < 1 || t > T)
            throw std::out_of_range("timestep " + std::to_string(t) +
                                    " outside [1, " + std::to_string(T) + "]");
        return t - 1;
    }
};

namespace detail {

inline void derive_schedule_tables(NoiseSchedule& s) {
    const int T = s.T;
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    s.beta_tilde.resize(T);
    s.beta_max = 0.0;
    double abar = 1.0;
    double abar_prev = 1.0;
    for (int i = 0; i < T; ++i) {
        const double b = s.beta[i];
        if (!std::isfinite(b) || b <= 0.0 || b >= 1.0)
            throw std::invalid_argument("beta_" + std::to_string(i + 1) +
                                        " = " + std::to_string(b) +
                                        " outside (0, 1)");
        s.alpha[i] = 1.0 - b;
        abar_prev = abar;
        abar *= s.alpha[i];
        s.alpha_bar[i] = abar;
        s.beta_tilde[i] = (i == 0) ? 0.0 : (1.0 - abar_prev) / (1.0 - abar) * b;
        s.beta_max = std::max(s.beta_max, b);
    }
}

}  // namespace detail

// Linear beta schedule from beta_min (t = 1) to beta_max (t = T).
inline NoiseSchedule build_linear_schedule(int T, double beta_min, double beta_max) {
    if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
    if (!std::isfinite(beta_min) || !std::isfinite(beta_max))
        throw std::invalid_argument("non-finite beta bound");
    if (!(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0))
        throw std::invalid_argument("beta bounds must satisfy 0 < min <= max < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    for (int i = 0; i < T; ++i) {
        // two-sided lerp keeps both endpoints exactly beta_min / beta_max
        const double u = (T == 1) ? 0.0 : static_cast<double>(i) / (T - 1);
        s.beta[i] = beta_min * (1.0 - u) + beta_max * u;
    }
    detail::derive_schedule_tables(s);
    return s;
}

// Inference-time subsequence of a training schedule. timesteps[k-1] is the
// training timestep realized by inference step k (ascending; sampling walks
// it back to front). alpha_bar values are carried over exactly; beta/alpha
// become the effective per-hop quantities 1 - abar_k / abar_{k-1}.
struct ResampledSchedule {
    NoiseSchedule schedule;
    std::vector<int> timesteps;
};

inline ResampledSchedule resample_schedule(const NoiseSchedule& train,
                                           int num_inference_steps) {
    if (num_inference_steps < 1 || num_inference_steps > train.T)
        throw std::invalid_argument("num_inference_steps must be in [1, T]");
    const int stride = train.T / num_inference_steps;
    ResampledSchedule out;
    out.timesteps.resize(num_inference_steps);
    out.schedule.T = num_inference_steps;
    out.schedule.beta.resize(num_inference_steps);
    out.schedule.alpha.resize(num_inference_steps);
    out.schedule.alpha_bar.resize(num_inference_steps);
    out.schedule.beta_tilde.resize(num_inference_steps);
    out.schedule.beta_max = 0.0;
    double abar_prev = 1.0;
    for (int k = 1; k <= num_inference_steps; ++k) {
        const int tau = k * stride;
        const double abar = train.alpha_bar_at(tau);
        const double beta_eff = 1.0 - abar / abar_prev;
        out.timesteps[k - 1] = tau;
        out.schedule.beta[k - 1] = beta_eff;
        out.schedule.alpha[k - 1] = 1.0 - beta_eff;
        out.schedule.alpha_bar[k - 1] = abar;
        out.schedule.beta_tilde[k - 1] =
            (k == 1) ? 0.0 : (1.0 - abar_prev) / (1.0 - abar) * beta_eff;
        out.schedule.beta_max = std::max(out.schedule.beta_max, beta_eff);
        abar_prev = abar;
    }
    return out;
}

}  // namespace sqdm
