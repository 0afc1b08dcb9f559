#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sqdm/diffusion.hpp"
#include "sqdm/errors.hpp"
#include "sqdm/linalg.hpp"
#include "sqdm/rng.hpp"

namespace sqdm {

// Small time-conditioned MLP noise predictor. The timestep enters as a
// sinusoidal embedding of t/T concatenated to the state; activation is
// silu(x) = x * sigmoid(x) on all hidden layers, linear output.
struct DenoiserConfig {
    int input_dim = 0;
    int output_dim = 0;
    std::vector<int> hidden = {128, 128};
    int time_embed_dim = 32;
};

inline DenoiserConfig make_denoiser_config(int input_dim,
                                           std::vector<int> hidden = {128, 128},
                                           int time_embed_dim = 32,
                                           int output_dim = -1) {
    DenoiserConfig c;
    c.input_dim = input_dim;
    c.output_dim = output_dim < 0 ? input_dim : output_dim;
    c.hidden = std::move(hidden);
    c.time_embed_dim = time_embed_dim;
    if (c.input_dim < 1 || c.output_dim < 1)
        throw std::invalid_argument("denoiser dims must be positive");
    if (c.hidden.empty()) throw std::invalid_argument("denoiser needs a hidden layer");
    for (int h : c.hidden)
        if (h < 1) throw std::invalid_argument("hidden width must be positive");
    if (c.time_embed_dim < 2 || c.time_embed_dim % 2 != 0)
        throw std::invalid_argument("time embedding dimension must be even and >= 2");
    return c;
}

struct LayerWeights {
    Matrix w;               // out x in, row-major
    std::vector<double> b;  // out
};

struct DenoiserParams {
    DenoiserConfig config;
    std::vector<LayerWeights> layers;
    std::vector<LayerWeights> ema;      // shadow weights, same shapes
    std::vector<LayerWeights> adam_m;   // first-moment buffers
    std::vector<LayerWeights> adam_v;   // second-moment buffers
    std::uint64_t step = 0;             // Adam step counter
    std::uint64_t train_rng_pos = 0;    // training-stream position, for resume
};

using Gradients = std::vector<LayerWeights>;

namespace detail {

inline std::vector<std::pair<int, int>> layer_shapes(const DenoiserConfig& c) {
    std::vector<std::pair<int, int>> shapes;
    int in = c.input_dim + c.time_embed_dim;
    for (int h : c.hidden) {
        shapes.emplace_back(h, in);
        in = h;
    }
    shapes.emplace_back(c.output_dim, in);
    return shapes;
}

inline std::vector<LayerWeights> zero_like(const DenoiserConfig& c) {
    std::vector<LayerWeights> out;
    for (auto [rows, cols] : layer_shapes(c)) {
        LayerWeights lw;
        lw.w = Matrix(rows, cols);
        lw.b.assign(rows, 0.0);
        out.push_back(std::move(lw));
    }
    return out;
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) {
    const double sig = 1.0 / (1.0 + std::exp(-x));
    return sig * (1.0 + x * (1.0 - sig));
}

inline void time_embedding(int t, int schedule_T, std::span<double> out) {
    const double p = static_cast<double>(t) / static_cast<double>(schedule_T);
    const int half = static_cast<int>(out.size()) / 2;
    for (int i = 0; i < half; ++i) {
        const double freq =
            half > 1 ? std::pow(10000.0, static_cast<double>(i) / (half - 1)) : 1.0;
        out[i] = std::sin(p * freq);
        out[half + i] = std::cos(p * freq);
    }
}

// Forward pass over a given weight set, optionally caching pre-activations
// and activations for backprop. acts[0] is the network input.
inline std::vector<double> forward_impl(const DenoiserConfig& config,
                                        const std::vector<LayerWeights>& weights,
                                        std::span<const double> x, int t,
                                        int schedule_T,
                                        std::vector<std::vector<double>>* pre,
                                        std::vector<std::vector<double>>* acts) {
    if (static_cast<int>(x.size()) != config.input_dim)
        throw std::invalid_argument("denoiser input has dimension " +
                                    std::to_string(x.size()) + ", expected " +
                                    std::to_string(config.input_dim));
    std::vector<double> a(config.input_dim + config.time_embed_dim);
    std::copy(x.begin(), x.end(), a.begin());
    time_embedding(t, schedule_T,
                   std::span<double>(a).subspan(config.input_dim));
    if (acts) acts->push_back(a);
    const std::size_t n_layers = weights.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const LayerWeights& lw = weights[l];
        std::vector<double> z(lw.w.rows);
        for (std::size_t r = 0; r < lw.w.rows; ++r)
            z[r] = lw.b[r] + dot(lw.w.row(r), a);
        for (double v : z)
            if (!std::isfinite(v))
                throw numeric_error("non-finite activation in layer " +
                                    std::to_string(l));
        if (pre) pre->push_back(z);
        if (l + 1 < n_layers) {
            for (double& v : z) v = silu(v);
        }
        if (acts) acts->push_back(z);
        a = std::move(z);
    }
    return a;
}

}  // namespace detail

inline DenoiserParams init_denoiser(const DenoiserConfig& config, std::uint64_t seed) {
    DenoiserParams p;
    p.config = config;
    Rng rng(seed, streams::weight_init);
    for (auto [rows, cols] : detail::layer_shapes(config)) {
        LayerWeights lw;
        lw.w = Matrix(rows, cols);
        const double bound = std::sqrt(6.0 / (rows + cols));
        for (double& w : lw.w.data) w = (2.0 * rng.uniform() - 1.0) * bound;
        lw.b.assign(rows, 0.0);
        p.layers.push_back(std::move(lw));
    }
    p.ema = p.layers;
    p.adam_m = detail::zero_like(config);
    p.adam_v = detail::zero_like(config);
    return p;
}

inline std::vector<double> denoiser_forward(const DenoiserParams& params,
                                            std::span<const double> x, int t,
                                            int schedule_T, bool use_ema = false) {
    return detail::forward_impl(params.config, use_ema ? params.ema : params.layers,
                                x, t, schedule_T, nullptr, nullptr);
}

// Forward + MSE without gradients; the finite-difference oracle drives this.
inline double loss_only(const DenoiserParams& params,
                        std::span<const TrainingPair> batch, int schedule_T) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    double loss = 0.0;
    for (const TrainingPair& pair : batch) {
        const std::vector<double> pred = detail::forward_impl(
            params.config, params.layers, pair.x_t_sq, pair.t, schedule_T, nullptr,
            nullptr);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - pair.target[i];
            loss += d * d;
        }
    }
    return loss / (batch.size() * params.config.output_dim);
}

// Mean squared error over the batch and output dimensions, with exact
// reverse-mode gradients for the live weights. EMA shadows never enter.
inline std::pair<double, Gradients> loss_and_grad(const DenoiserParams& params,
                                                  std::span<const TrainingPair> batch,
                                                  int schedule_T) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const DenoiserConfig& config = params.config;
    Gradients grads = detail::zero_like(config);
    const double inv_count = 1.0 / (batch.size() * config.output_dim);
    double loss = 0.0;
    const std::size_t n_layers = params.layers.size();
    for (const TrainingPair& pair : batch) {
        std::vector<std::vector<double>> pre;
        std::vector<std::vector<double>> acts;
        const std::vector<double> pred =
            detail::forward_impl(config, params.layers, pair.x_t_sq, pair.t,
                                 schedule_T, &pre, &acts);
        std::vector<double> delta(config.output_dim);
        for (int i = 0; i < config.output_dim; ++i) {
            const double d = pred[i] - pair.target[i];
            loss += d * d;
            delta[i] = 2.0 * d * inv_count;
        }
        for (std::size_t l = n_layers; l-- > 0;) {
            const std::vector<double>& input = acts[l];
            LayerWeights& g = grads[l];
            for (std::size_t r = 0; r < g.w.rows; ++r) {
                const double dr = delta[r];
                g.b[r] += dr;
                std::span<double> grow = g.w.row(r);
                for (std::size_t ccol = 0; ccol < g.w.cols; ++ccol)
                    grow[ccol] += dr * input[ccol];
            }
            if (l == 0) break;
            const Matrix& w = params.layers[l].w;
            std::vector<double> prev(w.cols, 0.0);
            for (std::size_t r = 0; r < w.rows; ++r) {
                const double dr = delta[r];
                std::span<const double> wrow = w.row(r);
                for (std::size_t ccol = 0; ccol < w.cols; ++ccol)
                    prev[ccol] += dr * wrow[ccol];
            }
            const std::vector<double>& z_prev = pre[l - 1];
            for (std::size_t i = 0; i < prev.size(); ++i)
                prev[i] *= detail::silu_grad(z_prev[i]);
            delta = std::move(prev);
        }
    }
    return {loss * inv_count, std::move(grads)};
}

inline bool gradients_finite(const Gradients& grads) {
    for (const LayerWeights& g : grads) {
        for (double v : g.w.data)
            if (!std::isfinite(v)) return false;
        for (double v : g.b)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

// Standard Adam with bias correction; increments the step counter. Refuses
// the whole step if any gradient entry is non-finite.
inline void adam_step(DenoiserParams& params, const Gradients& grads, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (grads.size() != params.layers.size())
        throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (!gradients_finite(grads))
        throw std::invalid_argument("adam_step: non-finite gradient, step refused");
    params.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(params.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(params.step));
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto update = [&](std::vector<double>& w, std::vector<double>& m,
                          std::vector<double>& v, const std::vector<double>& g) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
            }
        };
        update(params.layers[l].w.data, params.adam_m[l].w.data,
               params.adam_v[l].w.data, grads[l].w.data);
        update(params.layers[l].b, params.adam_m[l].b, params.adam_v[l].b,
               grads[l].b);
    }
}

// shadow <- decay * shadow + (1 - decay) * live
inline void ema_update(DenoiserParams& params, double decay = 0.9999) {
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        for (std::size_t i = 0; i < params.layers[l].w.data.size(); ++i)
            params.ema[l].w.data[i] = decay * params.ema[l].w.data[i] +
                                      (1.0 - decay) * params.layers[l].w.data[i];
        for (std::size_t i = 0; i < params.layers[l].b.size(); ++i)
            params.ema[l].b[i] =
                decay * params.ema[l].b[i] + (1.0 - decay) * params.layers[l].b[i];
    }
}

struct TrainOptions {
    int steps = 3000;
    int batch_size = 64;
    double lr = 1e-3;
    double ema_decay = 0.9999;
    int trace_every = 50;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct TrainResult {
    DenoiserParams params;
    std::vector<std::pair<int, double>> trace;  // (step, batch loss)
    bool diverged = false;
};

// Advances params from its current step counter up to total_steps.
// Deterministic: batch indices, timesteps, and noise all come from the
// stream (seed, train_loop), with the position restored from params, so an
// interrupted run resumed from a checkpoint is bit-identical to an
// uninterrupted one. Per training step the stream advances by
// batch_size * (2 + 2 * D) 64-bit outputs. Returns false on divergence.
inline bool train_steps(DenoiserParams& params, const Matrix& dataset,
                        const DiffusionConfig& config, const TrainOptions& opts,
                        int total_steps,
                        std::vector<std::pair<int, double>>* trace) {
    if (dataset.rows == 0) throw std::invalid_argument("empty training dataset");
    if (static_cast<int>(dataset.cols) != config.data_dim)
        throw std::invalid_argument("dataset dimension mismatch");
    Rng rng(opts.seed, streams::train_loop);
    rng.set_position(params.train_rng_pos);
    std::vector<TrainingPair> batch;
    batch.reserve(opts.batch_size);
    while (params.step < static_cast<std::uint64_t>(total_steps)) {
        batch.clear();
        double loss = 0.0;
        bool bad = false;
        try {
            for (int b = 0; b < opts.batch_size; ++b) {
                const std::size_t idx = rng.uniform_below(dataset.rows);
                const int t = 1 + static_cast<int>(rng.uniform_below(config.schedule.T));
                batch.push_back(make_training_pair(config, dataset.row(idx), t, rng));
            }
            auto [batch_loss, grads] = loss_and_grad(params, batch, config.schedule.T);
            loss = batch_loss;
            if (!std::isfinite(loss) || !gradients_finite(grads)) {
                bad = true;
            } else {
                adam_step(params, grads, opts.lr, opts.adam_beta1, opts.adam_beta2,
                          opts.adam_eps);
                ema_update(params, opts.ema_decay);
            }
        } catch (const numeric_error&) {
            bad = true;
            loss = std::numeric_limits<double>::quiet_NaN();
        }
        if (bad) {
            if (trace)
                trace->emplace_back(static_cast<int>(params.step) + 1,
                                    std::numeric_limits<double>::quiet_NaN());
            return false;
        }
        params.train_rng_pos = rng.position();
        const int step = static_cast<int>(params.step);
        if (trace && (step % opts.trace_every == 0 || step == total_steps))
            trace->emplace_back(step, loss);
    }
    return true;
}

inline TrainResult train(const Matrix& dataset, const DiffusionConfig& config,
                         const DenoiserConfig& ncfg, const TrainOptions& opts) {
    TrainResult result;
    result.params = init_denoiser(ncfg, opts.seed);
    if (opts.steps > 0)
        result.diverged = !train_steps(result.params, dataset, config, opts,
                                       opts.steps, &result.trace);
    return result;
}

// DenoiserFn adapter; copies the parameter set so the returned callable owns
// everything it needs.
inline DenoiserFn make_denoiser_fn(const DenoiserParams& params, int schedule_T,
                                   bool use_ema) {
    return [params, schedule_T, use_ema](std::span<const double> x,
                                         int t) -> std::vector<double> {
        return denoiser_forward(params, x, t, schedule_T, use_ema);
    };
}

// ---------------------------------------------------------------------------
// Checkpoint file: little-endian binary, layout documented in the README.
//   magic "SQDMCKPT" | u32 version | u32 input_dim | u32 output_dim |
//   u32 time_embed_dim | u32 n_hidden | u32 hidden[] |
//   live weights (per layer: W row-major f64, b f64) | EMA shadow (same) |
//   u64 step | Adam m (same layout) | Adam v | u64 train_rng_pos
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_layers(std::ostream& os, const std::vector<LayerWeights>& layers) {
    for (const LayerWeights& lw : layers) {
        os.write(reinterpret_cast<const char*>(lw.w.data.data()),
                 static_cast<std::streamsize>(lw.w.data.size() * sizeof(double)));
        os.write(reinterpret_cast<const char*>(lw.b.data()),
                 static_cast<std::streamsize>(lw.b.size() * sizeof(double)));
    }
}
inline std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw std::runtime_error(std::string("checkpoint truncated reading ") + what);
    return v;
}
inline std::uint64_t read_u64(std::istream& is, const char* what) {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw std::runtime_error(std::string("checkpoint truncated reading ") + what);
    return v;
}
inline void read_layers(std::istream& is, std::vector<LayerWeights>& layers,
                        const char* what) {
    for (LayerWeights& lw : layers) {
        if (!is.read(reinterpret_cast<char*>(lw.w.data.data()),
                     static_cast<std::streamsize>(lw.w.data.size() * sizeof(double))) ||
            !is.read(reinterpret_cast<char*>(lw.b.data()),
                     static_cast<std::streamsize>(lw.b.size() * sizeof(double))))
            throw std::runtime_error(std::string("checkpoint truncated reading ") +
                                     what);
    }
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'S', 'Q', 'D', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const DenoiserParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open checkpoint for writing: " + path);
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::write_u32(os, kCheckpointVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(params.config.input_dim));
    detail::write_u32(os, static_cast<std::uint32_t>(params.config.output_dim));
    detail::write_u32(os, static_cast<std::uint32_t>(params.config.time_embed_dim));
    detail::write_u32(os, static_cast<std::uint32_t>(params.config.hidden.size()));
    for (int h : params.config.hidden)
        detail::write_u32(os, static_cast<std::uint32_t>(h));
    detail::write_layers(os, params.layers);
    detail::write_layers(os, params.ema);
    detail::write_u64(os, params.step);
    detail::write_layers(os, params.adam_m);
    detail::write_layers(os, params.adam_v);
    detail::write_u64(os, params.train_rng_pos);
    if (!os) throw io_error("checkpoint write failed: " + path);
}

inline DenoiserParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open checkpoint: " + path);
    char magic[8];
    if (!is.read(magic, sizeof magic) ||
        std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const std::uint32_t version = detail::read_u32(is, "version");
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint version mismatch: file has v" +
                                 std::to_string(version) + ", expected v" +
                                 std::to_string(kCheckpointVersion));
    DenoiserConfig config;
    config.input_dim = static_cast<int>(detail::read_u32(is, "input_dim"));
    config.output_dim = static_cast<int>(detail::read_u32(is, "output_dim"));
    config.time_embed_dim = static_cast<int>(detail::read_u32(is, "time_embed_dim"));
    const std::uint32_t n_hidden = detail::read_u32(is, "hidden layer count");
    config.hidden.clear();
    for (std::uint32_t i = 0; i < n_hidden; ++i)
        config.hidden.push_back(static_cast<int>(detail::read_u32(is, "hidden width")));
    DenoiserParams params;
    params.config = make_denoiser_config(config.input_dim, config.hidden,
                                         config.time_embed_dim, config.output_dim);
    params.layers = detail::zero_like(params.config);
    params.ema = detail::zero_like(params.config);
    params.adam_m = detail::zero_like(params.config);
    params.adam_v = detail::zero_like(params.config);
    detail::read_layers(is, params.layers, "weights");
    detail::read_layers(is, params.ema, "ema shadow");
    params.step = detail::read_u64(is, "step counter");
    detail::read_layers(is, params.adam_m, "adam m");
    detail::read_layers(is, params.adam_v, "adam v");
    params.train_rng_pos = detail::read_u64(is, "rng position");
    is.peek();
    if (!is.eof()) throw std::runtime_error("trailing bytes in checkpoint: " + path);
    return params;
}

}  // namespace sqdm
