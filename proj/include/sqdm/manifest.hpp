#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqdm/denoiser.hpp"
#include "sqdm/diffusion.hpp"
#include "sqdm/errors.hpp"
#include "sqdm/squeeze.hpp"

namespace sqdm {

// All floating-point text output goes through this: 17 significant digits,
// enough to round-trip a double exactly.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string iso8601_utc_now() {
    const std::time_t now =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Deterministic run id: content hash of the resolved configuration, so the
// id survives re-runs and never depends on wall-clock time.
inline std::string make_run_id(const std::string& prefix, const nlohmann::json& config) {
    const std::string dump = config.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (const char c : dump) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return prefix + "-" + std::string(buf).substr(0, 12);
}

inline nlohmann::json direction_to_json(const PrincipalDirection& d) {
    nlohmann::json j;
    j["n"] = d.n;
    j["v"] = d.v;
    j["explained_variance_ratio"] = d.explained_variance_ratio;
    return j;
}

inline PrincipalDirection direction_from_json(const nlohmann::json& j) {
    std::vector<double> v = j.at("v").get<std::vector<double>>();
    PrincipalDirection d = make_direction(std::move(v));
    d.explained_variance_ratio = j.value("explained_variance_ratio", 0.0);
    return d;
}

// Resolved (post-default) configuration of a run; everything needed to
// rebuild the schedule, spec, denoiser, and rng streams bit-exactly.
inline nlohmann::json config_to_json(const DiffusionConfig& config,
                                     const DenoiserConfig& ncfg,
                                     const TrainOptions& topts,
                                     int inference_steps) {
    nlohmann::json j;
    j["timesteps"] = config.schedule.T;
    j["beta_min"] = config.schedule.beta.front();
    j["beta_max"] = config.schedule.beta.back();
    j["inference_steps"] = inference_steps;
    j["variant"] = variant_name(config.spec.variant);
    j["s0"] = config.spec.s0;
    j["time_dependent"] = config.spec.time_dependent;
    j["jump"] = config.jump == TrainingJump::exact_marginal ? "exact_marginal"
                                                            : "single_matrix";
    j["data_dim"] = config.data_dim;
    j["direction"] = direction_to_json(config.spec.direction);
    j["denoiser"] = {{"input_dim", ncfg.input_dim},
                     {"output_dim", ncfg.output_dim},
                     {"hidden", ncfg.hidden},
                     {"time_embed_dim", ncfg.time_embed_dim}};
    j["train"] = {{"steps", topts.steps},
                  {"batch_size", topts.batch_size},
                  {"lr", topts.lr},
                  {"ema_decay", topts.ema_decay},
                  {"seed", topts.seed}};
    return j;
}

inline void save_manifest(const std::string& path, const nlohmann::json& manifest) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open manifest for writing: " + path);
    os << manifest.dump(2) << "\n";
    if (!os) throw io_error("manifest write failed: " + path);
}

inline nlohmann::json load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open manifest: " + path);
    nlohmann::json j;
    is >> j;
    return j;
}

// Stable CSV schema shared by the metrics and sweep commands.
inline std::string metrics_csv_header() {
    return "run_id,s0,variant,seed,sw2,precision,recall,f_score";
}

inline std::string metrics_csv_row(const std::string& run_id, double s0,
                                   SqueezeVariant variant, std::uint64_t seed,
                                   double sw2, double precision, double recall,
                                   double f) {
    return run_id + "," + format_g17(s0) + "," + variant_name(variant) + "," +
           std::to_string(seed) + "," + format_g17(sw2) + "," +
           format_g17(precision) + "," + format_g17(recall) + "," + format_g17(f);
}

}  // namespace sqdm
