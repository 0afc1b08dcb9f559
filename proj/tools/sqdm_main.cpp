// sqdm - squeezed diffusion at desk scale.
//
// Subcommands: verify, pca, train, sample, sweep, drift-report, metrics.
// Exit codes: 0 success, 1 check/metric failure, 2 usage error, 3 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sqdm/data.hpp"
#include "sqdm/denoiser.hpp"
#include "sqdm/diffusion.hpp"
#include "sqdm/errors.hpp"
#include "sqdm/manifest.hpp"
#include "sqdm/metrics.hpp"
#include "sqdm/schedule.hpp"
#include "sqdm/squeeze.hpp"
#include "sqdm/sweep.hpp"
#include "sqdm/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    if (out.empty()) throw std::invalid_argument("empty list: '" + csv + "'");
    return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoull(item));
    }
    if (out.empty()) throw std::invalid_argument("empty list: '" + csv + "'");
    return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    for (double v : parse_double_list(csv)) out.push_back(static_cast<int>(v));
    return out;
}

// Config-file support: flat key-value JSON whose keys are the long flag
// names without the leading dashes. Precedence: CLI flag > config file >
// built-in default. The resolved values are what land in manifests.
struct ConfigBinder {
    std::vector<std::pair<CLI::Option*, std::function<void(const json&)>>> bindings;

    template <typename T>
    CLI::Option* bind(CLI::App* cmd, const std::string& flag, T& var,
                      const std::string& desc) {
        CLI::Option* opt = cmd->add_option(flag, var, desc);
        register_binding(opt, flag, var);
        return opt;
    }

    template <typename T>
    void register_binding(CLI::Option* opt, const std::string& flag, T& var) {
        std::string key = flag;
        while (!key.empty() && key.front() == '-') key.erase(key.begin());
        bindings.emplace_back(opt, [&var, key](const json& cfg) {
            if (cfg.contains(key)) var = cfg.at(key).get<T>();
        });
    }

    void apply(const std::string& config_path) const {
        if (config_path.empty()) return;
        std::ifstream is(config_path);
        if (!is) throw sqdm::io_error("cannot open config file: " + config_path);
        json cfg;
        try {
            is >> cfg;
        } catch (const json::parse_error& e) {
            throw std::invalid_argument(std::string("config file is not valid JSON: ") +
                                        e.what());
        }
        if (!cfg.is_object())
            throw std::invalid_argument("config file must hold a flat JSON object");
        for (const auto& [opt, apply_one] : bindings)
            if (opt->count() == 0) apply_one(cfg);
    }
};

sqdm::Matrix load_dataset_file(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm")
        return sqdm::load_ppm_pixels(path);
    return sqdm::load_tensor(path);
}

std::vector<double> column_means(const sqdm::Matrix& m) {
    std::vector<double> mean(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) mean[j] += m(i, j);
    if (m.rows > 0)
        for (double& v : mean) v /= static_cast<double>(m.rows);
    return mean;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

int cmd_verify(const sqdm::VerifyOptions& opts) {
    const std::vector<sqdm::CheckResult> results = sqdm::run_verification(opts);
    if (results.empty()) {
        std::cerr << "no checks match filter '" << opts.filter << "'\n";
        return kExitUsage;
    }
    int failed = 0;
    for (const sqdm::CheckResult& r : results) {
        std::printf("[%s] %-30s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
        failed += r.pass ? 0 : 1;
    }
    std::printf("%zu checks, %d failed\n", results.size(), failed);
    return failed == 0 ? kExitOk : kExitCheckFailure;
}

// ---------------------------------------------------------------------------
// pca
// ---------------------------------------------------------------------------

int cmd_pca(const std::string& dataset_path, const std::string& out_dir) {
    const sqdm::Matrix data = load_dataset_file(dataset_path);
    const sqdm::PrincipalDirection dir = sqdm::estimate_principal_direction(data);
    const std::vector<double> mean = column_means(data);
    std::printf("n %d\n", dir.n);
    for (int j = 0; j < dir.n; ++j)
        std::printf("v[%d] %s\n", j, sqdm::format_g17(dir.v[j]).c_str());
    std::printf("explained_variance_ratio %s\n",
                sqdm::format_g17(dir.explained_variance_ratio).c_str());
    for (int j = 0; j < dir.n; ++j)
        std::printf("mean[%d] %s\n", j, sqdm::format_g17(mean[j]).c_str());
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        json manifest;
        json cfg = {{"dataset", dataset_path}};
        manifest["run_id"] = sqdm::make_run_id("pca", cfg);
        manifest["timestamp"] = sqdm::iso8601_utc_now();
        manifest["command"] = "pca";
        manifest["config"] = cfg;
        manifest["direction"] = sqdm::direction_to_json(dir);
        manifest["data_mean"] = mean;
        const std::string path = (fs::path(out_dir) / "pca_manifest.json").string();
        sqdm::save_manifest(path, manifest);
        std::printf("manifest %s\n", path.c_str());
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// drift-report
// ---------------------------------------------------------------------------

int cmd_drift_report(int timesteps, double beta_min, double beta_max, double s0,
                     const std::string& variant, bool time_dependent, int dim,
                     const std::string& out_dir) {
    const sqdm::NoiseSchedule schedule =
        sqdm::build_linear_schedule(timesteps, beta_min, beta_max);
    std::vector<double> v(dim, 0.0);
    v[0] = 1.0;
    const sqdm::SqueezeSpec spec =
        sqdm::make_squeeze_spec(sqdm::parse_variant(variant), s0,
                                sqdm::make_direction(std::move(v)), time_dependent);
    double max_dev = 0.0;
    double sum_dev = 0.0;
    std::vector<std::pair<int, double>> rows;
    rows.reserve(timesteps);
    for (int t = 2; t <= timesteps; ++t) {
        const double dev = sqdm::drift_factor(spec, schedule, t).deviation;
        rows.emplace_back(t, dev);
        max_dev = std::max(max_dev, dev);
        sum_dev += dev;
    }
    const double mean_dev = rows.empty() ? 0.0 : sum_dev / rows.size();
    std::printf("timesteps %d  variant %s  s0 %s  time_dependent %d\n", timesteps,
                variant.c_str(), sqdm::format_g17(s0).c_str(), time_dependent ? 1 : 0);
    std::printf("max ||R_t - I||_2  %s\n", sqdm::format_g17(max_dev).c_str());
    std::printf("mean ||R_t - I||_2 %s\n", sqdm::format_g17(mean_dev).c_str());
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const std::string path = (fs::path(out_dir) / "drift.csv").string();
        std::ofstream csv(path);
        if (!csv) throw sqdm::io_error("cannot open for writing: " + path);
        csv << "t,deviation\n";
        for (const auto& [t, dev] : rows)
            csv << t << "," << sqdm::format_g17(dev) << "\n";
        std::printf("csv %s\n", path.c_str());
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train / sample
// ---------------------------------------------------------------------------

struct PipelineArgs {
    std::string dataset;
    std::uint64_t dataset_seed = 12345;
    int dataset_count = 2000;
    std::uint64_t seed = 1;
    double s0 = 0.0;
    std::string variant = "sdm";
    bool time_dependent = true;
    std::string jump = "exact_marginal";
    int timesteps = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    int inference_steps = 50;
    std::string hidden = "128,128";
    int time_embed_dim = 32;
    int steps = 3000;
    int batch_size = 64;
    double lr = 1e-3;
    double ema_decay = 0.9999;
    int trace_every = 50;
    std::string out = "run_out";
};

sqdm::Matrix resolve_dataset(const PipelineArgs& args, json* dataset_info) {
    if (!args.dataset.empty()) {
        if (dataset_info)
            *dataset_info = {{"path", args.dataset}};
        return load_dataset_file(args.dataset);
    }
    if (dataset_info)
        *dataset_info = {{"synthetic", "mixture3d"},
                         {"count", args.dataset_count},
                         {"seed", args.dataset_seed}};
    return sqdm::generate(sqdm::default_sweep_dataset(args.dataset_count),
                          args.dataset_seed);
}

sqdm::TrainingJump parse_jump(const std::string& s) {
    if (s == "exact_marginal") return sqdm::TrainingJump::exact_marginal;
    if (s == "single_matrix") return sqdm::TrainingJump::single_matrix;
    throw std::invalid_argument("unknown jump '" + s +
                                "' (want exact_marginal or single_matrix)");
}

int cmd_train(const PipelineArgs& args) {
    json dataset_info;
    const sqdm::Matrix dataset = resolve_dataset(args, &dataset_info);
    const sqdm::PrincipalDirection direction =
        sqdm::estimate_principal_direction(dataset);
    const sqdm::NoiseSchedule schedule =
        sqdm::build_linear_schedule(args.timesteps, args.beta_min, args.beta_max);
    const sqdm::SqueezeSpec spec =
        sqdm::make_squeeze_spec(sqdm::parse_variant(args.variant), args.s0, direction,
                                args.time_dependent);
    const sqdm::DiffusionConfig config = sqdm::make_diffusion_config(
        schedule, spec, static_cast<int>(dataset.cols), parse_jump(args.jump));
    const sqdm::DenoiserConfig ncfg = sqdm::make_denoiser_config(
        static_cast<int>(dataset.cols), parse_int_list(args.hidden),
        args.time_embed_dim);
    sqdm::TrainOptions topts;
    topts.steps = args.steps;
    topts.batch_size = args.batch_size;
    topts.lr = args.lr;
    topts.ema_decay = args.ema_decay;
    topts.trace_every = args.trace_every;
    topts.seed = args.seed;

    const sqdm::TrainResult result = sqdm::train(dataset, config, ncfg, topts);
    fs::create_directories(args.out);
    const std::string ckpt_path = (fs::path(args.out) / "checkpoint.bin").string();
    sqdm::save_checkpoint(ckpt_path, result.params);

    json cfg_json = sqdm::config_to_json(config, ncfg, topts, args.inference_steps);
    cfg_json["dataset"] = dataset_info;
    json manifest;
    manifest["run_id"] = sqdm::make_run_id("train", cfg_json);
    manifest["timestamp"] = sqdm::iso8601_utc_now();
    manifest["command"] = "train";
    manifest["config"] = cfg_json;
    manifest["direction"] = sqdm::direction_to_json(direction);
    manifest["data_mean"] = column_means(dataset);
    json trace = json::array();
    for (const auto& [step, loss] : result.trace)
        trace.push_back({{"step", step}, {"loss", loss}});
    manifest["metrics"] = {
        {"diverged", result.diverged},
        {"final_loss", result.trace.empty() ? 0.0 : result.trace.back().second},
        {"trace", trace}};
    manifest["artifacts"] = {{"checkpoint", ckpt_path}};
    const std::string manifest_path = (fs::path(args.out) / "manifest.json").string();
    sqdm::save_manifest(manifest_path, manifest);

    std::printf("checkpoint %s\n", ckpt_path.c_str());
    std::printf("manifest %s\n", manifest_path.c_str());
    if (result.diverged) {
        std::printf("training DIVERGED (see trace in manifest)\n");
        return kExitCheckFailure;
    }
    std::printf("final_loss %s\n",
                sqdm::format_g17(result.trace.empty() ? 0.0
                                                      : result.trace.back().second)
                    .c_str());
    return kExitOk;
}

int cmd_sample(const std::string& checkpoint_path, bool use_ema, int num_samples,
               int inference_steps_override, std::uint64_t seed_override,
               bool seed_passed, const std::string& out_dir, int dump_every) {
    const sqdm::DenoiserParams params = sqdm::load_checkpoint(checkpoint_path);
    const fs::path manifest_path = fs::path(checkpoint_path).parent_path() /
                                   "manifest.json";
    const json train_manifest = sqdm::load_manifest(manifest_path.string());
    const json& cfg = train_manifest.at("config");

    const sqdm::NoiseSchedule schedule = sqdm::build_linear_schedule(
        cfg.at("timesteps").get<int>(), cfg.at("beta_min").get<double>(),
        cfg.at("beta_max").get<double>());
    const sqdm::PrincipalDirection direction =
        sqdm::direction_from_json(train_manifest.at("direction"));
    const sqdm::SqueezeSpec spec = sqdm::make_squeeze_spec(
        sqdm::parse_variant(cfg.at("variant").get<std::string>()),
        cfg.at("s0").get<double>(), direction, cfg.at("time_dependent").get<bool>());
    const sqdm::DiffusionConfig config = sqdm::make_diffusion_config(
        schedule, spec, cfg.at("data_dim").get<int>(),
        parse_jump(cfg.at("jump").get<std::string>()));

    const int inference_steps = inference_steps_override > 0
                                    ? inference_steps_override
                                    : cfg.at("inference_steps").get<int>();
    const std::uint64_t seed =
        seed_passed ? seed_override : cfg.at("train").at("seed").get<std::uint64_t>();
    const sqdm::ResampledSchedule inference =
        sqdm::resample_schedule(schedule, inference_steps);

    fs::create_directories(out_dir);
    sqdm::ChainObserver observer = nullptr;
    if (dump_every > 0) {
        int counter = 0;
        observer = [&, dump_every](int t_reached, const sqdm::Matrix& states) {
            if (++counter % dump_every != 0 && t_reached != 0) return;
            const std::string path =
                (fs::path(out_dir) / ("chain_t" + std::to_string(t_reached) + ".sqt"))
                    .string();
            sqdm::save_tensor(path, states);
        };
    }

    const sqdm::DenoiserFn fn = sqdm::make_denoiser_fn(params, schedule.T, use_ema);
    const sqdm::Matrix samples =
        sqdm::sample_chain(config, fn, num_samples, inference,
                           sqdm::Rng(seed, sqdm::streams::chain_base), observer);
    const std::string samples_path = (fs::path(out_dir) / "samples.sqt").string();
    sqdm::save_tensor(samples_path, samples);

    json cfg_json = cfg;
    cfg_json["inference_steps"] = inference_steps;
    cfg_json["sample_seed"] = seed;
    cfg_json["num_samples"] = num_samples;
    cfg_json["ema"] = use_ema;
    json manifest;
    manifest["run_id"] = sqdm::make_run_id("sample", cfg_json);
    manifest["timestamp"] = sqdm::iso8601_utc_now();
    manifest["command"] = "sample";
    manifest["config"] = cfg_json;
    manifest["direction"] = train_manifest.at("direction");
    manifest["artifacts"] = {{"samples", samples_path},
                             {"checkpoint", checkpoint_path}};
    const std::string sample_manifest =
        (fs::path(out_dir) / "sample_manifest.json").string();
    sqdm::save_manifest(sample_manifest, manifest);
    std::printf("samples %s\n", samples_path.c_str());
    std::printf("manifest %s\n", sample_manifest.c_str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

int cmd_metrics(const std::string& real_path, const std::string& gen_path,
                int sw2_projections, int pr_k, std::uint64_t seed, double s0,
                const std::string& variant) {
    const sqdm::Matrix real = sqdm::load_tensor(real_path);
    const sqdm::Matrix gen = sqdm::load_tensor(gen_path);
    sqdm::Rng rng(seed, sqdm::streams::metrics);
    const double sw2 = sqdm::sliced_wasserstein2(real, gen, sw2_projections, rng);
    const sqdm::PRPoint pr = sqdm::precision_recall_knn(real, gen, pr_k);
    json cfg = {{"real", real_path}, {"generated", gen_path}, {"seed", seed}};
    std::printf("%s\n", sqdm::metrics_csv_header().c_str());
    std::printf("%s\n",
                sqdm::metrics_csv_row(sqdm::make_run_id("metrics", cfg), s0,
                                      sqdm::parse_variant(variant), seed, sw2,
                                      pr.precision, pr.recall, pr.f_score)
                    .c_str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

int cmd_sweep(const PipelineArgs& args, const std::string& grid_csv,
              const std::string& seeds_csv, int num_samples, int sw2_projections,
              int pr_k) {
    sqdm::SweepOptions opts;
    opts.grid = parse_double_list(grid_csv);
    opts.seeds = parse_u64_list(seeds_csv);
    opts.variant = sqdm::parse_variant(args.variant);
    opts.time_dependent = args.time_dependent;
    opts.jump = parse_jump(args.jump);
    opts.timesteps = args.timesteps;
    opts.beta_min = args.beta_min;
    opts.beta_max = args.beta_max;
    opts.inference_steps = args.inference_steps;
    opts.denoiser.hidden = parse_int_list(args.hidden);
    opts.denoiser.time_embed_dim = args.time_embed_dim;
    opts.train.steps = args.steps;
    opts.train.batch_size = args.batch_size;
    opts.train.lr = args.lr;
    opts.train.ema_decay = args.ema_decay;
    opts.train.trace_every = args.trace_every;
    opts.num_samples = num_samples;
    opts.sw2_projections = sw2_projections;
    opts.pr_k = pr_k;
    opts.out_dir = args.out;

    json dataset_info;
    const sqdm::Matrix dataset = resolve_dataset(args, &dataset_info);
    const std::vector<sqdm::SweepCell> cells =
        sqdm::run_sweep(opts, dataset, &std::cout);
    std::printf("sweep complete: %zu cells, csv %s\n", cells.size(),
                (fs::path(args.out) / "sweep.csv").string().c_str());
    int diverged = 0;
    for (const sqdm::SweepCell& cell : cells) diverged += cell.diverged ? 1 : 0;
    if (diverged > 0) std::printf("%d cells diverged (recorded in manifests)\n", diverged);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"squeezed diffusion at desk scale"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "flat key-value JSON config file")
        ->expected(1);

    ConfigBinder binder;

    // verify
    sqdm::VerifyOptions vopts;
    CLI::App* verify = app.add_subcommand("verify", "run the property-check suite");
    binder.bind(verify, "--filter", vopts.filter, "substring filter on check names");
    binder.bind(verify, "--seed", vopts.seed, "seed for randomized checks");
    CLI::Option* fault_flag =
        verify->add_flag("--inject-fault", vopts.inject_fault,
                         "test hook: flip a sign inside one check");
    (void)fault_flag;

    // pca
    std::string pca_dataset;
    std::string pca_out;
    CLI::App* pca = app.add_subcommand("pca", "estimate the principal direction");
    binder.bind(pca, "--dataset", pca_dataset, "tensor (.sqt) or binary ppm (.ppm)");
    binder.bind(pca, "--out", pca_out, "directory for the manifest");

    // drift-report
    PipelineArgs drift_args;
    int drift_dim = 3;
    std::string drift_out;
    CLI::App* drift = app.add_subcommand("drift-report",
                                         "per-timestep whitened-process drift");
    binder.bind(drift, "--timesteps", drift_args.timesteps, "schedule length");
    binder.bind(drift, "--beta-min", drift_args.beta_min, "schedule start");
    binder.bind(drift, "--beta-max", drift_args.beta_max, "schedule end");
    binder.bind(drift, "--s0", drift_args.s0, "base squeeze strength");
    binder.bind(drift, "--variant", drift_args.variant, "sdm or hdm");
    binder.bind(drift, "--time-dependent", drift_args.time_dependent,
                "s(t) = s0 beta_t / beta_max when true");
    binder.bind(drift, "--dim", drift_dim, "ambient dimension n");
    binder.bind(drift, "--out", drift_out, "directory for drift.csv");

    // train
    PipelineArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train a toy denoiser");
    auto bind_pipeline = [&](CLI::App* cmd, PipelineArgs& a) {
        binder.bind(cmd, "--dataset", a.dataset,
                    "tensor/ppm dataset (omit for the built-in 3-D mixture)");
        binder.bind(cmd, "--dataset-seed", a.dataset_seed, "synthetic dataset seed");
        binder.bind(cmd, "--dataset-count", a.dataset_count, "synthetic dataset size");
        binder.bind(cmd, "--seed", a.seed, "run seed");
        binder.bind(cmd, "--s0", a.s0, "base squeeze strength");
        binder.bind(cmd, "--variant", a.variant, "sdm or hdm");
        binder.bind(cmd, "--time-dependent", a.time_dependent,
                    "s(t) = s0 beta_t / beta_max when true");
        binder.bind(cmd, "--jump", a.jump, "exact_marginal or single_matrix");
        binder.bind(cmd, "--timesteps", a.timesteps, "training schedule length");
        binder.bind(cmd, "--beta-min", a.beta_min, "schedule start");
        binder.bind(cmd, "--beta-max", a.beta_max, "schedule end");
        binder.bind(cmd, "--inference-steps", a.inference_steps, "sampling steps");
        binder.bind(cmd, "--hidden", a.hidden, "hidden widths, e.g. 128,128");
        binder.bind(cmd, "--time-embed-dim", a.time_embed_dim,
                    "sinusoidal embedding size");
        binder.bind(cmd, "--steps", a.steps, "training steps");
        binder.bind(cmd, "--batch-size", a.batch_size, "training batch size");
        binder.bind(cmd, "--lr", a.lr, "Adam learning rate");
        binder.bind(cmd, "--ema-decay", a.ema_decay, "EMA decay");
        binder.bind(cmd, "--trace-every", a.trace_every, "loss trace stride");
        binder.bind(cmd, "--out", a.out, "output directory");
    };
    bind_pipeline(train, train_args);

    // sample
    std::string sample_checkpoint;
    bool sample_ema = true;
    int sample_count = 1500;
    int sample_inference_steps = 0;
    std::uint64_t sample_seed = 0;
    std::string sample_out = "sample_out";
    int dump_every = 0;
    CLI::App* sample = app.add_subcommand("sample", "sample from a checkpoint");
    binder.bind(sample, "--checkpoint", sample_checkpoint,
                "checkpoint written by train (manifest.json must sit next to it)");
    binder.bind(sample, "--ema", sample_ema, "use EMA shadow weights");
    binder.bind(sample, "--num-samples", sample_count, "number of samples");
    binder.bind(sample, "--inference-steps", sample_inference_steps,
                "override inference steps (0 = manifest value)");
    CLI::Option* sample_seed_opt =
        binder.bind(sample, "--seed", sample_seed, "chain seed (default: train seed)");
    binder.bind(sample, "--out", sample_out, "output directory");
    binder.bind(sample, "--dump-every", dump_every,
                "dump intermediate chain states every k steps (0 = off)");

    // sweep
    PipelineArgs sweep_args;
    sweep_args.out = "sweep_out";
    std::string grid_csv = "-0.6,-0.4,-0.3,-0.2,0,0.2,0.4";
    std::string seeds_csv = "1,2,3";
    int sweep_samples = 1500;
    int sweep_projections = 64;
    int sweep_pr_k = 3;
    CLI::App* sweep = app.add_subcommand("sweep", "s0 grid sweep with metrics CSV");
    bind_pipeline(sweep, sweep_args);
    binder.bind(sweep, "--grid", grid_csv, "comma-separated s0 values");
    binder.bind(sweep, "--seeds", seeds_csv, "comma-separated seeds");
    binder.bind(sweep, "--num-samples", sweep_samples, "samples per cell");
    binder.bind(sweep, "--sw2-projections", sweep_projections, "SW2 projections");
    binder.bind(sweep, "--pr-k", sweep_pr_k, "k for precision/recall");

    // metrics
    std::string metrics_real;
    std::string metrics_gen;
    int metrics_projections = 128;
    int metrics_pr_k = 3;
    std::uint64_t metrics_seed = 1;
    double metrics_s0 = 0.0;
    std::string metrics_variant = "sdm";
    CLI::App* metrics = app.add_subcommand("metrics",
                                           "score generated samples against data");
    binder.bind(metrics, "--real", metrics_real, "real data tensor");
    binder.bind(metrics, "--generated", metrics_gen, "generated samples tensor");
    binder.bind(metrics, "--sw2-projections", metrics_projections, "SW2 projections");
    binder.bind(metrics, "--pr-k", metrics_pr_k, "k for precision/recall");
    binder.bind(metrics, "--seed", metrics_seed, "projection seed");
    binder.bind(metrics, "--s0", metrics_s0, "s0 column value for the CSV row");
    binder.bind(metrics, "--variant", metrics_variant, "variant column value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    auto require_value = [](const std::string& value, const char* flag) {
        if (value.empty())
            throw std::invalid_argument(std::string(flag) +
                                        " is required (flag or config file)");
    };
    try {
        binder.apply(config_path);
        if (verify->parsed()) return cmd_verify(vopts);
        if (pca->parsed()) {
            require_value(pca_dataset, "--dataset");
            return cmd_pca(pca_dataset, pca_out);
        }
        if (drift->parsed())
            return cmd_drift_report(drift_args.timesteps, drift_args.beta_min,
                                    drift_args.beta_max, drift_args.s0,
                                    drift_args.variant, drift_args.time_dependent,
                                    drift_dim, drift_out);
        if (train->parsed()) return cmd_train(train_args);
        if (sample->parsed()) {
            require_value(sample_checkpoint, "--checkpoint");
            return cmd_sample(sample_checkpoint, sample_ema, sample_count,
                              sample_inference_steps, sample_seed,
                              sample_seed_opt->count() > 0, sample_out, dump_every);
        }
        if (sweep->parsed())
            return cmd_sweep(sweep_args, grid_csv, seeds_csv, sweep_samples,
                             sweep_projections, sweep_pr_k);
        if (metrics->parsed()) {
            require_value(metrics_real, "--real");
            require_value(metrics_gen, "--generated");
            return cmd_metrics(metrics_real, metrics_gen, metrics_projections,
                               metrics_pr_k, metrics_seed, metrics_s0,
                               metrics_variant);
        }
    } catch (const sqdm::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const sqdm::parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckFailure;
    }
    return kExitUsage;
}
