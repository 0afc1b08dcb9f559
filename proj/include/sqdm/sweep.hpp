#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "sqdm/data.hpp"
#include "sqdm/denoiser.hpp"
#include "sqdm/diffusion.hpp"
#include "sqdm/manifest.hpp"
#include "sqdm/metrics.hpp"
#include "sqdm/schedule.hpp"
#include "sqdm/squeeze.hpp"

namespace sqdm {

struct SweepOptions {
    std::vector<double> grid = {-0.6, -0.4, -0.3, -0.2, 0.0, 0.2, 0.4};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    SqueezeVariant variant = SqueezeVariant::sdm;
    bool time_dependent = true;
    TrainingJump jump = TrainingJump::exact_marginal;
    int timesteps = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    int inference_steps = 50;
    DenoiserConfig denoiser;  // input_dim filled from the dataset if zero
    TrainOptions train;       // seed is overwritten per cell
    int num_samples = 1500;
    int sw2_projections = 64;
    int pr_k = 3;
    std::size_t pr_real_cap = 2000;  // PR is O(N^2); cap the real side
    std::string out_dir;             // empty = no files written
    bool save_artifacts = true;      // per-cell checkpoint + samples when out_dir set
};

struct SweepCell {
    double s0 = 0.0;
    std::uint64_t seed = 0;
    std::string run_id;
    bool diverged = false;
    double final_loss = 0.0;
    double sw2 = 0.0;
    double sw2_untrained = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    std::string manifest_path;
};

// Trains, samples, and scores one (s0, seed) cell. All stochastic stages
// derive their streams from (seed, purpose) only, so a cell's numbers do not
// depend on its position in the grid: the s0 = 0 cell of any sweep equals a
// standalone baseline run bit-exactly.
inline SweepCell run_sweep_cell(const SweepOptions& opts, const Matrix& dataset,
                                const PrincipalDirection& direction, double s0,
                                std::uint64_t seed) {
    SweepCell cell;
    cell.s0 = s0;
    cell.seed = seed;

    const NoiseSchedule schedule =
        build_linear_schedule(opts.timesteps, opts.beta_min, opts.beta_max);
    const SqueezeSpec spec =
        make_squeeze_spec(opts.variant, s0, direction, opts.time_dependent);
    const DiffusionConfig config = make_diffusion_config(
        schedule, spec, static_cast<int>(dataset.cols), opts.jump);

    DenoiserConfig ncfg = opts.denoiser;
    if (ncfg.input_dim == 0)
        ncfg = make_denoiser_config(static_cast<int>(dataset.cols), ncfg.hidden,
                                    ncfg.time_embed_dim);
    TrainOptions topts = opts.train;
    topts.seed = seed;

    nlohmann::json cfg_json = config_to_json(config, ncfg, topts, opts.inference_steps);
    cell.run_id = make_run_id("sweep", cfg_json);

    TrainResult trained = train(dataset, config, ncfg, topts);
    cell.diverged = trained.diverged;
    cell.final_loss = trained.trace.empty() ? 0.0 : trained.trace.back().second;

    const ResampledSchedule inference =
        resample_schedule(schedule, opts.inference_steps);
    const Rng chain_root(seed, streams::chain_base);
    Matrix samples;
    if (!cell.diverged) {
        const DenoiserFn fn = make_denoiser_fn(trained.params, schedule.T, true);
        samples = sample_chain(config, fn, opts.num_samples, inference, chain_root);

        // untrained baseline: fresh init weights, identical chain noise
        const DenoiserParams raw = init_denoiser(ncfg, seed);
        const DenoiserFn raw_fn = make_denoiser_fn(raw, schedule.T, false);
        const Matrix raw_samples =
            sample_chain(config, raw_fn, opts.num_samples, inference, chain_root);

        Rng sw2_rng(seed, streams::metrics);
        cell.sw2 = sliced_wasserstein2(dataset, samples, opts.sw2_projections, sw2_rng);
        Rng sw2_raw_rng(seed, streams::metrics);
        cell.sw2_untrained = sliced_wasserstein2(dataset, raw_samples,
                                                 opts.sw2_projections, sw2_raw_rng);

        const std::size_t real_rows = std::min(dataset.rows, opts.pr_real_cap);
        Matrix real_subset(real_rows, dataset.cols);
        for (std::size_t i = 0; i < real_rows; ++i)
            for (std::size_t j = 0; j < dataset.cols; ++j)
                real_subset(i, j) = dataset(i, j);
        const PRPoint pr = precision_recall_knn(real_subset, samples, opts.pr_k);
        cell.precision = pr.precision;
        cell.recall = pr.recall;
        cell.f_score = pr.f_score;
    }

    if (!opts.out_dir.empty()) {
        namespace fs = std::filesystem;
        const fs::path cell_dir = fs::path(opts.out_dir) / "cells" / cell.run_id;
        fs::create_directories(cell_dir);
        nlohmann::json manifest;
        manifest["run_id"] = cell.run_id;
        manifest["timestamp"] = iso8601_utc_now();
        manifest["command"] = "sweep-cell";
        manifest["config"] = cfg_json;
        manifest["direction"] = direction_to_json(direction);
        manifest["metrics"] = {{"diverged", cell.diverged},
                               {"final_loss", cell.final_loss},
                               {"sw2", cell.sw2},
                               {"sw2_untrained", cell.sw2_untrained},
                               {"precision", cell.precision},
                               {"recall", cell.recall},
                               {"f_score", cell.f_score}};
        nlohmann::json artifacts = nlohmann::json::object();
        if (opts.save_artifacts && !cell.diverged) {
            const std::string ckpt = (cell_dir / "checkpoint.bin").string();
            const std::string samp = (cell_dir / "samples.sqt").string();
            save_checkpoint(ckpt, trained.params);
            save_tensor(samp, samples);
            artifacts["checkpoint"] = ckpt;
            artifacts["samples"] = samp;
        }
        manifest["artifacts"] = artifacts;
        cell.manifest_path = (cell_dir / "manifest.json").string();
        save_manifest(cell.manifest_path, manifest);
    }
    return cell;
}

// Full grid x seeds sweep; appends one CSV row per cell to
// out_dir/sweep.csv when out_dir is set. Cells with diverged training are
// recorded and the sweep continues.
inline std::vector<SweepCell> run_sweep(const SweepOptions& opts,
                                        const Matrix& dataset,
                                        std::ostream* log = nullptr) {
    if (opts.grid.empty()) throw std::invalid_argument("sweep grid is empty");
    if (opts.seeds.empty()) throw std::invalid_argument("sweep needs seeds");
    const PrincipalDirection direction = estimate_principal_direction(dataset);

    std::ofstream csv;
    if (!opts.out_dir.empty()) {
        std::filesystem::create_directories(opts.out_dir);
        csv.open(std::filesystem::path(opts.out_dir) / "sweep.csv");
        if (!csv) throw std::runtime_error("cannot open sweep.csv in " + opts.out_dir);
        csv << metrics_csv_header() << "\n";
    }

    std::vector<SweepCell> cells;
    for (const double s0 : opts.grid) {
        for (const std::uint64_t seed : opts.seeds) {
            SweepCell cell = run_sweep_cell(opts, dataset, direction, s0, seed);
            if (csv.is_open()) {
                csv << metrics_csv_row(cell.run_id, cell.s0, opts.variant, cell.seed,
                                       cell.sw2, cell.precision, cell.recall,
                                       cell.f_score)
                    << "\n";
                csv.flush();
            }
            if (log) {
                (*log) << "cell s0=" << cell.s0 << " seed=" << cell.seed
                       << (cell.diverged ? " DIVERGED"
                                         : " sw2=" + format_g17(cell.sw2) +
                                               " (untrained " +
                                               format_g17(cell.sw2_untrained) + ")")
                       << "\n";
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

}  // namespace sqdm
