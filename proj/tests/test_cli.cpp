// Process-level checks of the sqdm binary: exit codes, config precedence,
// and the shape of what lands on disk.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "sqdm/data.hpp"
#include "sqdm/denoiser.hpp"
#include "sqdm/manifest.hpp"
#include "sqdm/rng.hpp"
#include "support/isotropic_ddpm.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = SQDM_CLI_PATH;

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const fs::path out_file = fs::temp_directory_path() / "sqdm_cli_out.txt";
    const std::string cmd = kCli + " " + args + " > " + out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream is(out_file);
    std::string output((std::istreambuf_iterator<char>(is)),
                       std::istreambuf_iterator<char>());
    return {WEXITSTATUS(status), output};
}

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "sqdm_cli_scratch";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("verify passes on a fresh build", "[cli]") {
    const RunResult r = run_cli("verify --filter schedule");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("[PASS]") != std::string::npos);
    REQUIRE(r.output.find("[FAIL]") == std::string::npos);
}

TEST_CASE("verify fails under fault injection", "[cli]") {
    const RunResult r = run_cli("verify --filter hdm-determinant --inject-fault");
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.output.find("[FAIL]") != std::string::npos);
    REQUIRE(r.output.find("observed") != std::string::npos);
}

TEST_CASE("verify filter narrows the check list", "[cli]") {
    const RunResult r = run_cli("verify --filter drift");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("drift-bound") != std::string::npos);
    REQUIRE(r.output.find("schedule-linear") == std::string::npos);
}

TEST_CASE("pca reports the dominant axis of a planted dataset", "[cli]") {
    const fs::path dir = scratch_dir();
    const fs::path dataset = dir / "pca_data.sqt";
    sqdm::save_tensor(dataset.string(),
                      sqdm::generate(sqdm::default_sweep_dataset(5000), 3));
    const RunResult r =
        run_cli("pca --dataset " + dataset.string() + " --out " + dir.string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("explained_variance_ratio") != std::string::npos);
    REQUIRE(fs::exists(dir / "pca_manifest.json"));
    const nlohmann::json manifest =
        sqdm::load_manifest((dir / "pca_manifest.json").string());
    REQUIRE(manifest.at("direction").at("n").get<int>() == 3);
}

TEST_CASE("pca on zero-variance data exits nonzero", "[cli]") {
    const fs::path dir = scratch_dir();
    const fs::path dataset = dir / "flat.sqt";
    sqdm::save_tensor(dataset.string(), sqdm::Matrix(100, 3, 1.0));
    const RunResult r = run_cli("pca --dataset " + dataset.string());
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.output.find("zero-variance") != std::string::npos);
}

TEST_CASE("drift report prints zeros at s0 = 0 and a csv when asked", "[cli]") {
    const fs::path dir = scratch_dir();
    const RunResult r = run_cli("drift-report --timesteps 50 --s0 0 --out " +
                                dir.string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("max ||R_t - I||_2  0") != std::string::npos);
    REQUIRE(fs::exists(dir / "drift.csv"));
}

TEST_CASE("drift report magnitudes match the schedule analysis", "[cli]") {
    auto reported_max = [](const std::string& output) {
        const std::string key = "max ||R_t - I||_2  ";
        const std::size_t at = output.find(key);
        REQUIRE(at != std::string::npos);
        return std::stod(output.substr(at + key.size()));
    };
    // 1000-step schedule at s0 = -0.4: deviation |expm1(-0.4 dbeta / 0.02)|
    const RunResult long_run = run_cli("drift-report --timesteps 1000 --s0 -0.4");
    REQUIRE(long_run.exit_code == 0);
    const double expected_1000 =
        std::fabs(std::expm1(-0.4 * ((0.02 - 1e-4) / 999.0) / 0.02));
    const double got_1000 = reported_max(long_run.output);
    REQUIRE(std::fabs(got_1000 - expected_1000) < 1e-14);

    const RunResult short_run = run_cli("drift-report --timesteps 50 --s0 -0.4");
    REQUIRE(short_run.exit_code == 0);
    const double expected_50 =
        std::fabs(std::expm1(-0.4 * ((0.02 - 1e-4) / 49.0) / 0.02));
    const double got_50 = reported_max(short_run.output);
    REQUIRE(std::fabs(got_50 - expected_50) < 1e-14);
    // the 50-step deviation is ~20x the 1000-step one (ratio of beta spacings)
    REQUIRE(got_50 / got_1000 > 19.0);
    REQUIRE(got_50 / got_1000 < 21.0);
}

TEST_CASE("metrics command emits the stable csv schema", "[cli]") {
    const fs::path dir = scratch_dir();
    const fs::path real = dir / "real.sqt";
    const fs::path gen = dir / "gen.sqt";
    sqdm::Matrix a(200, 3);
    sqdm::Rng rng(1, 0);
    for (double& v : a.data) v = rng.normal();
    sqdm::save_tensor(real.string(), a);
    sqdm::save_tensor(gen.string(), a);
    const RunResult r =
        run_cli("metrics --real " + real.string() + " --generated " + gen.string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("run_id,s0,variant,seed,sw2,precision,recall,f_score") !=
            std::string::npos);
    REQUIRE(r.output.find(",1,1,1") != std::string::npos);  // identical sets
}

TEST_CASE("usage errors exit with code 2", "[cli]") {
    REQUIRE(run_cli("no-such-command").exit_code == 2);
    REQUIRE(run_cli("metrics --real only_one_side.sqt").exit_code == 2);
    REQUIRE(run_cli("verify --no-such-flag").exit_code == 2);
}

TEST_CASE("missing files exit with code 3", "[cli]") {
    REQUIRE(run_cli("pca --dataset /nonexistent/data.sqt").exit_code == 3);
    const RunResult r = run_cli("metrics --real /missing_a.sqt --generated /missing_b.sqt");
    REQUIRE(r.exit_code == 3);
}

TEST_CASE("config file values apply beneath cli flags", "[cli]") {
    const fs::path dir = scratch_dir();
    const fs::path cfg = dir / "config.json";
    {
        std::ofstream os(cfg);
        os << "{\"timesteps\": 50, \"s0\": -0.4}\n";
    }
    // config supplies both values
    RunResult r = run_cli("--config " + cfg.string() + " drift-report");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("timesteps 50") != std::string::npos);
    REQUIRE(r.output.find("s0 -0.4") != std::string::npos);
    // an explicit flag overrides the config file
    r = run_cli("--config " + cfg.string() + " drift-report --timesteps 100");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("timesteps 100") != std::string::npos);
    REQUIRE(r.output.find("s0 -0.4") != std::string::npos);
}

TEST_CASE("train then sample produce loadable artifacts", "[cli]") {
    const fs::path dir = scratch_dir() / "train_run";
    fs::remove_all(dir);
    const RunResult train = run_cli(
        "train --steps 120 --batch-size 16 --hidden 16,16 --time-embed-dim 8 "
        "--timesteps 100 --dataset-count 300 --seed 5 --out " +
        dir.string());
    REQUIRE(train.exit_code == 0);
    REQUIRE(fs::exists(dir / "checkpoint.bin"));
    REQUIRE(fs::exists(dir / "manifest.json"));

    const fs::path sample_dir = scratch_dir() / "sample_run";
    fs::remove_all(sample_dir);
    const RunResult sample = run_cli("sample --checkpoint " +
                                     (dir / "checkpoint.bin").string() +
                                     " --num-samples 50 --inference-steps 10 --out " +
                                     sample_dir.string());
    REQUIRE(sample.exit_code == 0);
    const sqdm::Matrix samples =
        sqdm::load_tensor((sample_dir / "samples.sqt").string());
    REQUIRE(samples.rows == 50);
    REQUIRE(samples.cols == 3);

    // EMA and live weights disagree after training
    const fs::path live_dir = scratch_dir() / "sample_live";
    fs::remove_all(live_dir);
    const RunResult live = run_cli("sample --checkpoint " +
                                   (dir / "checkpoint.bin").string() +
                                   " --num-samples 50 --inference-steps 10 "
                                   "--ema false --out " +
                                   live_dir.string());
    REQUIRE(live.exit_code == 0);
    const sqdm::Matrix live_samples =
        sqdm::load_tensor((live_dir / "samples.sqt").string());
    REQUIRE(live_samples.data != samples.data);

    // intermediate chain dumps appear on request
    const fs::path dump_dir = scratch_dir() / "sample_dump";
    fs::remove_all(dump_dir);
    const RunResult dump = run_cli("sample --checkpoint " +
                                   (dir / "checkpoint.bin").string() +
                                   " --num-samples 5 --inference-steps 10 "
                                   "--dump-every 2 --out " +
                                   dump_dir.string());
    REQUIRE(dump.exit_code == 0);
    REQUIRE(fs::exists(dump_dir / "chain_t0.sqt"));

    // reproducibility: a second identical invocation writes identical bytes
    const fs::path repeat_dir = scratch_dir() / "sample_repeat";
    fs::remove_all(repeat_dir);
    const RunResult repeat = run_cli("sample --checkpoint " +
                                     (dir / "checkpoint.bin").string() +
                                     " --num-samples 50 --inference-steps 10 --out " +
                                     repeat_dir.string());
    REQUIRE(repeat.exit_code == 0);
    const sqdm::Matrix again =
        sqdm::load_tensor((repeat_dir / "samples.sqt").string());
    REQUIRE(again.data == samples.data);
}

TEST_CASE("cli pipeline at s0=0 equals the reference ddpm chain", "[cli]") {
    const fs::path dir = scratch_dir() / "baseline_run";
    fs::remove_all(dir);
    const RunResult train = run_cli(
        "train --steps 80 --batch-size 8 --hidden 12,12 --time-embed-dim 8 "
        "--timesteps 60 --inference-steps 6 --dataset-count 200 --seed 9 --s0 0 "
        "--out " + dir.string());
    REQUIRE(train.exit_code == 0);
    const fs::path sample_dir = scratch_dir() / "baseline_samples";
    fs::remove_all(sample_dir);
    const RunResult sample = run_cli("sample --checkpoint " +
                                     (dir / "checkpoint.bin").string() +
                                     " --num-samples 20 --out " + sample_dir.string());
    REQUIRE(sample.exit_code == 0);
    const sqdm::Matrix cli_samples =
        sqdm::load_tensor((sample_dir / "samples.sqt").string());

    // rebuild the chain with the reference isotropic implementation
    const sqdm::DenoiserParams params =
        sqdm::load_checkpoint((dir / "checkpoint.bin").string());
    const sqdm::NoiseSchedule schedule = sqdm::build_linear_schedule(60, 1e-4, 0.02);
    const sqdm::ResampledSchedule inference = sqdm::resample_schedule(schedule, 6);
    const sqdm::DenoiserFn fn = sqdm::make_denoiser_fn(params, 60, /*use_ema=*/true);
    const sqdm::Matrix ref = ref_ddpm::sample_chain(
        schedule, fn, 20, inference, sqdm::Rng(9, sqdm::streams::chain_base), 3);
    REQUIRE(cli_samples.data == ref.data);
}
