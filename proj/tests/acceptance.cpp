#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Acceptance suite. Each test case covers one numbered criterion and prints
// one PASS/FAIL line; the exact-bound suites must come out violation-free
// (the bounds are theorems for the ideal model), the figure analogues must
// reproduce the documented trends at the pinned seeds and tolerances.

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "llsim/commands.hpp"
#include "llsim/experiment.hpp"
#include "llsim/io.hpp"
#include "llsim/oracle.hpp"
#include "llsim/verify.hpp"

using namespace llsim;
namespace fs = std::filesystem;

namespace {

constexpr double kMonotoneSlack = 1e-12;  // float-noise ties count as equal

GeneratorConfig default_config(double eta = 0.0, std::uint64_t seed = 42) {
    GeneratorConfig config;
    config.noise_level = eta;
    config.seed = seed;
    return config;
}

void report(int criterion, const char* title, bool pass) {
    std::printf("[criterion %2d] %-58s %s\n", criterion, title, pass ? "PASS" : "FAIL");
    std::fflush(stdout);
    CHECK(pass);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "llsim_acceptance" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("criterion 1: sparsity and ambiguity exactness") {
    bool pass = true;

    const LanguageSpec clean = build_spec(default_config());
    SplitMix64 rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const int theta = static_cast<int>(rng.next_below(6));
        const Message msg = sample_message(clean, theta, rng);
        const PosteriorVector post = posterior_single(clean, msg);
        const AmbiguityReport rep = ambiguity(clean, msg, theta);
        pass &= post.probs[theta] == 1.0;
        pass &= std::abs(rep.epsilon) < 1e-12;
    }

    for (double eta : {0.02, 0.05, 0.1}) {
        const LanguageSpec spec = build_spec(default_config(eta));
        SplitMix64 srng(102);
        const auto checks = check_sparsity(spec, 1000, srng);
        pass &= summarize("sparsity", checks).violations == 0;
    }
    report(1, "one-hot posteriors at zero noise; dominance identity", pass);
}

TEST_CASE("criterion 2: composite-message ambiguity bound") {
    bool pass = true;
    for (double eta : {0.02, 0.05, 0.1}) {
        const LanguageSpec spec = build_spec(default_config(eta));
        SplitMix64 rng(201);
        const auto checks = check_composition(spec, 1000, rng);
        pass &= summarize("composition", checks).violations == 0;
    }
    report(2, "pair deviation within eps1*eps2, zero violations", pass);
}

TEST_CASE("criterion 3: prompt-continuation bound") {
    bool pass = true;
    for (double eta : {0.05, 0.7044}) {
        const LanguageSpec spec = build_spec(default_config(eta));
        const OracleBackend oracle(spec);
        SplitMix64 rng(301);
        UnderstandingOptions options;
        options.trials = 10000;
        const auto sampled = check_understanding(oracle, spec, options, rng);
        pass &= summarize("understanding", sampled).violations == 0;

        SplitMix64 erng(302);
        const auto exhaustive = check_understanding_exhaustive(oracle, spec, 100, 3, erng);
        pass &= summarize("understanding_exhaustive", exhaustive).violations == 0;
    }
    report(3, "10^4 sampled pairs + exhaustive depth-3 enumeration", pass);
}

TEST_CASE("criterion 4: in-context learning bounds") {
    bool pass = true;

    // Zero noise: the backend conditional equals the clamped conditional at
    // every continuation symbol.
    {
        const LanguageSpec spec = build_spec(default_config());
        const OracleBackend tied(spec, BoundaryPolicy::hold);
        SplitMix64 rng(401);
        IclOptions options;
        options.trials = 200;
        options.y_samples = 12;
        const auto checks = check_icl(tied, spec, options, rng);
        for (const auto& c : checks) {
            pass &= c.max_step_deviation < 1e-10;
            pass &= c.measured_deviation < 1e-10;
        }
    }

    // Light noise: product bound, zero violations, per-trial monotonicity.
    {
        const LanguageSpec spec = build_spec(default_config(0.05));
        const OracleBackend tied(spec, BoundaryPolicy::hold);
        SplitMix64 rng(402);
        IclOptions options;
        options.trials = 1000;
        options.y_samples = 24;
        const auto checks = check_icl(tied, spec, options, rng);
        pass &= summarize("icl", checks).violations == 0;

        std::vector<double> last(options.trials,
                                 std::numeric_limits<double>::infinity());
        std::vector<bool> monotone(options.trials, true);
        for (const auto& c : checks) {  // checks arrive in (trial, ascending m) order
            if (c.measured_deviation > last[c.trial] + kMonotoneSlack)
                monotone[c.trial] = false;
            last[c.trial] = c.measured_deviation;
        }
        const long monotone_count = std::count(monotone.begin(), monotone.end(), true);
        pass &= monotone_count >= static_cast<long>(0.95 * options.trials);
    }
    report(4, "equality at zero noise; product bounds; monotone decay", pass);
}

TEST_CASE("criterion 5: density-model convergence") {
    ConvergenceOptions options;
    options.config = default_config();
    options.seed = 4242;
    const auto points = run_convergence(options);
    REQUIRE(points.size() == 3);

    bool pass = true;
    pass &= points[0].n_symbols == 10000 && points[2].n_symbols == 1000000;
    pass &= points[1].cross_entropy_model < points[0].cross_entropy_model;
    pass &= points[2].cross_entropy_model < points[1].cross_entropy_model;
    pass &= std::abs(points[2].cross_entropy_model - points[2].cross_entropy_oracle) < 0.05;
    pass &= points[1].tv_gap < points[0].tv_gap;
    pass &= points[2].tv_gap < points[1].tv_gap;
    pass &= points[0].tv_gap >= 3.0 * points[2].tv_gap;
    std::printf("    cross-entropy: %.4f -> %.4f -> %.4f (oracle %.4f); tv gap %.4f -> %.4f\n",
                points[0].cross_entropy_model, points[1].cross_entropy_model,
                points[2].cross_entropy_model, points[2].cross_entropy_oracle,
                points[0].tv_gap, points[2].tv_gap);
    report(5, "held-out cross-entropy and TV gap converge", pass);
}

TEST_CASE("criterion 6: understanding divergence ordering") {
    UnderstandingSweepOptions options;
    options.config = default_config();
    options.seed = 606;
    const auto levels = run_understanding(options);
    REQUIRE(levels.size() == 3);

    bool pass = true;
    pass &= std::abs(levels[0].oracle_exact_h3.value) < 1e-9;
    pass &= levels[1].oracle_exact_h3.value > levels[0].oracle_exact_h3.value;
    pass &= levels[2].oracle_exact_h3.value > levels[1].oracle_exact_h3.value;
    pass &= levels[1].trained_exact_h3.value > levels[0].trained_exact_h3.value;
    pass &= levels[2].trained_exact_h3.value > levels[1].trained_exact_h3.value;
    pass &= std::isfinite(levels[0].trained_mc_full.value);
    for (const auto& level : levels) {
        const double diff = std::abs(level.oracle_mc_h3.value - level.oracle_exact_h3.value);
        const double tolerance = 3.0 * level.oracle_mc_h3.standard_error + 1e-12;
        pass &= diff <= tolerance;
        pass &= level.oracle_mc_full.value >= -3.0 * level.oracle_mc_full.standard_error;
    }
    std::printf("    oracle KL by level: %.3e / %.3e / %.3e (eta %.3f / %.3f / %.3f)\n",
                levels[0].oracle_exact_h3.value, levels[1].oracle_exact_h3.value,
                levels[2].oracle_exact_h3.value, levels[0].eta, levels[1].eta,
                levels[2].eta);
    std::printf("    trained KL by level: %.3e / %.3e / %.3e\n",
                levels[0].trained_exact_h3.value, levels[1].trained_exact_h3.value,
                levels[2].trained_exact_h3.value);
    report(6, "KL grows with ambiguity; estimators agree within 3 SE", pass);
}

TEST_CASE("criterion 7: in-context divergence ordering") {
    IclSweepOptions options;
    options.config = default_config();
    options.seed = 707;
    options.num_prompts = 800;
    const auto sweeps = run_icl_sweep(options);
    REQUIRE(sweeps.size() == 2);

    bool pass = true;
    for (const auto& [m, est] : sweeps[0].tied) pass &= std::abs(est.value) < 1e-9;
    const auto& noisy = sweeps[1].tied;
    for (std::size_t i = 0; i + 1 < noisy.size(); ++i)
        pass &= noisy[i + 1].second.value <= noisy[i].second.value + kMonotoneSlack;
    pass &= noisy.front().second.value > noisy.back().second.value;
    std::printf("    tied KL at eta=%.3f:", sweeps[1].eta);
    for (const auto& [m, est] : noisy) std::printf(" %.2e", est.value);
    std::printf("\n");
    report(7, "KL flat at zero noise, non-increasing in examples", pass);
}

TEST_CASE("criterion 8: direct versus chained reasoning") {
    const LanguageSpec spec = build_spec(default_config());
    SplitMix64 rng(808);
    bool pass = true;
    for (int start = 0; start < 6; ++start)
        for (int m = 2; m <= 5; ++m) {
            std::vector<int> path;
            for (int i = 0; i <= m; ++i) path.push_back((start + i) % 6);
            const CotRecord rec = cot_compare(spec, path, rng);
            const double ratio = rec.chained / rec.direct;
            pass &= std::abs(ratio - std::pow(2.0, m - 1)) < 1e-12;
        }
    const CotRecord four = cot_compare(spec, {0, 1, 2, 3, 4}, rng);
    pass &= four.direct_intention_factor == 0.0625;
    pass &= four.chained_intention_factor == 0.5;
    report(8, "all-advance ratio equals 2^(m-1) exactly", pass);
}

TEST_CASE("criterion 9: instruction-response mixture") {
    bool pass = true;
    {
        const LanguageSpec spec = build_spec(default_config());
        SplitMix64 rng(901);
        const auto checks = check_instruction_mixture(spec, 100, 10, rng);
        pass &= checks.size() == 1000;
        for (const auto& c : checks) pass &= c.measured_deviation < 1e-10;
    }
    {
        const LanguageSpec spec = build_spec(default_config(0.05));
        SplitMix64 rng(902);
        const auto checks = check_instruction_mixture(spec, 100, 10, rng);
        pass &= summarize("instruction", checks).violations == 0;
    }
    report(9, "pointwise equality at zero noise; bounded under noise", pass);
}

TEST_CASE("criterion 10: byte-identical reruns") {
    bool pass = true;
    const auto file_bytes = [](const fs::path& p) { return read_text_file(p.string()); };

    {
        const fs::path dir = fresh_dir("gen");
        cli::GenOptions options;
        options.out_dir = dir.string();
        options.messages = 300;
        options.config.noise_level = 0.05;
        options.measure_epsilon = true;
        pass &= cli::run_gen(options) == cli::kExitOk;
        const std::string corpus = file_bytes(dir / "corpus.txt");
        const std::string spec_json = file_bytes(dir / "spec.json");
        const std::string ambiguity_csv = file_bytes(dir / "ambiguity.csv");
        const std::string summary = file_bytes(dir / "summary.json");
        fs::remove_all(dir);
        fs::create_directories(dir);
        pass &= cli::run_gen(options) == cli::kExitOk;
        pass &= corpus == file_bytes(dir / "corpus.txt");
        pass &= spec_json == file_bytes(dir / "spec.json");
        pass &= ambiguity_csv == file_bytes(dir / "ambiguity.csv");
        pass &= summary == file_bytes(dir / "summary.json");

        cli::TrainOptions train_options;
        train_options.corpus_path = (dir / "corpus.txt").string();
        train_options.spec_path = (dir / "spec.json").string();
        train_options.model_out = (dir / "model.json").string();
        pass &= cli::run_train(train_options) == cli::kExitOk;
        const std::string model = file_bytes(dir / "model.json");
        pass &= cli::run_train(train_options) == cli::kExitOk;
        pass &= model == file_bytes(dir / "model.json");
    }
    {
        const fs::path dir = fresh_dir("verify");
        cli::VerifyOptions options;
        options.out_dir = dir.string();
        options.verifiers = {"composition", "sparsity"};
        options.config.noise_level = 0.05;
        options.trials = 200;
        pass &= cli::run_verify(options) == cli::kExitOk;
        const std::string comp = file_bytes(dir / "composition.csv");
        const std::string summary = file_bytes(dir / "summary.json");
        fs::remove_all(dir);
        fs::create_directories(dir);
        pass &= cli::run_verify(options) == cli::kExitOk;
        pass &= comp == file_bytes(dir / "composition.csv");
        pass &= summary == file_bytes(dir / "summary.json");
    }
    {
        const fs::path dir = fresh_dir("experiment");
        cli::ExperimentOptions options;
        options.figure = "convergence";
        options.out_dir = dir.string();
        options.train_symbols = {5000, 20000};
        pass &= cli::run_experiment(options) == cli::kExitOk;
        const std::string csv = file_bytes(dir / "convergence.csv");
        fs::remove_all(dir);
        fs::create_directories(dir);
        pass &= cli::run_experiment(options) == cli::kExitOk;
        pass &= csv == file_bytes(dir / "convergence.csv");
    }
    report(10, "gen/train/verify/experiment reruns are byte-identical", pass);
}
