#include "llsim/experiment.hpp"

#include <algorithm>
#include <cmath>

#include "llsim/density.hpp"
#include "llsim/errors.hpp"
#include "llsim/io.hpp"
#include "llsim/oracle.hpp"

namespace llsim {

namespace {

/// Messages needed to cover at least `symbols` training symbols. In geometric
/// mode the expected message length is used.
int messages_for_symbols(const LanguageSpec& spec, long symbols) {
    const double per_message = spec.length_mode == LengthMode::fixed
                                   ? spec.message_length + 1
                                   : 1.0 / spec.end_probability + 1.0;
    return std::max(1, static_cast<int>(std::ceil(static_cast<double>(symbols) / per_message)));
}

}  // namespace

std::vector<ConvergencePoint> run_convergence(const ConvergenceOptions& options) {
    const LanguageSpec spec = build_spec(options.config);
    const OracleBackend oracle(spec);

    SplitMix64 holdout_rng(derive_seed(options.seed, streams::holdout));
    const Corpus holdout = sample_corpus(spec, options.holdout_messages, CorpusMode::chain,
                                         holdout_rng);
    const double oracle_ce = backend_cross_entropy(oracle, spec, holdout);

    std::vector<long> grid = options.train_symbols;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<ConvergencePoint> points;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const long n = grid[i];
        SplitMix64 train_rng(derive_seed(derive_seed(options.seed, streams::message), i));
        const Corpus train_set =
            sample_corpus(spec, messages_for_symbols(spec, n), CorpusMode::chain, train_rng);
        const DensityModel model = train(train_set, options.k, options.lambda,
                                         spec.alphabet_size, spec.message_length);
        ConvergencePoint point;
        point.n_symbols = n;
        point.k = options.k;
        point.lambda = options.lambda;
        point.cross_entropy_model = cross_entropy(model, holdout);
        point.cross_entropy_oracle = oracle_ce;
        point.tv_gap = mean_tv_gap(model, spec, holdout);
        points.push_back(point);
    }
    return points;
}

std::vector<UnderstandingLevel> run_understanding(const UnderstandingSweepOptions& options) {
    std::vector<UnderstandingLevel> levels;
    for (std::size_t li = 0; li < options.target_epsilons.size(); ++li) {
        UnderstandingLevel level;
        level.target_epsilon = options.target_epsilons[li];
        GeneratorConfig config = options.config;
        if (level.target_epsilon > 0.0) {
            // Small targets need a large probe and a proportional tolerance.
            const CalibrationResult cal = calibrate_noise_level(
                config, level.target_epsilon, 20000,
                std::max(level.target_epsilon / 8.0, 5e-5));
            level.eta = cal.eta;
            level.measured_epsilon = cal.measured_mean_epsilon;
        }
        config.noise_level = level.eta;
        const LanguageSpec spec = build_spec(config);
        const OracleBackend oracle(spec);

        const std::uint64_t seed = derive_seed(options.seed, li);
        KlOptions exact_opts;
        exact_opts.method = KlEstimate::Method::exact_dp;
        exact_opts.horizon = 3;
        exact_opts.num_prompts = options.num_prompts;
        // Longer prompts keep the ideal-model divergence in the regime where
        // it grows with the ambiguity level (short prompts push it past its
        // peak at heavy noise).
        exact_opts.min_prompt_letters = std::max(1, 3 * config.message_length / 5);
        exact_opts.max_prompt_letters =
            std::max(exact_opts.min_prompt_letters, config.message_length - 2);
        {
            SplitMix64 rng(seed);
            level.oracle_exact_h3 = kl_understanding(oracle, spec, exact_opts, rng);
        }
        KlOptions mc3_opts = exact_opts;
        mc3_opts.method = KlEstimate::Method::monte_carlo;
        mc3_opts.samples_per_prompt =
            std::max(1, options.mc_samples / options.num_prompts);
        {
            // Same seed as the exact pass, so both see identical prompts.
            SplitMix64 rng(seed);
            level.oracle_mc_h3 = kl_understanding(oracle, spec, mc3_opts, rng);
        }
        KlOptions full_opts = mc3_opts;
        full_opts.horizon = options.config.message_length;
        {
            SplitMix64 rng(seed);
            level.oracle_mc_full = kl_understanding(oracle, spec, full_opts, rng);
        }

        // Trained model on this level's own corpus; divergence is measured
        // truth-vs-model so the smoothed model's off-support mass keeps the
        // value finite on the noise-free language.
        SplitMix64 train_rng(derive_seed(seed, streams::message));
        const Corpus train_set =
            sample_corpus(spec, messages_for_symbols(spec, options.trained_symbols),
                          CorpusMode::chain, train_rng);
        const DensityModel model = train(train_set, options.trained_k, options.trained_lambda,
                                         spec.alphabet_size, spec.message_length);
        const TrainedBackend trained(model);
        KlOptions trained_exact = exact_opts;
        trained_exact.direction = KlEstimate::Direction::truth_vs_model;
        {
            SplitMix64 rng(seed);
            level.trained_exact_h3 = kl_understanding(trained, spec, trained_exact, rng);
        }
        KlOptions trained_full = full_opts;
        trained_full.direction = KlEstimate::Direction::truth_vs_model;
        {
            SplitMix64 rng(seed);
            level.trained_mc_full = kl_understanding(trained, spec, trained_full, rng);
        }
        levels.push_back(std::move(level));
    }
    return levels;
}

std::vector<IclSweep> run_icl_sweep(const IclSweepOptions& options) {
    std::vector<IclSweep> sweeps;
    for (std::size_t li = 0; li < options.target_epsilons.size(); ++li) {
        IclSweep sweep;
        GeneratorConfig config = options.config;
        if (options.target_epsilons[li] > 0.0) {
            const CalibrationResult cal =
                calibrate_noise_level(config, options.target_epsilons[li]);
            sweep.eta = cal.eta;
            sweep.measured_epsilon = cal.measured_mean_epsilon;
        }
        config.noise_level = sweep.eta;
        const LanguageSpec spec = build_spec(config);

        KlOptions opts;
        opts.method = KlEstimate::Method::exact_dp;
        opts.horizon = 3;
        opts.num_prompts = options.num_prompts;
        opts.min_prompt_letters = std::max(1, 2 * config.message_length / 5);
        opts.max_prompt_letters =
            std::max(opts.min_prompt_letters, 7 * config.message_length / 10);

        std::vector<int> m_grid = options.m_values;
        std::sort(m_grid.begin(), m_grid.end());
        m_grid.erase(std::unique(m_grid.begin(), m_grid.end()), m_grid.end());

        const std::uint64_t seed = derive_seed(options.seed, li);
        {
            const OracleBackend tied(spec, BoundaryPolicy::hold);
            SplitMix64 rng(seed);
            const auto estimates = kl_icl(tied, spec, m_grid, opts, rng);
            for (std::size_t i = 0; i < estimates.size(); ++i)
                sweep.tied.emplace_back(m_grid[i], estimates[i]);
        }
        {
            const OracleBackend chain(spec, BoundaryPolicy::chain);
            SplitMix64 rng(seed);
            const auto estimates = kl_icl(chain, spec, m_grid, opts, rng);
            for (std::size_t i = 0; i < estimates.size(); ++i)
                sweep.chain.emplace_back(m_grid[i], estimates[i]);
        }
        sweeps.push_back(std::move(sweep));
    }
    return sweeps;
}

void write_convergence_csv(const std::string& path,
                           const std::vector<ConvergencePoint>& points) {
    std::string out = csv_row({"n_symbols", "k", "lambda", "cross_entropy_model",
                               "cross_entropy_oracle", "tv_gap"});
    for (const auto& p : points)
        out += csv_row({std::to_string(p.n_symbols), std::to_string(p.k),
                        format_double(p.lambda), format_double(p.cross_entropy_model),
                        format_double(p.cross_entropy_oracle), format_double(p.tv_gap)});
    write_text_file(path, out);
}

void write_understanding_csv(const std::string& path,
                             const std::vector<UnderstandingLevel>& levels) {
    std::string out = csv_row({"level", "target_epsilon", "eta", "measured_epsilon", "backend",
                               "method", "direction", "horizon", "kl_value", "kl_stderr"});
    const auto row = [&](std::size_t i, const UnderstandingLevel& lv, const char* backend,
                         const KlEstimate& est) {
        out += csv_row(
            {std::to_string(i), format_double(lv.target_epsilon), format_double(lv.eta),
             format_double(lv.measured_epsilon), backend,
             est.method == KlEstimate::Method::exact_dp ? "exact_dp" : "monte_carlo",
             est.direction == KlEstimate::Direction::model_vs_truth ? "model_vs_truth"
                                                                    : "truth_vs_model",
             std::to_string(est.horizon), format_double(est.value),
             format_double(est.standard_error)});
    };
    for (std::size_t i = 0; i < levels.size(); ++i) {
        row(i, levels[i], "oracle", levels[i].oracle_exact_h3);
        row(i, levels[i], "oracle", levels[i].oracle_mc_h3);
        row(i, levels[i], "oracle", levels[i].oracle_mc_full);
        row(i, levels[i], "trained", levels[i].trained_exact_h3);
        row(i, levels[i], "trained", levels[i].trained_mc_full);
    }
    write_text_file(path, out);
}

void write_icl_csv(const std::string& path, const std::vector<IclSweep>& sweeps) {
    std::string out = csv_row({"eta", "measured_epsilon", "boundary", "m", "kl_value",
                               "kl_stderr", "method", "horizon"});
    const auto rows = [&](const IclSweep& sweep, const char* boundary,
                          const std::vector<std::pair<int, KlEstimate>>& series) {
        for (const auto& [m, est] : series)
            out += csv_row(
                {format_double(sweep.eta), format_double(sweep.measured_epsilon), boundary,
                 std::to_string(m), format_double(est.value), format_double(est.standard_error),
                 est.method == KlEstimate::Method::exact_dp ? "exact_dp" : "monte_carlo",
                 std::to_string(est.horizon)});
    };
    for (const auto& sweep : sweeps) {
        rows(sweep, "tied", sweep.tied);
        rows(sweep, "chain", sweep.chain);
    }
    write_text_file(path, out);
}

}  // namespace llsim
