#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "llsim/langspec.hpp"
#include "llsim/verify.hpp"

namespace llsim {

// Reproducible experiment sweeps behind the `experiment` CLI command. Every
// sweep derives all randomness from one seed through named streams, so equal
// configurations produce identical result files.

struct ConvergencePoint {
    long n_symbols = 0;
    int k = 1;
    double lambda = 0.1;
    double cross_entropy_model = 0.0;
    double cross_entropy_oracle = 0.0;
    double tv_gap = 0.0;
};

struct ConvergenceOptions {
    GeneratorConfig config;               // default: unambiguous source
    std::vector<long> train_symbols = {10000, 100000, 1000000};
    int k = 1;
    double lambda = 0.1;
    int holdout_messages = 1000;
    std::uint64_t seed = 42;
};

/// Trains one model per grid point on fresh corpora of increasing size and
/// evaluates held-out cross-entropy (model and oracle) plus the mean TV gap.
std::vector<ConvergencePoint> run_convergence(const ConvergenceOptions& options);

struct UnderstandingLevel {
    double target_epsilon = 0.0;   // 0 means the noise-free source
    double eta = 0.0;              // calibrated noise level
    double measured_epsilon = 0.0; // mean message ambiguity at that noise
    KlEstimate oracle_exact_h3;
    KlEstimate oracle_mc_h3;       // same prompts; estimator cross-check
    KlEstimate oracle_mc_full;     // horizon = one message
    KlEstimate trained_exact_h3;   // truth-vs-model direction
    KlEstimate trained_mc_full;    // truth-vs-model direction, full horizon
};

struct UnderstandingSweepOptions {
    GeneratorConfig config;
    std::vector<double> target_epsilons = {0.0, 0.001, 0.004};
    int num_prompts = 300;
    int mc_samples = 10000;  // total Monte Carlo samples per estimate
    long trained_symbols = 6000000;
    int trained_k = 3;
    double trained_lambda = 0.1;
    std::uint64_t seed = 42;
};

std::vector<UnderstandingLevel> run_understanding(const UnderstandingSweepOptions& options);

struct IclSweep {
    double eta = 0.0;
    double measured_epsilon = 0.0;
    std::vector<std::pair<int, KlEstimate>> tied;   // asserted curve
    std::vector<std::pair<int, KlEstimate>> chain;  // reported analogue
};

struct IclSweepOptions {
    GeneratorConfig config;
    std::vector<double> target_epsilons = {0.0, 0.06};
    std::vector<int> m_values = {1, 2, 3, 4, 5, 6, 7, 8};
    int num_prompts = 300;
    std::uint64_t seed = 42;
};

std::vector<IclSweep> run_icl_sweep(const IclSweepOptions& options);

void write_convergence_csv(const std::string& path, const std::vector<ConvergencePoint>& points);
void write_understanding_csv(const std::string& path,
                             const std::vector<UnderstandingLevel>& levels);
void write_icl_csv(const std::string& path, const std::vector<IclSweep>& sweeps);

}  // namespace llsim
