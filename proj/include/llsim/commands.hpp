#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "llsim/langspec.hpp"

namespace llsim::cli {

inline constexpr char kVersion[] = "0.1.0";

// Exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

struct GenOptions {
    std::string out_dir = ".";
    GeneratorConfig config;
    int messages = 1000;
    CorpusMode mode = CorpusMode::chain;
    std::optional<int> clamp_intention;
    bool measure_epsilon = false;
};

struct TrainOptions {
    std::string corpus_path;
    std::string spec_path;
    std::string model_out = "model.json";
    int k = 1;
    double lambda = 0.1;
    double holdout_fraction = 0.1;
};

struct EvalOptions {
    std::string model_path;
    std::string corpus_path;
    std::string spec_path;
    std::string out_dir = ".";
};

struct VerifyOptions {
    std::vector<std::string> verifiers;  // see kVerifierNames
    std::string out_dir = ".";
    std::string spec_path;  // when empty, built from `config`
    GeneratorConfig config;
    int trials = 1000;
    std::vector<int> m_values = {1, 2, 3, 4, 5, 6, 7, 8};
    int y_samples = 24;
    std::uint64_t seed = 42;
};

struct ExperimentOptions {
    std::string figure = "all";  // convergence | understanding | icl | all
    std::string out_dir = ".";
    GeneratorConfig config;
    std::vector<long> train_symbols = {10000, 100000, 1000000};
    std::vector<double> target_epsilons = {0.0, 0.001, 0.004};
    double icl_target_epsilon = 0.06;
    std::vector<int> m_values = {1, 2, 3, 4, 5, 6, 7, 8};
    int num_prompts = 300;
    std::uint64_t seed = 42;
};

extern const std::vector<std::string> kVerifierNames;

int run_gen(const GenOptions& options);
int run_train(const TrainOptions& options);
int run_eval(const EvalOptions& options);
int run_verify(const VerifyOptions& options);
int run_experiment(const ExperimentOptions& options);

/// Output directory fallback: explicit option, else $LLSIM_OUT_DIR, else ".".
std::string resolve_out_dir(const std::string& requested);

}  // namespace llsim::cli
