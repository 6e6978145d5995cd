#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "llsim/commands.hpp"

namespace {

using namespace llsim;
using namespace llsim::cli;

void add_config_flags(CLI::App* cmd, GeneratorConfig& config, std::string& length_mode) {
    cmd->add_option("--intentions,-K", config.num_intentions, "latent intention count");
    cmd->add_option("--alphabet,-V", config.alphabet_size, "letter alphabet size");
    cmd->add_option("--letters-per-intention", config.letters_per_intention,
                    "dedicated letters per intention");
    cmd->add_option("--length,-L", config.message_length, "letters per message");
    cmd->add_option("--eta", config.noise_level, "noise level in [0,1)");
    cmd->add_option("--seed", config.seed, "deterministic seed");
    cmd->add_option("--length-mode", length_mode, "fixed | geometric");
    cmd->add_option("--p-end", config.end_probability,
                    "per-step end probability (geometric mode)");
}

LengthMode parse_length_mode(const std::string& name) {
    if (name == "fixed") return LengthMode::fixed;
    if (name == "geometric") return LengthMode::geometric;
    throw CLI::ValidationError("--length-mode", "expected fixed or geometric");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic-language toolkit: generation, exact inference, count-model "
                 "training and bound verification"};
    app.require_subcommand(1);

    // --- gen ---------------------------------------------------------------
    GenOptions gen;
    std::string gen_length_mode = "fixed";
    std::string gen_mode = "chain";
    int gen_clamp = -1;
    auto* cmd_gen = app.add_subcommand("gen", "generate a corpus and its spec");
    add_config_flags(cmd_gen, gen.config, gen_length_mode);
    cmd_gen->add_option("--messages,-n", gen.messages, "number of messages");
    cmd_gen->add_option("--mode", gen_mode, "chain | clamped");
    cmd_gen->add_option("--clamp-intention", gen_clamp, "fixed intention for clamped mode");
    cmd_gen->add_flag("--measure-epsilon", gen.measure_epsilon,
                      "measure per-message ambiguity and write ambiguity.csv");
    cmd_gen->add_option("--out,-o", gen.out_dir, "output directory");

    // --- train -------------------------------------------------------------
    TrainOptions train;
    auto* cmd_train = app.add_subcommand("train", "train the count model on a corpus");
    cmd_train->add_option("--corpus", train.corpus_path, "corpus text file")->required();
    cmd_train->add_option("--spec", train.spec_path, "language spec JSON")->required();
    cmd_train->add_option("--out,-o", train.model_out, "model output path");
    cmd_train->add_option("--k", train.k, "context order (1..6)");
    cmd_train->add_option("--lambda", train.lambda, "additive smoothing constant");
    cmd_train->add_option("--holdout-fraction", train.holdout_fraction,
                          "trailing fraction held out for cross-entropy");

    // --- eval --------------------------------------------------------------
    EvalOptions eval;
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a model against the oracle");
    cmd_eval->add_option("--model", eval.model_path, "model JSON")->required();
    cmd_eval->add_option("--corpus", eval.corpus_path, "corpus text file")->required();
    cmd_eval->add_option("--spec", eval.spec_path, "language spec JSON")->required();
    cmd_eval->add_option("--out,-o", eval.out_dir, "output directory");

    // --- verify ------------------------------------------------------------
    VerifyOptions verify;
    std::string verify_length_mode = "fixed";
    std::vector<int> props;
    std::vector<std::string> checks;
    auto* cmd_verify = app.add_subcommand("verify", "run exact bound verifiers");
    add_config_flags(cmd_verify, verify.config, verify_length_mode);
    cmd_verify->add_option("--prop", props,
                           "numbered bound suite: 1 composition, 2 understanding, 3/4 icl");
    cmd_verify->add_option("--check", checks, "named verifier (see --help-verifiers)");
    cmd_verify->add_option("--spec", verify.spec_path, "language spec JSON (overrides flags)");
    cmd_verify->add_option("--trials", verify.trials, "trials per verifier");
    cmd_verify->add_option("--m-values", verify.m_values, "example counts for the icl suite");
    cmd_verify->add_option("--y-samples", verify.y_samples, "continuations per trial");
    cmd_verify->add_option("--verify-seed", verify.seed, "verifier seed");
    cmd_verify->add_option("--out,-o", verify.out_dir, "output directory");

    // --- experiment ----------------------------------------------------------
    ExperimentOptions experiment;
    std::string experiment_length_mode = "fixed";
    auto* cmd_experiment =
        app.add_subcommand("experiment", "reproduce the convergence / KL sweeps");
    add_config_flags(cmd_experiment, experiment.config, experiment_length_mode);
    cmd_experiment->add_option("--figure", experiment.figure,
                               "convergence | understanding | icl | all");
    cmd_experiment->add_option("--train-symbols", experiment.train_symbols,
                               "training sizes for the convergence sweep");
    cmd_experiment->add_option("--target-epsilons", experiment.target_epsilons,
                               "ambiguity levels for the understanding sweep");
    cmd_experiment->add_option("--icl-target", experiment.icl_target_epsilon,
                               "ambiguity level for the icl sweep");
    cmd_experiment->add_option("--m-values", experiment.m_values, "icl example counts");
    cmd_experiment->add_option("--prompts", experiment.num_prompts, "prompts per estimate");
    cmd_experiment->add_option("--out,-o", experiment.out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints usage / message
        return kExitUsage;
    }

    try {
        if (cmd_gen->parsed()) {
            gen.config.length_mode = parse_length_mode(gen_length_mode);
            if (gen_mode != "chain" && gen_mode != "clamped") {
                std::fprintf(stderr, "llsim: --mode must be chain or clamped\n");
                return kExitUsage;
            }
            gen.mode = gen_mode == "chain" ? CorpusMode::chain : CorpusMode::clamped;
            if (gen_clamp >= 0) gen.clamp_intention = gen_clamp;
            return run_gen(gen);
        }
        if (cmd_train->parsed()) return run_train(train);
        if (cmd_eval->parsed()) return run_eval(eval);
        if (cmd_verify->parsed()) {
            verify.config.length_mode = parse_length_mode(verify_length_mode);
            verify.seed = verify.config.seed;
            for (int p : props) {
                switch (p) {
                    case 1: verify.verifiers.push_back("composition"); break;
                    case 2: verify.verifiers.push_back("understanding"); break;
                    case 3:
                    case 4: verify.verifiers.push_back("icl"); break;
                    default:
                        std::fprintf(stderr, "llsim: unknown bound suite --prop %d (1..4)\n", p);
                        return kExitUsage;
                }
            }
            for (const auto& c : checks) verify.verifiers.push_back(c);
            if (verify.verifiers.empty()) verify.verifiers = kVerifierNames;
            // De-duplicate while keeping order (--prop 3 --prop 4 is one suite).
            std::vector<std::string> unique;
            for (const auto& v : verify.verifiers)
                if (std::find(unique.begin(), unique.end(), v) == unique.end())
                    unique.push_back(v);
            verify.verifiers = std::move(unique);
            return run_verify(verify);
        }
        if (cmd_experiment->parsed()) {
            experiment.config.length_mode = parse_length_mode(experiment_length_mode);
            experiment.seed = experiment.config.seed;
            return run_experiment(experiment);
        }
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "llsim: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
