#include "llsim/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "llsim/density.hpp"
#include "llsim/errors.hpp"
#include "llsim/experiment.hpp"
#include "llsim/io.hpp"
#include "llsim/oracle.hpp"
#include "llsim/verify.hpp"

namespace llsim::cli {

namespace fs = std::filesystem;

const std::vector<std::string> kVerifierNames = {
    "composition",       "understanding", "icl",    "sparsity",
    "instruction-mixture", "chain-of-thought", "kl-understanding", "kl-icl",
};

namespace {

nlohmann::json config_json(const GeneratorConfig& c) {
    nlohmann::json j;
    j["num_intentions"] = c.num_intentions;
    j["alphabet_size"] = c.alphabet_size;
    j["letters_per_intention"] = c.letters_per_intention;
    j["message_length"] = c.message_length;
    j["noise_level"] = c.noise_level;
    j["seed"] = c.seed;
    j["length_mode"] = c.length_mode == LengthMode::fixed ? "fixed" : "geometric";
    j["end_probability"] = c.end_probability;
    return j;
}

void write_summary(const std::string& out_dir, const std::string& command,
                   const nlohmann::json& options, std::uint64_t seed,
                   const nlohmann::json& results, const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["seed"] = seed;
    j["config"] = options;
    j["config_hash"] = sha256_hex(options.dump());
    j["results"] = results;
    j["outputs"] = outputs;
    write_text_file(out_dir + "/summary.json", j.dump(2) + "\n");
}

std::string prepare_out_dir(const std::string& requested) {
    const std::string dir = resolve_out_dir(requested);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory: " + dir);
    return dir;
}

bool is_default_circulant(const LanguageSpec& spec) {
    const int k = spec.num_intentions;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double expect = (j == i || j == (i + 1) % k) ? 0.5 : 0.0;
            if (std::abs(spec.prior_transition[static_cast<std::size_t>(i)]
                                              [static_cast<std::size_t>(j)] -
                         expect) > 1e-12)
                return false;
        }
    return true;
}

int failure(const char* prefix, const std::string& what, int code) {
    std::fprintf(stderr, "llsim: %s: %s\n", prefix, what.c_str());
    return code;
}

}  // namespace

std::string resolve_out_dir(const std::string& requested) {
    if (!requested.empty() && requested != ".") return requested;
    if (const char* env = std::getenv("LLSIM_OUT_DIR"); env && *env) return env;
    return requested.empty() ? "." : requested;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

int run_gen(const GenOptions& options) {
    try {
        const std::string out_dir = prepare_out_dir(options.out_dir);
        const LanguageSpec spec = build_spec(options.config);
        SplitMix64 rng(derive_seed(options.config.seed, streams::message));
        const Corpus corpus = sample_corpus(spec, options.messages, options.mode, rng,
                                            options.clamp_intention);

        write_corpus(spec, corpus, out_dir + "/corpus.txt");
        write_intention_sidecar(corpus, out_dir + "/intentions.txt");
        save_spec(spec, out_dir + "/spec.json");
        std::vector<std::string> outputs = {"corpus.txt", "intentions.txt", "spec.json"};

        nlohmann::json results;
        results["messages"] = options.messages;
        results["mode"] = options.mode == CorpusMode::chain ? "chain" : "clamped";
        results["spec_fingerprint"] = spec.fingerprint();

        if (options.measure_epsilon) {
            std::string csv = csv_row(
                {"message_index", "epsilon", "argmax", "generating", "log_evidence"});
            double mean_eps = 0.0, max_eps = 0.0;
            for (std::size_t i = 0; i < corpus.messages.size(); ++i) {
                const Message& msg = corpus.messages[i];
                const PosteriorVector post = posterior_single(spec, msg);
                const AmbiguityReport rep = ambiguity(spec, msg, msg.generating_intention);
                mean_eps += rep.epsilon;
                max_eps = std::max(max_eps, rep.epsilon);
                csv += csv_row({std::to_string(i), format_double(rep.epsilon),
                                std::to_string(rep.argmax_intention),
                                std::to_string(msg.generating_intention.value_or(-1)),
                                format_double(post.log_evidence)});
            }
            mean_eps /= static_cast<double>(corpus.messages.size());
            write_text_file(out_dir + "/ambiguity.csv", csv);
            outputs.push_back("ambiguity.csv");
            results["mean_epsilon"] = mean_eps;
            results["max_epsilon"] = max_eps;
            std::printf("messages=%d mean_epsilon=%s max_epsilon=%s\n", options.messages,
                        format_double(mean_eps).c_str(), format_double(max_eps).c_str());
        } else {
            std::printf("messages=%d mode=%s\n", options.messages,
                        options.mode == CorpusMode::chain ? "chain" : "clamped");
        }

        nlohmann::json opts = config_json(options.config);
        opts["messages"] = options.messages;
        opts["mode"] = options.mode == CorpusMode::chain ? "chain" : "clamped";
        opts["measure_epsilon"] = options.measure_epsilon;
        if (options.clamp_intention) opts["clamp_intention"] = *options.clamp_intention;
        write_summary(out_dir, "gen", opts, options.config.seed, results, outputs);
        return kExitOk;
    } catch (const ConfigError& e) {
        return failure("config error", e.what(), kExitUsage);
    } catch (const Error& e) {
        return failure("error", e.what(), kExitUsage);
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int run_train(const TrainOptions& options) {
    try {
        if (!fs::exists(options.spec_path))
            return failure("missing spec file", options.spec_path, kExitUsage);
        if (!fs::exists(options.corpus_path))
            return failure("missing corpus file", options.corpus_path, kExitUsage);
        const LanguageSpec spec = load_spec(options.spec_path);
        const Corpus corpus = read_corpus(spec, options.corpus_path);
        if (corpus.messages.empty())
            return failure("empty corpus", options.corpus_path, kExitUsage);

        // Deterministic split: the trailing fraction is held out.
        const auto holdout_count = static_cast<std::size_t>(
            std::floor(options.holdout_fraction * static_cast<double>(corpus.messages.size())));
        Corpus train_set, holdout;
        train_set.mode = holdout.mode = corpus.mode;
        train_set.spec_fingerprint = holdout.spec_fingerprint = corpus.spec_fingerprint;
        const std::size_t train_count = corpus.messages.size() - holdout_count;
        train_set.messages.assign(corpus.messages.begin(),
                                  corpus.messages.begin() + static_cast<long>(train_count));
        holdout.messages.assign(corpus.messages.begin() + static_cast<long>(train_count),
                                corpus.messages.end());

        const DensityModel model = train(train_set, options.k, options.lambda,
                                         spec.alphabet_size, spec.message_length);
        save_model(model, options.model_out);

        nlohmann::json results;
        results["train_messages"] = train_set.messages.size();
        results["train_symbols"] = model.total_training_symbols;
        if (!holdout.messages.empty()) {
            const double ce = cross_entropy(model, holdout);
            const OracleBackend oracle(spec);
            const double oracle_ce = backend_cross_entropy(oracle, spec, holdout);
            results["holdout_cross_entropy"] = ce;
            results["oracle_cross_entropy"] = oracle_ce;
            std::printf("holdout_cross_entropy=%s oracle_cross_entropy=%s\n",
                        format_double(ce).c_str(), format_double(oracle_ce).c_str());
        }

        const std::string out_dir =
            prepare_out_dir(fs::path(options.model_out).parent_path().string());
        nlohmann::json opts;
        opts["corpus"] = options.corpus_path;
        opts["spec"] = options.spec_path;
        opts["k"] = options.k;
        opts["lambda"] = options.lambda;
        opts["holdout_fraction"] = options.holdout_fraction;
        write_summary(out_dir, "train", opts, spec.seed, results,
                      {fs::path(options.model_out).filename().string()});
        return kExitOk;
    } catch (const DataError& e) {
        std::fprintf(stderr, "llsim: corpus line %ld: %s\n", e.line_number, e.what());
        return kExitData;
    } catch (const ConfigError& e) {
        return failure("config error", e.what(), kExitUsage);
    } catch (const Error& e) {
        return failure("error", e.what(), kExitUsage);
    }
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int run_eval(const EvalOptions& options) {
    try {
        if (!fs::exists(options.model_path))
            return failure("missing model file", options.model_path, kExitUsage);
        if (!fs::exists(options.spec_path))
            return failure("missing spec file", options.spec_path, kExitUsage);
        if (!fs::exists(options.corpus_path))
            return failure("missing corpus file", options.corpus_path, kExitUsage);
        const DensityModel model = load_model(options.model_path);
        const LanguageSpec spec = load_spec(options.spec_path);
        const Corpus corpus = read_corpus(spec, options.corpus_path);

        const double ce = cross_entropy(model, corpus);
        const OracleBackend oracle(spec);
        const double oracle_ce = backend_cross_entropy(oracle, spec, corpus);
        const double tv = mean_tv_gap(model, spec, corpus);
        std::printf("cross_entropy=%s oracle_cross_entropy=%s mean_tv_gap=%s\n",
                    format_double(ce).c_str(), format_double(oracle_ce).c_str(),
                    format_double(tv).c_str());

        const std::string out_dir = prepare_out_dir(options.out_dir);
        nlohmann::json opts;
        opts["model"] = options.model_path;
        opts["corpus"] = options.corpus_path;
        opts["spec"] = options.spec_path;
        nlohmann::json results;
        results["cross_entropy"] = ce;
        results["oracle_cross_entropy"] = oracle_ce;
        results["mean_tv_gap"] = tv;
        write_summary(out_dir, "eval", opts, spec.seed, results, {});
        return kExitOk;
    } catch (const DataError& e) {
        std::fprintf(stderr, "llsim: corpus line %ld: %s\n", e.line_number, e.what());
        return kExitData;
    } catch (const Error& e) {
        return failure("error", e.what(), kExitUsage);
    }
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

int run_verify(const VerifyOptions& options) {
    try {
        for (const auto& name : options.verifiers) {
            if (std::find(kVerifierNames.begin(), kVerifierNames.end(), name) ==
                kVerifierNames.end()) {
                std::fprintf(stderr, "llsim: unknown verifier '%s'\nknown verifiers:",
                             name.c_str());
                for (const auto& known : kVerifierNames)
                    std::fprintf(stderr, " %s", known.c_str());
                std::fprintf(stderr, "\n");
                return kExitUsage;
            }
        }
        const std::string out_dir = prepare_out_dir(options.out_dir);
        const LanguageSpec spec = options.spec_path.empty()
                                      ? build_spec(options.config)
                                      : load_spec(options.spec_path);
        const OracleBackend oracle(spec);
        const OracleBackend tied(spec, BoundaryPolicy::hold);

        nlohmann::json results;
        std::vector<std::string> outputs;
        int violations = 0;
        const auto record = [&](const std::string& name, const std::vector<BoundCheck>& checks) {
            write_bound_checks_csv(out_dir + "/" + name + ".csv", checks);
            outputs.push_back(name + ".csv");
            const VerifierSummary s = summarize(name, checks);
            results[name] = {{"total", s.total},
                             {"violations", s.violations},
                             {"max_deviation", s.max_deviation}};
            violations += s.violations;
            if (s.violations > 0)
                for (const auto& c : checks)
                    if (!c.satisfied)
                        std::fprintf(stderr,
                                     "llsim: %s violation: trial=%d m=%d measured=%.17g bound=%.17g\n",
                                     name.c_str(), c.trial, c.m, c.measured_deviation,
                                     c.bound_value);
        };

        for (const auto& name : options.verifiers) {
            SplitMix64 rng(derive_seed(options.seed, std::hash<std::string>{}(name)));
            if (name == "composition") {
                record(name, check_composition(spec, options.trials, rng));
            } else if (name == "understanding") {
                UnderstandingOptions uopts;
                uopts.trials = options.trials;
                record(name, check_understanding(oracle, spec, uopts, rng));
                record("understanding_exhaustive",
                       check_understanding_exhaustive(oracle, spec, 100, 3, rng));
            } else if (name == "icl") {
                IclOptions iopts;
                iopts.m_values = options.m_values;
                iopts.trials = options.trials;
                iopts.y_samples = options.y_samples;
                record(name, check_icl(tied, spec, iopts, rng));
            } else if (name == "sparsity") {
                record(name, check_sparsity(spec, options.trials, rng));
            } else if (name == "instruction-mixture") {
                record(name, check_instruction_mixture(spec, options.trials,
                                                       options.y_samples, rng));
            } else if (name == "chain-of-thought") {
                std::vector<BoundCheck> checks;
                const bool circulant = is_default_circulant(spec);
                for (int start = 0; start < spec.num_intentions; ++start)
                    for (int m = 2; m <= 5 && m < spec.num_intentions; ++m) {
                        std::vector<int> path;
                        for (int i = 0; i <= m; ++i)
                            path.push_back((start + i) % spec.num_intentions);
                        const CotRecord rec = cot_compare(spec, path, rng);
                        const double ratio =
                            rec.chained_intention_factor / rec.direct_intention_factor;
                        BoundCheck check =
                            circulant ? make_bound_check(
                                            std::abs(ratio - std::pow(2.0, m - 1)), 0.0)
                                      : make_bound_check(0.0, 0.0);
                        check.trial = start;
                        check.m = m;
                        check.eta = spec.noise_level;
                        check.tied_residual = ratio;
                        checks.push_back(check);
                    }
                record(name, checks);
            } else if (name == "kl-understanding") {
                KlOptions kopts;
                kopts.method = KlEstimate::Method::exact_dp;
                kopts.horizon = 3;
                kopts.num_prompts = options.trials;
                const KlEstimate est = kl_understanding(oracle, spec, kopts, rng);
                write_kl_estimates_csv(out_dir + "/kl_understanding.csv", {{0, est}});
                outputs.push_back("kl_understanding.csv");
                results[name] = {{"kl_value", est.value}};
            } else if (name == "kl-icl") {
                KlOptions kopts;
                kopts.method = KlEstimate::Method::exact_dp;
                kopts.horizon = 3;
                kopts.num_prompts = options.trials;
                std::vector<int> m_grid = options.m_values;
                std::sort(m_grid.begin(), m_grid.end());
                m_grid.erase(std::unique(m_grid.begin(), m_grid.end()), m_grid.end());
                const auto estimates = kl_icl(tied, spec, m_grid, kopts, rng);
                std::vector<std::pair<int, KlEstimate>> rows;
                for (std::size_t i = 0; i < estimates.size(); ++i)
                    rows.emplace_back(m_grid[i], estimates[i]);
                write_kl_estimates_csv(out_dir + "/kl_icl.csv", rows);
                outputs.push_back("kl_icl.csv");
                nlohmann::json vals = nlohmann::json::array();
                for (const auto& [m, est] : rows) vals.push_back({{"m", m}, {"kl", est.value}});
                results[name] = vals;
            }
        }

        nlohmann::json opts = config_json(options.config);
        opts["verifiers"] = options.verifiers;
        opts["trials"] = options.trials;
        opts["spec"] = options.spec_path;
        opts["spec_fingerprint"] = spec.fingerprint();
        write_summary(out_dir, "verify", opts, options.seed, results, outputs);
        std::printf("verify: %d violation(s)\n", violations);
        return violations == 0 ? kExitOk : kExitVerificationFailure;
    } catch (const ConfigError& e) {
        return failure("config error", e.what(), kExitUsage);
    } catch (const DataError& e) {
        std::fprintf(stderr, "llsim: line %ld: %s\n", e.line_number, e.what());
        return kExitData;
    } catch (const Error& e) {
        return failure("error", e.what(), kExitUsage);
    }
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

int run_experiment(const ExperimentOptions& options) {
    try {
        if (options.figure != "convergence" && options.figure != "understanding" &&
            options.figure != "icl" && options.figure != "all") {
            std::fprintf(stderr,
                         "llsim: unknown figure '%s' (convergence|understanding|icl|all)\n",
                         options.figure.c_str());
            return kExitUsage;
        }
        const std::string out_dir = prepare_out_dir(options.out_dir);
        nlohmann::json results;
        std::vector<std::string> outputs;

        if (options.figure == "convergence" || options.figure == "all") {
            ConvergenceOptions copts;
            copts.config = options.config;
            copts.train_symbols = options.train_symbols;
            copts.seed = options.seed;
            const auto points = run_convergence(copts);
            write_convergence_csv(out_dir + "/convergence.csv", points);
            outputs.push_back("convergence.csv");
            results["convergence_points"] = points.size();
        }
        if (options.figure == "understanding" || options.figure == "all") {
            UnderstandingSweepOptions uopts;
            uopts.config = options.config;
            uopts.target_epsilons = options.target_epsilons;
            uopts.num_prompts = options.num_prompts;
            uopts.seed = options.seed;
            const auto levels = run_understanding(uopts);
            write_understanding_csv(out_dir + "/understanding.csv", levels);
            outputs.push_back("understanding.csv");
            results["understanding_levels"] = levels.size();
        }
        if (options.figure == "icl" || options.figure == "all") {
            IclSweepOptions iopts;
            iopts.config = options.config;
            iopts.m_values = options.m_values;
            iopts.num_prompts = options.num_prompts;
            iopts.seed = options.seed;
            iopts.target_epsilons = {0.0, options.icl_target_epsilon};
            const auto sweeps = run_icl_sweep(iopts);
            write_icl_csv(out_dir + "/icl.csv", sweeps);
            outputs.push_back("icl.csv");
            results["icl_sweeps"] = sweeps.size();
        }

        nlohmann::json opts = config_json(options.config);
        opts["figure"] = options.figure;
        opts["train_symbols"] = options.train_symbols;
        opts["target_epsilons"] = options.target_epsilons;
        opts["icl_target_epsilon"] = options.icl_target_epsilon;
        opts["m_values"] = options.m_values;
        opts["num_prompts"] = options.num_prompts;
        write_summary(out_dir, "experiment", opts, options.seed, results, outputs);
        return kExitOk;
    } catch (const ConfigError& e) {
        return failure("config error", e.what(), kExitUsage);
    } catch (const Error& e) {
        return failure("error", e.what(), kExitUsage);
    }
}

}  // namespace llsim::cli
