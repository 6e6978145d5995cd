#include "llsim/langspec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "llsim/errors.hpp"
#include "llsim/io.hpp"

namespace llsim {

namespace {

constexpr double kRowSumTolerance = 1e-12;

void check_row(const std::vector<double>& row, const char* what) {
    double sum = 0.0;
    for (double p : row) {
        if (p < 0.0) throw ConfigError(std::string(what) + ": negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance)
        throw ConfigError(std::string(what) + ": row sum " + std::to_string(sum));
}

/// Dirichlet(1,...,1) over the intention's dedicated block, mixed with the
/// uniform distribution over all V letters with weight eta.
std::vector<double> make_emission_row(const LanguageSpec& spec, int intention,
                                      SplitMix64& rng) {
    std::vector<double> row(static_cast<std::size_t>(spec.alphabet_size), 0.0);
    std::vector<double> block(static_cast<std::size_t>(spec.letters_per_intention));
    sample_dirichlet_ones(rng, block);
    for (int j = 0; j < spec.letters_per_intention; ++j)
        row[static_cast<std::size_t>(spec.block_start(intention) + j)] = block[static_cast<std::size_t>(j)];
    if (spec.noise_level > 0.0) {
        const double uniform = spec.noise_level / spec.alphabet_size;
        for (double& p : row) p = (1.0 - spec.noise_level) * p + uniform;
    }
    return row;
}

}  // namespace

void LanguageSpec::validate() const {
    if (num_intentions < 2) throw ConfigError("num_intentions must be >= 2");
    if (alphabet_size < num_intentions * letters_per_intention)
        throw ConfigError("alphabet too small for the dedicated letter blocks");
    if (alphabet_size > 250) throw ConfigError("alphabet_size above the symbol-index range");
    if (message_length < 1) throw ConfigError("message_length must be >= 1");
    if (noise_level < 0.0 || noise_level >= 1.0) throw ConfigError("noise_level outside [0,1)");
    if (length_mode == LengthMode::geometric &&
        (end_probability <= 0.0 || end_probability > 1.0))
        throw ConfigError("end_probability outside (0,1]");

    check_row(prior_initial, "prior_initial");
    if (static_cast<int>(prior_transition.size()) != num_intentions)
        throw ConfigError("prior_transition shape");
    for (const auto& row : prior_transition) check_row(row, "prior_transition");
    if (static_cast<int>(emission_initial.size()) != num_intentions)
        throw ConfigError("emission_initial shape");
    for (const auto& row : emission_initial) check_row(row, "emission_initial");
    if (static_cast<int>(emission_transition.size()) != num_intentions)
        throw ConfigError("emission_transition shape");
    for (const auto& mat : emission_transition) {
        if (static_cast<int>(mat.size()) != alphabet_size)
            throw ConfigError("emission_transition shape");
        for (const auto& row : mat) check_row(row, "emission_transition");
    }
}

LanguageSpec build_spec(const GeneratorConfig& config) {
    if (config.num_intentions < 2) throw ConfigError("num_intentions must be >= 2");
    if (config.letters_per_intention < 1) throw ConfigError("letters_per_intention must be >= 1");
    if (config.alphabet_size < config.num_intentions * config.letters_per_intention)
        throw ConfigError("alphabet_size must cover all dedicated letter blocks");
    if (config.alphabet_size > 250) throw ConfigError("alphabet_size above the symbol-index range");
    if (config.message_length < 1) throw ConfigError("message_length must be >= 1");
    if (config.noise_level < 0.0 || config.noise_level >= 1.0)
        throw ConfigError("noise_level outside [0,1)");
    if (config.length_mode == LengthMode::geometric &&
        (config.end_probability <= 0.0 || config.end_probability > 1.0))
        throw ConfigError("end_probability outside (0,1]");

    LanguageSpec spec;
    spec.num_intentions = config.num_intentions;
    spec.alphabet_size = config.alphabet_size;
    spec.letters_per_intention = config.letters_per_intention;
    spec.message_length = config.message_length;
    spec.noise_level = config.noise_level;
    spec.seed = config.seed;
    spec.length_mode = config.length_mode;
    spec.end_probability =
        config.length_mode == LengthMode::geometric ? config.end_probability : 0.0;

    const int k = spec.num_intentions;
    spec.prior_initial.assign(static_cast<std::size_t>(k), 1.0 / k);
    spec.prior_transition.assign(static_cast<std::size_t>(k),
                                 std::vector<double>(static_cast<std::size_t>(k), 0.0));
    for (int i = 0; i < k; ++i) {
        spec.prior_transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 0.5;
        spec.prior_transition[static_cast<std::size_t>(i)][static_cast<std::size_t>((i + 1) % k)] = 0.5;
    }

    spec.emission_initial.resize(static_cast<std::size_t>(k));
    spec.emission_transition.resize(static_cast<std::size_t>(k));
    for (int theta = 0; theta < k; ++theta) {
        SplitMix64 rows(derive_seed(derive_seed(config.seed, streams::spec_rows),
                                    static_cast<std::uint64_t>(theta)));
        spec.emission_initial[static_cast<std::size_t>(theta)] = make_emission_row(spec, theta, rows);
        auto& mat = spec.emission_transition[static_cast<std::size_t>(theta)];
        mat.resize(static_cast<std::size_t>(spec.alphabet_size));
        for (int prev = 0; prev < spec.alphabet_size; ++prev)
            mat[static_cast<std::size_t>(prev)] = make_emission_row(spec, theta, rows);
    }

    spec.validate();
    return spec;
}

std::vector<int> sample_intention_path(const LanguageSpec& spec, CorpusMode mode, int count,
                                       SplitMix64& rng, std::optional<int> fixed_intention) {
    if (count < 1) throw ConfigError("intention path count must be >= 1");
    std::vector<int> path;
    path.reserve(static_cast<std::size_t>(count));
    if (mode == CorpusMode::clamped) {
        int theta = fixed_intention ? *fixed_intention
                                    : sample_categorical(rng, spec.prior_initial);
        if (theta < 0 || theta >= spec.num_intentions)
            throw ConfigError("fixed intention out of range");
        path.assign(static_cast<std::size_t>(count), theta);
        return path;
    }
    int theta = sample_categorical(rng, spec.prior_initial);
    path.push_back(theta);
    for (int i = 1; i < count; ++i) {
        theta = sample_categorical(rng, spec.prior_transition[static_cast<std::size_t>(theta)]);
        path.push_back(theta);
    }
    return path;
}

Message sample_message(const LanguageSpec& spec, int intention, SplitMix64& rng) {
    if (intention < 0 || intention >= spec.num_intentions)
        throw ConfigError("intention out of range");
    Message msg;
    msg.generating_intention = intention;
    const auto& trans = spec.emission_transition[static_cast<std::size_t>(intention)];
    int letter = sample_categorical(rng, spec.emission_initial[static_cast<std::size_t>(intention)]);
    msg.symbols.push_back(static_cast<Symbol>(letter));
    if (spec.length_mode == LengthMode::fixed) {
        for (int t = 1; t < spec.message_length; ++t) {
            letter = sample_categorical(rng, trans[static_cast<std::size_t>(letter)]);
            msg.symbols.push_back(static_cast<Symbol>(letter));
        }
    } else {
        while (rng.next_double() >= spec.end_probability) {
            letter = sample_categorical(rng, trans[static_cast<std::size_t>(letter)]);
            msg.symbols.push_back(static_cast<Symbol>(letter));
        }
    }
    msg.symbols.push_back(spec.newline_symbol());
    return msg;
}

Corpus sample_corpus(const LanguageSpec& spec, int num_messages, CorpusMode mode,
                     SplitMix64& rng, std::optional<int> fixed_intention) {
    if (num_messages < 1) throw ConfigError("num_messages must be >= 1");
    const std::uint64_t base = rng.next_u64();
    SplitMix64 path_rng(derive_seed(base, streams::intention_path));
    const std::vector<int> path =
        sample_intention_path(spec, mode, num_messages, path_rng, fixed_intention);

    Corpus corpus;
    corpus.mode = mode;
    corpus.spec_fingerprint = spec.fingerprint();
    corpus.messages.reserve(static_cast<std::size_t>(num_messages));
    const std::uint64_t message_base = derive_seed(base, streams::message);
    for (int i = 0; i < num_messages; ++i) {
        SplitMix64 msg_rng(derive_seed(message_base, static_cast<std::uint64_t>(i)));
        corpus.messages.push_back(sample_message(spec, path[static_cast<std::size_t>(i)], msg_rng));
    }
    return corpus;
}

char symbol_to_char(const LanguageSpec& spec, Symbol s) {
    if (s == spec.newline_symbol()) return '\n';
    if (s >= spec.alphabet_size) throw SpecMismatch("symbol outside the spec alphabet");
    return static_cast<char>('a' + s);
}

Symbol char_to_symbol(const LanguageSpec& spec, char c) {
    if (c == '\n') return spec.newline_symbol();
    const int idx = c - 'a';
    if (idx < 0 || idx >= spec.alphabet_size)
        throw SpecMismatch(std::string("character outside the spec alphabet: '") + c + "'");
    return static_cast<Symbol>(idx);
}

std::string corpus_to_text(const LanguageSpec& spec, const Corpus& corpus) {
    std::string out;
    out.reserve(corpus.total_symbols());
    for (const auto& msg : corpus.messages)
        for (Symbol s : msg.symbols) out.push_back(symbol_to_char(spec, s));
    return out;
}

void write_corpus(const LanguageSpec& spec, const Corpus& corpus, const std::string& path) {
    write_text_file(path, corpus_to_text(spec, corpus));
}

void write_intention_sidecar(const Corpus& corpus, const std::string& path) {
    std::string out;
    for (const auto& msg : corpus.messages) {
        out += msg.generating_intention ? std::to_string(*msg.generating_intention) : "-1";
        out.push_back('\n');
    }
    write_text_file(path, out);
}

Corpus read_corpus(const LanguageSpec& spec, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path, 0);
    Corpus corpus;
    corpus.spec_fingerprint = spec.fingerprint();
    std::string line;
    long line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) throw DataError("empty corpus line", line_number);
        if (spec.length_mode == LengthMode::fixed &&
            static_cast<int>(line.size()) != spec.message_length)
            throw DataError("corpus line length " + std::to_string(line.size()) +
                                " differs from the message length " +
                                std::to_string(spec.message_length),
                            line_number);
        Message msg;
        msg.symbols.reserve(line.size() + 1);
        for (char c : line) {
            const int idx = c - 'a';
            if (idx < 0 || idx >= spec.alphabet_size)
                throw DataError(std::string("invalid character '") + c + "'", line_number);
            msg.symbols.push_back(static_cast<Symbol>(idx));
        }
        msg.symbols.push_back(spec.newline_symbol());
        corpus.messages.push_back(std::move(msg));
    }
    return corpus;
}

namespace {

nlohmann::json spec_body(const LanguageSpec& spec) {
    nlohmann::json j;
    j["format"] = "llsim-spec";
    j["version"] = 1;
    j["num_intentions"] = spec.num_intentions;
    j["alphabet_size"] = spec.alphabet_size;
    j["letters_per_intention"] = spec.letters_per_intention;
    j["message_length"] = spec.message_length;
    j["noise_level"] = spec.noise_level;
    j["seed"] = spec.seed;
    j["length_mode"] = spec.length_mode == LengthMode::fixed ? "fixed" : "geometric";
    j["end_probability"] = spec.end_probability;
    j["prior_initial"] = spec.prior_initial;
    j["prior_transition"] = spec.prior_transition;
    j["emission_initial"] = spec.emission_initial;
    j["emission_transition"] = spec.emission_transition;
    return j;
}

}  // namespace

std::string LanguageSpec::fingerprint() const {
    return sha256_hex(spec_body(*this).dump());
}

std::string spec_to_json(const LanguageSpec& spec) {
    nlohmann::json j = spec_body(spec);
    j["fingerprint"] = spec.fingerprint();
    return j.dump(2) + "\n";
}

void save_spec(const LanguageSpec& spec, const std::string& path) {
    write_text_file(path, spec_to_json(spec));
}

LanguageSpec load_spec(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("spec file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object() || j.value("format", "") != "llsim-spec")
        throw FormatError("not a language spec file: " + path);
    if (j.value("version", -1) != 1)
        throw VersionError("unsupported spec version in " + path);
    try {
        LanguageSpec spec;
        spec.num_intentions = j.at("num_intentions").get<int>();
        spec.alphabet_size = j.at("alphabet_size").get<int>();
        spec.letters_per_intention = j.at("letters_per_intention").get<int>();
        spec.message_length = j.at("message_length").get<int>();
        spec.noise_level = j.at("noise_level").get<double>();
        spec.seed = j.at("seed").get<std::uint64_t>();
        spec.length_mode =
            j.at("length_mode").get<std::string>() == "fixed" ? LengthMode::fixed
                                                              : LengthMode::geometric;
        spec.end_probability = j.at("end_probability").get<double>();
        spec.prior_initial = j.at("prior_initial").get<std::vector<double>>();
        spec.prior_transition = j.at("prior_transition").get<std::vector<std::vector<double>>>();
        spec.emission_initial = j.at("emission_initial").get<std::vector<std::vector<double>>>();
        spec.emission_transition =
            j.at("emission_transition").get<std::vector<std::vector<std::vector<double>>>>();
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed spec file: " + std::string(e.what()));
    }
}

}  // namespace llsim
