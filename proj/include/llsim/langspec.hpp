#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "llsim/rng.hpp"

namespace llsim {

/// Symbol index. Letters are 0..V-1, the newline terminator is V, and V+1 is
/// the reserved begin-of-message marker used only in model feature contexts.
using Symbol = std::uint8_t;

enum class LengthMode {
    fixed,      ///< every message is exactly L letters plus a newline
    geometric,  ///< after each letter the message ends with probability end_probability
};

enum class CorpusMode {
    chain,    ///< intentions evolve through the prior transition between messages
    clamped,  ///< every message shares one fixed intention
};

struct GeneratorConfig {
    int num_intentions = 6;
    int alphabet_size = 18;
    int letters_per_intention = 3;
    int message_length = 20;
    double noise_level = 0.0;
    std::uint64_t seed = 42;
    LengthMode length_mode = LengthMode::fixed;
    double end_probability = 1.0 / 21.0;  // geometric mode only
};

/// Full parameterization of the two-level Markov source: an intention chain
/// whose states each drive a letter-level Markov chain.
struct LanguageSpec {
    int num_intentions = 0;       // K
    int alphabet_size = 0;        // V (letters only; newline has index V)
    int letters_per_intention = 0;
    int message_length = 0;       // L
    double noise_level = 0.0;     // eta
    std::uint64_t seed = 0;
    LengthMode length_mode = LengthMode::fixed;
    double end_probability = 0.0;

    std::vector<double> prior_initial;                           // K
    std::vector<std::vector<double>> prior_transition;           // K x K
    std::vector<std::vector<double>> emission_initial;           // K x V
    std::vector<std::vector<std::vector<double>>> emission_transition;  // K x V x V

    Symbol newline_symbol() const { return static_cast<Symbol>(alphabet_size); }
    Symbol begin_marker() const { return static_cast<Symbol>(alphabet_size + 1); }
    int model_alphabet() const { return alphabet_size + 1; }  // letters + newline

    /// First dedicated letter of an intention's contiguous block.
    int block_start(int intention) const { return intention * letters_per_intention; }
    bool in_block(int intention, int letter) const {
        return letter >= block_start(intention) &&
               letter < block_start(intention) + letters_per_intention;
    }

    /// Throws ConfigError unless all rows are stochastic within 1e-12.
    void validate() const;

    /// SHA-256 of the canonical JSON serialization (fingerprint field excluded).
    std::string fingerprint() const;
};

struct Message {
    std::vector<Symbol> symbols;  // letters, then exactly one trailing newline
    std::optional<int> generating_intention;

    bool terminated(const LanguageSpec& spec) const {
        return !symbols.empty() && symbols.back() == spec.newline_symbol();
    }
    /// Letters only (excludes a trailing newline if present).
    int letter_count(const LanguageSpec& spec) const {
        return static_cast<int>(symbols.size()) - (terminated(spec) ? 1 : 0);
    }
};

struct Corpus {
    std::vector<Message> messages;
    CorpusMode mode = CorpusMode::chain;
    std::string spec_fingerprint;

    std::size_t total_symbols() const {
        std::size_t n = 0;
        for (const auto& m : messages) n += m.symbols.size();
        return n;
    }
};

/// Builds the language specification deterministically from the config.
/// Base emission rows are Dirichlet(1,...,1) draws over each intention's
/// dedicated letter block, then mixed with the uniform distribution over all
/// V letters with weight eta. Throws ConfigError on out-of-range settings.
LanguageSpec build_spec(const GeneratorConfig& config);

/// Samples `count` intentions. Chain mode starts from prior_initial and walks
/// prior_transition; clamped mode repeats one intention (fixed_intention if
/// given, otherwise a single draw from prior_initial).
std::vector<int> sample_intention_path(const LanguageSpec& spec, CorpusMode mode, int count,
                                       SplitMix64& rng,
                                       std::optional<int> fixed_intention = std::nullopt);

/// Samples one message under the given intention; the generating intention is
/// recorded on the message.
Message sample_message(const LanguageSpec& spec, int intention, SplitMix64& rng);

/// Samples a corpus. Per-message randomness comes from streams derived from
/// (base, message index), so generation is order-deterministic and safe to
/// parallelize by message.
Corpus sample_corpus(const LanguageSpec& spec, int num_messages, CorpusMode mode,
                     SplitMix64& rng, std::optional<int> fixed_intention = std::nullopt);

char symbol_to_char(const LanguageSpec& spec, Symbol s);
Symbol char_to_symbol(const LanguageSpec& spec, char c);

/// One message per line, letters 'a'.., '\n' as terminator.
std::string corpus_to_text(const LanguageSpec& spec, const Corpus& corpus);
void write_corpus(const LanguageSpec& spec, const Corpus& corpus, const std::string& path);
/// One integer per line, aligned with corpus lines.
void write_intention_sidecar(const Corpus& corpus, const std::string& path);

/// Parses a corpus text file against the spec's alphabet and framing.
/// Throws DataError (with line number) on bad characters or, in fixed mode,
/// wrong line lengths.
Corpus read_corpus(const LanguageSpec& spec, const std::string& path);

std::string spec_to_json(const LanguageSpec& spec);
void save_spec(const LanguageSpec& spec, const std::string& path);
LanguageSpec load_spec(const std::string& path);

}  // namespace llsim
