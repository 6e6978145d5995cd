#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "llsim/langspec.hpp"
#include "llsim/oracle.hpp"

namespace llsim {

/// Maximum context order supported by the packed context key.
inline constexpr int kMaxContextOrder = 6;

/// Feature context for the count model: the last k symbols of the current
/// message (front-padded with the begin marker at message starts; windows do
/// not cross newlines) plus the position in the message capped at L.
struct FeatureContext {
    std::array<Symbol, kMaxContextOrder> last_symbols{};  // [0..k)
    int position = 0;

    /// Packs (symbols, position) into one 64-bit key: one byte per context
    /// symbol, low byte is the capped position. Requires k <= 6.
    std::uint64_t key(int k) const {
        std::uint64_t v = 0;
        for (int i = 0; i < k; ++i) v = (v << 8) | last_symbols[static_cast<std::size_t>(i)];
        return (v << 8) | static_cast<std::uint64_t>(position);
    }
};

/// Incremental context tracker shared by training and prediction, so the two
/// sides extract bit-identical features.
class ContextTracker {
  public:
    ContextTracker(int k, int position_cap, Symbol newline, Symbol begin)
        : k_(k), cap_(position_cap), newline_(newline), begin_(begin) {
        reset();
    }

    void reset() {
        ctx_.last_symbols.fill(begin_);
        ctx_.position = 0;
    }

    void push(Symbol s) {
        if (s == newline_) {
            reset();
            return;
        }
        for (int i = 0; i + 1 < k_; ++i)
            ctx_.last_symbols[static_cast<std::size_t>(i)] =
                ctx_.last_symbols[static_cast<std::size_t>(i + 1)];
        if (k_ > 0) ctx_.last_symbols[static_cast<std::size_t>(k_ - 1)] = s;
        if (ctx_.position < cap_) ++ctx_.position;
    }

    const FeatureContext& context() const { return ctx_; }
    std::uint64_t key() const { return ctx_.key(k_); }

  private:
    int k_;
    int cap_;
    Symbol newline_;
    Symbol begin_;
    FeatureContext ctx_{};
};

struct ContextKeyHash {
    std::size_t operator()(std::uint64_t key) const noexcept {
        return static_cast<std::size_t>(mix64(key));
    }
};

/// Smoothed autoregressive next-symbol count model. Training is one
/// deterministic counting pass; prediction is (count + lambda) normalized, so
/// every predicted distribution is strictly positive.
struct DensityModel {
    int k = 1;
    double lambda = 0.1;
    int alphabet_size = 0;    // V; model alphabet is V+1 (letters + newline)
    int message_length = 0;   // position cap L
    std::uint64_t total_training_symbols = 0;
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>, ContextKeyHash> counts;

    int model_alphabet() const { return alphabet_size + 1; }
    Symbol newline_symbol() const { return static_cast<Symbol>(alphabet_size); }
    Symbol begin_marker() const { return static_cast<Symbol>(alphabet_size + 1); }

    ContextTracker make_tracker() const {
        return ContextTracker(k, message_length, newline_symbol(), begin_marker());
    }

    /// Smoothed distribution for a packed context key. Unseen contexts give
    /// the uniform distribution over the V+1 model symbols.
    std::vector<double> predict(std::uint64_t context_key) const;
};

/// Counts every (context, next symbol) event over the corpus in one pass.
/// Throws EmptyCorpus when there are no messages, ConfigError for k < 1,
/// k > 6, or lambda <= 0.
DensityModel train(const Corpus& corpus, int k, double lambda, int alphabet_size,
                   int message_length);

/// Next-symbol distribution after an arbitrary symbol history.
std::vector<double> next_symbol(const DensityModel& model, std::span<const Symbol> history);

/// Chain-rule log probability of a symbol sequence. Finite for lambda > 0.
double sequence_logprob(const DensityModel& model, std::span<const Symbol> sequence);

/// Average negative log likelihood per symbol (nats), each message scored as
/// its own sequence. Throws EmptyCorpus.
double cross_entropy(const DensityModel& model, const Corpus& corpus);

/// Predictor callback used by the generic gap evaluator: full prefix of the
/// current message -> next-symbol distribution.
using NextSymbolFn = std::function<std::vector<double>(std::span<const Symbol>)>;

/// Mean total-variation distance between a predictor and the exact oracle
/// next-symbol distribution, averaged over every position of every message
/// (each message evaluated standalone from the stationary prior).
double mean_tv_gap(const NextSymbolFn& predictor, const LanguageSpec& spec,
                   const Corpus& eval_set);
double mean_tv_gap(const DensityModel& model, const LanguageSpec& spec, const Corpus& eval_set);

/// Versioned JSON serialization; save followed by load reproduces bit-exact
/// predictions. load throws FormatError / VersionError.
void save_model(const DensityModel& model, const std::string& path);
DensityModel load_model(const std::string& path);

}  // namespace llsim
