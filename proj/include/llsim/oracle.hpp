#pragma once

#include <optional>
#include <span>
#include <vector>

#include "llsim/langspec.hpp"

namespace llsim {

/// Exact distribution over the K intentions given some observed text.
struct PosteriorVector {
    std::vector<double> probs;  // length K, sums to 1 within 1e-9
    double log_evidence = 0.0;  // log q(observations)
};

struct AmbiguityReport {
    double epsilon = 0.0;       // 1 - max posterior probability
    int argmax_intention = 0;   // ties broken toward the lowest index
    std::optional<bool> matches_generating;
};

/// How the intention evolves when the filter crosses a message boundary.
enum class BoundaryPolicy {
    chain,  ///< apply prior_transition (the generative chain)
    hold,   ///< keep the current posterior (tied / clamped intention)
};

/// Forward-filtering state over the K intentions. The posterior is kept in
/// linear space and renormalized every step (zero entries stay exactly zero);
/// evidence accumulates as a sum of per-step log scale factors.
class Filter {
  public:
    Filter(const LanguageSpec& spec, BoundaryPolicy boundary);
    Filter(const LanguageSpec& spec, BoundaryPolicy boundary, std::vector<double> posterior);

    /// Exact next-symbol distribution over the V+1 model symbols.
    std::vector<double> predict() const;

    /// Advances the filter by one observed symbol. Throws InvalidPrefix when
    /// the symbol cannot follow at the current position, DegenerateEvidence
    /// when every intention assigns it probability zero.
    void push(Symbol s);

    void push_all(std::span<const Symbol> history) {
        for (Symbol s : history) push(s);
    }

    const std::vector<double>& posterior() const { return posterior_; }
    double log_evidence() const { return log_evidence_; }
    int position() const { return position_; }

  private:
    const LanguageSpec* spec_;
    BoundaryPolicy boundary_;
    std::vector<double> posterior_;
    double log_evidence_ = 0.0;
    int position_ = 0;       // letters emitted in the current message
    Symbol last_symbol_ = 0; // valid when position_ > 0

    const std::vector<double>& emission_row(int intention) const;
};

/// log q(x | intention) for a complete message (trailing newline) or a
/// message prefix (letters only). -inf marks a zero-probability path.
double message_loglik(const LanguageSpec& spec, const Message& x, int intention);

/// Bayes posterior over intentions for one message (or prefix), with the
/// stationary distribution of the prior chain as prior. Accumulation is in
/// log space via log-sum-exp. Throws DegenerateEvidence if the message is
/// impossible under every intention.
PosteriorVector posterior_single(const LanguageSpec& spec, const Message& x);

/// Posterior over one shared intention for several independently generated
/// messages: probs[i] proportional to stationary[i] * prod_j q(x_j | i).
PosteriorVector posterior_tied(const LanguageSpec& spec, std::span<const Message> messages);

/// log q(x_1, ..., x_m) under the intention chain (forward algorithm across
/// message boundaries, starting from the stationary distribution so the m=1
/// case matches posterior_single's evidence).
double sequence_logmarginal(const LanguageSpec& spec, std::span<const Message> messages);

/// Exact next-symbol distribution given a symbol history (complete messages
/// followed by at most one partial message).
std::vector<double> next_symbol_marginal(const LanguageSpec& spec,
                                         std::span<const Symbol> history);

/// Same, but with the intention pinned to `intention` for the message the
/// history ends in; across later boundaries the posterior either stays
/// clamped (hold) or evolves through the chain (chain).
std::vector<double> next_symbol_conditioned(const LanguageSpec& spec,
                                            std::span<const Symbol> history, int intention,
                                            BoundaryPolicy boundary = BoundaryPolicy::hold);

/// Ambiguity of a message: epsilon = 1 - max posterior. Also re-checks the
/// dominance-ratio identity q(best, x)/q(rest, x) >= (1-eps)/eps as a guard
/// on the arithmetic. `generating` (when known) sets matches_generating.
AmbiguityReport ambiguity(const LanguageSpec& spec, const Message& x,
                          std::optional<int> generating = std::nullopt);

/// m-step intention transition matrix (exact power of prior_transition).
std::vector<std::vector<double>> intention_hop(const LanguageSpec& spec, int steps);

/// Stationary distribution of prior_transition (power iteration, 1e-12).
std::vector<double> stationary_distribution(const LanguageSpec& spec);

struct CalibrationResult {
    double eta = 0.0;
    double measured_mean_epsilon = 0.0;
};

/// Finds a noise level whose measured mean per-message ambiguity hits the
/// target, by bisection on eta (mean ambiguity grows with eta). Measurement
/// uses `num_messages` sampled messages per probe with seeds derived from
/// (config.seed, calibration stream), so the result is deterministic.
CalibrationResult calibrate_noise_level(GeneratorConfig config, double target_mean_epsilon,
                                        int num_messages = 2000, double tolerance = 0.005,
                                        int max_iterations = 48);

}  // namespace llsim
