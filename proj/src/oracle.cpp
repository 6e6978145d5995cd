#include "llsim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "llsim/errors.hpp"

namespace llsim {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> values) {
    double mx = kNegInf;
    for (double v : values) mx = std::max(mx, v);
    if (mx == kNegInf) return kNegInf;
    double s = 0.0;
    for (double v : values) s += std::exp(v - mx);
    return mx + std::log(s);
}

/// Splits a message into its letter prefix and framing kind.
struct Framing {
    std::span<const Symbol> letters;
    bool complete = false;
};

Framing parse_framing(const LanguageSpec& spec, const Message& x) {
    const Symbol newline = spec.newline_symbol();
    Framing f;
    f.complete = !x.symbols.empty() && x.symbols.back() == newline;
    const std::size_t letter_count = x.symbols.size() - (f.complete ? 1 : 0);
    for (std::size_t i = 0; i < letter_count; ++i) {
        if (x.symbols[i] == newline)
            throw MalformedMessage("terminator in the middle of a message");
        if (x.symbols[i] > newline)
            throw MalformedMessage("symbol outside the spec alphabet");
    }
    if (spec.length_mode == LengthMode::fixed) {
        if (f.complete && static_cast<int>(letter_count) != spec.message_length)
            throw MalformedMessage("terminated message does not have the fixed length");
        if (!f.complete && static_cast<int>(letter_count) > spec.message_length)
            throw MalformedMessage("message prefix longer than the fixed length");
    }
    if (f.complete && letter_count == 0)
        throw MalformedMessage("terminated message with no letters");
    f.letters = std::span<const Symbol>(x.symbols.data(), letter_count);
    return f;
}

/// Per-intention joint log weights log(stationary * likelihood) and evidence.
struct JointLogs {
    std::vector<double> log_weights;
    double log_evidence = kNegInf;
};

JointLogs joint_logs(const LanguageSpec& spec, const Message& x) {
    const std::vector<double> prior = stationary_distribution(spec);
    JointLogs out;
    out.log_weights.resize(static_cast<std::size_t>(spec.num_intentions));
    for (int theta = 0; theta < spec.num_intentions; ++theta)
        out.log_weights[static_cast<std::size_t>(theta)] =
            std::log(prior[static_cast<std::size_t>(theta)]) + message_loglik(spec, x, theta);
    out.log_evidence = log_sum_exp(out.log_weights);
    return out;
}

PosteriorVector normalize_joint(std::span<const double> log_weights, double log_evidence) {
    if (log_evidence == kNegInf)
        throw DegenerateEvidence("observation impossible under every intention");
    PosteriorVector post;
    post.log_evidence = log_evidence;
    post.probs.resize(log_weights.size());
    for (std::size_t i = 0; i < log_weights.size(); ++i)
        post.probs[i] = std::exp(log_weights[i] - log_evidence);
    return post;
}

}  // namespace

double message_loglik(const LanguageSpec& spec, const Message& x, int intention) {
    if (intention < 0 || intention >= spec.num_intentions)
        throw ConfigError("intention out of range");
    const Framing f = parse_framing(spec, x);
    if (f.letters.empty()) return f.complete ? kNegInf : 0.0;

    const auto& init = spec.emission_initial[static_cast<std::size_t>(intention)];
    const auto& trans = spec.emission_transition[static_cast<std::size_t>(intention)];
    double lp = std::log(init[f.letters[0]]);
    for (std::size_t t = 1; t < f.letters.size(); ++t)
        lp += std::log(trans[f.letters[t - 1]][f.letters[t]]);
    if (spec.length_mode == LengthMode::geometric) {
        const double cont = std::log1p(-spec.end_probability);
        lp += cont * static_cast<double>(f.letters.size() - 1);
        if (f.complete) lp += std::log(spec.end_probability);
    }
    // Fixed mode: the terminator is deterministic at position L, factor 1.
    return lp;
}

PosteriorVector posterior_single(const LanguageSpec& spec, const Message& x) {
    const JointLogs jl = joint_logs(spec, x);
    return normalize_joint(jl.log_weights, jl.log_evidence);
}

PosteriorVector posterior_tied(const LanguageSpec& spec, std::span<const Message> messages) {
    if (messages.empty()) throw ConfigError("posterior_tied needs at least one message");
    const std::vector<double> prior = stationary_distribution(spec);
    std::vector<double> lw(static_cast<std::size_t>(spec.num_intentions));
    for (int theta = 0; theta < spec.num_intentions; ++theta) {
        double acc = std::log(prior[static_cast<std::size_t>(theta)]);
        for (const Message& msg : messages) acc += message_loglik(spec, msg, theta);
        lw[static_cast<std::size_t>(theta)] = acc;
    }
    return normalize_joint(lw, log_sum_exp(lw));
}

double sequence_logmarginal(const LanguageSpec& spec, std::span<const Message> messages) {
    if (messages.empty()) throw ConfigError("empty message sequence");
    const int k = spec.num_intentions;
    std::vector<double> alpha = stationary_distribution(spec);
    std::vector<double> lw(static_cast<std::size_t>(k));
    double total = 0.0;
    for (std::size_t j = 0; j < messages.size(); ++j) {
        for (int theta = 0; theta < k; ++theta) {
            const double a = alpha[static_cast<std::size_t>(theta)];
            lw[static_cast<std::size_t>(theta)] =
                (a > 0.0 ? std::log(a) : kNegInf) + message_loglik(spec, messages[j], theta);
        }
        const double step = log_sum_exp(lw);
        if (step == kNegInf)
            throw DegenerateEvidence("sequence impossible under every intention path");
        total += step;
        for (int theta = 0; theta < k; ++theta)
            alpha[static_cast<std::size_t>(theta)] =
                std::exp(lw[static_cast<std::size_t>(theta)] - step);
        if (j + 1 < messages.size()) {
            std::vector<double> next(static_cast<std::size_t>(k), 0.0);
            for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b)
                    next[static_cast<std::size_t>(b)] +=
                        alpha[static_cast<std::size_t>(a)] *
                        spec.prior_transition[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            alpha = std::move(next);
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Filter
// ---------------------------------------------------------------------------

Filter::Filter(const LanguageSpec& spec, BoundaryPolicy boundary)
    : Filter(spec, boundary, stationary_distribution(spec)) {}

Filter::Filter(const LanguageSpec& spec, BoundaryPolicy boundary, std::vector<double> posterior)
    : spec_(&spec), boundary_(boundary), posterior_(std::move(posterior)) {
    if (static_cast<int>(posterior_.size()) != spec.num_intentions)
        throw ConfigError("posterior size does not match the intention count");
}

const std::vector<double>& Filter::emission_row(int intention) const {
    if (position_ == 0) return spec_->emission_initial[static_cast<std::size_t>(intention)];
    return spec_->emission_transition[static_cast<std::size_t>(intention)][last_symbol_];
}

std::vector<double> Filter::predict() const {
    const int v = spec_->alphabet_size;
    std::vector<double> out(static_cast<std::size_t>(v) + 1, 0.0);
    if (spec_->length_mode == LengthMode::fixed && position_ == spec_->message_length) {
        out[static_cast<std::size_t>(v)] = 1.0;
        return out;
    }
    double letter_scale = 1.0;
    if (spec_->length_mode == LengthMode::geometric && position_ > 0) {
        out[static_cast<std::size_t>(v)] = spec_->end_probability;
        letter_scale = 1.0 - spec_->end_probability;
    }
    for (int theta = 0; theta < spec_->num_intentions; ++theta) {
        const double w = posterior_[static_cast<std::size_t>(theta)];
        if (w <= 0.0) continue;
        const auto& row = emission_row(theta);
        for (int s = 0; s < v; ++s) out[static_cast<std::size_t>(s)] += w * row[static_cast<std::size_t>(s)];
    }
    if (letter_scale != 1.0)
        for (int s = 0; s < v; ++s) out[static_cast<std::size_t>(s)] *= letter_scale;
    return out;
}

void Filter::push(Symbol s) {
    const Symbol newline = spec_->newline_symbol();
    if (s > newline) throw InvalidPrefix("symbol outside the spec alphabet");
    if (s == newline) {
        if (spec_->length_mode == LengthMode::fixed) {
            if (position_ != spec_->message_length)
                throw InvalidPrefix("terminator before the fixed message length");
            // Deterministic terminator: likelihood factor 1 for every intention.
        } else {
            if (position_ == 0) throw InvalidPrefix("terminator on an empty message");
            log_evidence_ += std::log(spec_->end_probability);
        }
        if (boundary_ == BoundaryPolicy::chain) {
            const int k = spec_->num_intentions;
            std::vector<double> next(static_cast<std::size_t>(k), 0.0);
            for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b)
                    next[static_cast<std::size_t>(b)] +=
                        posterior_[static_cast<std::size_t>(a)] *
                        spec_->prior_transition[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            posterior_ = std::move(next);
        }
        position_ = 0;
        return;
    }
    if (spec_->length_mode == LengthMode::fixed && position_ == spec_->message_length)
        throw InvalidPrefix("letter at the terminator position");
    double evidence = 0.0;
    for (int theta = 0; theta < spec_->num_intentions; ++theta) {
        const double w = posterior_[static_cast<std::size_t>(theta)];
        if (w <= 0.0) {
            posterior_[static_cast<std::size_t>(theta)] = 0.0;
            continue;
        }
        const double lik = emission_row(theta)[s];
        posterior_[static_cast<std::size_t>(theta)] = w * lik;
        evidence += w * lik;
    }
    if (evidence <= 0.0) throw DegenerateEvidence("symbol impossible under every intention");
    for (double& w : posterior_) w /= evidence;
    if (spec_->length_mode == LengthMode::geometric && position_ > 0)
        log_evidence_ += std::log1p(-spec_->end_probability);
    log_evidence_ += std::log(evidence);
    ++position_;
    last_symbol_ = s;
}

std::vector<double> next_symbol_marginal(const LanguageSpec& spec,
                                         std::span<const Symbol> history) {
    Filter filter(spec, BoundaryPolicy::chain);
    filter.push_all(history);
    return filter.predict();
}

std::vector<double> next_symbol_conditioned(const LanguageSpec& spec,
                                            std::span<const Symbol> history, int intention,
                                            BoundaryPolicy boundary) {
    if (intention < 0 || intention >= spec.num_intentions)
        throw ConfigError("intention out of range");
    std::vector<double> onehot(static_cast<std::size_t>(spec.num_intentions), 0.0);
    onehot[static_cast<std::size_t>(intention)] = 1.0;
    Filter filter(spec, boundary, std::move(onehot));
    filter.push_all(history);
    return filter.predict();
}

AmbiguityReport ambiguity(const LanguageSpec& spec, const Message& x,
                          std::optional<int> generating) {
    const JointLogs jl = joint_logs(spec, x);
    const PosteriorVector post = normalize_joint(jl.log_weights, jl.log_evidence);
    AmbiguityReport report;
    report.argmax_intention = static_cast<int>(
        std::max_element(post.probs.begin(), post.probs.end()) - post.probs.begin());
    report.epsilon = 1.0 - post.probs[static_cast<std::size_t>(report.argmax_intention)];
    if (generating) report.matches_generating = (*generating == report.argmax_intention);

    // Dominance-ratio guard: log[q(best,x)/q(rest,x)] must match
    // log[(1-eps)/eps] computed from the same joint weights.
    std::vector<double> rest = jl.log_weights;
    rest[static_cast<std::size_t>(report.argmax_intention)] = kNegInf;
    const double log_rest = log_sum_exp(rest);
    if (log_rest != kNegInf) {
        const double log_lhs = jl.log_weights[static_cast<std::size_t>(report.argmax_intention)] - log_rest;
        const double log_eps = log_rest - jl.log_evidence;
        const double log_rhs = std::log1p(-std::exp(log_eps)) - log_eps;
        if (log_lhs < log_rhs - 1e-9)
            throw Error("dominance-ratio identity violated; posterior arithmetic is broken");
    }
    return report;
}

std::vector<std::vector<double>> intention_hop(const LanguageSpec& spec, int steps) {
    if (steps < 1) throw ConfigError("hop step count must be >= 1");
    const int k = spec.num_intentions;
    std::vector<std::vector<double>> result = spec.prior_transition;
    for (int s = 1; s < steps; ++s) {
        std::vector<std::vector<double>> next(
            static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k), 0.0));
        for (int a = 0; a < k; ++a)
            for (int c = 0; c < k; ++c) {
                const double w = result[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
                if (w == 0.0) continue;
                for (int b = 0; b < k; ++b)
                    next[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] +=
                        w * spec.prior_transition[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)];
            }
        result = std::move(next);
    }
    return result;
}

std::vector<double> stationary_distribution(const LanguageSpec& spec) {
    const int k = spec.num_intentions;
    std::vector<double> v(static_cast<std::size_t>(k), 1.0 / k);
    for (int iter = 0; iter < 100000; ++iter) {
        std::vector<double> next(static_cast<std::size_t>(k), 0.0);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
                next[static_cast<std::size_t>(b)] +=
                    v[static_cast<std::size_t>(a)] *
                    spec.prior_transition[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        const double total = std::accumulate(next.begin(), next.end(), 0.0);
        double diff = 0.0;
        for (int i = 0; i < k; ++i) {
            next[static_cast<std::size_t>(i)] /= total;
            diff += std::abs(next[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(i)]);
        }
        v = std::move(next);
        if (diff < 1e-12) break;
    }
    return v;
}

CalibrationResult calibrate_noise_level(GeneratorConfig config, double target_mean_epsilon,
                                        int num_messages, double tolerance,
                                        int max_iterations) {
    if (target_mean_epsilon < 0.0 || target_mean_epsilon >= 1.0)
        throw ConfigError("target ambiguity outside [0,1)");

    const auto probe = [&](double eta) {
        config.noise_level = eta;
        const LanguageSpec spec = build_spec(config);
        SplitMix64 rng(derive_seed(config.seed, streams::calibration));
        double total = 0.0;
        for (int i = 0; i < num_messages; ++i) {
            const int theta = static_cast<int>(rng.next_below(
                static_cast<std::uint64_t>(spec.num_intentions)));
            const Message msg = sample_message(spec, theta, rng);
            total += ambiguity(spec, msg, theta).epsilon;
        }
        return total / num_messages;
    };

    if (target_mean_epsilon == 0.0) return {0.0, probe(0.0)};

    double lo = 0.0;
    double hi = 0.98;
    double hi_measured = probe(hi);
    if (hi_measured < target_mean_epsilon) return {hi, hi_measured};

    CalibrationResult best{hi, hi_measured};
    for (int iter = 0; iter < max_iterations; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double measured = probe(mid);
        if (std::abs(measured - target_mean_epsilon) <
            std::abs(best.measured_mean_epsilon - target_mean_epsilon))
            best = {mid, measured};
        if (std::abs(measured - target_mean_epsilon) <= tolerance) break;
        if (measured < target_mean_epsilon)
            lo = mid;
        else
            hi = mid;
    }
    return best;
}

}  // namespace llsim
