#include "llsim/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "llsim/errors.hpp"
#include "llsim/io.hpp"

namespace llsim {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double total_variation(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

/// Partial message: `letters` letters sampled under one intention.
Message sample_prefix(const LanguageSpec& spec, int intention, int letters, SplitMix64& rng) {
    Message msg;
    msg.generating_intention = intention;
    const auto& init = spec.emission_initial[static_cast<std::size_t>(intention)];
    const auto& trans = spec.emission_transition[static_cast<std::size_t>(intention)];
    int letter = sample_categorical(rng, init);
    msg.symbols.push_back(static_cast<Symbol>(letter));
    for (int t = 1; t < letters; ++t) {
        letter = sample_categorical(rng, trans[static_cast<std::size_t>(letter)]);
        msg.symbols.push_back(static_cast<Symbol>(letter));
    }
    return msg;
}

int uniform_in(SplitMix64& rng, int lo, int hi) {
    return lo + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(hi - lo + 1)));
}

class OracleSession final : public LmSession {
  public:
    explicit OracleSession(Filter filter) : filter_(std::move(filter)) {}
    std::vector<double> predict() const override { return filter_.predict(); }
    void push(Symbol s) override { filter_.push(s); }
    std::unique_ptr<LmSession> clone() const override {
        return std::make_unique<OracleSession>(*this);
    }

  private:
    Filter filter_;
};

class TrainedSession final : public LmSession {
  public:
    explicit TrainedSession(const DensityModel& model)
        : model_(&model), tracker_(model.make_tracker()) {}
    std::vector<double> predict() const override { return model_->predict(tracker_.key()); }
    void push(Symbol s) override { tracker_.push(s); }
    std::unique_ptr<LmSession> clone() const override {
        return std::make_unique<TrainedSession>(*this);
    }

  private:
    const DensityModel* model_;
    ContextTracker tracker_;
};

/// Clamped-intention conditional q(. | history tail, theta) as a session.
std::unique_ptr<LmSession> open_conditioned(const LanguageSpec& spec, int intention) {
    std::vector<double> onehot(static_cast<std::size_t>(spec.num_intentions), 0.0);
    onehot[static_cast<std::size_t>(intention)] = 1.0;
    return std::make_unique<OracleSession>(
        Filter(spec, BoundaryPolicy::hold, std::move(onehot)));
}

}  // namespace

std::vector<double> LmBackend::next_symbol(std::span<const Symbol> history) const {
    auto session = open();
    for (Symbol s : history) session->push(s);
    return session->predict();
}

OracleBackend::OracleBackend(const LanguageSpec& spec, BoundaryPolicy boundary)
    : spec_(&spec), boundary_(boundary) {}

std::unique_ptr<LmSession> OracleBackend::open() const {
    return std::make_unique<OracleSession>(Filter(*spec_, boundary_));
}

std::string OracleBackend::name() const {
    return boundary_ == BoundaryPolicy::chain ? "oracle" : "oracle-tied";
}

std::unique_ptr<LmSession> TrainedBackend::open() const {
    return std::make_unique<TrainedSession>(*model_);
}

double backend_cross_entropy(const LmBackend& backend, const LanguageSpec& spec,
                             const Corpus& corpus) {
    if (corpus.messages.empty() || corpus.total_symbols() == 0)
        throw EmptyCorpus("evaluation corpus has no symbols");
    (void)spec;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& msg : corpus.messages) {
        auto session = backend.open();
        for (Symbol s : msg.symbols) {
            total += std::log(session->predict()[s]);
            session->push(s);
            ++n;
        }
    }
    return -total / static_cast<double>(n);
}

double backend_mean_tv_gap(const LmBackend& backend, const LanguageSpec& spec,
                           const Corpus& eval_set) {
    if (eval_set.messages.empty()) throw EmptyCorpus("evaluation corpus has no messages");
    double total = 0.0;
    std::size_t positions = 0;
    for (const auto& msg : eval_set.messages) {
        auto session = backend.open();
        Filter oracle(spec, BoundaryPolicy::chain);
        for (Symbol s : msg.symbols) {
            total += total_variation(session->predict(), oracle.predict());
            ++positions;
            session->push(s);
            oracle.push(s);
        }
    }
    return total / static_cast<double>(positions);
}

BoundCheck make_bound_check(double measured, double bound) {
    BoundCheck check;
    check.measured_deviation = measured;
    check.bound_value = bound;
    check.satisfied = measured <= bound + kBoundSlack;
    return check;
}

// ---------------------------------------------------------------------------
// Composition of independent messages under a shared intention
// ---------------------------------------------------------------------------

std::vector<BoundCheck> check_composition(const LanguageSpec& spec, int trials,
                                          SplitMix64& rng) {
    std::vector<BoundCheck> checks;
    checks.reserve(static_cast<std::size_t>(trials));
    const std::uint64_t base = rng.next_u64();
    for (int trial = 0; trial < trials; ++trial) {
        SplitMix64 trng(derive_seed(derive_seed(base, streams::trial),
                                    static_cast<std::uint64_t>(trial)));
        const int truth = static_cast<int>(trng.next_below(
            static_cast<std::uint64_t>(spec.num_intentions)));
        const Message x1 = sample_message(spec, truth, trng);
        const Message x2 = sample_message(spec, truth, trng);
        const PosteriorVector p1 = posterior_single(spec, x1);
        const PosteriorVector p2 = posterior_single(spec, x2);
        const double eps1 = 1.0 - p1.probs[static_cast<std::size_t>(truth)];
        const double eps2 = 1.0 - p2.probs[static_cast<std::size_t>(truth)];

        // Probability that the shared intention read off the pair is wrong:
        // sum over wrong intentions of the product of the two posteriors.
        double deviation = 0.0;
        for (int i = 0; i < spec.num_intentions; ++i)
            if (i != truth)
                deviation += p1.probs[static_cast<std::size_t>(i)] *
                             p2.probs[static_cast<std::size_t>(i)];

        BoundCheck check = make_bound_check(deviation, eps1 * eps2);
        check.trial = trial;
        check.eta = spec.noise_level;
        check.part_epsilons = {eps1, eps2};
        const std::array<Message, 2> pair{x1, x2};
        check.tied_residual =
            1.0 - posterior_tied(spec, pair).probs[static_cast<std::size_t>(truth)];
        checks.push_back(std::move(check));
    }
    return checks;
}

// ---------------------------------------------------------------------------
// Prompt-continuation bound
// ---------------------------------------------------------------------------

std::vector<BoundCheck> check_understanding(const LmBackend& backend, const LanguageSpec& spec,
                                            const UnderstandingOptions& options,
                                            SplitMix64& rng) {
    std::vector<BoundCheck> checks;
    checks.reserve(static_cast<std::size_t>(options.trials));
    const std::uint64_t base = rng.next_u64();
    for (int trial = 0; trial < options.trials; ++trial) {
        SplitMix64 trng(derive_seed(derive_seed(base, streams::trial),
                                    static_cast<std::uint64_t>(trial)));
        const int theta = static_cast<int>(trng.next_below(
            static_cast<std::uint64_t>(spec.num_intentions)));
        const int len =
            uniform_in(trng, options.min_prompt_letters, options.max_prompt_letters);
        const Message prefix = sample_prefix(spec, theta, len, trng);
        const double eps =
            1.0 - posterior_single(spec, prefix).probs[static_cast<std::size_t>(theta)];

        auto p_sess = backend.open();
        for (Symbol s : prefix.symbols) p_sess->push(s);
        auto q_sess = open_conditioned(spec, theta);
        for (Symbol s : prefix.symbols) q_sess->push(s);

        double log_p = 0.0, log_q = 0.0, max_step = 0.0;
        for (int step = 0; step < options.horizon; ++step) {
            const std::vector<double> qd = q_sess->predict();
            const std::vector<double> pd = p_sess->predict();
            for (std::size_t s = 0; s < qd.size(); ++s)
                max_step = std::max(max_step, std::abs(pd[s] - qd[s]));
            const Symbol s = static_cast<Symbol>(sample_categorical(trng, qd));
            log_p += std::log(pd[s]);
            log_q += std::log(qd[s]);
            p_sess->push(s);
            q_sess->push(s);
            if (s == spec.newline_symbol()) break;
        }
        BoundCheck check = make_bound_check(std::abs(std::exp(log_p) - std::exp(log_q)), eps);
        check.trial = trial;
        check.eta = spec.noise_level;
        check.part_epsilons = {eps};
        check.max_step_deviation = max_step;
        checks.push_back(std::move(check));
    }
    return checks;
}

std::vector<BoundCheck> check_understanding_exhaustive(const LmBackend& backend,
                                                       const LanguageSpec& spec, int prompts,
                                                       int depth, SplitMix64& rng) {
    if (depth < 1) throw ConfigError("enumeration depth must be >= 1");
    std::vector<BoundCheck> checks;
    checks.reserve(static_cast<std::size_t>(prompts));
    const std::uint64_t base = rng.next_u64();
    const int max_prompt = std::max(1, spec.message_length - depth);
    for (int trial = 0; trial < prompts; ++trial) {
        SplitMix64 trng(derive_seed(derive_seed(base, streams::prompt),
                                    static_cast<std::uint64_t>(trial)));
        const int theta = static_cast<int>(trng.next_below(
            static_cast<std::uint64_t>(spec.num_intentions)));
        const int len = uniform_in(trng, 1, std::min(10, max_prompt));
        const Message prefix = sample_prefix(spec, theta, len, trng);
        const double eps =
            1.0 - posterior_single(spec, prefix).probs[static_cast<std::size_t>(theta)];

        auto p_sess = backend.open();
        auto q_sess = open_conditioned(spec, theta);
        for (Symbol s : prefix.symbols) {
            p_sess->push(s);
            q_sess->push(s);
        }

        // Enumerate all letter continuations of the requested depth.
        double max_dev = 0.0;
        const auto recurse = [&](auto&& self, const LmSession& p, const LmSession& q,
                                 double p_prod, double q_prod, int remaining) -> void {
            if (remaining == 0) {
                max_dev = std::max(max_dev, std::abs(p_prod - q_prod));
                return;
            }
            const std::vector<double> pd = p.predict();
            const std::vector<double> qd = q.predict();
            for (int s = 0; s < spec.alphabet_size; ++s) {
                auto pc = p.clone();
                auto qc = q.clone();
                pc->push(static_cast<Symbol>(s));
                qc->push(static_cast<Symbol>(s));
                self(self, *pc, *qc, p_prod * pd[static_cast<std::size_t>(s)],
                     q_prod * qd[static_cast<std::size_t>(s)], remaining - 1);
            }
        };
        recurse(recurse, *p_sess, *q_sess, 1.0, 1.0, depth);

        BoundCheck check = make_bound_check(max_dev, eps);
        check.trial = trial;
        check.eta = spec.noise_level;
        check.part_epsilons = {eps};
        checks.push_back(std::move(check));
    }
    return checks;
}

// ---------------------------------------------------------------------------
// In-context learning
// ---------------------------------------------------------------------------

std::vector<BoundCheck> check_icl(const LmBackend& backend, const LanguageSpec& spec,
                                  const IclOptions& options, SplitMix64& rng) {
    std::vector<int> ms = options.m_values;
    std::sort(ms.begin(), ms.end());
    if (ms.empty() || ms.front() < 0) throw ConfigError("invalid m grid");
    const int max_m = ms.back();

    const OracleBackend chain_oracle(spec, BoundaryPolicy::chain);
    std::vector<BoundCheck> checks;
    checks.reserve(ms.size() * static_cast<std::size_t>(options.trials));
    const std::uint64_t base = rng.next_u64();

    for (int trial = 0; trial < options.trials; ++trial) {
        SplitMix64 trng(derive_seed(derive_seed(base, streams::trial),
                                    static_cast<std::uint64_t>(trial)));
        const int truth = static_cast<int>(trng.next_below(
            static_cast<std::uint64_t>(spec.num_intentions)));

        // One instruction message, max_m example messages and one partial
        // input, all under the shared intention; prompts are nested in m.
        const Message instruction = sample_message(spec, truth, trng);
        std::vector<Message> examples;
        examples.reserve(static_cast<std::size_t>(max_m));
        for (int i = 0; i < max_m; ++i) examples.push_back(sample_message(spec, truth, trng));
        const int input_len =
            uniform_in(trng, options.min_input_letters, options.max_input_letters);
        const Message input = sample_prefix(spec, truth, input_len, trng);

        const auto part_eps = [&](const Message& part) {
            return 1.0 - posterior_single(spec, part).probs[static_cast<std::size_t>(truth)];
        };
        const double eps_instruction = part_eps(instruction);
        std::vector<double> eps_examples;
        for (const auto& e : examples) eps_examples.push_back(part_eps(e));
        const double eps_input = part_eps(input);

        // Continuations sampled from the clamped conditional, shared across m.
        struct Continuation {
            std::vector<Symbol> symbols;
            double q_prob = 1.0;
        };
        std::vector<Continuation> ys;
        for (int j = 0; j < options.y_samples; ++j) {
            auto q_sess = open_conditioned(spec, truth);
            for (Symbol s : input.symbols) q_sess->push(s);
            Continuation y;
            while (true) {
                const std::vector<double> qd = q_sess->predict();
                const Symbol s = static_cast<Symbol>(sample_categorical(trng, qd));
                y.q_prob *= qd[s];
                y.symbols.push_back(s);
                q_sess->push(s);
                if (s == spec.newline_symbol()) break;
            }
            ys.push_back(std::move(y));
        }

        auto p_base = backend.open();
        auto chain_base = chain_oracle.open();
        for (Symbol s : instruction.symbols) {
            p_base->push(s);
            chain_base->push(s);
        }

        int pushed = 0;
        for (int m : ms) {
            for (; pushed < m; ++pushed)
                for (Symbol s : examples[static_cast<std::size_t>(pushed)].symbols) {
                    p_base->push(s);
                    chain_base->push(s);
                }

            auto p_prompt = p_base->clone();
            auto chain_prompt = chain_base->clone();
            for (Symbol s : input.symbols) {
                p_prompt->push(s);
                chain_prompt->push(s);
            }

            double deviation = 0.0, chain_deviation = 0.0, max_step = 0.0;
            for (const auto& y : ys) {
                auto p_y = p_prompt->clone();
                auto c_y = chain_prompt->clone();
                auto q_y = open_conditioned(spec, truth);
                for (Symbol s : input.symbols) q_y->push(s);
                double lp = 0.0, lc = 0.0, lq = 0.0;
                for (Symbol s : y.symbols) {
                    const std::vector<double> pd = p_y->predict();
                    const std::vector<double> qd = q_y->predict();
                    for (std::size_t i = 0; i < pd.size(); ++i)
                        max_step = std::max(max_step, std::abs(pd[i] - qd[i]));
                    lp += std::log(pd[s]);
                    lc += std::log(c_y->predict()[s]);
                    lq += std::log(qd[s]);
                    p_y->push(s);
                    c_y->push(s);
                    q_y->push(s);
                }
                deviation = std::max(deviation, std::abs(std::exp(lp) - std::exp(lq)));
                chain_deviation =
                    std::max(chain_deviation, std::abs(std::exp(lc) - std::exp(lq)));
            }

            double bound = eps_instruction * eps_input;
            double eps0 = std::max(eps_instruction, eps_input);
            std::vector<double> parts = {eps_instruction};
            for (int i = 0; i < m; ++i) {
                bound *= eps_examples[static_cast<std::size_t>(i)];
                eps0 = std::max(eps0, eps_examples[static_cast<std::size_t>(i)]);
                parts.push_back(eps_examples[static_cast<std::size_t>(i)]);
            }
            parts.push_back(eps_input);

            BoundCheck check = make_bound_check(deviation, bound);
            check.trial = trial;
            check.m = m;
            check.eta = spec.noise_level;
            check.part_epsilons = std::move(parts);
            check.bound_loose = std::pow(eps0, m + 2);
            check.chain_deviation = chain_deviation;
            check.max_step_deviation = max_step;

            std::vector<Message> all_parts;
            all_parts.push_back(instruction);
            for (int i = 0; i < m; ++i) all_parts.push_back(examples[static_cast<std::size_t>(i)]);
            all_parts.push_back(input);
            check.tied_residual =
                1.0 - posterior_tied(spec, all_parts).probs[static_cast<std::size_t>(truth)];
            checks.push_back(std::move(check));
        }
    }
    return checks;
}

// ---------------------------------------------------------------------------
// Joint-distribution sparsity
// ---------------------------------------------------------------------------

std::vector<BoundCheck> check_sparsity(const LanguageSpec& spec, int trials, SplitMix64& rng) {
    std::vector<BoundCheck> checks;
    checks.reserve(static_cast<std::size_t>(trials));
    const std::uint64_t base = rng.next_u64();
    for (int trial = 0; trial < trials; ++trial) {
        SplitMix64 trng(derive_seed(derive_seed(base, streams::trial),
                                    static_cast<std::uint64_t>(trial)));
        const int truth = static_cast<int>(trng.next_below(
            static_cast<std::uint64_t>(spec.num_intentions)));
        const Message x = sample_message(spec, truth, trng);
        const PosteriorVector post = posterior_single(spec, x);

        BoundCheck check;
        if (spec.noise_level == 0.0) {
            // One-hot joint: all residual mass must be exactly zero.
            double residual = 0.0;
            for (int i = 0; i < spec.num_intentions; ++i)
                if (i != truth) residual += post.probs[static_cast<std::size_t>(i)];
            check = make_bound_check(residual, 0.0);
        } else {
            // Dominance-ratio identity in log space:
            // log[q(best,x)/q(rest,x)] >= log[(1-eps)/eps].
            const int best = static_cast<int>(
                std::max_element(post.probs.begin(), post.probs.end()) - post.probs.begin());
            std::vector<double> lw(post.probs.size());
            for (std::size_t i = 0; i < post.probs.size(); ++i)
                lw[i] = (post.probs[i] > 0.0 ? std::log(post.probs[i]) : kNegInf) +
                        post.log_evidence;
            double mx = kNegInf;
            for (std::size_t i = 0; i < lw.size(); ++i)
                if (static_cast<int>(i) != best) mx = std::max(mx, lw[i]);
            double rest = 0.0;
            for (std::size_t i = 0; i < lw.size(); ++i)
                if (static_cast<int>(i) != best) rest += std::exp(lw[i] - mx);
            const double log_rest = mx + std::log(rest);
            const double log_lhs = lw[static_cast<std::size_t>(best)] - log_rest;
            const double log_eps = log_rest - post.log_evidence;
            const double log_rhs = std::log1p(-std::exp(log_eps)) - log_eps;
            check = make_bound_check(log_rhs - log_lhs, 0.0);
        }
        check.trial = trial;
        check.eta = spec.noise_level;
        checks.push_back(std::move(check));
    }
    return checks;
}

// ---------------------------------------------------------------------------
// Response-mixture decomposition
// ---------------------------------------------------------------------------

std::vector<BoundCheck> check_instruction_mixture(const LanguageSpec& spec, int trials,
                                                  int y_samples, SplitMix64& rng) {
    std::vector<BoundCheck> checks;
    checks.reserve(static_cast<std::size_t>(trials) * static_cast<std::size_t>(y_samples));
    const std::uint64_t base = rng.next_u64();
    const int k = spec.num_intentions;
    for (int trial = 0; trial < trials; ++trial) {
        SplitMix64 trng(derive_seed(derive_seed(base, streams::trial),
                                    static_cast<std::uint64_t>(trial)));
        const int theta_x = static_cast<int>(trng.next_below(static_cast<std::uint64_t>(k)));
        const Message x = sample_message(spec, theta_x, trng);
        const PosteriorVector post = posterior_single(spec, x);
        const double eps = 1.0 - post.probs[static_cast<std::size_t>(theta_x)];
        const auto& hop = spec.prior_transition;

        for (int j = 0; j < y_samples; ++j) {
            // y is a complete next message drawn from the true predictive.
            const int theta_y = sample_categorical(
                trng, hop[static_cast<std::size_t>(theta_x)]);
            const Message y = sample_message(spec, theta_y, trng);

            std::vector<double> y_lik(static_cast<std::size_t>(k));
            for (int t = 0; t < k; ++t)
                y_lik[static_cast<std::size_t>(t)] = std::exp(message_loglik(spec, y, t));

            // Reference mixture: sum_theta q(theta | theta_x) q(y | theta).
            double mixture = 0.0;
            for (int t = 0; t < k; ++t)
                mixture += hop[static_cast<std::size_t>(theta_x)][static_cast<std::size_t>(t)] *
                           y_lik[static_cast<std::size_t>(t)];

            // Exact p(y | x): posterior over the prompt intention, one chain
            // step, then the conditional of y.
            double lhs = 0.0;
            for (int a = 0; a < k; ++a) {
                const double w = post.probs[static_cast<std::size_t>(a)];
                if (w <= 0.0) continue;
                double inner = 0.0;
                for (int t = 0; t < k; ++t)
                    inner += hop[static_cast<std::size_t>(a)][static_cast<std::size_t>(t)] *
                             y_lik[static_cast<std::size_t>(t)];
                lhs += w * inner;
            }

            BoundCheck check = make_bound_check(std::abs(lhs - mixture), eps);
            check.trial = trial;
            check.eta = spec.noise_level;
            check.part_epsilons = {eps};
            checks.push_back(std::move(check));
        }
    }
    return checks;
}

// ---------------------------------------------------------------------------
// Direct versus chained reasoning
// ---------------------------------------------------------------------------

CotRecord cot_compare(const LanguageSpec& spec, const std::vector<int>& chain,
                      SplitMix64& rng) {
    if (chain.size() < 2) throw ConfigError("reasoning chain needs at least two intentions");
    for (int theta : chain)
        if (theta < 0 || theta >= spec.num_intentions)
            throw ConfigError("intention out of range in the reasoning chain");
    for (std::size_t i = 0; i + 1 < chain.size(); ++i)
        if (spec.prior_transition[static_cast<std::size_t>(chain[i])]
                                 [static_cast<std::size_t>(chain[i + 1])] <= 0.0)
            throw ZeroProbabilityPath("reasoning chain uses a zero-probability transition");

    const int m = static_cast<int>(chain.size()) - 1;
    CotRecord record;
    record.direct_intention_factor =
        intention_hop(spec, m)[static_cast<std::size_t>(chain.front())]
                              [static_cast<std::size_t>(chain.back())];
    record.chained_intention_factor =
        spec.prior_transition[static_cast<std::size_t>(chain[chain.size() - 2])]
                             [static_cast<std::size_t>(chain.back())];

    const Message target = sample_message(spec, chain.back(), rng);
    const double lik = std::exp(message_loglik(spec, target, chain.back()));
    record.direct = record.direct_intention_factor * lik;
    record.chained = record.chained_intention_factor * lik;
    return record;
}

// ---------------------------------------------------------------------------
// KL measurements
// ---------------------------------------------------------------------------

namespace {

struct KlAccumulator {
    std::vector<double> values;

    KlEstimate finish(KlEstimate::Method method, const KlOptions& options, int num_prompts) const {
        KlEstimate est;
        est.method = method;
        est.horizon = options.horizon;
        est.direction = options.direction;
        est.num_prompts = num_prompts;
        est.num_samples = method == KlEstimate::Method::monte_carlo
                              ? static_cast<int>(values.size())
                              : 0;
        const double n = static_cast<double>(values.size());
        est.value = std::accumulate(values.begin(), values.end(), 0.0) / n;
        if (method == KlEstimate::Method::monte_carlo && values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - est.value) * (v - est.value);
            est.standard_error = std::sqrt(ss / (n * (n - 1.0)));
        }
        return est;
    }
};

/// One Monte Carlo path: sample from the `a` side, accumulate log a - log b.
double mc_path(const LmSession& a_start, const LmSession& b_start, const LanguageSpec& spec,
               int horizon, SplitMix64& rng) {
    auto a = a_start.clone();
    auto b = b_start.clone();
    double acc = 0.0;
    for (int step = 0; step < horizon; ++step) {
        const std::vector<double> ad = a->predict();
        const std::vector<double> bd = b->predict();
        const Symbol s = static_cast<Symbol>(sample_categorical(rng, ad));
        acc += std::log(ad[s]) - std::log(bd[s]);
        // A sampled symbol the reference side rules out makes the divergence
        // infinite; the reference session cannot advance past it.
        if (!std::isfinite(acc)) return acc;
        a->push(s);
        b->push(s);
        if (s == spec.newline_symbol()) break;
    }
    return acc;
}

/// Exact sum over all continuations: E_a[log a - log b], expanding the full
/// continuation tree to `remaining` symbols (paths stop at the newline).
double exact_kl(const LmSession& a, const LmSession& b, const LanguageSpec& spec,
                int remaining, double weight, double log_ratio) {
    if (weight <= 0.0) return 0.0;
    if (remaining == 0) return weight * log_ratio;
    const std::vector<double> ad = a.predict();
    const std::vector<double> bd = b.predict();
    double total = 0.0;
    for (std::size_t s = 0; s < ad.size(); ++s) {
        if (ad[s] <= 0.0) continue;
        if (bd[s] <= 0.0) return std::numeric_limits<double>::infinity();
        const double child_ratio = log_ratio + std::log(ad[s]) - std::log(bd[s]);
        const double child_weight = weight * ad[s];
        if (static_cast<Symbol>(s) == spec.newline_symbol()) {
            total += child_weight * child_ratio;
            continue;
        }
        auto ac = a.clone();
        auto bc = b.clone();
        ac->push(static_cast<Symbol>(s));
        bc->push(static_cast<Symbol>(s));
        total += exact_kl(*ac, *bc, spec, remaining - 1, child_weight, child_ratio);
    }
    return total;
}

struct PromptSessions {
    std::unique_ptr<LmSession> p;
    std::unique_ptr<LmSession> q;
};

void accumulate_kl(const PromptSessions& sessions, const LanguageSpec& spec,
                   const KlOptions& options, SplitMix64& mc_rng, KlAccumulator& acc) {
    const bool model_first = options.direction == KlEstimate::Direction::model_vs_truth;
    const LmSession& a = model_first ? *sessions.p : *sessions.q;
    const LmSession& b = model_first ? *sessions.q : *sessions.p;
    if (options.method == KlEstimate::Method::exact_dp) {
        if (options.horizon > options.exact_horizon_cap)
            throw HorizonTooLarge("exact enumeration capped at horizon " +
                                  std::to_string(options.exact_horizon_cap));
        acc.values.push_back(exact_kl(a, b, spec, options.horizon, 1.0, 0.0));
    } else {
        for (int j = 0; j < options.samples_per_prompt; ++j)
            acc.values.push_back(mc_path(a, b, spec, options.horizon, mc_rng));
    }
}

}  // namespace

KlEstimate kl_understanding(const LmBackend& backend, const LanguageSpec& spec,
                            const KlOptions& options, SplitMix64& rng) {
    const std::uint64_t base = rng.next_u64();
    KlAccumulator acc;
    for (int i = 0; i < options.num_prompts; ++i) {
        SplitMix64 prng(derive_seed(derive_seed(base, streams::prompt),
                                    static_cast<std::uint64_t>(i)));
        const int theta = static_cast<int>(prng.next_below(
            static_cast<std::uint64_t>(spec.num_intentions)));
        const int len = uniform_in(prng, options.min_prompt_letters, options.max_prompt_letters);
        const Message prefix = sample_prefix(spec, theta, len, prng);

        PromptSessions sessions{backend.open(), open_conditioned(spec, theta)};
        for (Symbol s : prefix.symbols) {
            sessions.p->push(s);
            sessions.q->push(s);
        }
        SplitMix64 mc_rng(derive_seed(derive_seed(base, streams::monte_carlo),
                                      static_cast<std::uint64_t>(i)));
        accumulate_kl(sessions, spec, options, mc_rng, acc);
    }
    return acc.finish(options.method, options, options.num_prompts);
}

std::vector<KlEstimate> kl_icl(const LmBackend& backend, const LanguageSpec& spec,
                               const std::vector<int>& m_values, const KlOptions& options,
                               SplitMix64& rng) {
    std::vector<int> ms = m_values;
    std::sort(ms.begin(), ms.end());
    if (ms.empty() || ms.front() < 0) throw ConfigError("invalid m grid");
    const int max_m = ms.back();

    const std::uint64_t base = rng.next_u64();
    std::vector<KlAccumulator> accs(ms.size());
    for (int i = 0; i < options.num_prompts; ++i) {
        SplitMix64 prng(derive_seed(derive_seed(base, streams::prompt),
                                    static_cast<std::uint64_t>(i)));
        const int theta = static_cast<int>(prng.next_below(
            static_cast<std::uint64_t>(spec.num_intentions)));
        std::vector<Message> examples;
        for (int e = 0; e < max_m; ++e) examples.push_back(sample_message(spec, theta, prng));
        const int len = uniform_in(prng, options.min_prompt_letters, options.max_prompt_letters);
        const Message input = sample_prefix(spec, theta, len, prng);

        auto p_base = backend.open();
        int pushed = 0;
        for (std::size_t mi = 0; mi < ms.size(); ++mi) {
            for (; pushed < ms[mi]; ++pushed)
                for (Symbol s : examples[static_cast<std::size_t>(pushed)].symbols)
                    p_base->push(s);

            PromptSessions sessions{p_base->clone(), open_conditioned(spec, theta)};
            for (Symbol s : input.symbols) {
                sessions.p->push(s);
                sessions.q->push(s);
            }
            SplitMix64 mc_rng(derive_seed(
                derive_seed(derive_seed(base, streams::monte_carlo),
                            static_cast<std::uint64_t>(i)),
                static_cast<std::uint64_t>(ms[mi])));
            accumulate_kl(sessions, spec, options, mc_rng, accs[mi]);
        }
    }
    std::vector<KlEstimate> out;
    for (std::size_t mi = 0; mi < ms.size(); ++mi)
        out.push_back(accs[mi].finish(options.method, options, options.num_prompts));
    return out;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

namespace {

std::string bool_str(bool b) { return b ? "1" : "0"; }

}  // namespace

void write_bound_checks_csv(const std::string& path, const std::vector<BoundCheck>& checks) {
    std::string out = csv_row({"trial", "m", "eta", "measured_deviation", "bound_value",
                               "satisfied", "bound_loose", "tied_residual", "chain_deviation",
                               "max_step_deviation", "eps0", "num_parts"});
    for (const auto& c : checks) {
        double eps0 = 0.0;
        for (double e : c.part_epsilons) eps0 = std::max(eps0, e);
        out += csv_row({std::to_string(c.trial), std::to_string(c.m), format_double(c.eta),
                        format_double(c.measured_deviation), format_double(c.bound_value),
                        bool_str(c.satisfied), format_double(c.bound_loose),
                        format_double(c.tied_residual), format_double(c.chain_deviation),
                        format_double(c.max_step_deviation), format_double(eps0),
                        std::to_string(c.part_epsilons.size())});
    }
    write_text_file(path, out);
}

void write_kl_estimates_csv(const std::string& path,
                            const std::vector<std::pair<int, KlEstimate>>& rows) {
    std::string out = csv_row({"m", "kl_value", "kl_stderr", "method", "direction", "horizon",
                               "num_prompts", "num_samples"});
    for (const auto& [m, est] : rows) {
        out += csv_row(
            {std::to_string(m), format_double(est.value), format_double(est.standard_error),
             est.method == KlEstimate::Method::exact_dp ? "exact_dp" : "monte_carlo",
             est.direction == KlEstimate::Direction::model_vs_truth ? "model_vs_truth"
                                                                    : "truth_vs_model",
             std::to_string(est.horizon), std::to_string(est.num_prompts),
             std::to_string(est.num_samples)});
    }
    write_text_file(path, out);
}

VerifierSummary summarize(const std::string& verifier, const std::vector<BoundCheck>& checks) {
    VerifierSummary summary;
    summary.verifier = verifier;
    summary.total = static_cast<int>(checks.size());
    for (const auto& c : checks) {
        if (!c.satisfied) ++summary.violations;
        summary.max_deviation = std::max(summary.max_deviation, c.measured_deviation);
    }
    return summary;
}

}  // namespace llsim
