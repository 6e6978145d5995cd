#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "brute_force.hpp"
#include "llsim/errors.hpp"
#include "llsim/oracle.hpp"

using namespace llsim;

namespace {

GeneratorConfig default_config(double eta = 0.0, std::uint64_t seed = 42) {
    GeneratorConfig config;
    config.noise_level = eta;
    config.seed = seed;
    return config;
}

/// Two intentions with identical emissions: every message is maximally
/// ambiguous between them.
LanguageSpec symmetric_two_intention_spec() {
    GeneratorConfig config;
    config.num_intentions = 2;
    config.alphabet_size = 6;
    config.letters_per_intention = 3;
    config.message_length = 8;
    config.seed = 99;
    LanguageSpec spec = build_spec(config);
    spec.emission_initial[1] = spec.emission_initial[0];
    spec.emission_transition[1] = spec.emission_transition[0];
    return spec;
}

Message prefix_of(const Message& msg, int letters) {
    Message out;
    out.symbols.assign(msg.symbols.begin(), msg.symbols.begin() + letters);
    return out;
}

}  // namespace

TEST_CASE("loglik is -inf outside the dedicated letters at zero noise") {
    const LanguageSpec spec = build_spec(default_config());
    Message msg;
    for (int i = 0; i < spec.message_length; ++i) msg.symbols.push_back(0);  // all 'a'
    msg.symbols[5] = 4;  // one letter from theta_1's block
    msg.symbols.push_back(spec.newline_symbol());
    CHECK(message_loglik(spec, msg, 0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("single-letter message reduces to the initial row") {
    GeneratorConfig config = default_config();
    config.message_length = 1;
    const LanguageSpec spec = build_spec(config);
    Message msg;
    msg.symbols = {0, spec.newline_symbol()};
    CHECK(message_loglik(spec, msg, 0) ==
          doctest::Approx(std::log(spec.emission_initial[0][0])).epsilon(1e-15));
}

TEST_CASE("loglik matches an independent direct product") {
    for (double eta : {0.05, 0.3}) {
        const LanguageSpec spec = build_spec(default_config(eta, 31));
        SplitMix64 rng(7);
        for (int rep = 0; rep < 200; ++rep) {
            const int theta = static_cast<int>(rng.next_below(6));
            const Message msg = sample_message(spec, theta, rng);
            for (int other = 0; other < 6; ++other) {
                const double direct = bf::message_prob(spec, msg, other);
                CHECK(std::exp(message_loglik(spec, msg, other)) ==
                      doctest::Approx(direct).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("loglik matches the direct product in geometric mode") {
    GeneratorConfig config = default_config(0.2, 13);
    config.length_mode = LengthMode::geometric;
    config.end_probability = 0.15;
    const LanguageSpec spec = build_spec(config);
    SplitMix64 rng(3);
    for (int rep = 0; rep < 100; ++rep) {
        const Message msg = sample_message(spec, rep % 6, rng);
        for (int theta = 0; theta < 6; ++theta)
            CHECK(std::exp(message_loglik(spec, msg, theta)) ==
                  doctest::Approx(bf::message_prob(spec, msg, theta)).epsilon(1e-12));
    }
}

TEST_CASE("malformed framing is rejected") {
    const LanguageSpec spec = build_spec(default_config());
    Message mid_newline;
    mid_newline.symbols = {0, spec.newline_symbol(), 1};
    CHECK_THROWS_AS(message_loglik(spec, mid_newline, 0), MalformedMessage);
    Message short_complete;
    short_complete.symbols = {0, 1, spec.newline_symbol()};
    CHECK_THROWS_AS(message_loglik(spec, short_complete, 0), MalformedMessage);
    Message too_long;
    too_long.symbols.assign(25, 0);
    CHECK_THROWS_AS(message_loglik(spec, too_long, 0), MalformedMessage);
}

TEST_CASE("noise-free posteriors are one-hot at the generating intention") {
    const LanguageSpec spec = build_spec(default_config());
    SplitMix64 rng(11);
    for (int rep = 0; rep < 100; ++rep) {
        const int theta = static_cast<int>(rng.next_below(6));
        const Message msg = sample_message(spec, theta, rng);
        const PosteriorVector post = posterior_single(spec, msg);
        CHECK(post.probs[theta] == 1.0);
        const AmbiguityReport rep_out = ambiguity(spec, msg, theta);
        CHECK(rep_out.epsilon == 0.0);
        CHECK(rep_out.argmax_intention == theta);
        CHECK(rep_out.matches_generating == true);
    }
}

TEST_CASE("posterior matches brute-force Bayes enumeration") {
    for (double eta : {0.05, 0.3, 0.8}) {
        const LanguageSpec spec = build_spec(default_config(eta, 23));
        const auto prior = stationary_distribution(spec);
        SplitMix64 rng(29);
        for (int rep = 0; rep < 200; ++rep) {
            const Message msg = sample_message(spec, static_cast<int>(rng.next_below(6)), rng);
            const PosteriorVector post = posterior_single(spec, msg);
            const auto direct = bf::posterior(spec, msg, prior);
            for (int theta = 0; theta < 6; ++theta)
                CHECK(post.probs[theta] == doctest::Approx(direct[theta]).epsilon(1e-12));
            double sum = 0.0;
            for (double p : post.probs) sum += p;
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("symmetric construction splits the posterior and ties break low") {
    const LanguageSpec spec = symmetric_two_intention_spec();
    SplitMix64 rng(5);
    const Message msg = sample_message(spec, 0, rng);
    const PosteriorVector post = posterior_single(spec, msg);
    CHECK(post.probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(post.probs[1] == doctest::Approx(0.5).epsilon(1e-12));
    const AmbiguityReport report = ambiguity(spec, msg);
    CHECK(report.argmax_intention == 0);
    CHECK(report.epsilon == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("impossible hand-written text raises DegenerateEvidence") {
    const LanguageSpec spec = build_spec(default_config());
    Message msg;
    msg.symbols = {0, 3};  // 'a' then 'd': blocks of different intentions
    CHECK_THROWS_AS(posterior_single(spec, msg), DegenerateEvidence);
}

TEST_CASE("tied posterior over noise-free clamped messages is one-hot") {
    const LanguageSpec spec = build_spec(default_config());
    SplitMix64 rng(19);
    std::vector<Message> messages;
    for (int i = 0; i < 2; ++i) messages.push_back(sample_message(spec, 3, rng));
    const PosteriorVector post = posterior_tied(spec, messages);
    CHECK(post.probs[3] == 1.0);
}

TEST_CASE("tied posterior of one message equals the single posterior") {
    const LanguageSpec spec = build_spec(default_config(0.4, 3));
    SplitMix64 rng(2);
    const Message msg = sample_message(spec, 1, rng);
    const std::vector<Message> one{msg};
    const PosteriorVector tied = posterior_tied(spec, one);
    const PosteriorVector single = posterior_single(spec, msg);
    for (int theta = 0; theta < 6; ++theta)
        CHECK(tied.probs[theta] == doctest::Approx(single.probs[theta]).epsilon(1e-14));
    CHECK(tied.log_evidence == doctest::Approx(single.log_evidence).epsilon(1e-14));
}

TEST_CASE("tied residual of clamped pairs respects the product bound at low noise") {
    for (double eta : {0.05, 0.1}) {
        const LanguageSpec spec = build_spec(default_config(eta, 47));
        SplitMix64 rng(53);
        for (int rep = 0; rep < 200; ++rep) {
            const int theta = static_cast<int>(rng.next_below(6));
            const Message x1 = sample_message(spec, theta, rng);
            const Message x2 = sample_message(spec, theta, rng);
            const double e1 = 1.0 - posterior_single(spec, x1).probs[theta];
            const double e2 = 1.0 - posterior_single(spec, x2).probs[theta];
            const std::vector<Message> pair{x1, x2};
            const double residual = 1.0 - posterior_tied(spec, pair).probs[theta];
            CHECK(residual <= e1 * e2 + 1e-12);
        }
    }
}

TEST_CASE("sequence marginal of one message equals the posterior evidence") {
    const LanguageSpec spec = build_spec(default_config(0.25, 8));
    SplitMix64 rng(21);
    const Message msg = sample_message(spec, 4, rng);
    const std::vector<Message> one{msg};
    CHECK(sequence_logmarginal(spec, one) ==
          doctest::Approx(posterior_single(spec, msg).log_evidence).epsilon(1e-12));
}

TEST_CASE("sequence marginal matches exhaustive path enumeration") {
    for (double eta : {0.0, 0.3}) {
        const LanguageSpec spec = build_spec(default_config(eta, 77));
        const auto prior = stationary_distribution(spec);
        SplitMix64 rng(31);
        for (int m : {2, 3, 4}) {
            std::vector<Message> messages;
            SplitMix64 path_rng(rng.next_u64());
            const auto path = sample_intention_path(spec, CorpusMode::chain, m, path_rng);
            for (int theta : path) messages.push_back(sample_message(spec, theta, rng));
            const double direct = bf::sequence_marginal(spec, messages, prior);
            CHECK(sequence_logmarginal(spec, messages) ==
                  doctest::Approx(std::log(direct)).epsilon(1e-10));
        }
    }
}

TEST_CASE("empty history predicts the prior mixture of initial rows") {
    const LanguageSpec spec = build_spec(default_config(0.2, 15));
    const auto dist = next_symbol_marginal(spec, {});
    for (int s = 0; s < spec.alphabet_size; ++s) {
        double expected = 0.0;
        for (int theta = 0; theta < 6; ++theta)
            expected += spec.emission_initial[theta][s] / 6.0;
        CHECK(dist[s] == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(dist[spec.newline_symbol()] == 0.0);
}

TEST_CASE("a noise-free prefix collapses the mixture to one transition row") {
    const LanguageSpec spec = build_spec(default_config());
    const std::vector<Symbol> history{0, 1};  // "ab"
    const auto dist = next_symbol_marginal(spec, history);
    for (int s = 0; s < spec.alphabet_size; ++s)
        CHECK(dist[s] == doctest::Approx(spec.emission_transition[0][1][s]).epsilon(1e-14));
}

TEST_CASE("the terminator is deterministic at the fixed length") {
    const LanguageSpec spec = build_spec(default_config(0.3, 2));
    SplitMix64 rng(40);
    const Message msg = sample_message(spec, 2, rng);
    const std::vector<Symbol> history(msg.symbols.begin(), msg.symbols.end() - 1);
    const auto dist = next_symbol_marginal(spec, history);
    CHECK(dist[spec.newline_symbol()] == 1.0);
    for (int s = 0; s < spec.alphabet_size; ++s) CHECK(dist[s] == 0.0);
}

TEST_CASE("chain rule over a full sequence reproduces the sequence marginal") {
    const LanguageSpec spec = build_spec(default_config(0.35, 91));
    SplitMix64 rng(13);
    std::vector<Message> messages;
    SplitMix64 path_rng(101);
    const auto path = sample_intention_path(spec, CorpusMode::chain, 3, path_rng);
    for (int theta : path) messages.push_back(sample_message(spec, theta, rng));

    Filter filter(spec, BoundaryPolicy::chain);
    double total = 0.0;
    for (const auto& msg : messages)
        for (Symbol s : msg.symbols) {
            total += std::log(filter.predict()[s]);
            filter.push(s);
        }
    CHECK(total == doctest::Approx(sequence_logmarginal(spec, messages)).epsilon(1e-9));
    CHECK(filter.log_evidence() == doctest::Approx(total).epsilon(1e-9));
}

TEST_CASE("conditioning on the generating intention matches the pinned marginal") {
    const LanguageSpec spec = build_spec(default_config());
    SplitMix64 rng(66);
    const Message msg = sample_message(spec, 4, rng);
    const auto prefix = std::span<const Symbol>(msg.symbols.data(), 6);
    const auto marginal = next_symbol_marginal(spec, prefix);
    const auto conditioned = next_symbol_conditioned(spec, prefix, 4);
    for (std::size_t s = 0; s < marginal.size(); ++s)
        CHECK(marginal[s] == doctest::Approx(conditioned[s]).epsilon(1e-14));
}

TEST_CASE("boundary policy controls the conditioned intention across messages") {
    const LanguageSpec spec = build_spec(default_config(0.1, 55));
    SplitMix64 rng(44);
    const Message msg = sample_message(spec, 0, rng);

    const auto clamped =
        next_symbol_conditioned(spec, msg.symbols, 0, BoundaryPolicy::hold);
    for (int s = 0; s < spec.alphabet_size; ++s)
        CHECK(clamped[s] == doctest::Approx(spec.emission_initial[0][s]).epsilon(1e-14));

    const auto evolved =
        next_symbol_conditioned(spec, msg.symbols, 0, BoundaryPolicy::chain);
    for (int s = 0; s < spec.alphabet_size; ++s) {
        const double expected =
            0.5 * spec.emission_initial[0][s] + 0.5 * spec.emission_initial[1][s];
        CHECK(evolved[s] == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("ambiguity reports flag argmax flips against the generating intention") {
    const LanguageSpec spec = build_spec(default_config(0.9, 123));
    SplitMix64 rng(522);
    bool found_flip = false;
    for (int rep = 0; rep < 500 && !found_flip; ++rep) {
        const int theta = static_cast<int>(rng.next_below(6));
        const Message msg = sample_message(spec, theta, rng);
        const AmbiguityReport report = ambiguity(spec, msg, theta);
        if (report.matches_generating == false) {
            found_flip = true;
            CHECK(report.argmax_intention != theta);
        }
    }
    CHECK(found_flip);
}

TEST_CASE("the dominance-ratio guard accepts exact posteriors at scale") {
    for (double eta : {0.02, 0.05, 0.1, 0.8}) {
        const LanguageSpec spec = build_spec(default_config(eta, 321));
        SplitMix64 rng(99);
        for (int rep = 0; rep < 500; ++rep) {
            const int theta = static_cast<int>(rng.next_below(6));
            const Message msg = sample_message(spec, theta, rng);
            CHECK_NOTHROW(ambiguity(spec, msg, theta));
        }
    }
}

TEST_CASE("one-step hop equals the circulant itself") {
    const LanguageSpec spec = build_spec(default_config());
    const auto hop = intention_hop(spec, 1);
    CHECK(hop == spec.prior_transition);
}

TEST_CASE("m-step hops match the binomial advance count enumeration") {
    const LanguageSpec spec = build_spec(default_config());
    for (int m = 1; m <= 8; ++m) {
        const auto hop = intention_hop(spec, m);
        for (int i = 0; i < 6; ++i) {
            double row_sum = 0.0;
            for (int j = 0; j < 6; ++j) {
                CHECK(hop[i][j] == doctest::Approx(bf::circulant_hop(6, m, i, j)).epsilon(1e-13));
                row_sum += hop[i][j];
            }
            CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    // Four all-advance steps: probability (1/2)^4.
    CHECK(intention_hop(spec, 4)[0][4] == doctest::Approx(0.0625).epsilon(1e-15));
}

TEST_CASE("stationary distribution is a fixed point of the prior chain") {
    LanguageSpec spec = build_spec(default_config());
    auto pi = stationary_distribution(spec);
    for (double p : pi) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-10));

    // A lopsided (still irreducible) chain.
    spec.prior_transition.assign(6, std::vector<double>(6, 0.0));
    for (int i = 0; i < 6; ++i) {
        spec.prior_transition[i][i] = 0.7;
        spec.prior_transition[i][(i + 1) % 6] = 0.2;
        spec.prior_transition[i][(i + 2) % 6] = 0.1;
    }
    pi = stationary_distribution(spec);
    for (int j = 0; j < 6; ++j) {
        double flow = 0.0;
        for (int i = 0; i < 6; ++i) flow += pi[i] * spec.prior_transition[i][j];
        CHECK(flow == doctest::Approx(pi[j]).epsilon(1e-10));
    }
}

TEST_CASE("filters reject invalid prefixes") {
    const LanguageSpec spec = build_spec(default_config());
    Filter filter(spec, BoundaryPolicy::chain);
    CHECK_THROWS_AS(filter.push(spec.newline_symbol()), InvalidPrefix);  // too early
    Filter full(spec, BoundaryPolicy::chain);
    for (int t = 0; t < spec.message_length; ++t) full.push(0);
    CHECK_THROWS_AS(full.push(0), InvalidPrefix);  // letter at the terminator slot
    Filter bad(spec, BoundaryPolicy::chain);
    CHECK_THROWS_AS(bad.push(static_cast<Symbol>(spec.alphabet_size + 1)), InvalidPrefix);
}

TEST_CASE("geometric-mode filter exposes the end probability") {
    GeneratorConfig config = default_config(0.1, 9);
    config.length_mode = LengthMode::geometric;
    config.end_probability = 0.25;
    const LanguageSpec spec = build_spec(config);
    Filter filter(spec, BoundaryPolicy::chain);
    CHECK(filter.predict()[spec.newline_symbol()] == 0.0);
    filter.push(0);
    CHECK(filter.predict()[spec.newline_symbol()] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("partial-message posterior equals the filter state") {
    const LanguageSpec spec = build_spec(default_config(0.45, 71));
    SplitMix64 rng(77);
    const Message msg = sample_message(spec, 5, rng);
    const Message prefix = prefix_of(msg, 9);
    const PosteriorVector post = posterior_single(spec, prefix);

    Filter filter(spec, BoundaryPolicy::chain);
    for (Symbol s : prefix.symbols) filter.push(s);
    for (int theta = 0; theta < 6; ++theta)
        CHECK(filter.posterior()[theta] == doctest::Approx(post.probs[theta]).epsilon(1e-11));
    CHECK(filter.log_evidence() == doctest::Approx(post.log_evidence).epsilon(1e-11));
}

TEST_CASE("noise calibration hits requested ambiguity targets") {
    GeneratorConfig config = default_config();
    const CalibrationResult zero = calibrate_noise_level(config, 0.0);
    CHECK(zero.eta == 0.0);
    CHECK(zero.measured_mean_epsilon == 0.0);

    const CalibrationResult low = calibrate_noise_level(config, 0.06);
    CHECK(low.eta > 0.0);
    CHECK(low.eta < 1.0);
    CHECK(std::abs(low.measured_mean_epsilon - 0.06) < 0.01);

    const CalibrationResult high = calibrate_noise_level(config, 0.11);
    CHECK(high.eta > low.eta);
    CHECK(std::abs(high.measured_mean_epsilon - 0.11) < 0.015);
}
