#pragma once

// Independent reference computations for the oracle tests. Everything here
// works in plain linear-space products and explicit path enumeration, so it
// shares no code path with the filtered / log-sum-exp implementations it
// cross-checks.

#include <cmath>
#include <span>
#include <vector>

#include "llsim/langspec.hpp"

namespace bf {

using llsim::LanguageSpec;
using llsim::Message;
using llsim::Symbol;

/// Direct product q(x | theta) over the letters (newline handled per mode).
inline double message_prob(const LanguageSpec& spec, const Message& x, int theta) {
    const bool complete = !x.symbols.empty() && x.symbols.back() == spec.newline_symbol();
    const std::size_t letters = x.symbols.size() - (complete ? 1 : 0);
    if (letters == 0) return complete ? 0.0 : 1.0;
    double p = spec.emission_initial[theta][x.symbols[0]];
    for (std::size_t t = 1; t < letters; ++t)
        p *= spec.emission_transition[theta][x.symbols[t - 1]][x.symbols[t]];
    if (spec.length_mode == llsim::LengthMode::geometric) {
        for (std::size_t t = 1; t < letters; ++t) p *= 1.0 - spec.end_probability;
        if (complete) p *= spec.end_probability;
    }
    return p;
}

/// Bayes posterior by direct enumeration of the K joint terms.
inline std::vector<double> posterior(const LanguageSpec& spec, const Message& x,
                                     std::span<const double> prior) {
    std::vector<double> joint(prior.size());
    double total = 0.0;
    for (std::size_t i = 0; i < prior.size(); ++i) {
        joint[i] = prior[i] * message_prob(spec, x, static_cast<int>(i));
        total += joint[i];
    }
    for (double& v : joint) v /= total;
    return joint;
}

/// Marginal of a message sequence by enumerating all K^m intention paths.
inline double sequence_marginal(const LanguageSpec& spec, std::span<const Message> messages,
                                std::span<const double> initial) {
    const int k = spec.num_intentions;
    const std::size_t m = messages.size();
    std::vector<int> path(m, 0);
    double total = 0.0;
    while (true) {
        double p = initial[path[0]] * message_prob(spec, messages[0], path[0]);
        for (std::size_t j = 1; j < m; ++j)
            p *= spec.prior_transition[path[j - 1]][path[j]] *
                 message_prob(spec, messages[j], path[j]);
        total += p;
        std::size_t digit = 0;
        while (digit < m && ++path[digit] == k) path[digit++] = 0;
        if (digit == m) break;
    }
    return total;
}

inline std::uint64_t choose(int n, int r) {
    std::uint64_t c = 1;
    for (int i = 1; i <= r; ++i) c = c * static_cast<std::uint64_t>(n - r + i) / i;
    return c;
}

/// m-step transition probability of the default 0.5/0.5 circulant by counting
/// advance patterns: P(i -> j in m steps) = sum over advance counts a with
/// a = j - i (mod K) of C(m, a) / 2^m.
inline double circulant_hop(int k, int m, int from, int to) {
    double total = 0.0;
    for (int a = 0; a <= m; ++a)
        if ((from + a) % k == to % k)
            total += static_cast<double>(choose(m, a)) * std::pow(0.5, m);
    return total;
}

}  // namespace bf
