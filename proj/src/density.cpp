#include "llsim/density.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "llsim/errors.hpp"
#include "llsim/io.hpp"

namespace llsim {

std::vector<double> DensityModel::predict(std::uint64_t context_key) const {
    const int v = model_alphabet();
    std::vector<double> out(static_cast<std::size_t>(v));
    const auto it = counts.find(context_key);
    if (it == counts.end()) {
        std::fill(out.begin(), out.end(), 1.0 / v);
        return out;
    }
    double total = 0.0;
    for (std::uint32_t c : it->second) total += c;
    const double denom = total + lambda * v;
    for (int s = 0; s < v; ++s)
        out[static_cast<std::size_t>(s)] = (it->second[static_cast<std::size_t>(s)] + lambda) / denom;
    return out;
}

DensityModel train(const Corpus& corpus, int k, double lambda, int alphabet_size,
                   int message_length) {
    if (corpus.messages.empty()) throw EmptyCorpus("training corpus has no messages");
    if (k < 1 || k > kMaxContextOrder)
        throw ConfigError("context order must be in [1, " + std::to_string(kMaxContextOrder) + "]");
    if (lambda <= 0.0) throw ConfigError("smoothing constant must be > 0");
    if (alphabet_size < 1 || alphabet_size > 250) throw ConfigError("alphabet_size out of range");
    if (message_length < 1) throw ConfigError("message_length must be >= 1");

    DensityModel model;
    model.k = k;
    model.lambda = lambda;
    model.alphabet_size = alphabet_size;
    model.message_length = message_length;

    const int v = model.model_alphabet();
    ContextTracker tracker = model.make_tracker();
    for (const auto& msg : corpus.messages) {
        tracker.reset();
        for (Symbol s : msg.symbols) {
            if (s >= v) throw SpecMismatch("corpus symbol outside the model alphabet");
            auto& row = model.counts[tracker.key()];
            if (row.empty()) row.assign(static_cast<std::size_t>(v), 0);
            ++row[s];
            ++model.total_training_symbols;
            tracker.push(s);
        }
    }
    return model;
}

std::vector<double> next_symbol(const DensityModel& model, std::span<const Symbol> history) {
    ContextTracker tracker = model.make_tracker();
    for (Symbol s : history) {
        if (s >= model.model_alphabet()) throw SpecMismatch("history symbol outside the model alphabet");
        tracker.push(s);
    }
    return model.predict(tracker.key());
}

double sequence_logprob(const DensityModel& model, std::span<const Symbol> sequence) {
    ContextTracker tracker = model.make_tracker();
    double total = 0.0;
    for (Symbol s : sequence) {
        if (s >= model.model_alphabet()) throw SpecMismatch("symbol outside the model alphabet");
        total += std::log(model.predict(tracker.key())[s]);
        tracker.push(s);
    }
    return total;
}

double cross_entropy(const DensityModel& model, const Corpus& corpus) {
    if (corpus.messages.empty() || corpus.total_symbols() == 0)
        throw EmptyCorpus("evaluation corpus has no symbols");
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& msg : corpus.messages) {
        total += sequence_logprob(model, msg.symbols);
        n += msg.symbols.size();
    }
    return -total / static_cast<double>(n);
}

namespace {

double total_variation(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

}  // namespace

double mean_tv_gap(const NextSymbolFn& predictor, const LanguageSpec& spec,
                   const Corpus& eval_set) {
    if (eval_set.messages.empty()) throw EmptyCorpus("evaluation corpus has no messages");
    double total = 0.0;
    std::size_t positions = 0;
    for (const auto& msg : eval_set.messages) {
        Filter oracle(spec, BoundaryPolicy::chain);
        for (std::size_t t = 0; t < msg.symbols.size(); ++t) {
            if (msg.symbols[t] > spec.newline_symbol())
                throw SpecMismatch("evaluation symbol outside the spec alphabet");
            const auto predicted =
                predictor(std::span<const Symbol>(msg.symbols.data(), t));
            total += total_variation(predicted, oracle.predict());
            ++positions;
            oracle.push(msg.symbols[t]);
        }
    }
    return total / static_cast<double>(positions);
}

double mean_tv_gap(const DensityModel& model, const LanguageSpec& spec, const Corpus& eval_set) {
    if (model.alphabet_size != spec.alphabet_size)
        throw SpecMismatch("model and spec alphabets differ");
    if (eval_set.messages.empty()) throw EmptyCorpus("evaluation corpus has no messages");
    double total = 0.0;
    std::size_t positions = 0;
    for (const auto& msg : eval_set.messages) {
        Filter oracle(spec, BoundaryPolicy::chain);
        ContextTracker tracker = model.make_tracker();
        for (Symbol s : msg.symbols) {
            if (s > spec.newline_symbol())
                throw SpecMismatch("evaluation symbol outside the spec alphabet");
            total += total_variation(model.predict(tracker.key()), oracle.predict());
            ++positions;
            oracle.push(s);
            tracker.push(s);
        }
    }
    return total / static_cast<double>(positions);
}

void save_model(const DensityModel& model, const std::string& path) {
    nlohmann::json j;
    j["format"] = "llsim-model";
    j["version"] = 1;
    j["k"] = model.k;
    j["lambda"] = model.lambda;
    j["alphabet_size"] = model.alphabet_size;
    j["message_length"] = model.message_length;
    j["total_training_symbols"] = model.total_training_symbols;

    // Canonical order: contexts sorted by (position, symbols).
    std::vector<std::uint64_t> keys;
    keys.reserve(model.counts.size());
    for (const auto& [key, row] : model.counts) keys.push_back(key);
    std::sort(keys.begin(), keys.end(), [&](std::uint64_t a, std::uint64_t b) {
        const std::uint64_t pos_a = a & 0xFF, pos_b = b & 0xFF;
        if (pos_a != pos_b) return pos_a < pos_b;
        return (a >> 8) < (b >> 8);
    });

    nlohmann::json contexts = nlohmann::json::array();
    for (std::uint64_t key : keys) {
        nlohmann::json entry;
        entry["pos"] = static_cast<int>(key & 0xFF);
        std::vector<int> symbols(static_cast<std::size_t>(model.k));
        std::uint64_t rest = key >> 8;
        for (int i = model.k - 1; i >= 0; --i) {
            symbols[static_cast<std::size_t>(i)] = static_cast<int>(rest & 0xFF);
            rest >>= 8;
        }
        entry["symbols"] = symbols;
        nlohmann::json cnts = nlohmann::json::array();
        const auto& row = model.counts.at(key);
        for (int s = 0; s < model.model_alphabet(); ++s)
            if (row[static_cast<std::size_t>(s)] != 0)
                cnts.push_back({s, row[static_cast<std::size_t>(s)]});
        entry["counts"] = cnts;
        contexts.push_back(std::move(entry));
    }
    j["contexts"] = std::move(contexts);
    write_text_file(path, j.dump() + "\n");
}

DensityModel load_model(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("model file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object() || j.value("format", "") != "llsim-model")
        throw FormatError("not a density model file: " + path);
    if (j.value("version", -1) != 1)
        throw VersionError("unsupported model version in " + path);
    try {
        DensityModel model;
        model.k = j.at("k").get<int>();
        model.lambda = j.at("lambda").get<double>();
        model.alphabet_size = j.at("alphabet_size").get<int>();
        model.message_length = j.at("message_length").get<int>();
        model.total_training_symbols = j.at("total_training_symbols").get<std::uint64_t>();
        if (model.k < 1 || model.k > kMaxContextOrder)
            throw FormatError("context order out of range in " + path);
        for (const auto& entry : j.at("contexts")) {
            FeatureContext ctx;
            ctx.position = entry.at("pos").get<int>();
            const auto symbols = entry.at("symbols").get<std::vector<int>>();
            if (static_cast<int>(symbols.size()) != model.k)
                throw FormatError("context width mismatch in " + path);
            for (int i = 0; i < model.k; ++i)
                ctx.last_symbols[static_cast<std::size_t>(i)] =
                    static_cast<Symbol>(symbols[static_cast<std::size_t>(i)]);
            auto& row = model.counts[ctx.key(model.k)];
            row.assign(static_cast<std::size_t>(model.model_alphabet()), 0);
            for (const auto& pair : entry.at("counts")) {
                const int s = pair.at(0).get<int>();
                if (s < 0 || s >= model.model_alphabet())
                    throw FormatError("count symbol out of range in " + path);
                row[static_cast<std::size_t>(s)] = pair.at(1).get<std::uint32_t>();
            }
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed model file: " + std::string(e.what()));
    }
}

}  // namespace llsim
