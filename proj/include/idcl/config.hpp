#pragma once

// Training configuration and its flat `key = value` text form.

#include "idcl/tensor.hpp"

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace idcl {

enum class Variant { idcl, lightgcn, no_icl, no_cr };

inline std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::idcl: return "idcl";
        case Variant::lightgcn: return "lightgcn";
        case Variant::no_icl: return "no-icl";
        case Variant::no_cr: return "no-cr";
    }
    return "idcl";
}

inline Variant parse_variant(std::string_view s) {
    if (s == "idcl") return Variant::idcl;
    if (s == "lightgcn") return Variant::lightgcn;
    if (s == "no-icl") return Variant::no_icl;
    if (s == "no-cr") return Variant::no_cr;
    throw ConfigError("unknown variant '" + std::string(s) + "' (expected idcl, lightgcn, no-icl, no-cr)");
}

/// 64-bit FNV-1a; used for config and dataset fingerprints.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

struct TrainConfig {
    Variant variant = Variant::idcl;

    int dim = 64;
    int intents = 8;
    int layers = 2;
    double init_std = 0.1;
    bool two_layer_heads = false;
    bool normalized_aggregation = false;

    double lambda_icl = 0.1;
    double lambda_cr = 0.01;
    double lambda_l2 = 1e-5;

    double tau = 0.2;
    int icl_batch = 256;
    bool exclude_positive = false;
    bool exact_log_expectation = false;
    bool stop_grad_confidence = false;

    double epsilon = 0.5;
    bool stop_grad_pi = false;

    double dropout = 0.1;

    double lr = 1e-3;
    int batch_size = 2048;
    int max_epochs = 500;
    int patience = 10;
    int eval_every = 1;
    std::uint64_t seed = 2023;

    double val_frac = 0.1;
    double test_frac = 0.2;
    double rating_threshold = 1.0;
    int heldout_users = 0;  // 0 selects per-user interaction holdout
    double heldout_frac = 0.5;

    std::vector<int> topk{20, 50, 100};
    bool recall_capped_denominator = false;

    [[nodiscard]] int delta_dim() const { return intents > 0 ? dim / intents : 0; }
    [[nodiscard]] bool uses_disentangler() const { return variant != Variant::lightgcn; }
    [[nodiscard]] double effective_lambda_icl() const {
        return variant == Variant::idcl || variant == Variant::no_cr ? lambda_icl : 0.0;
    }
    [[nodiscard]] double effective_lambda_cr() const {
        return variant == Variant::idcl || variant == Variant::no_icl ? lambda_cr : 0.0;
    }

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
        if (dim <= 0 || intents <= 0 || layers < 1) fail("model.dim, model.intents must be positive and model.layers >= 1");
        if (dim % intents != 0) fail("model.dim (" + std::to_string(dim) + ") must be divisible by model.intents (" + std::to_string(intents) + ")");
        if (!(init_std > 0)) fail("model.init_std must be positive");
        if (lambda_icl < 0 || lambda_cr < 0 || lambda_l2 < 0) fail("loss weights must be non-negative");
        if (!(tau > 0)) fail("icl.tau must be positive");
        if (icl_batch < 2) fail("icl.batch must be >= 2");
        if (!(epsilon > 0)) fail("cr.epsilon must be positive");
        if (!(dropout >= 0 && dropout < 1)) fail("aug.dropout must be in [0, 1)");
        if (!(lr >= 0)) fail("train.lr must be non-negative");
        if (batch_size < 1) fail("train.batch_size must be >= 1");
        if (max_epochs < 1 || patience < 1 || eval_every < 1) fail("train.max_epochs, train.patience, train.eval_every must be >= 1");
        if (val_frac < 0 || test_frac < 0 || val_frac + test_frac >= 1) fail("data.val_frac + data.test_frac must be in [0, 1)");
        if (heldout_users < 0) fail("data.heldout_users must be >= 0");
        if (!(heldout_frac > 0 && heldout_frac < 1)) fail("data.heldout_frac must be in (0, 1)");
        if (topk.empty()) fail("eval.topk must list at least one cutoff");
        for (int k : topk)
            if (k < 1) fail("eval.topk entries must be >= 1");
    }

    /// Sets one key from its text form.
    void set(std::string_view key, std::string_view value);

    /// Canonical text, sorted by key, one `key = value` per line.
    [[nodiscard]] std::string to_text() const;

    [[nodiscard]] std::string hash() const { return hex64(fnv1a(to_text())); }

    /// Applies every `key = value` line; '#' starts a comment.
    void apply_text(std::string_view text, std::string_view origin = "<config>") {
        std::istringstream in{std::string(text)};
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash_pos = line.find('#'); hash_pos != std::string::npos) line.erase(hash_pos);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": expected `key = value`");
            }
            auto strip = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            try {
                set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
            } catch (const ConfigError& err) {
                throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": " + err.what());
            }
        }
    }

    static TrainConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path.string());
        std::stringstream buf;
        buf << in.rdbuf();
        TrainConfig cfg;
        cfg.apply_text(buf.str(), path.string());
        cfg.validate();
        return cfg;
    }

    static TrainConfig from_text(std::string_view text) {
        TrainConfig cfg;
        cfg.apply_text(text);
        cfg.validate();
        return cfg;
    }
};

namespace detail {

template <class T>
T parse_number(std::string_view key, std::string_view s) {
    T v{};
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError("invalid value '" + std::string(s) + "' for " + std::string(key));
    return v;
}

inline bool parse_bool(std::string_view key, std::string_view s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("invalid boolean '" + std::string(s) + "' for " + std::string(key));
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct ConfigField {
    std::function<void(TrainConfig&, std::string_view)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <class T>
ConfigField field(T TrainConfig::*member) {
    return {[member](TrainConfig& c, std::string_view v) {
                if constexpr (std::is_same_v<T, bool>) {
                    c.*member = parse_bool("", v);
                } else {
                    c.*member = parse_number<T>("", v);
                }
            },
            [member](const TrainConfig& c) -> std::string {
                if constexpr (std::is_same_v<T, bool>) {
                    return c.*member ? "true" : "false";
                } else if constexpr (std::is_floating_point_v<T>) {
                    return format_double(c.*member);
                } else {
                    return std::to_string(c.*member);
                }
            }};
}

inline const std::map<std::string, ConfigField, std::less<>>& config_fields() {
    static const std::map<std::string, ConfigField, std::less<>> fields = [] {
        std::map<std::string, ConfigField, std::less<>> f;
        f["model.variant"] = {[](TrainConfig& c, std::string_view v) { c.variant = parse_variant(v); },
                              [](const TrainConfig& c) { return std::string(variant_name(c.variant)); }};
        f["model.dim"] = field(&TrainConfig::dim);
        f["model.intents"] = field(&TrainConfig::intents);
        f["model.layers"] = field(&TrainConfig::layers);
        f["model.init_std"] = field(&TrainConfig::init_std);
        f["dis.two_layer"] = field(&TrainConfig::two_layer_heads);
        f["dis.normalized_aggregation"] = field(&TrainConfig::normalized_aggregation);
        f["loss.lambda_icl"] = field(&TrainConfig::lambda_icl);
        f["loss.lambda_cr"] = field(&TrainConfig::lambda_cr);
        f["loss.lambda_l2"] = field(&TrainConfig::lambda_l2);
        f["icl.tau"] = field(&TrainConfig::tau);
        f["icl.batch"] = field(&TrainConfig::icl_batch);
        f["icl.exclude_positive"] = field(&TrainConfig::exclude_positive);
        f["icl.exact_log_expectation"] = field(&TrainConfig::exact_log_expectation);
        f["icl.stop_grad_confidence"] = field(&TrainConfig::stop_grad_confidence);
        f["cr.epsilon"] = field(&TrainConfig::epsilon);
        f["cr.stop_grad_pi"] = field(&TrainConfig::stop_grad_pi);
        f["aug.dropout"] = field(&TrainConfig::dropout);
        f["train.lr"] = field(&TrainConfig::lr);
        f["train.batch_size"] = field(&TrainConfig::batch_size);
        f["train.max_epochs"] = field(&TrainConfig::max_epochs);
        f["train.patience"] = field(&TrainConfig::patience);
        f["train.eval_every"] = field(&TrainConfig::eval_every);
        f["train.seed"] = field(&TrainConfig::seed);
        f["data.val_frac"] = field(&TrainConfig::val_frac);
        f["data.test_frac"] = field(&TrainConfig::test_frac);
        f["data.rating_threshold"] = field(&TrainConfig::rating_threshold);
        f["data.heldout_users"] = field(&TrainConfig::heldout_users);
        f["data.heldout_frac"] = field(&TrainConfig::heldout_frac);
        f["eval.recall_capped_denominator"] = field(&TrainConfig::recall_capped_denominator);
        f["eval.topk"] = {[](TrainConfig& c, std::string_view v) {
                              std::vector<int> ks;
                              std::size_t start = 0;
                              while (start <= v.size()) {
                                  auto comma = v.find(',', start);
                                  if (comma == std::string_view::npos) comma = v.size();
                                  auto tok = v.substr(start, comma - start);
                                  while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
                                  while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
                                  ks.push_back(parse_number<int>("eval.topk", tok));
                                  start = comma + 1;
                              }
                              c.topk = std::move(ks);
                          },
                          [](const TrainConfig& c) {
                              std::string s;
                              for (std::size_t i = 0; i < c.topk.size(); ++i) s += (i ? "," : "") + std::to_string(c.topk[i]);
                              return s;
                          }};
        return f;
    }();
    return fields;
}

}  // namespace detail

inline void TrainConfig::set(std::string_view key, std::string_view value) {
    const auto& fields = detail::config_fields();
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    try {
        it->second.set(*this, value);
    } catch (const ConfigError&) {
        throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
    }
}

inline std::string TrainConfig::to_text() const {
    std::string out;
    for (const auto& [key, f] : detail::config_fields()) out += key + " = " + f.get(*this) + "\n";
    return out;
}

}  // namespace idcl
