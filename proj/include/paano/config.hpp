#pragma once

// Run configuration shared by the config file ("key = value" lines), the
// command-line flags and --print-config. Precedence: defaults < file < flags.

#include <charconv>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "paano/error.hpp"
#include "paano/series_io.hpp"
#include "paano/trainer.hpp"

namespace paano {

inline constexpr std::size_t kMultivariateWindow = 96;

struct RunConfig {
    TrainConfig train;
    bool window_set = false;  // true once w came from a file or flag
    double bank_ratio = 0.1;
    std::size_t k = 3;
    std::size_t kmeans_iters = kKMeansMaxIters;
    std::string output_dir = ".";

    // Patch length for a d-channel series: 96 for multivariate data unless w
    // was given explicitly.
    std::size_t window_for(std::size_t channels) const {
        return (!window_set && channels > 1) ? kMultivariateWindow : train.w;
    }
    TrainConfig train_config_for(std::size_t channels) const {
        TrainConfig c = train;
        c.w = window_for(channels);
        return c;
    }
};

namespace detail {

inline std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
    const std::string_view t = detail::trim(text);
    T v{};
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw DataError("config key '" + std::string(key) + "': cannot parse '" + std::string(t) + "'");
    }
    return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
    const std::string_view t = detail::trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw DataError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(t) + "'");
}

}  // namespace detail

struct ConfigKey {
    std::string name;  // file key; the flag is --name with '_' replaced by '-'
    std::string help;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;

    std::string flag() const {
        std::string f = name;
        for (char& c : f) {
            if (c == '_') c = '-';
        }
        return "--" + f;
    }
};

inline const std::vector<ConfigKey>& config_keys() {
    using detail::format_real;
    using detail::parse_number;
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        auto size_key = [&k](std::string name, std::string help, std::size_t TrainConfig::*field) {
            k.push_back({name, std::move(help),
                         [name, field](RunConfig& c, std::string_view v) {
                             c.train.*field = parse_number<std::size_t>(name, v);
                         },
                         [field](const RunConfig& c) { return std::to_string(c.train.*field); }});
        };
        auto real_key = [&k](std::string name, std::string help, double TrainConfig::*field) {
            k.push_back({name, std::move(help),
                         [name, field](RunConfig& c, std::string_view v) {
                             c.train.*field = parse_number<double>(name, v);
                         },
                         [field](const RunConfig& c) { return format_real(c.train.*field); }});
        };
        k.push_back({"w", "patch length (default 64; 96 when the series has more than one channel)",
                     [](RunConfig& c, std::string_view v) {
                         c.train.w = parse_number<std::size_t>("w", v);
                         c.window_set = true;
                     },
                     [](const RunConfig& c) { return std::to_string(c.train.w); }});
        size_key("iterations", "training iterations T", &TrainConfig::iterations);
        size_key("batch_size", "minibatch size M", &TrainConfig::batch_size);
        real_key("lr", "initial learning rate", &TrainConfig::lr);
        real_key("weight_decay", "AdamW weight decay", &TrainConfig::weight_decay);
        real_key("margin", "triplet margin", &TrainConfig::margin);
        size_key("max_offset", "largest positive shift r", &TrainConfig::max_offset);
        size_key("random_pairs", "random partners per anchor for the pretext task", &TrainConfig::random_pairs);
        size_key("decay_iters", "iterations over which the pretext weight decays to 0", &TrainConfig::decay_iters);
        k.push_back({"lambda_schedule", "pretext weight schedule: linear or constant",
                     [](RunConfig& c, std::string_view v) {
                         const auto t = detail::trim(v);
                         if (t == "linear") {
                             c.train.lambda_schedule = LambdaSchedule::Linear;
                         } else if (t == "constant") {
                             c.train.lambda_schedule = LambdaSchedule::Constant;
                         } else {
                             throw DataError("config key 'lambda_schedule': expected linear or constant, got '" +
                                             std::string(t) + "'");
                         }
                     },
                     [](const RunConfig& c) {
                         return std::string(c.train.lambda_schedule == LambdaSchedule::Linear ? "linear" : "constant");
                     }});
        k.push_back({"negative", "negative selection strategy (farthest)",
                     [](RunConfig& c, std::string_view v) {
                         const auto t = detail::trim(v);
                         if (t == "farthest") {
                             c.train.negative = NegativeStrategy::Farthest;
                         } else if (t == "closest") {
                             c.train.negative = NegativeStrategy::Closest;
                         } else if (t == "median") {
                             c.train.negative = NegativeStrategy::Median;
                         } else if (t == "random") {
                             c.train.negative = NegativeStrategy::Random;
                         } else {
                             throw DataError("config key 'negative': unknown strategy '" + std::string(t) + "'");
                         }
                     },
                     [](const RunConfig& c) {
                         switch (c.train.negative) {
                             case NegativeStrategy::Farthest: return std::string("farthest");
                             case NegativeStrategy::Closest: return std::string("closest");
                             case NegativeStrategy::Median: return std::string("median");
                             case NegativeStrategy::Random: return std::string("random");
                         }
                         return std::string("farthest");
                     }});
        k.push_back({"seed", "random seed",
                     [](RunConfig& c, std::string_view v) { c.train.seed = parse_number<std::uint64_t>("seed", v); },
                     [](const RunConfig& c) { return std::to_string(c.train.seed); }});
        k.push_back({"deterministic", "deterministic execution (true/false)",
                     [](RunConfig& c, std::string_view v) {
                         c.train.deterministic = detail::parse_bool("deterministic", v);
                     },
                     [](const RunConfig& c) { return std::string(c.train.deterministic ? "true" : "false"); }});
        k.push_back({"bank_ratio", "fraction of training patches kept in the memory bank",
                     [](RunConfig& c, std::string_view v) { c.bank_ratio = parse_number<double>("bank_ratio", v); },
                     [](const RunConfig& c) { return format_real(c.bank_ratio); }});
        k.push_back({"k", "nearest neighbours averaged per patch score",
                     [](RunConfig& c, std::string_view v) { c.k = parse_number<std::size_t>("k", v); },
                     [](const RunConfig& c) { return std::to_string(c.k); }});
        k.push_back({"kmeans_iters", "maximum k-means iterations for bank reduction",
                     [](RunConfig& c, std::string_view v) {
                         c.kmeans_iters = parse_number<std::size_t>("kmeans_iters", v);
                     },
                     [](const RunConfig& c) { return std::to_string(c.kmeans_iters); }});
        k.push_back({"output_dir", "directory for default output files",
                     [](RunConfig& c, std::string_view v) { c.output_dir = std::string(detail::trim(v)); },
                     [](const RunConfig& c) { return c.output_dir; }});
        return k;
    }();
    return keys;
}

inline const ConfigKey& config_key(std::string_view name) {
    for (const auto& k : config_keys()) {
        if (k.name == name) return k;
    }
    throw DataError("unknown config key '" + std::string(name) + "'");
}

inline void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
    config_key(detail::trim(key)).set(config, value);
}

// Applies "key = value" lines; '#' starts a comment.
inline void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "config") {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view v(line);
        if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
        v = detail::trim(v);
        if (v.empty()) continue;
        const auto eq = v.find('=');
        if (eq == std::string_view::npos) {
            throw DataError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            set_config_value(config, v.substr(0, eq), v.substr(eq + 1));
        } catch (const DataError& e) {
            throw DataError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline void apply_config_file(RunConfig& config, const std::string& path) {
    std::string text;
    for (const auto& line : detail::read_lines(path)) text += line + "\n";
    apply_config_text(config, text, path);
}

inline std::string format_config(const RunConfig& config) {
    std::string out;
    for (const auto& k : config_keys()) out += k.name + " = " + k.get(config) + "\n";
    return out;
}

}  // namespace paano
