#pragma once

// Command implementations behind the paano executable. Each command throws
// paano::Error on failure; the executable maps that to a nonzero exit code.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "paano/checkpoint.hpp"
#include "paano/config.hpp"
#include "paano/detector.hpp"
#include "paano/memory_bank.hpp"
#include "paano/metrics.hpp"
#include "paano/plot.hpp"
#include "paano/series_io.hpp"
#include "paano/trainer.hpp"

namespace paano {

inline nlohmann::ordered_json to_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["vus_pr"] = r.vus_pr;
    j["vus_roc"] = r.vus_roc;
    j["range_f1"] = r.range_f1;
    j["auc_pr"] = r.auc_pr;
    j["auc_roc"] = r.auc_roc;
    j["point_f1"] = r.point_f1;
    j["lag_L"] = r.lag;
    return j;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string in_output_dir(const RunConfig& config, const std::string& file) {
    return (std::filesystem::path(config.output_dir) / file).string();
}

inline void ensure_parent(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline std::ofstream open_output(const std::string& path) {
    ensure_parent(path);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    return f;
}

// Training part of a series: the prefix up to `split` when given.
inline TimeSeries training_part(TimeSeries series, std::optional<std::size_t> split_at) {
    if (!split_at) return series;
    series.split_point = *split_at;
    return split(series).first;
}

inline TimeSeries scoring_part(TimeSeries series, std::optional<std::size_t> split_at) {
    if (!split_at) return series;
    series.split_point = *split_at;
    return split(series).second;
}

inline std::vector<double> first_channel(const TimeSeries& s) {
    std::vector<double> x(s.length());
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = s.values(static_cast<Eigen::Index>(t), 0);
    return x;
}

}  // namespace detail

struct TrainedModel {
    ModelParams<float> params;
    ReducedMemoryBank bank;
    std::vector<TrainLogEntry> log;
    std::size_t full_bank_size = 0;
};

inline TrainedModel fit(const TimeSeries& train_series, const RunConfig& config) {
    TrainResult r = train(train_series, config.train_config_for(train_series.channels()));
    TrainedModel m;
    m.full_bank_size = r.bank.size();
    m.bank = reduce_bank(r.bank, config.bank_ratio, config.train.seed, config.kmeans_iters);
    m.params = std::move(r.params);
    m.log = std::move(r.log);
    return m;
}

// Clamps k to the bank size, warning when it had to.
inline std::size_t effective_k(std::size_t k, const ReducedMemoryBank& bank, std::ostream& err) {
    if (k < 1) throw DataError("k must be at least 1");
    if (k > bank.size()) {
        err << "warning: k = " << k << " exceeds the memory bank size " << bank.size() << "; using k = " << bank.size()
            << "\n";
        return bank.size();
    }
    return k;
}

struct TrainArgs {
    std::string data;
    std::string model;  // default <output_dir>/model.paab
    std::string log;    // default <output_dir>/train_log.csv
    std::optional<std::size_t> split;
};

inline void cmd_train(const TrainArgs& args, const RunConfig& config, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const TimeSeries series = detail::training_part(load_csv(args.data), args.split);
    const TrainedModel m = fit(series, config);
    const std::string model_path = args.model.empty() ? detail::in_output_dir(config, "model.paab") : args.model;
    const std::string log_path = args.log.empty() ? detail::in_output_dir(config, "train_log.csv") : args.log;
    detail::ensure_parent(model_path);
    save_checkpoint(m.params, m.bank, model_path);
    auto log = detail::open_output(log_path);
    log << format_log_header() << "\n";
    for (const auto& e : m.log) log << format_log_line(e) << "\n";
    out << "memory bank: " << m.bank.size() << " of " << m.full_bank_size << " patch embeddings\n";
    out << "checkpoint: " << model_path << "\n";
    out << "training log: " << log_path << "\n";
    out << "elapsed: " << detail::format_real(detail::seconds_since(t0)) << " s\n";
}

struct ScoreArgs {
    std::string model;
    std::string data;
    std::string output;  // default <output_dir>/scores.csv
    std::optional<std::size_t> split;
};

inline void cmd_score(const ScoreArgs& args, const RunConfig& config, std::ostream& out, std::ostream& err) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto [params, bank] = load_checkpoint(args.model);
    const TimeSeries series = detail::scoring_part(load_csv(args.data), args.split);
    if (series.channels() != params.channels) {
        throw ShapeError(args.data + " has " + std::to_string(series.channels()) + " channels but the checkpoint " +
                         args.model + " was trained on " + std::to_string(params.channels));
    }
    const std::size_t k = effective_k(config.k, bank, err);
    const ScoreSeries scores = score_series(params, bank, series, k);
    const std::string path = args.output.empty() ? detail::in_output_dir(config, "scores.csv") : args.output;
    detail::ensure_parent(path);
    write_scores(scores, path);
    out << "scores: " << path << " (" << scores.scores.size() << " rows)\n";
    out << "elapsed: " << detail::format_real(detail::seconds_since(t0)) << " s\n";
}

struct EvalArgs {
    std::string scores;
    std::string labels;
    std::string data;  // optional: series whose first channel sets the lag
    std::optional<std::size_t> lag;
    std::string output;  // empty: print the report only
};

inline MetricReport evaluate_files(const EvalArgs& args) {
    const ScoreSeries scores = read_scores(args.scores);
    const auto labels = load_labels(args.labels);
    if (scores.scores.size() != labels.size()) {
        throw DataError("length mismatch: " + args.scores + " has " + std::to_string(scores.scores.size()) +
                        " scores, " + args.labels + " has " + std::to_string(labels.size()) + " labels");
    }
    std::size_t lag = 0;
    if (args.lag) {
        lag = *args.lag;
    } else if (!args.data.empty()) {
        lag = estimate_lag(detail::first_channel(load_csv(args.data)));
    } else {
        lag = std::min(kDefaultLag, labels.size() / 4);
    }
    return evaluate(scores.scores, labels, lag);
}

inline void cmd_eval(const EvalArgs& args, std::ostream& out) {
    const std::string text = to_json(evaluate_files(args)).dump(2);
    if (!args.output.empty()) {
        auto f = detail::open_output(args.output);
        f << text << "\n";
    }
    out << text << "\n";
}

// One value list per swept config key, e.g. "k=1,3,5".
struct Sweep {
    std::string key;
    std::vector<std::string> values;
};

inline Sweep parse_sweep(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
        throw DataError("sweep '" + spec + "' must look like key=v1,v2,...");
    }
    Sweep s;
    s.key = std::string(detail::trim(std::string_view(spec).substr(0, eq)));
    config_key(s.key);
    std::stringstream vals(spec.substr(eq + 1));
    std::string v;
    while (std::getline(vals, v, ',')) {
        if (!detail::trim(v).empty()) s.values.emplace_back(detail::trim(v));
    }
    if (s.values.empty()) throw DataError("sweep '" + spec + "' has no values");
    return s;
}

// Bench inputs: for every <name>.train.csv in the directory, <name>.test.csv
// and <name>.labels.csv must sit next to it.
struct BenchSeries {
    std::string name;
    std::string train;
    std::string test;
    std::string labels;
};

inline std::vector<BenchSeries> discover_bench(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
    std::vector<BenchSeries> out;
    const std::string suffix = ".train.csv";
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string file = entry.path().filename().string();
        if (file.size() <= suffix.size() || file.compare(file.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
        const std::string name = file.substr(0, file.size() - suffix.size());
        const auto base = std::filesystem::path(dir) / name;
        out.push_back({name, entry.path().string(), base.string() + ".test.csv", base.string() + ".labels.csv"});
    }
    std::sort(out.begin(), out.end(), [](const BenchSeries& a, const BenchSeries& b) { return a.name < b.name; });
    if (out.empty()) throw DataError("no '<name>.train.csv' files in '" + dir + "'");
    return out;
}

struct BenchArgs {
    std::string dir;
    std::string output;  // default <output_dir>/bench.csv
    std::vector<std::string> sweeps;
};

struct BenchRow {
    std::string series;
    std::vector<std::string> setting;  // one value per sweep key
    std::optional<MetricReport> report;
    std::string status;
    double seconds = 0.0;
};

inline std::vector<BenchRow> run_bench(const BenchArgs& args, const RunConfig& base, std::ostream& err) {
    std::vector<Sweep> sweeps;
    for (const auto& s : args.sweeps) sweeps.push_back(parse_sweep(s));
    std::vector<std::vector<std::string>> settings{{}};
    for (const auto& s : sweeps) {
        std::vector<std::vector<std::string>> next;
        for (const auto& prefix : settings) {
            for (const auto& v : s.values) {
                next.push_back(prefix);
                next.back().push_back(v);
            }
        }
        settings = std::move(next);
    }
    const auto series = discover_bench(args.dir);
    std::vector<BenchRow> rows;
    for (const auto& setting : settings) {
        RunConfig config = base;
        for (std::size_t i = 0; i < sweeps.size(); ++i) set_config_value(config, sweeps[i].key, setting[i]);
        for (const auto& s : series) {
            BenchRow row{s.name, setting, std::nullopt, "ok", 0.0};
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const TimeSeries train_series = load_csv(s.train);
                const TimeSeries test_series = load_csv(s.test);
                const auto labels = load_labels(s.labels);
                if (labels.size() != test_series.length()) {
                    throw DataError(s.labels + " has " + std::to_string(labels.size()) + " labels but " + s.test +
                                    " has " + std::to_string(test_series.length()) + " rows");
                }
                const TrainedModel m = fit(train_series, config);
                const ScoreSeries scores = score_series(m.params, m.bank, test_series, effective_k(config.k, m.bank, err));
                row.report = evaluate(scores.scores, labels, estimate_lag(detail::first_channel(test_series)));
            } catch (const std::exception& e) {
                row.status = std::string("error: ") + e.what();
                err << "bench: skipping " << s.name << ": " << e.what() << "\n";
            }
            row.seconds = detail::seconds_since(t0);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

// Per-series rows followed by one mean row per sweep setting (means over the
// series that succeeded).
inline std::string format_bench(const std::vector<BenchRow>& rows, const std::vector<std::string>& sweep_keys) {
    std::ostringstream os;
    os << "series";
    for (const auto& k : sweep_keys) os << "," << k;
    os << ",vus_pr,vus_roc,range_f1,auc_pr,auc_roc,point_f1,lag_L,seconds,status\n";
    auto metrics = [](const MetricReport& r) {
        return std::vector<double>{r.vus_pr, r.vus_roc, r.range_f1, r.auc_pr, r.auc_roc, r.point_f1,
                                   static_cast<double>(r.lag)};
    };
    auto emit = [&](const std::string& name, const std::vector<std::string>& setting, const std::vector<double>* vals,
                    double seconds, const std::string& status) {
        os << csv_quote(name);
        for (const auto& v : setting) os << "," << csv_quote(v);
        for (std::size_t i = 0; i < 7; ++i) os << "," << (vals ? format_score((*vals)[i]) : std::string());
        os << "," << detail::format_real(seconds) << "," << csv_quote(status) << "\n";
    };
    std::vector<std::vector<std::string>> order;
    for (const auto& r : rows) {
        if (std::find(order.begin(), order.end(), r.setting) == order.end()) order.push_back(r.setting);
    }
    for (const auto& r : rows) {
        if (r.report) {
            const auto v = metrics(*r.report);
            emit(r.series, r.setting, &v, r.seconds, r.status);
        } else {
            emit(r.series, r.setting, nullptr, r.seconds, r.status);
        }
    }
    for (const auto& setting : order) {
        std::vector<double> sum(7, 0.0);
        double seconds = 0.0;
        std::size_t n = 0;
        for (const auto& r : rows) {
            if (r.setting != setting || !r.report) continue;
            const auto v = metrics(*r.report);
            for (std::size_t i = 0; i < 7; ++i) sum[i] += v[i];
            seconds += r.seconds;
            ++n;
        }
        if (n == 0) {
            emit("mean", setting, nullptr, 0.0, "error: no series succeeded");
            continue;
        }
        for (auto& v : sum) v /= static_cast<double>(n);
        emit("mean", setting, &sum, seconds / static_cast<double>(n), "ok");
    }
    return os.str();
}

inline void cmd_bench(const BenchArgs& args, const RunConfig& config, std::ostream& out, std::ostream& err) {
    const auto rows = run_bench(args, config, err);
    std::vector<std::string> keys;
    for (const auto& s : args.sweeps) keys.push_back(parse_sweep(s).key);
    const std::string text = format_bench(rows, keys);
    const std::string path = args.output.empty() ? detail::in_output_dir(config, "bench.csv") : args.output;
    auto f = detail::open_output(path);
    f << text;
    out << text;
    if (std::none_of(rows.begin(), rows.end(), [](const BenchRow& r) { return r.report.has_value(); })) {
        throw DataError("bench: every series failed");
    }
}

struct PlotArgs {
    std::string data;
    std::string scores;
    std::string labels;  // optional
    std::string output;  // default <output_dir>/plot.svg
};

inline void cmd_plot(const PlotArgs& args, const RunConfig& config, std::ostream& out) {
    const auto series = detail::first_channel(load_csv(args.data));
    const ScoreSeries scores = read_scores(args.scores);
    std::vector<std::uint8_t> labels;
    if (!args.labels.empty()) labels = load_labels(args.labels);
    const std::string svg = render_svg(series, scores.scores, labels);
    const std::string path = args.output.empty() ? detail::in_output_dir(config, "plot.svg") : args.output;
    auto f = detail::open_output(path);
    f << svg;
    out << "plot: " << path << "\n";
}

}  // namespace paano
