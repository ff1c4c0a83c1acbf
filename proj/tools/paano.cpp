#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "paano/commands.hpp"

namespace {

struct ConfigFlags {
    std::string config_file;
    bool print_config = false;
    std::map<std::string, std::string> values;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
    cmd->add_option("--config", flags.config_file, "config file of 'key = value' lines");
    cmd->add_flag("--print-config", flags.print_config, "print the resolved configuration and exit");
    for (const auto& key : paano::config_keys()) {
        cmd->add_option_function<std::string>(
            key.flag(), [&flags, name = key.name](const std::string& v) { flags.values[name] = v; }, key.help);
    }
}

paano::RunConfig resolve(const ConfigFlags& flags) {
    paano::RunConfig config;
    if (!flags.config_file.empty()) paano::apply_config_file(config, flags.config_file);
    for (const auto& [name, value] : flags.values) paano::set_config_value(config, name, value);
    return config;
}

void print_config(paano::RunConfig config, const std::string& data) {
    if (!data.empty()) config.train.w = config.window_for(paano::load_csv(data).channels());
    std::cout << paano::format_config(config);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patch-based anomaly detection for time series"};
    app.require_subcommand(1);

    ConfigFlags flags;

    paano::TrainArgs train_args;
    std::optional<std::size_t> train_split;
    auto* train = app.add_subcommand("train", "train an encoder and memory bank on a CSV series");
    train->add_option("data", train_args.data, "training series CSV")->required();
    train->add_option("-o,--model", train_args.model, "checkpoint path (default <output_dir>/model.paab)");
    train->add_option("--log", train_args.log, "training log CSV (default <output_dir>/train_log.csv)");
    train->add_option("--split", train_split, "train on rows 1..SPLIT only");
    add_config_flags(train, flags);

    paano::ScoreArgs score_args;
    std::optional<std::size_t> score_split;
    auto* score = app.add_subcommand("score", "score every time step of a series");
    score->add_option("model", score_args.model, "checkpoint file")->required();
    score->add_option("data", score_args.data, "series CSV")->required();
    score->add_option("-o,--output", score_args.output, "scores CSV (default <output_dir>/scores.csv)");
    score->add_option("--split", score_split, "score rows after SPLIT only");
    add_config_flags(score, flags);

    paano::EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "evaluate scores against labels");
    eval->add_option("scores", eval_args.scores, "scores CSV")->required();
    eval->add_option("labels", eval_args.labels, "labels CSV")->required();
    eval->add_option("--data", eval_args.data, "series CSV used to estimate the lag L");
    eval->add_option("--lag", eval_args.lag, "lag L for the VUS measures");
    eval->add_option("-o,--output", eval_args.output, "write the JSON report to this file");

    paano::BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench", "train, score and evaluate every series in a directory");
    bench->add_option("dir", bench_args.dir, "directory of <name>.train.csv/.test.csv/.labels.csv triples")->required();
    bench->add_option("-o,--output", bench_args.output, "aggregate CSV (default <output_dir>/bench.csv)");
    bench->add_option("--sweep", bench_args.sweeps, "key=v1,v2,... (repeatable)");
    add_config_flags(bench, flags);

    paano::PlotArgs plot_args;
    auto* plot = app.add_subcommand("plot", "render series, scores and anomalies as SVG");
    plot->add_option("data", plot_args.data, "series CSV")->required();
    plot->add_option("scores", plot_args.scores, "scores CSV")->required();
    plot->add_option("--labels", plot_args.labels, "labels CSV");
    plot->add_option("-o,--output", plot_args.output, "SVG path (default <output_dir>/plot.svg)");
    add_config_flags(plot, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        const paano::RunConfig config = resolve(flags);
        if (flags.print_config) {
            print_config(config, train->parsed() ? train_args.data : std::string());
            return 0;
        }
        if (train->parsed()) {
            train_args.split = train_split;
            paano::cmd_train(train_args, config, std::cout);
        } else if (score->parsed()) {
            score_args.split = score_split;
            paano::cmd_score(score_args, config, std::cout, std::cerr);
        } else if (eval->parsed()) {
            paano::cmd_eval(eval_args, std::cout);
        } else if (bench->parsed()) {
            paano::cmd_bench(bench_args, config, std::cout, std::cerr);
        } else if (plot->parsed()) {
            paano::cmd_plot(plot_args, config, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
