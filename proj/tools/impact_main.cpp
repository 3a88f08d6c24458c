#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "impact/modelio.hpp"
#include "impact/pipeline.hpp"
#include "impact/toynet.hpp"

namespace {

using impact::Dataset;
using impact::ImpactConfig;
using impact::StatsFile;
using impact::ToyModel;
using nlohmann::json;

struct Options {
    std::string model_path;
    std::string stats_path;
    std::string out_path;
    double eta = 0.5;
    double keep_ratio = 100.0;
    std::vector<double> keep_ratios;
    std::size_t rank = 0;  // 0: use the energy rule
    std::string method = "impact";
    std::string dataset = "hetero";
    std::size_t samples = 512;
    std::uint64_t seed = 1;
    std::string layers = "*";
    std::size_t epochs = 40;
    double lr = 0.01;
    bool parallel = false;
    std::string grad_diagnostic_path;
};

Dataset load_dataset(const Options& opt) {
    return impact::make_dataset(impact::parse_dataset_kind(opt.dataset), opt.samples, opt.seed);
}

ImpactConfig make_config(const Options& opt, double keep_ratio) {
    ImpactConfig cfg;
    cfg.eta = opt.eta;
    cfg.keep_ratio = keep_ratio;
    if (opt.rank > 0) cfg.explicit_rank = opt.rank;
    return cfg;
}

int run_train(const Options& opt) {
    const Dataset data = load_dataset(opt);
    ToyModel model = impact::make_mlp({data.inputs[0].size(), 32, 16, data.targets[0].size()},
                                      impact::LossKind::Mse, opt.seed);
    const double final_loss = impact::train(model, data, opt.epochs, opt.lr, opt.seed + 1);
    impact::write_model(opt.out_path, model);

    json summary = {{"subcommand", "train"},     {"dataset", opt.dataset},
                    {"samples", opt.samples},    {"epochs", opt.epochs},
                    {"final_loss", final_loss},  {"layers", model.layers.size()},
                    {"params", model.param_count()}, {"out", opt.out_path}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_profile(const Options& opt) {
    const ToyModel model = impact::read_model(opt.model_path);
    const Dataset data = load_dataset(opt);
    const StatsFile stats = impact::pipeline::profile_model(model, data);
    impact::write_stats(opt.out_path, stats);
    if (!opt.grad_diagnostic_path.empty())
        impact::write_grad_diagnostic(opt.grad_diagnostic_path,
                                      impact::pipeline::diagnostic_rows(stats));

    json summary = {{"subcommand", "profile"},
                    {"model", opt.model_path},
                    {"samples", data.inputs.size()},
                    {"layers", stats.layers.size()},
                    {"out", opt.out_path}};
    if (!opt.grad_diagnostic_path.empty()) summary["grad_diagnostic"] = opt.grad_diagnostic_path;
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_compress(const Options& opt) {
    const ToyModel model = impact::read_model(opt.model_path);
    const StatsFile stats = impact::read_stats(opt.stats_path);
    const auto method = impact::pipeline::parse_method(opt.method);
    const auto result = impact::pipeline::compress_model(
        model, stats, method, make_config(opt, opt.keep_ratio), opt.layers, opt.parallel);
    impact::write_model(opt.out_path, result.model);

    json layer_report = json::array();
    for (const auto& layer : result.layers) {
        layer_report.push_back({{"layer", layer.name},
                                {"compressed", layer.compressed},
                                {"rank", layer.rank},
                                {"params_before", layer.params_before},
                                {"params_after", layer.params_after},
                                {"h", layer.h_closed_form},
                                {"note", layer.note}});
    }
    json summary = {{"subcommand", "compress"},
                    {"method", opt.method},
                    {"eta", opt.eta},
                    {"keep_ratio", opt.keep_ratio},
                    {"params_before", model.param_count()},
                    {"params_after", result.model.param_count()},
                    {"layers", layer_report},
                    {"out", opt.out_path}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_eval(const Options& opt) {
    const ToyModel model = impact::read_model(opt.model_path);
    const Dataset data = load_dataset(opt);
    const impact::EvalResult eval = impact::evaluate(model, data);

    json summary = {{"subcommand", "eval"},   {"model", opt.model_path},
                    {"dataset", opt.dataset}, {"samples", data.inputs.size()},
                    {"loss", eval.loss},      {"metric", eval.metric}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_sweep(const Options& opt) {
    const ToyModel model = impact::read_model(opt.model_path);
    const StatsFile stats = impact::read_stats(opt.stats_path);
    const Dataset eval_data = load_dataset(opt);

    impact::pipeline::SweepOptions sweep_opts;
    sweep_opts.keep_ratios = opt.keep_ratios.empty() ? std::vector<double>{90.0, 70.0, 50.0}
                                                     : opt.keep_ratios;
    sweep_opts.eta = opt.eta;
    sweep_opts.layer_glob = opt.layers;
    sweep_opts.parallel = opt.parallel;
    const auto rows = impact::pipeline::sweep(model, stats, eval_data, sweep_opts);
    impact::write_report(opt.out_path, rows);

    json summary = {{"subcommand", "sweep"},
                    {"methods", 4},
                    {"keep_ratios", sweep_opts.keep_ratios},
                    {"rows", rows.size()},
                    {"out", opt.out_path}};
    std::cout << summary.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IMPACT: importance-aware low-rank compression pipeline"};
    app.require_subcommand(1);

    Options opt;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", opt.seed, "random seed");
        cmd->add_option("--samples", opt.samples, "dataset size");
        cmd->add_option("--dataset", opt.dataset, "dataset kind: hetero|iso|lowrank")
            ->check(CLI::IsMember({"hetero", "iso", "lowrank"}));
    };

    CLI::App* train = app.add_subcommand("train", "build and train a toy model");
    add_common(train);
    train->add_option("--out", opt.out_path, "output model file")->required();
    train->add_option("--epochs", opt.epochs, "training epochs");
    train->add_option("--lr", opt.lr, "learning rate");

    CLI::App* profile = app.add_subcommand("profile", "collect activation/gradient statistics");
    add_common(profile);
    profile->add_option("--model", opt.model_path, "model file")->required();
    profile->add_option("--out", opt.out_path, "output stats file")->required();
    profile->add_option("--grad-diagnostic", opt.grad_diagnostic_path,
                        "also write gradient-heterogeneity CSV here");

    CLI::App* compress = app.add_subcommand("compress", "factorize linear layers");
    compress->add_option("--model", opt.model_path, "model file")->required();
    compress->add_option("--stats", opt.stats_path, "stats file")->required();
    compress->add_option("--out", opt.out_path, "output model file")->required();
    compress->add_option("--method", opt.method, "impact|svd|fwsvd|afm")
        ->check(CLI::IsMember({"impact", "svd", "fwsvd", "afm"}));
    compress->add_option("--eta", opt.eta, "importance blend in [0,1]");
    compress->add_option("--keep-ratio", opt.keep_ratio,
                         "percent of sqrt-eigenvalue energy to keep");
    compress->add_option("--rank", opt.rank, "explicit rank (overrides --keep-ratio)");
    compress->add_option("--layers", opt.layers, "layer name glob");
    compress->add_flag("--parallel", opt.parallel, "compress layers in parallel");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a model on a dataset");
    add_common(eval);
    eval->add_option("--model", opt.model_path, "model file")->required();

    CLI::App* sweep = app.add_subcommand("sweep", "compress+eval all methods at matched ranks");
    add_common(sweep);
    sweep->add_option("--model", opt.model_path, "model file")->required();
    sweep->add_option("--stats", opt.stats_path, "stats file")->required();
    sweep->add_option("--out", opt.out_path, "output report CSV")->required();
    sweep->add_option("--eta", opt.eta, "importance blend in [0,1]");
    sweep->add_option("--keep-ratio", opt.keep_ratios, "keep ratios to sweep")->delimiter(',');
    sweep->add_option("--layers", opt.layers, "layer name glob");
    sweep->add_flag("--parallel", opt.parallel, "compress layers in parallel");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) return run_train(opt);
        if (profile->parsed()) return run_profile(opt);
        if (compress->parsed()) return run_compress(opt);
        if (eval->parsed()) return run_eval(opt);
        if (sweep->parsed()) return run_sweep(opt);
    } catch (const impact::Error& e) {
        std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
    return 2;
}
