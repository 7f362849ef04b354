#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsim/diagnostics.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/pfl.hpp"

namespace fs = std::filesystem;
using namespace fedsim;

namespace {

ExperimentConfig load_config(const std::string& path, const std::string& out_override,
                             const std::vector<std::uint64_t>& seed_override) {
    ExperimentConfig config = parse_config(path);
    if (!out_override.empty()) config.out_dir = out_override;
    if (const char* env = std::getenv("FEDSIM_OUT")) config.out_dir = env;
    if (!seed_override.empty()) config.seeds = seed_override;
    config.validate();
    return config;
}

int run_summary_only(const ExperimentConfig& config);

int run_seeds(ExperimentConfig config, bool parallel) {
    if (!parallel || config.seeds.size() <= 1) return run_experiment(config);
    // independent per-seed configs writing into the shared out dir
    int status = 0;
    std::vector<ExperimentConfig> parts;
    for (std::uint64_t seed : config.seeds) {
        ExperimentConfig one = config;
        one.seeds = {seed};
        parts.push_back(std::move(one));
    }
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(parts.size()); ++i) {
        const int rc = run_experiment(parts[static_cast<std::size_t>(i)]);
#pragma omp critical
        status = std::max(status, rc);
    }
    // per-seed runs each wrote a summary for one seed; rebuild the joint one
    if (status == 0) status = run_summary_only(config);
    return status;
}

int run_summary_only(const ExperimentConfig& config) {
    nlohmann::json summary;
    summary["config"] = nlohmann::json::parse(config_to_json_text(config));
    std::vector<double> finals;
    for (std::uint64_t seed : config.seeds) {
        const fs::path metrics =
            fs::path(config.out_dir) / ("seed_" + std::to_string(seed)) / "metrics.jsonl";
        std::ifstream in(metrics);
        std::string line, last;
        while (std::getline(in, line))
            if (!line.empty()) last = line;
        if (!last.empty())
            finals.push_back(nlohmann::json::parse(last).at("acc").get<double>());
    }
    summary["final_accuracies"] = finals;
    if (!finals.empty()) {
        double mean = 0.0;
        for (double a : finals) mean += a;
        mean /= static_cast<double>(finals.size());
        double var = 0.0;
        for (double a : finals) var += (a - mean) * (a - mean);
        summary["mean_final_accuracy"] = mean;
        summary["std_final_accuracy"] =
            std::sqrt(var / static_cast<double>(finals.size()));
    }
    summary["errors"] = nlohmann::json::array();
    std::ofstream out(fs::path(config.out_dir) / "summary.json");
    out << summary.dump(2);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, plot_dir, plot_kind, checkpoint_path;
    std::vector<std::uint64_t> seeds;
    bool parallel = false;

    CLI::App* cmd_run = app.add_subcommand("run", "run a federated experiment");
    cmd_run->add_option("--config", config_path, "config file")->required();
    cmd_run->add_option("--seeds", seeds, "override seed list");
    cmd_run->add_option("--out", out_dir, "override output directory");
    cmd_run->add_flag("--parallel", parallel, "run seeds in parallel");

    CLI::App* cmd_partition =
        app.add_subcommand("partition", "export the partition only");
    cmd_partition->add_option("--config", config_path, "config file")->required();
    cmd_partition->add_option("--seeds", seeds, "override seed list");
    cmd_partition->add_option("--out", out_dir, "override output directory");

    CLI::App* cmd_analyze =
        app.add_subcommand("analyze", "factor report from a checkpoint");
    cmd_analyze->add_option("--config", config_path, "config file")->required();
    cmd_analyze->add_option("--checkpoint", checkpoint_path, "model checkpoint")
        ->required();
    cmd_analyze->add_option("--out", out_dir, "override output directory");

    CLI::App* cmd_plot = app.add_subcommand("plot-data", "emit plot CSVs from a run");
    cmd_plot->add_option("--dir", plot_dir, "run directory")->required();
    cmd_plot
        ->add_option("--kind", plot_kind,
                     "norm-curves | factor-heatmap | mu-sweep")
        ->required();

    CLI::App* cmd_pfl =
        app.add_subcommand("pfl", "personalized fine-tuning from run checkpoints");
    cmd_pfl->add_option("--config", config_path, "config file")->required();
    cmd_pfl->add_option("--dir", plot_dir, "run directory with seed checkpoints")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            return run_seeds(load_config(config_path, out_dir, seeds), parallel);
        }
        if (cmd_partition->parsed()) {
            ExperimentConfig config = load_config(config_path, out_dir, seeds);
            Dataset train = load_train_dataset(config.dataset);
            fs::create_directories(config.out_dir);
            for (std::uint64_t seed : config.seeds) {
                Partition partition = make_partition(config, train, seed);
                std::ofstream out(fs::path(config.out_dir) /
                                  ("partition_" + std::to_string(seed) + ".json"));
                out << partition_to_json(partition);
            }
            return 0;
        }
        if (cmd_analyze->parsed()) {
            ExperimentConfig config = load_config(config_path, out_dir, {});
            if (!config.dataset.synthetic)
                throw config_error("analyze needs a synthetic dataset spec");
            auto [train, test] = make_train_test(*config.dataset.synthetic);
            ModelParams model = load_checkpoint(checkpoint_path);
            std::cout << factor_report_to_json(
                             factor_report(model, test, 0, "checkpoint"))
                      << "\n";
            return 0;
        }
        if (cmd_plot->parsed()) {
            emit_plot_data(plot_dir, plot_kind);
            return 0;
        }
        if (cmd_pfl->parsed()) {
            ExperimentConfig config = load_config(config_path, out_dir, seeds);
            if (!config.dataset.synthetic)
                throw config_error("pfl needs a synthetic dataset spec");
            if (!config.pfl) throw config_error("config has no pfl section");
            auto [train, test] = make_train_test(*config.dataset.synthetic);
            for (std::uint64_t seed : config.seeds) {
                const fs::path seed_dir =
                    fs::path(plot_dir) / ("seed_" + std::to_string(seed));
                ModelParams model =
                    load_checkpoint((seed_dir / "final_model.json").string());
                Partition partition = partition_from_json(
                    [&] {
                        std::ifstream in(seed_dir / "partition.json");
                        return std::string(std::istreambuf_iterator<char>(in),
                                           std::istreambuf_iterator<char>());
                    }());
                std::vector<double> grid = config.pfl->lr_grid;
                if (grid.empty())
                    grid = {config.fl.lr, 0.1 * config.fl.lr, 0.01 * config.fl.lr};
                PflOutcome outcome = pfl_evaluate(
                    model, partition, train, test, config.fl.loss_spec(),
                    config.pfl->epochs, config.fl.batch_size, grid,
                    derive_stream(seed, 0xbf, 0), config.pfl->unfreeze);
                std::ofstream out(seed_dir / "pfl.json");
                out << personal_result_to_json(outcome);
            }
            return 0;
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
