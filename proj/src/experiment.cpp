#include "fedsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fedsim/diagnostics.hpp"
#include "fedsim/pfl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedsim {

namespace {

json tensor_to_json(const Tensor& t) {
    return {{"shape", t.shape()}, {"values", t.values()}};
}

Tensor tensor_from_json(const json& j) {
    return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                  j.at("values").get<std::vector<double>>());
}

std::string head_name(HeadKind kind) {
    switch (kind) {
        case HeadKind::Standard: return "standard";
        case HeadKind::NormalizedFeature: return "normalized";
        case HeadKind::FrozenOrthonormal: return "frozen-orthonormal";
    }
    throw config_error("unknown head kind");
}

HeadKind head_from_name(const std::string& name) {
    if (name == "standard") return HeadKind::Standard;
    if (name == "normalized") return HeadKind::NormalizedFeature;
    if (name == "frozen-orthonormal") return HeadKind::FrozenOrthonormal;
    throw config_error("unknown head kind: " + name);
}

std::string loss_name(LossKind kind) {
    switch (kind) {
        case LossKind::CrossEntropy: return "ce";
        case LossKind::MseOneHot: return "mse-onehot";
        case LossKind::CrossEntropyPlusFeatureNorm: return "ce-feature-norm";
    }
    throw config_error("unknown loss kind");
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw runtime_artifact_error("cannot write " + path);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw runtime_artifact_error("missing artifact: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_checkpoint(const ModelParams& model, std::uint64_t seed,
                     const LossSpec& loss, const std::string& path) {
    json j;
    j["seed"] = seed;
    j["head"] = {{"kind", head_name(model.head.kind)}, {"tau", model.head.tau}};
    j["loss"] = {{"kind", loss_name(loss.kind)}, {"mu", loss.mu}};
    j["frozen_classifier"] = model.frozen_classifier;
    j["classifier"] = tensor_to_json(model.classifier);
    j["extractor"] = json::array();
    for (const Layer& layer : model.extractor)
        j["extractor"].push_back({{"weight", tensor_to_json(layer.weight)},
                                  {"bias", tensor_to_json(layer.bias)}});
    write_file(path, j.dump(2));
}

ModelParams load_checkpoint(const std::string& path) {
    json j = json::parse(read_file(path));
    ModelParams model;
    model.head.kind = head_from_name(j.at("head").at("kind").get<std::string>());
    model.head.tau = j.at("head").at("tau").get<double>();
    model.frozen_classifier = j.at("frozen_classifier").get<bool>();
    model.classifier = tensor_from_json(j.at("classifier"));
    for (const json& jl : j.at("extractor"))
        model.extractor.push_back(
            {tensor_from_json(jl.at("weight")), tensor_from_json(jl.at("bias"))});
    validate_model(model);
    return model;
}

std::pair<Dataset, Dataset> make_train_test(const SyntheticSpec& spec) {
    Dataset all = gen_synthetic(spec.classes, spec.dim,
                                spec.per_class + spec.test_per_class,
                                spec.class_separation, spec.noise_scale, spec.seed);
    Dataset train, test;
    train.num_classes = test.num_classes = spec.classes;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const auto& idx = all.by_class[c];
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < spec.per_class ? train : test).examples.push_back(all.examples[idx[i]]);
        }
    }
    train.rebuild_index();
    test.rebuild_index();
    return {std::move(train), std::move(test)};
}

Dataset load_train_dataset(const DatasetSpec& spec) {
    if (spec.synthetic) return make_train_test(*spec.synthetic).first;
    return load_dataset_binary(spec.path);
}

Partition make_partition(const ExperimentConfig& config, const Dataset& train,
                         std::uint64_t seed) {
    const PartitionSpec& p = config.partition;
    if (p.strategy == "iid") return partition_iid(train, config.fl.num_clients, seed);
    if (p.strategy == "sharding")
        return partition_sharding(train, config.fl.num_clients, p.shards_per_client,
                                  seed);
    const std::size_t min_per =
        p.min_per_client ? p.min_per_client : config.fl.batch_size;
    return partition_lda(train, config.fl.num_clients, p.alpha, seed, min_per);
}

ModelParams make_initial_model(const ExperimentConfig& config,
                               std::size_t input_dim, std::size_t num_classes,
                               std::uint64_t seed) {
    std::vector<std::size_t> sizes;
    sizes.push_back(input_dim);
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    return init_model(sizes, num_classes, config.fl.head_spec(),
                      config.fl.frozen_classifier(), derive_stream(seed, 0x11, 0));
}

int run_experiment(const ExperimentConfig& config) {
    config.validate();
    if (!config.dataset.synthetic)
        throw config_error("run_experiment needs a synthetic dataset spec "
                           "(file datasets carry no test split)");
    auto [train, test] = make_train_test(*config.dataset.synthetic);

    fs::create_directories(config.out_dir);

    std::vector<double> finals;
    json errors = json::array();
    for (std::uint64_t seed : config.seeds) {
        const fs::path seed_dir = fs::path(config.out_dir) / ("seed_" + std::to_string(seed));
        fs::create_directories(seed_dir);
        try {
            Partition partition = make_partition(config, train, seed);
            write_file((seed_dir / "partition.json").string(),
                       partition_to_json(partition));

            FLConfig fl = config.fl;
            fl.seed = seed;
            ModelParams initial = make_initial_model(
                config, train.examples.at(0).input.size(), train.num_classes, seed);
            RunResult result = run_federated_from(std::move(initial), fl, train, test,
                                                  partition);

            std::string metrics;
            for (const RoundMetrics& m : result.metrics) {
                json record = {{"round", m.round}, {"lr", m.lr},
                               {"acc", m.accuracy}, {"loss", m.mean_local_loss},
                               {"alg", algorithm_name(fl.algorithm)}, {"seed", seed}};
                metrics += record.dump() + "\n";
            }
            write_file((seed_dir / "metrics.jsonl").string(), metrics);

            for (const RoundSnapshot& snap : result.snapshots) {
                const std::string tag = std::to_string(snap.round);
                write_file((seed_dir / ("norm_" + tag + ".json")).string(),
                           norm_report_to_json(snap.norms));
                write_file((seed_dir / ("factor_" + tag + ".json")).string(),
                           factor_report_to_json(snap.factors));
                matrix_to_csv(snap.factors.weight_similarity,
                              (seed_dir / ("weight_similarity_" + tag + ".csv")).string());
                matrix_to_csv(snap.factors.inter_class_similarity,
                              (seed_dir / ("inter_class_similarity_" + tag + ".csv")).string());
            }

            save_checkpoint(result.final_model, seed, fl.loss_spec(),
                            (seed_dir / "final_model.json").string());
            finals.push_back(result.metrics.empty() ? 0.0
                                                    : result.metrics.back().accuracy);

            if (config.pfl) {
                std::vector<double> grid = config.pfl->lr_grid;
                if (grid.empty()) grid = {fl.lr, 0.1 * fl.lr, 0.01 * fl.lr};
                PflOutcome outcome = pfl_evaluate(
                    result.final_model, partition, train, test, fl.loss_spec(),
                    config.pfl->epochs, fl.batch_size, grid,
                    derive_stream(seed, 0xbf, 0), config.pfl->unfreeze);
                write_file((seed_dir / "pfl.json").string(),
                           personal_result_to_json(outcome));
                write_file((seed_dir / "pfl.csv").string(),
                           personal_result_to_csv(outcome,
                                                  algorithm_name(fl.algorithm)));
            }
        } catch (const std::exception& e) {
            errors.push_back({{"seed", seed}, {"error", e.what()}});
        }
    }

    json summary;
    summary["config"] = json::parse(config_to_json_text(config));
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
    summary["errors"] = errors;
    write_file((fs::path(config.out_dir) / "summary.json").string(), summary.dump(2));
    return errors.empty() ? 0 : 2;
}

void emit_plot_data(const std::string& run_dir, const std::string& kind) {
    if (kind == "norm-curves") {
        for (const auto& entry : fs::directory_iterator(run_dir)) {
            if (!entry.is_directory()) continue;
            const std::string name = entry.path().filename().string();
            if (name.rfind("seed_", 0) != 0) continue;
            std::vector<std::pair<std::size_t, json>> reports;
            for (const auto& f : fs::directory_iterator(entry.path())) {
                const std::string fname = f.path().filename().string();
                if (fname.rfind("norm_", 0) == 0 && f.path().extension() == ".json") {
                    json j = json::parse(read_file(f.path().string()));
                    reports.emplace_back(j.at("round").get<std::size_t>(), std::move(j));
                }
            }
            if (reports.empty())
                throw runtime_artifact_error("no norm reports under " +
                                             entry.path().string());
            std::sort(reports.begin(), reports.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            std::string csv = "round,series,value\n";
            for (const auto& [round, j] : reports) {
                double id = 0.0, ood = 0.0;
                std::size_t n_id = 0, n_ood = 0;
                for (const json& jc : j.at("clients")) {
                    if (!jc.at("feature_norm_id").is_null()) {
                        id += jc.at("feature_norm_id").get<double>();
                        ++n_id;
                    }
                    if (!jc.at("feature_norm_ood").is_null()) {
                        ood += jc.at("feature_norm_ood").get<double>();
                        ++n_ood;
                    }
                }
                char buf[64];
                auto row = [&csv, round, &buf](const char* series, double v) {
                    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g\n", round, series, v);
                    csv += buf;
                };
                if (n_id) row("local_id", id / static_cast<double>(n_id));
                if (n_ood) row("local_ood", ood / static_cast<double>(n_ood));
                row("global", j.at("global_feature_norm").get<double>());
                row("gap", j.at("gap").get<double>());
            }
            write_file((entry.path() / "norm_curves.csv").string(), csv);
        }
        return;
    }
    if (kind == "factor-heatmap") {
        for (const auto& entry : fs::directory_iterator(run_dir)) {
            if (!entry.is_directory()) continue;
            if (entry.path().filename().string().rfind("seed_", 0) != 0) continue;
            std::size_t best_round = 0;
            fs::path best;
            for (const auto& f : fs::directory_iterator(entry.path())) {
                const std::string fname = f.path().filename().string();
                if (fname.rfind("factor_", 0) == 0 && f.path().extension() == ".json") {
                    const std::size_t round =
                        std::stoul(fname.substr(7, fname.size() - 12));
                    if (best.empty() || round >= best_round) {
                        best_round = round;
                        best = f.path();
                    }
                }
            }
            if (best.empty())
                throw runtime_artifact_error("no factor reports under " +
                                             entry.path().string());
            json j = json::parse(read_file(best.string()));
            for (const char* key : {"weight_similarity", "inter_class_similarity"}) {
                std::string csv = "i,j,value\n";
                const auto rows = j.at(key).get<std::vector<std::vector<double>>>();
                char buf[64];
                for (std::size_t i = 0; i < rows.size(); ++i)
                    for (std::size_t k = 0; k < rows[i].size(); ++k) {
                        std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", i, k,
                                      rows[i][k]);
                        csv += buf;
                    }
                write_file((entry.path() / (std::string(key) + "_heatmap.csv")).string(),
                           csv);
            }
        }
        return;
    }
    if (kind == "mu-sweep") {
        std::vector<std::pair<double, double>> points;
        for (const auto& entry : fs::directory_iterator(run_dir)) {
            if (!entry.is_directory()) continue;
            const fs::path summary_path = entry.path() / "summary.json";
            if (!fs::exists(summary_path)) continue;
            json j = json::parse(read_file(summary_path.string()));
            if (!j.contains("mean_final_accuracy")) continue;
            points.emplace_back(j.at("config").at("fl").at("mu").get<double>(),
                                j.at("mean_final_accuracy").get<double>());
        }
        if (points.empty())
            throw runtime_artifact_error("no run summaries under " + run_dir);
        std::sort(points.begin(), points.end());
        std::string csv = "mu,accuracy\n";
        char buf[64];
        for (const auto& [mu, acc] : points) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", mu, acc);
            csv += buf;
        }
        write_file((fs::path(run_dir) / "mu_sweep.csv").string(), csv);
        return;
    }
    throw config_error("unknown plot kind: " + kind);
}

}  // namespace fedsim
