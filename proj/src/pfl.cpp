#include "fedsim/pfl.hpp"

#include <cmath>

#include <json.hpp>

#include "fedsim/fl.hpp"

namespace fedsim {

Dataset build_personal_testset(const Dataset& test_dataset,
                               const Partition& partition,
                               const Dataset& train_dataset, std::size_t client) {
    const std::set<std::size_t> classes =
        client_classes(partition, train_dataset, client);
    if (classes.empty())
        throw empty_testset_error("client " + std::to_string(client) +
                                  " holds no classes");
    Dataset personal;
    personal.num_classes = test_dataset.num_classes;
    for (const Example& ex : test_dataset.examples)
        if (classes.count(ex.label)) personal.examples.push_back(ex);
    personal.rebuild_index();
    return personal;
}

ModelParams fine_tune(const ModelParams& global_model, const Dataset& train_dataset,
                      const std::vector<std::size_t>& client_data,
                      const LossSpec& loss, std::size_t epochs,
                      std::size_t batch_size, double lr, std::uint64_t seed,
                      bool unfreeze) {
    if (epochs == 0) throw config_error("fine_tune: epochs must be >= 1");
    ModelParams start = global_model;
    if (unfreeze) start.frozen_classifier = false;
    return local_train(start, train_dataset, client_data, loss, epochs, batch_size,
                       lr, seed);
}

PflOutcome pfl_evaluate(const ModelParams& global_model, const Partition& partition,
                        const Dataset& train_dataset, const Dataset& test_dataset,
                        const LossSpec& loss, std::size_t epochs,
                        std::size_t batch_size, const std::vector<double>& lr_grid,
                        std::uint64_t seed, bool unfreeze) {
    if (lr_grid.empty()) throw config_error("pfl_evaluate: empty lr grid");

    PflOutcome outcome;
    for (double lr : lr_grid) {
        PersonalResult result;
        result.lr = lr;
        result.epochs = epochs;
        for (std::size_t client = 0; client < partition.num_clients(); ++client) {
            const auto& shard = partition.assignments[client];
            Dataset personal;
            try {
                personal = build_personal_testset(test_dataset, partition,
                                                  train_dataset, client);
            } catch (const empty_testset_error&) {
                ++result.skipped_clients;
                continue;
            }
            if (personal.size() == 0 || shard.empty()) {
                ++result.skipped_clients;
                continue;
            }
            ModelParams tuned =
                fine_tune(global_model, train_dataset, shard, loss, epochs,
                          batch_size, lr, derive_stream(seed, client, 0xf7), unfreeze);
            result.accuracies.push_back(evaluate(tuned, personal));
        }
        if (!result.accuracies.empty()) {
            double sum = 0.0;
            for (double a : result.accuracies) sum += a;
            result.mean = sum / static_cast<double>(result.accuracies.size());
            double var = 0.0;
            for (double a : result.accuracies)
                var += (a - result.mean) * (a - result.mean);
            result.stddev =
                std::sqrt(var / static_cast<double>(result.accuracies.size()));
        }
        outcome.per_lr.push_back(std::move(result));
    }
    for (std::size_t i = 1; i < outcome.per_lr.size(); ++i)
        if (outcome.per_lr[i].mean > outcome.per_lr[outcome.best_index].mean)
            outcome.best_index = i;
    return outcome;
}

std::string personal_result_to_json(const PflOutcome& outcome) {
    nlohmann::json j;
    j["results"] = nlohmann::json::array();
    for (const PersonalResult& r : outcome.per_lr) {
        nlohmann::json jr;
        jr["lr"] = r.lr;
        jr["epochs"] = r.epochs;
        jr["mean"] = r.mean;
        jr["std"] = r.stddev;
        jr["accuracies"] = r.accuracies;
        jr["skipped_clients"] = r.skipped_clients;
        j["results"].push_back(jr);
    }
    j["best_lr"] = outcome.per_lr.at(outcome.best_index).lr;
    return j.dump(2);
}

std::string personal_result_to_csv(const PflOutcome& outcome,
                                   const std::string& algorithm) {
    std::string csv = "algorithm,lr,epochs,mean,std,clients,skipped\n";
    for (const PersonalResult& r : outcome.per_lr) {
        csv += algorithm + ',' + std::to_string(r.lr) + ',' +
               std::to_string(r.epochs) + ',' + std::to_string(r.mean) + ',' +
               std::to_string(r.stddev) + ',' +
               std::to_string(r.accuracies.size()) + ',' +
               std::to_string(r.skipped_clients) + '\n';
    }
    return csv;
}

}  // namespace fedsim
