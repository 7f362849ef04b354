#pragma once

#include "fedsim/data.hpp"
#include "fedsim/fl.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

struct empty_testset_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PersonalResult {
    std::vector<double> accuracies;  // one per evaluated client
    double mean = 0.0;
    double stddev = 0.0;
    double lr = 0.0;
    std::size_t epochs = 0;
    std::size_t skipped_clients = 0;  // empty personal test sets
};

/// Test examples whose labels are among the client's training classes.
Dataset build_personal_testset(const Dataset& test_dataset,
                               const Partition& partition,
                               const Dataset& train_dataset, std::size_t client);

/// Local SGD from the global checkpoint; unfreeze lifts frozen-classifier
/// flags for the "-FT" variants.
ModelParams fine_tune(const ModelParams& global_model, const Dataset& train_dataset,
                      const std::vector<std::size_t>& client_data,
                      const LossSpec& loss, std::size_t epochs,
                      std::size_t batch_size, double lr, std::uint64_t seed,
                      bool unfreeze);

struct PflOutcome {
    std::vector<PersonalResult> per_lr;
    std::size_t best_index = 0;  // argmax mean
};

PflOutcome pfl_evaluate(const ModelParams& global_model, const Partition& partition,
                        const Dataset& train_dataset, const Dataset& test_dataset,
                        const LossSpec& loss, std::size_t epochs,
                        std::size_t batch_size, const std::vector<double>& lr_grid,
                        std::uint64_t seed, bool unfreeze);

std::string personal_result_to_json(const PflOutcome& outcome);
std::string personal_result_to_csv(const PflOutcome& outcome,
                                   const std::string& algorithm);

}  // namespace fedsim
