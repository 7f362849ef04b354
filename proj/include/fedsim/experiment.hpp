#pragma once

#include "fedsim/config.hpp"
#include "fedsim/data.hpp"
#include "fedsim/fl.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

struct runtime_artifact_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// checkpoint io: JSON of named arrays + specs; f64 round-trips bit-exactly
void save_checkpoint(const ModelParams& model, std::uint64_t seed,
                     const LossSpec& loss, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

/// Train and test sets drawn from the same class means: one generation pass,
/// split per class.
std::pair<Dataset, Dataset> make_train_test(const SyntheticSpec& spec);

Dataset load_train_dataset(const DatasetSpec& spec);

Partition make_partition(const ExperimentConfig& config, const Dataset& train,
                         std::uint64_t seed);

ModelParams make_initial_model(const ExperimentConfig& config,
                               std::size_t input_dim, std::size_t num_classes,
                               std::uint64_t seed);

/// One subdirectory per seed: metrics.jsonl, partition.json, snapshots,
/// final_model.json, optional pfl results; summary.json on top.
int run_experiment(const ExperimentConfig& config);

void emit_plot_data(const std::string& run_dir, const std::string& kind);

}  // namespace fedsim
