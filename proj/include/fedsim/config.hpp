#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/fl.hpp"

namespace fedsim {

struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t dim = 16;
    std::size_t per_class = 100;       // train examples per class
    std::size_t test_per_class = 20;
    double class_separation = 4.0;
    double noise_scale = 1.0;
    std::uint64_t seed = 7;
};

struct DatasetSpec {
    std::optional<SyntheticSpec> synthetic;
    std::string path;  // binary dataset file, when not synthetic
};

struct PartitionSpec {
    std::string strategy = "sharding";  // iid | sharding | lda
    std::size_t shards_per_client = 2;
    double alpha = 0.5;
    std::size_t min_per_client = 0;  // 0 = batch size
};

struct PflSpec {
    std::size_t epochs = 5;
    std::vector<double> lr_grid;  // empty = {lr, 0.1 lr, 0.01 lr}
    bool unfreeze = true;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    PartitionSpec partition;
    std::vector<std::size_t> hidden;  // extractor output sizes; last = feature dim
    FLConfig fl;
    std::optional<PflSpec> pfl;
    std::string out_dir = "runs/out";
    std::vector<std::uint64_t> seeds = {1};

    void validate() const;
};

ExperimentConfig parse_config(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& config);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace fedsim
