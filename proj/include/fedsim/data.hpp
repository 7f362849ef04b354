#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

struct partition_infeasible_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Example {
    Tensor input;
    std::size_t label;
};

struct Dataset {
    std::vector<Example> examples;
    std::size_t num_classes = 0;
    std::vector<std::vector<std::size_t>> by_class;  // label -> example indices

    std::size_t size() const { return examples.size(); }
    void rebuild_index();
};

struct Partition {
    std::vector<std::vector<std::size_t>> assignments;  // client -> example indices
    std::string strategy;
    double param = 0.0;  // s or alpha; 0 for iid
    std::uint64_t seed = 0;

    std::size_t num_clients() const { return assignments.size(); }
};

Dataset gen_synthetic(std::size_t num_classes, std::size_t dim,
                      std::size_t n_per_class, double class_separation,
                      double noise_scale, std::uint64_t seed);

Partition partition_iid(const Dataset& dataset, std::size_t n_clients,
                        std::uint64_t seed);
Partition partition_sharding(const Dataset& dataset, std::size_t n_clients,
                             std::size_t shards_per_client, std::uint64_t seed);
Partition partition_lda(const Dataset& dataset, std::size_t n_clients, double alpha,
                        std::uint64_t seed, std::size_t min_per_client = 0);

std::set<std::size_t> client_classes(const Partition& partition,
                                     const Dataset& dataset, std::size_t client);

// serialization
std::string partition_to_json(const Partition& partition);
Partition partition_from_json(const std::string& json_text);
void save_dataset_binary(const Dataset& dataset, const std::string& path);
Dataset load_dataset_binary(const std::string& path);
void save_dataset_csv(const Dataset& dataset, const std::string& path);

}  // namespace fedsim
