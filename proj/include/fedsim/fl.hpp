#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/diagnostics_types.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class Algorithm { FedAVG, FedFN, FedFR, FedBABU, SphereFedCE, SphereFedMSE };

std::string algorithm_name(Algorithm alg);
Algorithm algorithm_from_name(const std::string& name);

struct FLConfig {
    std::size_t num_clients = 20;
    double fraction = 0.25;
    std::size_t rounds = 64;
    std::size_t local_epochs = 5;
    std::size_t batch_size = 50;
    double lr = 0.01;
    Algorithm algorithm = Algorithm::FedAVG;
    double mu = 0.0;    // FedFR
    double tau = 1.0;   // SphereFed variants
    std::uint64_t seed = 0;
    std::size_t snapshot_cadence = 0;  // rounds between diagnostics; 0 = rounds/16

    void validate() const;
    HeadSpec head_spec() const;
    LossSpec loss_spec() const;
    bool frozen_classifier() const;
};

struct RoundMetrics {
    std::size_t round = 0;
    double accuracy = 0.0;
    double mean_local_loss = 0.0;
    double lr = 0.0;
    std::optional<std::size_t> snapshot;  // index into RunResult::snapshots
};

struct RoundSnapshot {
    std::size_t round = 0;
    NormReport norms;
    FactorReport factors;  // of the global model
};

struct RunResult {
    ModelParams final_model;
    std::vector<RoundMetrics> metrics;
    std::vector<RoundSnapshot> snapshots;
};

/// Uniform subset of size ceil(r*N) without replacement; deterministic in
/// (seed, round).
std::vector<std::size_t> sample_clients(std::size_t n_clients, double fraction,
                                        std::size_t round, std::uint64_t seed);

/// Step decay: eta until R/2, then 0.1*eta until 3R/4, then 0.01*eta.
double lr_at_round(double eta, std::size_t rounds, std::size_t round);

/// E epochs of seeded mini-batch SGD on a copy; frozen parameters untouched.
ModelParams local_train(const ModelParams& model, const Dataset& dataset,
                        const std::vector<std::size_t>& shard, const LossSpec& loss,
                        std::size_t epochs, std::size_t batch_size, double lr,
                        std::uint64_t seed);

ModelParams aggregate(const std::vector<ModelParams>& models,
                      const std::vector<double>& weights);

double evaluate(const ModelParams& model, const Dataset& dataset);

RunResult run_federated(const FLConfig& config, const Dataset& train,
                        const Dataset& test, const Partition& partition);

/// Same loop, starting from a caller-built initial model.
RunResult run_federated_from(ModelParams initial, const FLConfig& config,
                             const Dataset& train, const Dataset& test,
                             const Partition& partition);

/// Per-(round, client) RNG stream so parallel and serial execution agree.
std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

}  // namespace fedsim
