#include "fedsim/fl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedsim/diagnostics.hpp"
#include "fedsim/kernels.hpp"

namespace fedsim {

std::string algorithm_name(Algorithm alg) {
    switch (alg) {
        case Algorithm::FedAVG: return "fedavg";
        case Algorithm::FedFN: return "fedfn";
        case Algorithm::FedFR: return "fedfr";
        case Algorithm::FedBABU: return "fedbabu";
        case Algorithm::SphereFedCE: return "spherefed-ce";
        case Algorithm::SphereFedMSE: return "spherefed-mse";
    }
    throw config_error("unknown algorithm");
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "fedavg") return Algorithm::FedAVG;
    if (name == "fedfn") return Algorithm::FedFN;
    if (name == "fedfr") return Algorithm::FedFR;
    if (name == "fedbabu") return Algorithm::FedBABU;
    if (name == "spherefed-ce") return Algorithm::SphereFedCE;
    if (name == "spherefed-mse") return Algorithm::SphereFedMSE;
    throw config_error("unknown algorithm: " + name);
}

void FLConfig::validate() const {
    if (fraction <= 0.0 || fraction > 1.0)
        throw config_error("fraction must be in (0, 1]");
    if (num_clients == 0) throw config_error("need at least one client");
    if (local_epochs == 0 || batch_size == 0)
        throw config_error("local epochs and batch size must be positive");
    if (lr < 0.0) throw config_error("learning rate must be nonnegative");
    if (mu < 0.0) throw config_error("mu must be nonnegative");
    if (tau <= 0.0) throw config_error("tau must be positive");
}

HeadSpec FLConfig::head_spec() const {
    switch (algorithm) {
        case Algorithm::FedAVG:
        case Algorithm::FedFR:
        case Algorithm::FedBABU:
            return {HeadKind::Standard, 1.0};
        case Algorithm::FedFN:
            return {HeadKind::NormalizedFeature, 1.0};
        case Algorithm::SphereFedCE:
        case Algorithm::SphereFedMSE:
            return {HeadKind::FrozenOrthonormal, tau};
    }
    throw config_error("unknown algorithm");
}

LossSpec FLConfig::loss_spec() const {
    switch (algorithm) {
        case Algorithm::FedFR:
            return {LossKind::CrossEntropyPlusFeatureNorm, mu};
        case Algorithm::SphereFedMSE:
            return {LossKind::MseOneHot, 0.0};
        default:
            return {LossKind::CrossEntropy, 0.0};
    }
}

bool FLConfig::frozen_classifier() const {
    return algorithm == Algorithm::FedBABU || algorithm == Algorithm::SphereFedCE ||
           algorithm == Algorithm::SphereFedMSE;
}

std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    // splitmix64 over the mixed words
    std::uint64_t x = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xbf58476d1ce4e5b9ULL);
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<std::size_t> sample_clients(std::size_t n_clients, double fraction,
                                        std::size_t round, std::uint64_t seed) {
    const std::size_t count =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_clients)));
    std::vector<std::size_t> pool(n_clients);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::mt19937_64 rng(derive_stream(seed, round, 0x5a0));
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n_clients - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(count);
    return pool;
}

double lr_at_round(double eta, std::size_t rounds, std::size_t round) {
    if (round >= rounds) throw config_error("round out of range");
    if (round < rounds / 2) return eta;
    if (round < 3 * rounds / 4) return 0.1 * eta;
    return 0.01 * eta;
}

namespace {

struct FlatGrads {
    std::vector<std::vector<double>> weights, biases;
    std::vector<double> classifier;
};

void sgd_step(ModelParams& model, Tape& tape, const ModelGraph& graph, double lr) {
    for (std::size_t l = 0; l < model.extractor.size(); ++l) {
        const auto& gw = tape.grad(graph.layers[l].first);
        const auto& gb = tape.grad(graph.layers[l].second);
        auto& w = model.extractor[l].weight.values();
        auto& b = model.extractor[l].bias.values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
    }
    if (!model.frozen_classifier) {
        const auto& gc = tape.grad(graph.classifier);
        auto& c = model.classifier.values();
        for (std::size_t i = 0; i < c.size(); ++i) c[i] -= lr * gc[i];
    }
}

}  // namespace

ModelParams local_train(const ModelParams& model, const Dataset& dataset,
                        const std::vector<std::size_t>& shard, const LossSpec& loss,
                        std::size_t epochs, std::size_t batch_size, double lr,
                        std::uint64_t seed) {
    if (shard.empty()) throw config_error("local_train: empty shard");
    check_loss_head_compatible(loss, model.head);

    ModelParams local = model;
    std::vector<std::size_t> order = shard;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::mt19937_64 rng(derive_stream(seed, epoch, 0xe90c));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(start + batch_size, order.size());
            try {
                Tape tape;
                ModelGraph graph = register_params(tape, local);
                Tape::Id total = 0;
                bool first = true;
                for (std::size_t i = start; i < end; ++i) {
                    const Example& ex = dataset.examples[order[i]];
                    Tape::Id one = loss_graph(tape, graph, local, loss,
                                              tape.input(ex.input), ex.label);
                    total = first ? one : tape.add(total, one);
                    first = false;
                }
                Tape::Id mean =
                    tape.scale(total, 1.0 / static_cast<double>(end - start));
                tape.backward(mean);
                sgd_step(local, tape, graph, lr);
            } catch (const degenerate_norm_error& e) {
                throw degenerate_norm_error(std::string(e.what()) + " (epoch " +
                                            std::to_string(epoch) + ", batch at " +
                                            std::to_string(start) + ")");
            }
        }
    }
    return local;
}

ModelParams aggregate(const std::vector<ModelParams>& models,
                      const std::vector<double>& weights) {
    if (models.empty() || models.size() != weights.size())
        throw config_error("aggregate: model/weight count mismatch");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw config_error("aggregate: negative weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw config_error("aggregate: weights must sum to 1");

    ModelParams out = models[0];
    for (auto& layer : out.extractor) {
        std::fill(layer.weight.values().begin(), layer.weight.values().end(), 0.0);
        std::fill(layer.bias.values().begin(), layer.bias.values().end(), 0.0);
    }
    if (!out.frozen_classifier)
        std::fill(out.classifier.values().begin(), out.classifier.values().end(), 0.0);

    for (std::size_t m = 0; m < models.size(); ++m) {
        const ModelParams& src = models[m];
        if (src.extractor.size() != out.extractor.size() ||
            !src.classifier.same_shape(out.classifier))
            throw config_error("aggregate: architecture mismatch");
        for (std::size_t l = 0; l < out.extractor.size(); ++l) {
            if (!src.extractor[l].weight.same_shape(out.extractor[l].weight))
                throw config_error("aggregate: architecture mismatch");
            kernels::axpy(weights[m], src.extractor[l].weight.data(),
                          out.extractor[l].weight.data(),
                          out.extractor[l].weight.size());
            kernels::axpy(weights[m], src.extractor[l].bias.data(),
                          out.extractor[l].bias.data(), out.extractor[l].bias.size());
        }
        if (!out.frozen_classifier)
            kernels::axpy(weights[m], src.classifier.data(), out.classifier.data(),
                          out.classifier.size());
    }
    return out;
}

double evaluate(const ModelParams& model, const Dataset& dataset) {
    if (dataset.size() == 0) throw config_error("evaluate: empty dataset");
    std::size_t correct = 0;
    for (const Example& ex : dataset.examples) {
        const Tensor z = logits(model, extract_features(model, ex.input));
        std::size_t best = 0;
        for (std::size_t i = 1; i < z.size(); ++i)
            if (z.at(i) > z.at(best)) best = i;  // ties keep the lowest index
        if (best == ex.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

RunResult run_federated(const FLConfig& config, const Dataset& train,
                        const Dataset& test, const Partition& partition) {
    config.validate();
    if (partition.num_clients() != config.num_clients)
        throw config_error("partition does not match N");

    const std::size_t input_dim = train.examples.at(0).input.size();
    // default 2-layer extractor; callers with a model spec use run_federated_from
    ModelParams global = init_model({input_dim, 2 * input_dim, input_dim},
                                    train.num_classes, config.head_spec(),
                                    config.frozen_classifier(),
                                    derive_stream(config.seed, 0x11, 0));
    return run_federated_from(std::move(global), config, train, test, partition);
}

RunResult run_federated_from(ModelParams global, const FLConfig& config,
                             const Dataset& train, const Dataset& test,
                             const Partition& partition) {
    config.validate();
    if (partition.num_clients() != config.num_clients)
        throw config_error("partition does not match N");
    const LossSpec loss = config.loss_spec();
    const std::size_t cadence =
        config.snapshot_cadence ? config.snapshot_cadence
                                : std::max<std::size_t>(1, config.rounds / 16);

    RunResult result;
    for (std::size_t round = 0; round < config.rounds; ++round) {
        const double lr = lr_at_round(config.lr, config.rounds, round);
        const std::vector<std::size_t> selected =
            sample_clients(config.num_clients, config.fraction, round, config.seed);

        std::vector<ModelParams> locals(selected.size());
        std::vector<double> losses(selected.size(), 0.0);
        std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
        for (long long ii = 0; ii < static_cast<long long>(selected.size()); ++ii) {
            const std::size_t i = static_cast<std::size_t>(ii);
            try {
                const auto& shard = partition.assignments[selected[i]];
                locals[i] = local_train(global, train, shard, loss,
                                        config.local_epochs, config.batch_size, lr,
                                        derive_stream(config.seed, round, selected[i]));
                double acc = 0.0;
                for (std::size_t idx : shard)
                    acc += loss_value(loss, locals[i], train.examples[idx].input,
                                      train.examples[idx].label);
                losses[i] = acc / static_cast<double>(shard.size());
            } catch (const degenerate_norm_error& e) {
#pragma omp critical
                if (!failure)
                    failure = std::make_exception_ptr(degenerate_norm_error(
                        std::string(e.what()) + " (client " +
                        std::to_string(selected[i]) + ")"));
            } catch (...) {
#pragma omp critical
                if (!failure) failure = std::current_exception();
            }
        }
        if (failure) std::rethrow_exception(failure);

        // data-proportional convex weights over the selected clients
        double total = 0.0;
        for (std::size_t c : selected)
            total += static_cast<double>(partition.assignments[c].size());
        std::vector<double> weights;
        weights.reserve(selected.size());
        for (std::size_t c : selected)
            weights.push_back(static_cast<double>(partition.assignments[c].size()) / total);
        // nudge the last weight so the sum is exactly 1 in f64
        double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
        weights.back() += 1.0 - wsum;

        global = aggregate(locals, weights);

        RoundMetrics metrics;
        metrics.round = round;
        metrics.lr = lr;
        metrics.accuracy = evaluate(global, test);
        metrics.mean_local_loss =
            std::accumulate(losses.begin(), losses.end(), 0.0) /
            static_cast<double>(losses.size());

        if ((round + 1) % cadence == 0 || round + 1 == config.rounds) {
            RoundSnapshot snap;
            snap.round = round;
            snap.norms = norm_report(locals, selected, global, partition, train, test,
                                     round);
            snap.factors = factor_report(global, test, round, "global");
            metrics.snapshot = result.snapshots.size();
            result.snapshots.push_back(std::move(snap));
        }
        result.metrics.push_back(metrics);
    }
    result.final_model = std::move(global);
    return result;
}

}  // namespace fedsim
