#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

namespace fedsim {

void Dataset::rebuild_index() {
    by_class.assign(num_classes, {});
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].label >= num_classes)
            throw config_error("dataset label out of range");
        by_class[examples[i].label].push_back(i);
    }
}

Dataset gen_synthetic(std::size_t num_classes, std::size_t dim,
                      std::size_t n_per_class, double class_separation,
                      double noise_scale, std::uint64_t seed) {
    if (num_classes == 0 || dim == 0 || n_per_class == 0)
        throw config_error("gen_synthetic: counts must be positive");
    if (class_separation <= 0.0 || noise_scale <= 0.0)
        throw config_error("gen_synthetic: scales must be positive");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double target = class_separation * noise_scale;
    // Means on a sphere of radius target/sqrt(2): random unit directions sit at
    // roughly the target distance; redraw any pair that comes in closer.
    const double radius = target / std::sqrt(2.0);

    std::vector<std::vector<double>> means;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<double> best;
        double best_min = -1.0;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            std::vector<double> m(dim);
            double norm = 0.0;
            for (auto& v : m) {
                v = gauss(rng);
                norm += v * v;
            }
            norm = std::sqrt(norm);
            if (norm < 1e-9) continue;
            for (auto& v : m) v *= radius / norm;
            double min_dist = std::numeric_limits<double>::infinity();
            for (const auto& other : means) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    const double diff = m[j] - other[j];
                    d2 += diff * diff;
                }
                min_dist = std::min(min_dist, std::sqrt(d2));
            }
            if (min_dist > best_min) {
                best_min = min_dist;
                best = std::move(m);
            }
            if (best_min >= target) break;
        }
        means.push_back(std::move(best));
    }

    Dataset dataset;
    dataset.num_classes = num_classes;
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            std::vector<double> x(dim);
            for (std::size_t j = 0; j < dim; ++j)
                x[j] = means[c][j] + noise_scale * gauss(rng);
            dataset.examples.push_back({Tensor({dim}, std::move(x)), c});
        }
    }
    dataset.rebuild_index();
    return dataset;
}

Partition partition_iid(const Dataset& dataset, std::size_t n_clients,
                        std::uint64_t seed) {
    if (n_clients == 0) throw config_error("need at least one client");
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        if (dataset.by_class[c].size() % n_clients != 0)
            throw config_error("iid partition: per-class count not divisible by N");
    }
    std::mt19937_64 rng(seed);
    Partition partition;
    partition.assignments.assign(n_clients, {});
    partition.strategy = "iid";
    partition.seed = seed;
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        std::vector<std::size_t> idx = dataset.by_class[c];
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t per = idx.size() / n_clients;
        for (std::size_t k = 0; k < n_clients; ++k)
            partition.assignments[k].insert(partition.assignments[k].end(),
                                            idx.begin() + k * per,
                                            idx.begin() + (k + 1) * per);
    }
    return partition;
}

Partition partition_sharding(const Dataset& dataset, std::size_t n_clients,
                             std::size_t shards_per_client, std::uint64_t seed) {
    const std::size_t total = dataset.size();
    const std::size_t num_shards = n_clients * shards_per_client;
    if (num_shards == 0) throw config_error("sharding: N and s must be positive");
    if (total % num_shards != 0)
        throw config_error("sharding: |D| not divisible by N*s");
    const std::size_t shard_size = total / num_shards;
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        if (dataset.by_class[c].size() % shard_size != 0)
            throw config_error("sharding: shard size does not divide a class count");
    }

    // label-sorted order; consecutive cuts are single-class by divisibility
    std::vector<std::size_t> sorted;
    sorted.reserve(total);
    for (std::size_t c = 0; c < dataset.num_classes; ++c)
        sorted.insert(sorted.end(), dataset.by_class[c].begin(),
                      dataset.by_class[c].end());

    std::vector<std::size_t> shard_order(num_shards);
    std::iota(shard_order.begin(), shard_order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(shard_order.begin(), shard_order.end(), rng);

    Partition partition;
    partition.assignments.assign(n_clients, {});
    partition.strategy = "sharding";
    partition.param = static_cast<double>(shards_per_client);
    partition.seed = seed;
    for (std::size_t k = 0; k < n_clients; ++k) {
        for (std::size_t j = 0; j < shards_per_client; ++j) {
            const std::size_t shard = shard_order[k * shards_per_client + j];
            partition.assignments[k].insert(
                partition.assignments[k].end(),
                sorted.begin() + shard * shard_size,
                sorted.begin() + (shard + 1) * shard_size);
        }
    }
    return partition;
}

Partition partition_lda(const Dataset& dataset, std::size_t n_clients, double alpha,
                        std::uint64_t seed, std::size_t min_per_client) {
    if (alpha <= 0.0) throw config_error("lda: alpha must be positive");
    if (n_clients == 0) throw config_error("need at least one client");

    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> gamma(alpha, 1.0);

    constexpr int kMaxRetries = 100;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        Partition partition;
        partition.assignments.assign(n_clients, {});
        partition.strategy = "lda";
        partition.param = alpha;
        partition.seed = seed;

        for (std::size_t c = 0; c < dataset.num_classes; ++c) {
            std::vector<std::size_t> idx = dataset.by_class[c];
            std::shuffle(idx.begin(), idx.end(), rng);
            const std::size_t count = idx.size();

            std::vector<double> p(n_clients);
            double sum = 0.0;
            do {
                sum = 0.0;
                for (auto& v : p) {
                    v = gamma(rng);
                    sum += v;
                }
            } while (sum <= 0.0);
            std::vector<std::size_t> alloc(n_clients);
            std::vector<std::pair<double, std::size_t>> fractional;
            std::size_t assigned = 0;
            for (std::size_t k = 0; k < n_clients; ++k) {
                const double exact = p[k] / sum * static_cast<double>(count);
                alloc[k] = static_cast<std::size_t>(std::floor(exact));
                assigned += alloc[k];
                fractional.emplace_back(exact - std::floor(exact), k);
            }
            // leftovers go to the largest fractional parts, lowest client first on ties
            std::stable_sort(fractional.begin(), fractional.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            for (std::size_t r = 0; r < count - assigned; ++r)
                ++alloc[fractional[r].second];

            std::size_t offset = 0;
            for (std::size_t k = 0; k < n_clients; ++k) {
                partition.assignments[k].insert(partition.assignments[k].end(),
                                                idx.begin() + offset,
                                                idx.begin() + offset + alloc[k]);
                offset += alloc[k];
            }
        }

        bool ok = true;
        for (const auto& a : partition.assignments)
            if (a.size() < min_per_client) ok = false;
        if (ok) return partition;
    }
    throw partition_infeasible_error("lda: retry budget exhausted under min_per_client");
}

std::set<std::size_t> client_classes(const Partition& partition,
                                     const Dataset& dataset, std::size_t client) {
    if (client >= partition.num_clients())
        throw config_error("client index out of range");
    std::set<std::size_t> classes;
    for (std::size_t idx : partition.assignments[client])
        classes.insert(dataset.examples[idx].label);
    return classes;
}

std::string partition_to_json(const Partition& partition) {
    nlohmann::json j;
    j["strategy"] = partition.strategy;
    j["params"] = partition.param;
    j["seed"] = partition.seed;
    j["N"] = partition.num_clients();
    j["assignments"] = partition.assignments;
    return j.dump(2);
}

Partition partition_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    Partition partition;
    partition.strategy = j.at("strategy").get<std::string>();
    partition.param = j.at("params").get<double>();
    partition.seed = j.at("seed").get<std::uint64_t>();
    partition.assignments = j.at("assignments").get<std::vector<std::vector<std::size_t>>>();
    if (partition.num_clients() != j.at("N").get<std::size_t>())
        throw config_error("partition json: N does not match assignments");
    return partition;
}

void save_dataset_binary(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    const std::uint64_t n = dataset.size();
    const std::uint64_t dim = n ? dataset.examples[0].input.size() : 0;
    const std::uint64_t classes = dataset.num_classes;
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(&dim), 8);
    out.write(reinterpret_cast<const char*>(&classes), 8);
    for (const Example& ex : dataset.examples) {
        out.write(reinterpret_cast<const char*>(ex.input.data()),
                  static_cast<std::streamsize>(dim * sizeof(double)));
        const std::uint32_t label = static_cast<std::uint32_t>(ex.label);
        out.write(reinterpret_cast<const char*>(&label), 4);
    }
}

Dataset load_dataset_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::uint64_t n = 0, dim = 0, classes = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    in.read(reinterpret_cast<char*>(&dim), 8);
    in.read(reinterpret_cast<char*>(&classes), 8);
    Dataset dataset;
    dataset.num_classes = classes;
    for (std::uint64_t i = 0; i < n; ++i) {
        std::vector<double> x(dim);
        in.read(reinterpret_cast<char*>(x.data()),
                static_cast<std::streamsize>(dim * sizeof(double)));
        std::uint32_t label = 0;
        in.read(reinterpret_cast<char*>(&label), 4);
        if (!in) throw std::runtime_error("truncated dataset file: " + path);
        dataset.examples.push_back({Tensor({dim}, std::move(x)), label});
    }
    dataset.rebuild_index();
    return dataset;
}

void save_dataset_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out.precision(17);
    for (const Example& ex : dataset.examples) {
        for (std::size_t j = 0; j < ex.input.size(); ++j) out << ex.input.at(j) << ',';
        out << ex.label << '\n';
    }
}

}  // namespace fedsim
