#include "fedsim/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace fedsim {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
    for (const auto& [key, _] : j.items())
        if (!known.count(key))
            throw config_error("unknown key '" + key + "' in " + where);
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
    if (!dataset.synthetic && dataset.path.empty())
        throw config_error("dataset: either synthetic spec or path required");
    if (dataset.synthetic) {
        const SyntheticSpec& s = *dataset.synthetic;
        if (s.classes == 0 || s.dim == 0 || s.per_class == 0 || s.test_per_class == 0)
            throw config_error("synthetic dataset counts must be positive");
        if (s.class_separation <= 0.0 || s.noise_scale <= 0.0)
            throw config_error("synthetic dataset scales must be positive");
    }
    if (partition.strategy != "iid" && partition.strategy != "sharding" &&
        partition.strategy != "lda")
        throw config_error("unknown partition strategy: " + partition.strategy);
    if (partition.strategy == "lda" && partition.alpha <= 0.0)
        throw config_error("lda alpha must be positive");
    if (fl.fraction <= 0.0)
        throw config_error("fraction must be positive");
    fl.validate();
    if (dataset.synthetic) {
        const std::size_t total = dataset.synthetic->classes * dataset.synthetic->per_class;
        if (partition.strategy == "sharding") {
            const std::size_t shards = fl.num_clients * partition.shards_per_client;
            if (shards == 0 || total % shards != 0)
                throw config_error(
                    "sharding requires |D| divisible by N*s (shards of equal size)");
            if (dataset.synthetic->per_class % (total / shards) != 0)
                throw config_error(
                    "sharding requires the shard size to divide each class count");
        }
        if (partition.strategy == "iid" &&
            dataset.synthetic->per_class % fl.num_clients != 0)
            throw config_error("iid requires per-class count divisible by N");
    }
    if (hidden.empty()) throw config_error("model: hidden layer list must be non-empty");
    if (pfl) {
        if (pfl->epochs == 0) throw config_error("pfl epochs must be >= 1");
        for (double lr : pfl->lr_grid)
            if (lr < 0.0) throw config_error("pfl lr grid entries must be >= 0");
    }
    if (seeds.empty()) throw config_error("at least one seed required");
}

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config parse error: ") + e.what());
    }
    reject_unknown(j, {"dataset", "partition", "model", "fl", "pfl", "out_dir", "seeds"},
                   "config");

    ExperimentConfig config;
    if (j.contains("dataset")) {
        const json& jd = j.at("dataset");
        reject_unknown(jd, {"synthetic", "path"}, "dataset");
        if (jd.contains("synthetic")) {
            const json& js = jd.at("synthetic");
            reject_unknown(js,
                           {"classes", "dim", "per_class", "test_per_class",
                            "class_separation", "noise_scale", "seed"},
                           "dataset.synthetic");
            SyntheticSpec s;
            get_if(js, "classes", s.classes);
            get_if(js, "dim", s.dim);
            get_if(js, "per_class", s.per_class);
            get_if(js, "test_per_class", s.test_per_class);
            get_if(js, "class_separation", s.class_separation);
            get_if(js, "noise_scale", s.noise_scale);
            get_if(js, "seed", s.seed);
            config.dataset.synthetic = s;
        }
        get_if(jd, "path", config.dataset.path);
    } else {
        config.dataset.synthetic = SyntheticSpec{};
    }

    if (j.contains("partition")) {
        const json& jp = j.at("partition");
        reject_unknown(jp, {"strategy", "s", "alpha", "min_per_client"}, "partition");
        get_if(jp, "strategy", config.partition.strategy);
        get_if(jp, "s", config.partition.shards_per_client);
        get_if(jp, "alpha", config.partition.alpha);
        get_if(jp, "min_per_client", config.partition.min_per_client);
    }

    if (j.contains("model")) {
        const json& jm = j.at("model");
        reject_unknown(jm, {"hidden"}, "model");
        get_if(jm, "hidden", config.hidden);
    }
    if (config.hidden.empty() && config.dataset.synthetic) {
        config.hidden = {2 * config.dataset.synthetic->dim,
                         config.dataset.synthetic->dim};
    }

    if (j.contains("fl")) {
        const json& jf = j.at("fl");
        reject_unknown(jf,
                       {"algorithm", "clients", "fraction", "rounds", "local_epochs",
                        "batch_size", "lr", "mu", "tau", "snapshot_cadence"},
                       "fl");
        if (jf.contains("algorithm"))
            config.fl.algorithm = algorithm_from_name(jf.at("algorithm").get<std::string>());
        get_if(jf, "clients", config.fl.num_clients);
        get_if(jf, "fraction", config.fl.fraction);
        get_if(jf, "rounds", config.fl.rounds);
        get_if(jf, "local_epochs", config.fl.local_epochs);
        get_if(jf, "batch_size", config.fl.batch_size);
        get_if(jf, "lr", config.fl.lr);
        get_if(jf, "mu", config.fl.mu);
        get_if(jf, "tau", config.fl.tau);
        get_if(jf, "snapshot_cadence", config.fl.snapshot_cadence);
    }

    if (j.contains("pfl")) {
        const json& jp = j.at("pfl");
        reject_unknown(jp, {"epochs", "lr_grid", "unfreeze"}, "pfl");
        PflSpec spec;
        get_if(jp, "epochs", spec.epochs);
        get_if(jp, "lr_grid", spec.lr_grid);
        get_if(jp, "unfreeze", spec.unfreeze);
        config.pfl = spec;
    }

    get_if(j, "out_dir", config.out_dir);
    get_if(j, "seeds", config.seeds);

    config.validate();
    return config;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string config_to_json_text(const ExperimentConfig& config) {
    json j;
    if (config.dataset.synthetic) {
        const SyntheticSpec& s = *config.dataset.synthetic;
        j["dataset"]["synthetic"] = {{"classes", s.classes},
                                     {"dim", s.dim},
                                     {"per_class", s.per_class},
                                     {"test_per_class", s.test_per_class},
                                     {"class_separation", s.class_separation},
                                     {"noise_scale", s.noise_scale},
                                     {"seed", s.seed}};
    }
    if (!config.dataset.path.empty()) j["dataset"]["path"] = config.dataset.path;
    j["partition"] = {{"strategy", config.partition.strategy},
                      {"s", config.partition.shards_per_client},
                      {"alpha", config.partition.alpha},
                      {"min_per_client", config.partition.min_per_client}};
    j["model"] = {{"hidden", config.hidden}};
    j["fl"] = {{"algorithm", algorithm_name(config.fl.algorithm)},
               {"clients", config.fl.num_clients},
               {"fraction", config.fl.fraction},
               {"rounds", config.fl.rounds},
               {"local_epochs", config.fl.local_epochs},
               {"batch_size", config.fl.batch_size},
               {"lr", config.fl.lr},
               {"mu", config.fl.mu},
               {"tau", config.fl.tau},
               {"snapshot_cadence", config.fl.snapshot_cadence}};
    if (config.pfl) {
        j["pfl"] = {{"epochs", config.pfl->epochs},
                    {"lr_grid", config.pfl->lr_grid},
                    {"unfreeze", config.pfl->unfreeze}};
    }
    j["out_dir"] = config.out_dir;
    j["seeds"] = config.seeds;
    return j.dump(2);
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return config_to_json_text(a) == config_to_json_text(b);
}

}  // namespace fedsim
