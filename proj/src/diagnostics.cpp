#include "fedsim/diagnostics.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace fedsim {

namespace {

constexpr double kDegenerateNorm = 1e-12;

double cosine(const double* a, const double* b, std::size_t n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < kDegenerateNorm || nb < kDegenerateNorm)
        throw degenerate_norm_error("cosine: degenerate vector");
    return dot / (na * nb);
}

std::vector<Tensor> features_per_class(const ModelParams& model,
                                       const Dataset& dataset, std::size_t c) {
    std::vector<Tensor> feats;
    feats.reserve(dataset.by_class[c].size());
    for (std::size_t idx : dataset.by_class[c])
        feats.push_back(extract_features(model, dataset.examples[idx].input));
    return feats;
}

}  // namespace

Tensor compute_prototypes(const ModelParams& model, const Dataset& dataset,
                          bool normalized) {
    const std::size_t d = model.feature_dim();
    const std::size_t c_count = dataset.num_classes;
    Tensor prototypes = Tensor::zeros({d, c_count});
    for (std::size_t c = 0; c < c_count; ++c) {
        const auto& idx = dataset.by_class[c];
        if (idx.empty())
            throw incomplete_prototype_error("class " + std::to_string(c) +
                                             " absent from dataset");
        std::vector<double> mean(d, 0.0);
        for (std::size_t i : idx) {
            Tensor f = extract_features(model, dataset.examples[i].input);
            if (normalized) {
                const double norm = l2_norm_value(f);
                if (norm < kDegenerateNorm)
                    throw degenerate_norm_error("prototype: degenerate feature");
                for (auto& v : f.values()) v /= norm;
            }
            for (std::size_t j = 0; j < d; ++j) mean[j] += f.at(j);
        }
        for (std::size_t j = 0; j < d; ++j)
            prototypes.at(j, c) = mean[j] / static_cast<double>(idx.size());
    }
    return prototypes;
}

Tensor weight_similarity(const Tensor& classifier) {
    const std::size_t c = classifier.rows(), d = classifier.cols();
    Tensor out = Tensor::zeros({c, c});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out.at(i, j) = cosine(classifier.data() + i * d,
                                  classifier.data() + j * d, d);
    return out;
}

Tensor inter_class_similarity(const Tensor& prototypes) {
    const std::size_t d = prototypes.rows(), c = prototypes.cols();
    // column-normalized Gram matrix
    std::vector<std::vector<double>> cols(c, std::vector<double>(d));
    for (std::size_t j = 0; j < c; ++j)
        for (std::size_t i = 0; i < d; ++i) cols[j][i] = prototypes.at(i, j);
    Tensor out = Tensor::zeros({c, c});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out.at(i, j) = cosine(cols[i].data(), cols[j].data(), d);
    return out;
}

std::vector<double> intra_class_similarity(const ModelParams& model,
                                           const Dataset& dataset) {
    const Tensor prototypes = compute_prototypes(model, dataset, false);
    const std::size_t d = model.feature_dim();
    std::vector<double> out(dataset.num_classes, 0.0);
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        std::vector<double> proto(d);
        for (std::size_t j = 0; j < d; ++j) proto[j] = prototypes.at(j, c);
        double acc = 0.0;
        const auto feats = features_per_class(model, dataset, c);
        for (const Tensor& f : feats) acc += cosine(f.data(), proto.data(), d);
        out[c] = acc / static_cast<double>(feats.size());
    }
    return out;
}

std::vector<double> prototype_weight_alignment(const ModelParams& model,
                                               const Dataset& dataset) {
    const Tensor prototypes = compute_prototypes(model, dataset, false);
    const std::size_t d = model.feature_dim();
    std::vector<double> out(dataset.num_classes, 0.0);
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        std::vector<double> proto(d);
        for (std::size_t j = 0; j < d; ++j) proto[j] = prototypes.at(j, c);
        out[c] = cosine(model.classifier.data() + c * d, proto.data(), d);
    }
    return out;
}

std::vector<double> prototype_weight_inner(const ModelParams& model,
                                           const Dataset& dataset) {
    const Tensor prototypes = compute_prototypes(model, dataset, false);
    const std::size_t d = model.feature_dim();
    std::vector<double> out(dataset.num_classes, 0.0);
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            dot += model.classifier.at(c, j) * prototypes.at(j, c);
        out[c] = dot;
    }
    return out;
}

FactorReport factor_report(const ModelParams& model, const Dataset& dataset,
                           std::size_t round, const std::string& tag) {
    FactorReport report;
    report.weight_similarity = weight_similarity(model.classifier);
    report.inter_class_similarity =
        inter_class_similarity(compute_prototypes(model, dataset, false));
    report.intra_class_similarity = intra_class_similarity(model, dataset);
    report.prototype_weight_alignment = prototype_weight_alignment(model, dataset);
    report.prototype_weight_inner = prototype_weight_inner(model, dataset);
    report.round = round;
    report.model_tag = tag;
    return report;
}

NormReport norm_report(const std::vector<ModelParams>& local_models,
                       const std::vector<std::size_t>& local_clients,
                       const ModelParams& global_model, const Partition& partition,
                       const Dataset& train_dataset, const Dataset& test_dataset,
                       std::size_t round) {
    if (local_models.size() != local_clients.size())
        throw config_error("norm_report: model/client count mismatch");

    NormReport report;
    report.round = round;

    const std::size_t c_count = global_model.num_classes();
    const std::size_t d = global_model.feature_dim();

    double weight_acc = 0.0;
    for (std::size_t c = 0; c < c_count; ++c) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            norm += global_model.classifier.at(c, j) * global_model.classifier.at(c, j);
        weight_acc += std::sqrt(norm);
    }
    report.global_weight_norm = weight_acc / static_cast<double>(c_count);

    double feat_acc = 0.0;
    for (const Example& ex : test_dataset.examples)
        feat_acc += l2_norm_value(extract_features(global_model, ex.input));
    report.global_feature_norm = feat_acc / static_cast<double>(test_dataset.size());

    double gap_acc = 0.0;
    std::size_t gap_count = 0;
    for (std::size_t m = 0; m < local_models.size(); ++m) {
        const ModelParams& local = local_models[m];
        const std::size_t client = local_clients[m];
        const std::set<std::size_t> id_classes =
            client_classes(partition, train_dataset, client);

        ClientNorms norms;
        norms.client = client;

        double w_id = 0.0, w_ood = 0.0;
        std::size_t n_id = 0, n_ood = 0;
        for (std::size_t c = 0; c < c_count; ++c) {
            double norm = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                norm += local.classifier.at(c, j) * local.classifier.at(c, j);
            norm = std::sqrt(norm);
            if (id_classes.count(c)) {
                w_id += norm;
                ++n_id;
            } else {
                w_ood += norm;
                ++n_ood;
            }
        }
        if (n_id) norms.weight_norm_id = w_id / static_cast<double>(n_id);
        if (n_ood) norms.weight_norm_ood = w_ood / static_cast<double>(n_ood);

        double f_id = 0.0, f_ood = 0.0;
        std::size_t fn_id = 0, fn_ood = 0;
        for (const Example& ex : test_dataset.examples) {
            const double norm = l2_norm_value(extract_features(local, ex.input));
            if (id_classes.count(ex.label)) {
                f_id += norm;
                ++fn_id;
            } else {
                f_ood += norm;
                ++fn_ood;
            }
        }
        if (fn_id) norms.feature_norm_id = f_id / static_cast<double>(fn_id);
        if (fn_ood) norms.feature_norm_ood = f_ood / static_cast<double>(fn_ood);

        if (norms.feature_norm_id) {
            gap_acc += *norms.feature_norm_id - report.global_feature_norm;
            ++gap_count;
        }
        report.clients.push_back(norms);
    }
    report.gap = gap_count ? gap_acc / static_cast<double>(gap_count) : 0.0;
    return report;
}

std::string factor_report_to_json(const FactorReport& report) {
    nlohmann::json j;
    const std::size_t c = report.weight_similarity.rows();
    auto matrix = [c](const Tensor& m) {
        std::vector<std::vector<double>> rows(c, std::vector<double>(c));
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t k = 0; k < c; ++k) rows[i][k] = m.at(i, k);
        return rows;
    };
    j["round"] = report.round;
    j["model"] = report.model_tag;
    j["weight_similarity"] = matrix(report.weight_similarity);
    j["inter_class_similarity"] = matrix(report.inter_class_similarity);
    j["intra_class_similarity"] = report.intra_class_similarity;
    j["prototype_weight_alignment"] = report.prototype_weight_alignment;
    j["prototype_weight_inner"] = report.prototype_weight_inner;
    return j.dump(2);
}

std::string norm_report_to_json(const NormReport& report) {
    nlohmann::json j;
    j["round"] = report.round;
    j["global_weight_norm"] = report.global_weight_norm;
    j["global_feature_norm"] = report.global_feature_norm;
    j["gap"] = report.gap;
    j["clients"] = nlohmann::json::array();
    for (const ClientNorms& c : report.clients) {
        nlohmann::json jc;
        jc["client"] = c.client;
        auto put = [&jc](const char* key, const std::optional<double>& v) {
            if (v) jc[key] = *v;
            else jc[key] = nullptr;  // missing, not zero
        };
        put("weight_norm_id", c.weight_norm_id);
        put("weight_norm_ood", c.weight_norm_ood);
        put("feature_norm_id", c.feature_norm_id);
        put("feature_norm_ood", c.feature_norm_ood);
        j["clients"].push_back(jc);
    }
    return j.dump(2);
}

void matrix_to_csv(const Tensor& matrix, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out.precision(17);
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        for (std::size_t j = 0; j < matrix.cols(); ++j) {
            if (j) out << ',';
            out << matrix.at(i, j);
        }
        out << '\n';
    }
}

}  // namespace fedsim
