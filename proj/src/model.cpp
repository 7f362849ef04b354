#include "fedsim/model.hpp"

#include <cmath>
#include <random>

#include "fedsim/kernels.hpp"

namespace fedsim {

namespace {
constexpr double kDegenerateNorm = 1e-12;
}

void check_loss_head_compatible(const LossSpec& loss, const HeadSpec& head) {
    if (loss.kind == LossKind::MseOneHot && head.kind != HeadKind::FrozenOrthonormal)
        throw config_error("MseOneHot loss requires the FrozenOrthonormal head");
    if (loss.kind == LossKind::CrossEntropyPlusFeatureNorm &&
        head.kind != HeadKind::Standard)
        throw config_error("feature-norm regularized loss uses the Standard head");
    if (loss.mu < 0.0) throw config_error("mu must be >= 0");
}

void validate_model(const ModelParams& params) {
    if (params.head.tau <= 0.0) throw config_error("tau must be positive");
    std::size_t in = params.extractor.empty() ? params.feature_dim()
                                              : params.extractor.front().weight.cols();
    (void)in;
    for (std::size_t i = 0; i < params.extractor.size(); ++i) {
        const Layer& layer = params.extractor[i];
        if (layer.bias.size() != layer.weight.rows())
            throw config_error("extractor bias size mismatch");
        if (i + 1 < params.extractor.size() &&
            params.extractor[i + 1].weight.cols() != layer.weight.rows())
            throw config_error("extractor layer dimension chain mismatch");
    }
    if (!params.extractor.empty() &&
        params.extractor.back().weight.rows() != params.feature_dim())
        throw config_error("classifier width does not match feature dim");
    if (params.head.kind == HeadKind::FrozenOrthonormal) {
        if (!params.frozen_classifier)
            throw config_error("FrozenOrthonormal head requires frozen classifier");
        const std::size_t c = params.num_classes(), d = params.feature_dim();
        const Tensor& cls = params.classifier;
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                double dot = 0.0;
                for (std::size_t p = 0; p < d; ++p) dot += cls.at(i, p) * cls.at(j, p);
                const double want = i == j ? 1.0 : 0.0;
                if (std::abs(dot - want) > 1e-9)
                    throw config_error("classifier rows are not orthonormal");
            }
        }
    }
}

Tensor orthonormal_classifier_init(std::size_t num_classes, std::size_t dim,
                                   std::uint64_t seed) {
    if (dim < num_classes)
        throw config_error("orthonormal classifier needs dim >= num_classes");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Tensor rows = Tensor::zeros({num_classes, dim});
    for (std::size_t i = 0; i < num_classes; ++i) {
        // Redraw on (numerically) dependent rows; overwhelmingly one pass.
        for (;;) {
            for (std::size_t j = 0; j < dim; ++j) rows.at(i, j) = gauss(rng);
            for (std::size_t p = 0; p < i; ++p) {
                double dot = 0.0;
                for (std::size_t j = 0; j < dim; ++j) dot += rows.at(i, j) * rows.at(p, j);
                for (std::size_t j = 0; j < dim; ++j) rows.at(i, j) -= dot * rows.at(p, j);
            }
            double norm = 0.0;
            for (std::size_t j = 0; j < dim; ++j) norm += rows.at(i, j) * rows.at(i, j);
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (std::size_t j = 0; j < dim; ++j) rows.at(i, j) /= norm;
                break;
            }
        }
    }
    return rows;
}

ModelParams init_model(const std::vector<std::size_t>& layer_sizes,
                       std::size_t num_classes, HeadSpec head,
                       bool frozen_classifier, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw config_error("need at least input and feature dims");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    ModelParams params;
    params.head = head;
    params.frozen_classifier = frozen_classifier;
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
        const std::size_t in = layer_sizes[i], out = layer_sizes[i + 1];
        const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
        Tensor w = Tensor::zeros({out, in});
        for (auto& v : w.values()) v = std_dev * gauss(rng);
        params.extractor.push_back({std::move(w), Tensor::zeros({out})});
    }
    const std::size_t d = layer_sizes.back();
    if (head.kind == HeadKind::FrozenOrthonormal) {
        params.classifier = orthonormal_classifier_init(num_classes, d, rng());
    } else {
        const double std_dev = std::sqrt(1.0 / static_cast<double>(d));
        Tensor cls = Tensor::zeros({num_classes, d});
        for (auto& v : cls.values()) v = std_dev * gauss(rng);
        params.classifier = std::move(cls);
    }
    validate_model(params);
    return params;
}

ModelGraph register_params(Tape& tape, const ModelParams& params) {
    ModelGraph graph;
    for (const Layer& layer : params.extractor) {
        graph.layers.emplace_back(tape.input(layer.weight), tape.input(layer.bias));
    }
    graph.classifier = tape.input(params.classifier);
    return graph;
}

Tape::Id feature_graph(Tape& tape, const ModelGraph& graph, Tape::Id x) {
    Tape::Id h = x;
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        h = tape.add(tape.matmul(graph.layers[i].first, h), graph.layers[i].second);
        if (i + 1 < graph.layers.size()) h = tape.relu(h);
    }
    return h;
}

Tape::Id logit_graph(Tape& tape, const ModelGraph& graph, const HeadSpec& head,
                     Tape::Id features) {
    switch (head.kind) {
        case HeadKind::Standard:
            return tape.matmul(graph.classifier, features);
        case HeadKind::NormalizedFeature:
            return tape.matmul(graph.classifier, tape.normalize(features));
        case HeadKind::FrozenOrthonormal:
            return tape.scale(tape.matmul(graph.classifier, tape.normalize(features)),
                              head.tau);
    }
    throw config_error("unknown head kind");
}

Tape::Id loss_graph(Tape& tape, const ModelGraph& graph, const ModelParams& params,
                    const LossSpec& loss, Tape::Id x, std::size_t label) {
    check_loss_head_compatible(loss, params.head);
    Tape::Id f = feature_graph(tape, graph, x);
    switch (loss.kind) {
        case LossKind::CrossEntropy:
            return tape.softmax_cross_entropy(logit_graph(tape, graph, params.head, f),
                                              label);
        case LossKind::MseOneHot:
            return tape.mse_one_hot(logit_graph(tape, graph, params.head, f), label);
        case LossKind::CrossEntropyPlusFeatureNorm: {
            Tape::Id ce = tape.softmax_cross_entropy(
                logit_graph(tape, graph, params.head, f), label);
            return tape.add(ce, tape.scale(tape.l2_norm(f), loss.mu));
        }
    }
    throw config_error("unknown loss kind");
}

Tensor extract_features(const ModelParams& params, const Tensor& x) {
    Tensor h = x;
    for (std::size_t i = 0; i < params.extractor.size(); ++i) {
        const Layer& layer = params.extractor[i];
        const std::size_t out = layer.weight.rows(), in = layer.weight.cols();
        if (h.size() != in) throw shape_error("extract_features: input dim mismatch");
        std::vector<double> next(out);
        kernels::matmul_nn(layer.weight.data(), h.data(), next.data(), out, in, 1);
        for (std::size_t j = 0; j < out; ++j) {
            next[j] += layer.bias.at(j);
            if (i + 1 < params.extractor.size() && next[j] < 0.0) next[j] = 0.0;
        }
        h = Tensor({out}, std::move(next));
    }
    return h;
}

Tensor logits(const ModelParams& params, const Tensor& features) {
    const std::size_t c = params.num_classes(), d = params.feature_dim();
    if (features.size() != d) throw shape_error("logits: feature dim mismatch");
    Tensor f = features;
    double scale = 1.0;
    if (params.head.kind != HeadKind::Standard) {
        const double norm = l2_norm_value(f);
        if (norm < kDegenerateNorm)
            throw degenerate_norm_error("logits: degenerate feature norm");
        for (auto& v : f.values()) v /= norm;
        if (params.head.kind == HeadKind::FrozenOrthonormal) scale = params.head.tau;
    }
    std::vector<double> out(c);
    kernels::matmul_nn(params.classifier.data(), f.data(), out.data(), c, d, 1);
    if (scale != 1.0)
        for (auto& v : out) v *= scale;
    return Tensor({c}, std::move(out));
}

double loss_value(const LossSpec& spec, const ModelParams& params,
                  const Tensor& x, std::size_t label) {
    Tape tape;
    ModelGraph graph = register_params(tape, params);
    Tape::Id loss = loss_graph(tape, graph, params, spec, tape.input(x), label);
    return tape.value(loss).at(0);
}

Tensor classifier_gradient(const ModelParams& params, const Tensor& x,
                           std::size_t label) {
    if (params.head.kind != HeadKind::NormalizedFeature)
        throw config_error("classifier_gradient: NormalizedFeature head required");
    Tensor f = extract_features(params, x);
    const double norm = l2_norm_value(f);
    if (norm < kDegenerateNorm)
        throw degenerate_norm_error("classifier_gradient: degenerate feature norm");
    for (auto& v : f.values()) v /= norm;

    Tensor z = logits(params, extract_features(params, x));
    const std::size_t c = params.num_classes(), d = params.feature_dim();
    double zmax = z.at(0);
    for (std::size_t i = 1; i < c; ++i) zmax = std::max(zmax, z.at(i));
    std::vector<double> p(c);
    double denom = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        p[i] = std::exp(z.at(i) - zmax);
        denom += p[i];
    }
    Tensor grad = Tensor::zeros({c, d});
    for (std::size_t i = 0; i < c; ++i) {
        const double gi = p[i] / denom - (i == label ? 1.0 : 0.0);
        for (std::size_t j = 0; j < d; ++j) grad.at(i, j) = gi * f.at(j);
    }
    return grad;
}

}  // namespace fedsim
