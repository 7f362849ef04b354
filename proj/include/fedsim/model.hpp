#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim {

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class HeadKind { Standard, NormalizedFeature, FrozenOrthonormal };
enum class LossKind { CrossEntropy, MseOneHot, CrossEntropyPlusFeatureNorm };

struct HeadSpec {
    HeadKind kind = HeadKind::Standard;
    double tau = 1.0;  // FrozenOrthonormal only
};

struct LossSpec {
    LossKind kind = LossKind::CrossEntropy;
    double mu = 0.0;  // CrossEntropyPlusFeatureNorm only
};

struct Layer {
    Tensor weight;  // out x in
    Tensor bias;    // out
};

/// MLP feature extractor (ReLU between layers, none after the last) plus a
/// bias-free C x d classifier. Value type: copy freely, mutate privately.
struct ModelParams {
    std::vector<Layer> extractor;
    Tensor classifier;  // C x d
    HeadSpec head;
    bool frozen_classifier = false;

    std::size_t num_classes() const { return classifier.rows(); }
    std::size_t feature_dim() const { return classifier.cols(); }
};

/// Validates structural invariants (shapes chain up, tau > 0, frozen +
/// orthonormal rows for the FrozenOrthonormal head). Throws config_error.
void validate_model(const ModelParams& params);

/// Seeded He-style init of the extractor; classifier Gaussian, or orthonormal
/// rows when head is FrozenOrthonormal.
ModelParams init_model(const std::vector<std::size_t>& layer_sizes,
                       std::size_t num_classes, HeadSpec head,
                       bool frozen_classifier, std::uint64_t seed);

/// Rows mutually orthonormal via Gram-Schmidt over a seeded Gaussian draw.
Tensor orthonormal_classifier_init(std::size_t num_classes, std::size_t dim,
                                   std::uint64_t seed);

// ---- tape-building forward passes (for training) ----

struct ModelGraph {
    std::vector<std::pair<Tape::Id, Tape::Id>> layers;  // weight, bias ids
    Tape::Id classifier;
};

ModelGraph register_params(Tape& tape, const ModelParams& params);
Tape::Id feature_graph(Tape& tape, const ModelGraph& graph, Tape::Id x);
Tape::Id logit_graph(Tape& tape, const ModelGraph& graph, const HeadSpec& head,
                     Tape::Id features);
Tape::Id loss_graph(Tape& tape, const ModelGraph& graph, const ModelParams& params,
                    const LossSpec& loss, Tape::Id x, std::size_t label);

// ---- plain forward passes (for evaluation and diagnostics) ----

Tensor extract_features(const ModelParams& params, const Tensor& x);
Tensor logits(const ModelParams& params, const Tensor& features);
double loss_value(const LossSpec& spec, const ModelParams& params,
                  const Tensor& x, std::size_t label);

/// Closed-form classifier gradient for the NormalizedFeature head:
/// (softmax(z_hat) - onehot(y)) * f_hat^T.
Tensor classifier_gradient(const ModelParams& params, const Tensor& x,
                           std::size_t label);

void check_loss_head_compatible(const LossSpec& loss, const HeadSpec& head);

}  // namespace fedsim
