#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim {

struct FactorReport {
    Tensor weight_similarity;              // C x C
    Tensor inter_class_similarity;         // C x C
    std::vector<double> intra_class_similarity;       // length C
    std::vector<double> prototype_weight_alignment;   // length C, cosine
    std::vector<double> prototype_weight_inner;       // auxiliary raw inner product
    std::size_t round = 0;
    std::string model_tag;  // "global" or "client <n>"
};

struct ClientNorms {
    std::size_t client = 0;
    std::optional<double> weight_norm_id;
    std::optional<double> weight_norm_ood;
    std::optional<double> feature_norm_id;   // missing when no ID test examples
    std::optional<double> feature_norm_ood;  // missing when no OOD test examples
};

struct NormReport {
    std::vector<ClientNorms> clients;
    double global_weight_norm = 0.0;   // mean over all classifier rows
    double global_feature_norm = 0.0;  // mean over the full test set
    double gap = 0.0;  // mean over clients of (local ID feature mean - global mean)
    std::size_t round = 0;
};

}  // namespace fedsim
