#pragma once

#include "fedsim/data.hpp"
#include "fedsim/diagnostics_types.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

struct incomplete_prototype_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// d x C matrix; column c is the mean feature (optionally per-example
/// normalized) over the examples of class c.
Tensor compute_prototypes(const ModelParams& model, const Dataset& dataset,
                          bool normalized);

Tensor weight_similarity(const Tensor& classifier);
Tensor inter_class_similarity(const Tensor& prototypes);
std::vector<double> intra_class_similarity(const ModelParams& model,
                                           const Dataset& dataset);
std::vector<double> prototype_weight_alignment(const ModelParams& model,
                                               const Dataset& dataset);
std::vector<double> prototype_weight_inner(const ModelParams& model,
                                           const Dataset& dataset);

FactorReport factor_report(const ModelParams& model, const Dataset& dataset,
                           std::size_t round, const std::string& tag);

NormReport norm_report(const std::vector<ModelParams>& local_models,
                       const std::vector<std::size_t>& local_clients,
                       const ModelParams& global_model, const Partition& partition,
                       const Dataset& train_dataset, const Dataset& test_dataset,
                       std::size_t round);

std::string factor_report_to_json(const FactorReport& report);
std::string norm_report_to_json(const NormReport& report);
void matrix_to_csv(const Tensor& matrix, const std::string& path);

}  // namespace fedsim
