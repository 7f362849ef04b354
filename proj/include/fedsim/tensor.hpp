#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsim {

struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct degenerate_norm_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major f64 tensor. Entries are validated finite at construction.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor scalar(double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return values_.size(); }
    std::size_t ndim() const { return shape_.size(); }

    // 2-d accessors; rows()/cols() treat a 1-d tensor as a column vector.
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& at(std::size_t i) { return values_[i]; }
    double at(std::size_t i) const { return values_[i]; }
    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

double l2_norm_value(const Tensor& v);

/// Reverse-mode tape. Append order is a topological order of the graph, so
/// the backward pass walks nodes once, in reverse. Single-owner: a Tape must
/// not be touched from two threads at once; independent tapes may run in
/// parallel.
class Tape {
public:
    using Id = std::size_t;

    Id input(Tensor t);

    Id matmul(Id a, Id b);
    Id add(Id a, Id b);
    Id relu(Id a);
    Id scale(Id a, double c);
    Id l2_norm(Id v);
    Id normalize(Id v);
    Id softmax_cross_entropy(Id z, std::size_t label);
    Id mse_one_hot(Id z, std::size_t label);

    void backward(Id root);

    const Tensor& value(Id id) const { return nodes_[id].value; }
    const std::vector<double>& grad(Id id) const { return nodes_[id].grad; }
    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        std::function<void(Tape&)> pull;  // accumulates into parents' grad
    };

    Id push(Tensor value, std::function<void(Tape&)> pull);
    std::vector<double>& grad_mut(Id id) { return nodes_[id].grad; }

    std::vector<Node> nodes_;
};

/// Builds a scalar-valued graph on a fresh tape from the given input ids.
using GraphBuilder = std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>;

/// Central finite differences per coordinate against the autodiff gradient.
/// Returns the max over coordinates of |a-n| / max(|a|, |n|, 1e-8).
double grad_check(const GraphBuilder& build, const std::vector<Tensor>& point, double eps);

}  // namespace fedsim
