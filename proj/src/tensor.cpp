#include "fedsim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "fedsim/kernels.hpp"

namespace fedsim {

namespace {

constexpr double kDegenerateNorm = 1e-12;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_product(shape_)) {
        throw shape_error("tensor value count does not match shape");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw numeric_error("non-finite tensor entry");
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::vector<double> v(shape_product(shape), 0.0);
    return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

double l2_norm_value(const Tensor& v) {
    double acc = 0.0;
    for (double x : v.values()) acc += x * x;
    return std::sqrt(acc);
}

Tape::Id Tape::push(Tensor value, std::function<void(Tape&)> pull) {
    for (double v : value.values()) {
        if (!std::isfinite(v)) throw numeric_error("non-finite forward value");
    }
    Node node;
    node.grad.assign(value.size(), 0.0);
    node.value = std::move(value);
    node.pull = std::move(pull);
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

Tape::Id Tape::input(Tensor t) { return push(std::move(t), nullptr); }

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    const std::size_t m = ta.rows(), k = ta.cols();
    const std::size_t n = tb.cols();
    if (tb.rows() != k) throw shape_error("matmul inner dimension mismatch");

    std::vector<double> out(m * n);
    kernels::matmul_nn(ta.data(), tb.data(), out.data(), m, k, n);
    Tensor result = tb.ndim() == 1 ? Tensor({m}, std::move(out))
                                   : Tensor({m, n}, std::move(out));

    Id self = push(std::move(result), nullptr);
    nodes_[self].pull = [self, a, b, m, k, n](Tape& tape) {
        const double* g = tape.nodes_[self].grad.data();
        const double* av = tape.nodes_[a].value.data();
        const double* bv = tape.nodes_[b].value.data();
        // grad_a += g * b^T   (m x k)
        std::vector<double> ga(m * k);
        kernels::matmul_nt(g, bv, ga.data(), m, n, k);
        kernels::axpy(1.0, ga.data(), tape.grad_mut(a).data(), m * k);
        // grad_b += a^T * g   (k x n)
        std::vector<double> gb(k * n);
        kernels::matmul_tn(av, g, gb.data(), k, m, n);
        kernels::axpy(1.0, gb.data(), tape.grad_mut(b).data(), k * n);
    };
    return self;
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (ta.size() != tb.size()) throw shape_error("add shape mismatch");
    std::vector<double> out(ta.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta.at(i) + tb.at(i);
    Tensor result(ta.shape(), std::move(out));
    Id self = push(std::move(result), nullptr);
    nodes_[self].pull = [self, a, b](Tape& tape) {
        const auto& g = tape.nodes_[self].grad;
        kernels::axpy(1.0, g.data(), tape.grad_mut(a).data(), g.size());
        kernels::axpy(1.0, g.data(), tape.grad_mut(b).data(), g.size());
    };
    return self;
}

Tape::Id Tape::relu(Id a) {
    const Tensor& ta = nodes_[a].value;
    std::vector<double> out(ta.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(ta.at(i), 0.0);
    Id self = push(Tensor(ta.shape(), std::move(out)), nullptr);
    nodes_[self].pull = [self, a](Tape& tape) {
        const auto& g = tape.nodes_[self].grad;
        const auto& av = tape.nodes_[a].value;
        auto& ga = tape.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (av.at(i) > 0.0) ga[i] += g[i];
    };
    return self;
}

Tape::Id Tape::scale(Id a, double c) {
    const Tensor& ta = nodes_[a].value;
    std::vector<double> out(ta.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * ta.at(i);
    Id self = push(Tensor(ta.shape(), std::move(out)), nullptr);
    nodes_[self].pull = [self, a, c](Tape& tape) {
        const auto& g = tape.nodes_[self].grad;
        auto& ga = tape.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    };
    return self;
}

Tape::Id Tape::l2_norm(Id v) {
    const Tensor& tv = nodes_[v].value;
    if (tv.size() == 0) throw shape_error("l2_norm of empty tensor");
    const double norm = l2_norm_value(tv);
    if (norm < kDegenerateNorm)
        throw degenerate_norm_error("l2_norm: vector norm below 1e-12");
    Id self = push(Tensor::scalar(norm), nullptr);
    nodes_[self].pull = [self, v, norm](Tape& tape) {
        const double g = tape.nodes_[self].grad[0];
        const auto& vv = tape.nodes_[v].value;
        auto& gv = tape.grad_mut(v);
        for (std::size_t i = 0; i < vv.size(); ++i) gv[i] += g * vv.at(i) / norm;
    };
    return self;
}

Tape::Id Tape::normalize(Id v) {
    const Tensor& tv = nodes_[v].value;
    const double norm = l2_norm_value(tv);
    if (norm < kDegenerateNorm)
        throw degenerate_norm_error("normalize: vector norm below 1e-12");
    std::vector<double> out(tv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = tv.at(i) / norm;
    Id self = push(Tensor(tv.shape(), std::move(out)), nullptr);
    nodes_[self].pull = [self, v, norm](Tape& tape) {
        // Quotient rule: grad = (g - <g, u> u) / ||v||, u = v/||v||.
        const auto& g = tape.nodes_[self].grad;
        const auto& u = tape.nodes_[self].value;
        auto& gv = tape.grad_mut(v);
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * u.at(i);
        for (std::size_t i = 0; i < g.size(); ++i)
            gv[i] += (g[i] - dot * u.at(i)) / norm;
    };
    return self;
}

Tape::Id Tape::softmax_cross_entropy(Id z, std::size_t label) {
    const Tensor& tz = nodes_[z].value;
    const std::size_t c = tz.size();
    if (label >= c) throw std::out_of_range("softmax_cross_entropy: label out of range");
    const double zmax = *std::max_element(tz.values().begin(), tz.values().end());
    double denom = 0.0;
    std::vector<double> probs(c);
    for (std::size_t i = 0; i < c; ++i) {
        probs[i] = std::exp(tz.at(i) - zmax);
        denom += probs[i];
    }
    for (std::size_t i = 0; i < c; ++i) probs[i] /= denom;
    const double loss = -(tz.at(label) - zmax - std::log(denom));
    Id self = push(Tensor::scalar(loss), nullptr);
    nodes_[self].pull = [self, z, label, probs = std::move(probs)](Tape& tape) {
        const double g = tape.nodes_[self].grad[0];
        auto& gz = tape.grad_mut(z);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            gz[i] += g * (probs[i] - (i == label ? 1.0 : 0.0));
        }
    };
    return self;
}

Tape::Id Tape::mse_one_hot(Id z, std::size_t label) {
    const Tensor& tz = nodes_[z].value;
    const std::size_t c = tz.size();
    if (label >= c) throw std::out_of_range("mse_one_hot: label out of range");
    double loss = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        const double diff = tz.at(i) - (i == label ? 1.0 : 0.0);
        loss += diff * diff;
    }
    loss /= static_cast<double>(c);
    Id self = push(Tensor::scalar(loss), nullptr);
    nodes_[self].pull = [self, z, label, c](Tape& tape) {
        const double g = tape.nodes_[self].grad[0];
        const auto& zv = tape.nodes_[z].value;
        auto& gz = tape.grad_mut(z);
        for (std::size_t i = 0; i < c; ++i) {
            const double diff = zv.at(i) - (i == label ? 1.0 : 0.0);
            gz[i] += g * 2.0 * diff / static_cast<double>(c);
        }
    };
    return self;
}

void Tape::backward(Id root) {
    if (nodes_[root].value.size() != 1)
        throw shape_error("backward root must be scalar");
    for (auto& node : nodes_) std::fill(node.grad.begin(), node.grad.end(), 0.0);
    nodes_[root].grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].pull) nodes_[i].pull(*this);
    }
}

double grad_check(const GraphBuilder& build, const std::vector<Tensor>& point,
                  double eps) {
    if (eps < 1e-8 || eps > 1e-4)
        throw std::invalid_argument("grad_check: eps outside [1e-8, 1e-4]");

    auto eval = [&](const std::vector<Tensor>& p) {
        Tape tape;
        std::vector<Tape::Id> ids;
        ids.reserve(p.size());
        for (const auto& t : p) ids.push_back(tape.input(t));
        Tape::Id root = build(tape, ids);
        return std::pair{std::move(tape), root};
    };

    auto [tape, root] = eval(point);
    tape.backward(root);

    double max_err = 0.0;
    std::vector<Tensor> probe = point;
    for (std::size_t t = 0; t < point.size(); ++t) {
        const auto& analytic = tape.grad(t);
        for (std::size_t i = 0; i < point[t].size(); ++i) {
            const double orig = probe[t].at(i);
            probe[t].at(i) = orig + eps;
            auto [tp, rp] = eval(probe);
            const double fp = tp.value(rp).at(0);
            probe[t].at(i) = orig - eps;
            auto [tm, rm] = eval(probe);
            const double fm = tm.value(rm).at(0);
            probe[t].at(i) = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            if (!std::isfinite(numeric)) throw numeric_error("grad_check: non-finite difference");
            const double a = analytic[i];
            const double err = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace fedsim
