#ifndef KOOPMAN_NN_HPP
#define KOOPMAN_NN_HPP

// Small dense networks with a hand-written reverse pass, Adam, and l1 regularisation.
// Everything works on column batches: an input matrix holds one sample per column.

#include "koopman/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace koopman {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double elu(double s) { return s > 0.0 ? s : std::expm1(s); }

inline double elu_derivative(double s) { return s > 0.0 ? 1.0 : std::exp(s); }

/// Dense feed-forward network: ELU on hidden layers, identity on the output layer.
struct Mlp {
    std::vector<MatrixXd> weights; // weights[l] is dims[l+1] x dims[l]
    std::vector<VectorXd> biases;

    std::size_t n_layers() const { return weights.size(); }
    Index input_dim() const { return weights.empty() ? 0 : weights.front().cols(); }
    Index output_dim() const { return weights.empty() ? 0 : weights.back().rows(); }

    std::vector<Index> layer_dims() const
    {
        std::vector<Index> dims;
        if (weights.empty()) return dims;
        dims.push_back(weights.front().cols());
        for (const auto& w : weights) dims.push_back(w.rows());
        return dims;
    }

    Index n_params() const
    {
        Index n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
        return n;
    }

    bool all_finite() const
    {
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
        return true;
    }
};

inline Mlp zero_mlp(const std::vector<Index>& dims)
{
    if (dims.size() < 2) throw std::invalid_argument("an Mlp needs at least input and output dimensions");
    Mlp net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        if (dims[l] < 1 || dims[l + 1] < 1) throw std::invalid_argument("layer dimensions must be >= 1");
        net.weights.push_back(MatrixXd::Zero(dims[l + 1], dims[l]));
        net.biases.push_back(VectorXd::Zero(dims[l + 1]));
    }
    return net;
}

inline Mlp zeros_like(const Mlp& net) { return zero_mlp(net.layer_dims()); }

/// Variance scaling (scale 1, fan-in, untruncated normal) for weights, zero biases.
inline Mlp init_mlp(const std::vector<Index>& dims, std::mt19937_64& rng)
{
    Mlp net = zero_mlp(dims);
    for (auto& w : net.weights) {
        std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / static_cast<double>(w.cols())));
        for (Index j = 0; j < w.cols(); ++j)
            for (Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
    }
    return net;
}

inline Mlp init_mlp(const std::vector<Index>& dims, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return init_mlp(dims, rng);
}

/// Activations recorded by a forward pass; consumed by backward().
struct MlpCache {
    const Mlp* net = nullptr;
    std::vector<MatrixXd> inputs;      // input to layer l (inputs[0] = x)
    std::vector<MatrixXd> preactivations;
};

inline MatrixXd forward(const Mlp& net, const MatrixXd& x, MlpCache* cache = nullptr)
{
    if (net.weights.empty()) throw std::invalid_argument("empty network");
    if (x.rows() != net.input_dim())
        throw dimension_error("network expects input dimension " + std::to_string(net.input_dim()) + ", got " +
                              std::to_string(x.rows()));
    if (cache) {
        cache->net = &net;
        cache->inputs.clear();
        cache->preactivations.clear();
    }
    MatrixXd h = x;
    const std::size_t n = net.n_layers();
    for (std::size_t l = 0; l < n; ++l) {
        MatrixXd s = net.weights[l] * h;
        s.colwise() += net.biases[l];
        if (cache) {
            cache->inputs.push_back(std::move(h));
            cache->preactivations.push_back(s);
        }
        if (l + 1 < n)
            h = (s.array() > 0.0).select(s, s.array().exp() - 1.0);
        else
            h = std::move(s);
    }
    return h;
}

inline VectorXd forward(const Mlp& net, const VectorXd& x) { return forward(net, MatrixXd(x)).col(0); }

/// Reverse pass: accumulates d(sum cotangent .* output)/d(theta) into `grad`
/// (same layout as `net`) and returns the cotangent with respect to the input.
inline MatrixXd backward(const Mlp& net, const MlpCache& cache, const MatrixXd& cotangent, Mlp& grad)
{
    const std::size_t n = net.n_layers();
    if (cache.net != &net || cache.inputs.size() != n || cache.preactivations.size() != n)
        throw std::logic_error("backward called without a matching forward cache");
    if (cotangent.rows() != net.output_dim() || cotangent.cols() != cache.inputs.front().cols())
        throw dimension_error("cotangent shape does not match the cached forward pass");
    if (grad.n_layers() != n) throw dimension_error("gradient buffer layout does not match network");

    MatrixXd g = cotangent;
    for (std::size_t l = n; l-- > 0;) {
        if (l + 1 < n) {
            const auto& s = cache.preactivations[l];
            g.array() *= (s.array() > 0.0).select(Eigen::ArrayXXd::Ones(s.rows(), s.cols()), s.array().exp());
        }
        grad.weights[l].noalias() += g * cache.inputs[l].transpose();
        grad.biases[l] += g.rowwise().sum();
        g = net.weights[l].transpose() * g;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Flat parameter vectors

/// Named contiguous range inside a flat parameter vector.
struct ParamBlock {
    std::string name;
    Index offset = 0;
    Index size = 0;
};

struct ParamLayout {
    std::vector<ParamBlock> blocks;
    Index total = 0;

    const ParamBlock& block_at(Index i) const
    {
        for (const auto& b : blocks)
            if (i >= b.offset && i < b.offset + b.size) return b;
        throw std::out_of_range("parameter index outside layout");
    }
};

struct ParamVector {
    VectorXd values;
    ParamLayout layout;
};

/// Visits every parameter block of an Mlp as (name, Eigen::Map-able data, size).
template <class MlpT, class F>
void for_each_block(MlpT& net, const std::string& prefix, F&& f)
{
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        f(prefix + ".W" + std::to_string(l), net.weights[l].data(), net.weights[l].size());
        f(prefix + ".b" + std::to_string(l), net.biases[l].data(), net.biases[l].size());
    }
}

/// Any object exposing `for_each_block(f)` (Mlp is wrapped in detail::MlpParams).
template <class Params>
ParamVector flatten(const Params& params)
{
    ParamVector out;
    Index total = 0;
    params.for_each_block([&](const std::string& name, const double*, Index size) {
        out.layout.blocks.push_back({name, total, size});
        total += size;
    });
    out.layout.total = total;
    out.values.resize(total);
    Index offset = 0;
    params.for_each_block([&](const std::string&, const double* data, Index size) {
        out.values.segment(offset, size) = Eigen::Map<const VectorXd>(data, size);
        offset += size;
    });
    return out;
}

template <class Params>
void unflatten(const VectorXd& values, Params&& params)
{
    Index offset = 0;
    params.for_each_block([&](const std::string&, double* data, Index size) {
        if (offset + size > values.size()) throw dimension_error("flat parameter vector too short");
        Eigen::Map<VectorXd>(data, size) = values.segment(offset, size);
        offset += size;
    });
    if (offset != values.size()) throw dimension_error("flat parameter vector length does not match layout");
}

/// Adapter giving a single Mlp the `for_each_block` interface.
template <class MlpT>
struct MlpParams {
    MlpT& net;
    std::string prefix = "net";

    template <class F>
    void for_each_block(F&& f) const
    {
        koopman::for_each_block(net, prefix, f);
    }
};

template <class MlpT>
MlpParams(MlpT&) -> MlpParams<MlpT>;

// ---------------------------------------------------------------------------
// Optimisation

struct AdamState {
    VectorXd m;
    VectorXd v;
    long t = 0;
    double alpha = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_size(Index n, double alpha = 0.001)
    {
        AdamState s;
        s.m = VectorXd::Zero(n);
        s.v = VectorXd::Zero(n);
        s.alpha = alpha;
        return s;
    }
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(AdamState& state, VectorXd& params, const VectorXd& grads, const ParamLayout* layout = nullptr)
{
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw dimension_error("Adam state, parameters and gradients must have equal length");
    for (Index i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads(i))) {
            const std::string where = layout ? layout->block_at(i).name : "index " + std::to_string(i);
            throw training_error("non-finite gradient in parameter block " + where);
        }
    }
    ++state.t;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    params.array() -= state.alpha * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

inline void adam_step(AdamState& state, ParamVector& params, const VectorXd& grads)
{
    adam_step(state, params.values, grads, &params.layout);
}

/// weight * sum|theta| and its subgradient weight * sign(theta), sign(0) = 0.
inline std::pair<double, VectorXd> l1_penalty_and_subgradient(const VectorXd& params, double weight)
{
    VectorXd sub = params.unaryExpr([weight](double v) { return v > 0.0 ? weight : (v < 0.0 ? -weight : 0.0); });
    return {weight * params.lpNorm<1>(), std::move(sub)};
}

} // namespace koopman

#endif // KOOPMAN_NN_HPP
