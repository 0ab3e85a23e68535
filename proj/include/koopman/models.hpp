#ifndef KOOPMAN_MODELS_HPP
#define KOOPMAN_MODELS_HPP

// Koopman surrogate models: encoder T, discrete latent dynamics, decoder.
//
//   Wiener    z+ = A z + B u,                    x = Mlp_dec(z)  (>= 1 hidden layer)
//   Linear    z+ = A z + B u,                    x = C z + c
//   Bilinear  z+ = A z + sum_i u_i B_i z + B u,  x = C z + c
//
// A is diagonal, optionally with 2x2 coupling blocks on the leading coordinate pairs.
// The affine decoder is stored as a single-layer Mlp, so every model has the same
// parameter structure.

#include "koopman/errors.hpp"
#include "koopman/nn.hpp"
#include "koopman/simulate.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace koopman {

enum class ModelKind { wiener, linear, bilinear };

inline std::string to_string(ModelKind kind)
{
    switch (kind) {
    case ModelKind::wiener: return "wiener";
    case ModelKind::linear: return "linear";
    case ModelKind::bilinear: return "bilinear";
    }
    return "unknown";
}

inline ModelKind model_kind_from_string(const std::string& s)
{
    if (s == "wiener") return ModelKind::wiener;
    if (s == "linear") return ModelKind::linear;
    if (s == "bilinear") return ModelKind::bilinear;
    throw std::invalid_argument("unknown model kind '" + s + "'");
}

struct LatentDynamics {
    VectorXd a_diag;                 // n_z
    VectorXd a_upper;                // n_pairs: z'(2i)   += a_upper(i) * z(2i+1)
    VectorXd a_lower;                // n_pairs: z'(2i+1) += a_lower(i) * z(2i)
    MatrixXd b;                      // n_z x n_u
    std::vector<MatrixXd> b_bilinear; // n_u matrices n_z x n_z, bilinear models only

    Index n_z() const { return a_diag.size(); }
    Index n_u() const { return b.cols(); }
    Index n_pairs() const { return a_upper.size(); }
    bool is_bilinear() const { return !b_bilinear.empty(); }

    /// One latent step for a batch of columns: z (n_z x M), u (n_u x M).
    MatrixXd step(const MatrixXd& z, const MatrixXd& u) const
    {
        MatrixXd next = a_diag.asDiagonal() * z;
        for (Index i = 0; i < n_pairs(); ++i) {
            next.row(2 * i) += a_upper(i) * z.row(2 * i + 1);
            next.row(2 * i + 1) += a_lower(i) * z.row(2 * i);
        }
        next.noalias() += b * u;
        for (std::size_t i = 0; i < b_bilinear.size(); ++i)
            next += ((b_bilinear[i] * z).array().rowwise() * u.row(static_cast<Index>(i)).array()).matrix();
        return next;
    }

    /// Reverse pass of step(): accumulates parameter gradients into `grad` and
    /// returns the cotangent with respect to z.
    MatrixXd step_backward(const MatrixXd& g, const MatrixXd& z, const MatrixXd& u, LatentDynamics& grad) const
    {
        grad.a_diag += (g.array() * z.array()).rowwise().sum().matrix();
        MatrixXd dz = a_diag.asDiagonal() * g;
        for (Index i = 0; i < n_pairs(); ++i) {
            grad.a_upper(i) += g.row(2 * i).dot(z.row(2 * i + 1));
            grad.a_lower(i) += g.row(2 * i + 1).dot(z.row(2 * i));
            dz.row(2 * i + 1) += a_upper(i) * g.row(2 * i);
            dz.row(2 * i) += a_lower(i) * g.row(2 * i + 1);
        }
        grad.b.noalias() += g * u.transpose();
        for (std::size_t i = 0; i < b_bilinear.size(); ++i) {
            const MatrixXd gu = (g.array().rowwise() * u.row(static_cast<Index>(i)).array()).matrix();
            grad.b_bilinear[i].noalias() += gu * z.transpose();
            dz.noalias() += b_bilinear[i].transpose() * gu;
        }
        return dz;
    }

    bool all_finite() const
    {
        if (!a_diag.allFinite() || !a_upper.allFinite() || !a_lower.allFinite() || !b.allFinite()) return false;
        for (const auto& m : b_bilinear)
            if (!m.allFinite()) return false;
        return true;
    }

    LatentDynamics zeros_like() const
    {
        LatentDynamics z;
        z.a_diag = VectorXd::Zero(a_diag.size());
        z.a_upper = VectorXd::Zero(a_upper.size());
        z.a_lower = VectorXd::Zero(a_lower.size());
        z.b = MatrixXd::Zero(b.rows(), b.cols());
        for (const auto& m : b_bilinear) z.b_bilinear.push_back(MatrixXd::Zero(m.rows(), m.cols()));
        return z;
    }
};

/// Trainable parameters of a surrogate; also used as the gradient container.
struct KoopmanParams {
    Mlp encoder;
    LatentDynamics dynamics;
    Mlp decoder;

    template <class F>
    void for_each_block(F&& f)
    {
        visit(*this, f);
    }

    template <class F>
    void for_each_block(F&& f) const
    {
        visit(*this, f);
    }

    KoopmanParams zeros_like() const { return {koopman::zeros_like(encoder), dynamics.zeros_like(), koopman::zeros_like(decoder)}; }

private:
    template <class Self, class F>
    static void visit(Self& self, F& f)
    {
        koopman::for_each_block(self.encoder, "encoder", f);
        auto& d = self.dynamics;
        f("dynamics.A_diag", d.a_diag.data(), d.a_diag.size());
        if (d.a_upper.size() > 0) {
            f("dynamics.A_upper", d.a_upper.data(), d.a_upper.size());
            f("dynamics.A_lower", d.a_lower.data(), d.a_lower.size());
        }
        f("dynamics.B", d.b.data(), d.b.size());
        for (std::size_t i = 0; i < d.b_bilinear.size(); ++i)
            f("dynamics.B_bilinear" + std::to_string(i), d.b_bilinear[i].data(), d.b_bilinear[i].size());
        koopman::for_each_block(self.decoder, "decoder", f);
    }
};

/// Everything needed to map raw states/inputs to model coordinates and back.
struct DataScaling {
    std::vector<StateTransform> transforms; // empty == identity
    MinMaxScaler state_scaler;
    std::optional<MinMaxScaler> input_scaler;

    MatrixXd states_to_model(const MatrixXd& raw_rows) const
    {
        return state_scaler.apply(apply_transforms(raw_rows, transforms));
    }
    MatrixXd states_from_model(const MatrixXd& model_rows) const
    {
        return invert_transforms(state_scaler.invert(model_rows), transforms);
    }
    MatrixXd inputs_to_model(const MatrixXd& raw_rows) const
    {
        return input_scaler ? input_scaler->apply(raw_rows) : raw_rows;
    }
};

inline DataScaling scaling_of(const SnapshotDataset& ds) { return {ds.transforms, ds.scaler, ds.input_scaler}; }

inline DataScaling identity_scaling(Index n_x)
{
    return {{}, MinMaxScaler{VectorXd::Zero(n_x), VectorXd::Ones(n_x)}, std::nullopt};
}

struct Provenance {
    std::uint64_t seed = 0;
    std::string config_hash;
};

struct KoopmanModel {
    ModelKind kind = ModelKind::wiener;
    KoopmanParams params;
    DataScaling scaling;
    Provenance provenance;

    Index n_x() const { return params.encoder.input_dim(); }
    Index n_z() const { return params.dynamics.n_z(); }
    Index n_u() const { return params.dynamics.n_u(); }
};

/// Throws dimension_error when the parts of a model do not fit together.
inline void validate(const KoopmanModel& m)
{
    const auto& p = m.params;
    if (p.encoder.weights.empty() || p.decoder.weights.empty()) throw dimension_error("encoder and decoder required");
    const Index n_z = p.dynamics.n_z();
    if (p.encoder.output_dim() != n_z) throw dimension_error("encoder output dimension differs from n_z");
    if (p.decoder.input_dim() != n_z) throw dimension_error("decoder input dimension differs from n_z");
    if (p.decoder.output_dim() != p.encoder.input_dim()) throw dimension_error("decoder output dimension differs from n_x");
    if (p.dynamics.b.rows() != n_z) throw dimension_error("B must have n_z rows");
    if (p.dynamics.a_upper.size() != p.dynamics.a_lower.size() || 2 * p.dynamics.n_pairs() > n_z)
        throw dimension_error("invalid latent coupling blocks");
    if (m.kind == ModelKind::bilinear) {
        if (static_cast<Index>(p.dynamics.b_bilinear.size()) != p.dynamics.n_u())
            throw dimension_error("bilinear model needs one B_i per input");
        for (const auto& bi : p.dynamics.b_bilinear)
            if (bi.rows() != n_z || bi.cols() != n_z) throw dimension_error("B_i must be n_z x n_z");
    } else if (!p.dynamics.b_bilinear.empty()) {
        throw dimension_error("only bilinear models carry B_i matrices");
    }
    if (m.kind == ModelKind::wiener && p.decoder.n_layers() < 2)
        throw dimension_error("Wiener decoder needs at least one hidden layer");
    if (m.kind != ModelKind::wiener && p.decoder.n_layers() != 1)
        throw dimension_error("linear/bilinear decoder must be a single affine layer");
    if (m.scaling.state_scaler.size() != p.encoder.input_dim())
        throw dimension_error("state scaler width differs from n_x");
    if (!m.scaling.transforms.empty() && static_cast<Index>(m.scaling.transforms.size()) != p.encoder.input_dim())
        throw dimension_error("transform flags differ from n_x");
    if (m.scaling.input_scaler && m.scaling.input_scaler->size() != p.dynamics.n_u())
        throw dimension_error("input scaler width differs from n_u");
}

struct ModelShape {
    ModelKind kind = ModelKind::wiener;
    Index n_x = 0;
    Index n_u = 0;
    Index n_z = 0;
    std::vector<Index> encoder_hidden;
    std::vector<Index> decoder_hidden; // ignored for linear/bilinear; empty => mirrored encoder
    Index coupled_pairs = 0;           // 2x2 blocks in A, 0 = purely diagonal
};

/// Randomly initialised model: variance-scaled network weights, zero biases,
/// A_diag ~ U(0, 1), B drawn like a fan-in scaled layer, bilinear B_i = 0.
inline KoopmanModel init_model(const ModelShape& shape, std::uint64_t seed, DataScaling scaling)
{
    if (shape.n_x < 1 || shape.n_u < 1 || shape.n_z < 1) throw std::invalid_argument("n_x, n_u, n_z must be >= 1");
    std::mt19937_64 rng(seed);

    std::vector<Index> enc{shape.n_x};
    enc.insert(enc.end(), shape.encoder_hidden.begin(), shape.encoder_hidden.end());
    enc.push_back(shape.n_z);

    std::vector<Index> dec{shape.n_z};
    if (shape.kind == ModelKind::wiener) {
        auto hidden = shape.decoder_hidden;
        if (hidden.empty()) hidden.assign(shape.encoder_hidden.rbegin(), shape.encoder_hidden.rend());
        if (hidden.empty()) throw std::invalid_argument("Wiener decoder needs at least one hidden layer");
        dec.insert(dec.end(), hidden.begin(), hidden.end());
    }
    dec.push_back(shape.n_x);

    KoopmanModel m;
    m.kind = shape.kind;
    m.params.encoder = init_mlp(enc, rng);

    auto& d = m.params.dynamics;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    d.a_diag.resize(shape.n_z);
    for (Index i = 0; i < shape.n_z; ++i) d.a_diag(i) = unit(rng);
    if (2 * shape.coupled_pairs > shape.n_z) throw std::invalid_argument("too many coupled pairs for n_z");
    d.a_upper = VectorXd::Zero(shape.coupled_pairs);
    d.a_lower = VectorXd::Zero(shape.coupled_pairs);
    std::normal_distribution<double> in_normal(0.0, std::sqrt(1.0 / static_cast<double>(shape.n_u)));
    d.b.resize(shape.n_z, shape.n_u);
    for (Index j = 0; j < d.b.cols(); ++j)
        for (Index i = 0; i < d.b.rows(); ++i) d.b(i, j) = in_normal(rng);
    // B_i start at zero: random B_i make A + u_i B_i expansive for part of the
    // input range and the multi-step loss explodes before training starts.
    if (shape.kind == ModelKind::bilinear)
        for (Index u = 0; u < shape.n_u; ++u) d.b_bilinear.push_back(MatrixXd::Zero(shape.n_z, shape.n_z));
    m.params.decoder = init_mlp(dec, rng);
    m.scaling = std::move(scaling);
    m.provenance.seed = seed;
    validate(m);
    return m;
}

// ---------------------------------------------------------------------------
// Evaluation in model (transformed + scaled) coordinates

inline MatrixXd encode(const KoopmanModel& m, const MatrixXd& x_cols) { return forward(m.params.encoder, x_cols); }
inline VectorXd encode(const KoopmanModel& m, const VectorXd& x) { return forward(m.params.encoder, x); }

inline MatrixXd decode(const KoopmanModel& m, const MatrixXd& z_cols) { return forward(m.params.decoder, z_cols); }
inline VectorXd decode(const KoopmanModel& m, const VectorXd& z) { return forward(m.params.decoder, z); }

inline VectorXd latent_step(const KoopmanModel& m, const VectorXd& z, const VectorXd& u)
{
    if (z.size() != m.n_z() || u.size() != m.n_u()) throw dimension_error("latent step dimension mismatch");
    return m.params.dynamics.step(MatrixXd(z), MatrixXd(u)).col(0);
}

/// Latent trajectory z_0..z_K (columns) from z0 under inputs (K x n_u rows).
/// Stops at the first non-finite latent state; `diverged_at` receives its index.
inline MatrixXd latent_rollout(const KoopmanModel& m, const VectorXd& z0, const MatrixXd& inputs,
                               std::optional<Index>* diverged_at = nullptr)
{
    if (inputs.rows() > 0 && inputs.cols() != m.n_u()) throw dimension_error("input columns differ from n_u");
    const Index k_max = inputs.rows();
    MatrixXd z(m.n_z(), k_max + 1);
    z.col(0) = z0;
    if (diverged_at) diverged_at->reset();
    if (!z0.allFinite()) {
        if (diverged_at) *diverged_at = 0;
        return z.leftCols(0);
    }
    for (Index k = 0; k < k_max; ++k) {
        z.col(k + 1) = m.params.dynamics.step(z.col(k), inputs.row(k).transpose());
        if (!z.col(k + 1).allFinite()) {
            if (!diverged_at) throw divergence_error(static_cast<std::size_t>(k + 1));
            *diverged_at = k + 1;
            return z.leftCols(k + 1);
        }
    }
    return z;
}

/// Predicted model-coordinate states, (K+1) x n_x, from x0 and K input rows.
/// Row k is the prediction at sample k (row 0 is the reconstruction of x0).
inline MatrixXd rollout(const KoopmanModel& m, const VectorXd& x0, const MatrixXd& inputs,
                        std::optional<Index>* diverged_at = nullptr)
{
    if (x0.size() != m.n_x()) throw dimension_error("x0 dimension differs from n_x");
    const MatrixXd z = latent_rollout(m, encode(m, x0), inputs, diverged_at);
    if (z.cols() == 0) return MatrixXd(0, m.n_x());
    return decode(m, z).transpose();
}

// ---------------------------------------------------------------------------
// JSON model documents

namespace detail {

inline nlohmann::json matrix_to_json(const MatrixXd& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json vector_to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key, const std::string& path)
{
    if (!j.is_object() || !j.contains(key)) throw parse_error(path + "/" + key, "missing field");
    return j[key];
}

inline double number_at(const nlohmann::json& j, const std::string& path)
{
    if (!j.is_number()) throw parse_error(path, "expected a number");
    return j.get<double>();
}

inline VectorXd vector_from_json(const nlohmann::json& j, const std::string& path)
{
    if (!j.is_array()) throw parse_error(path, "expected an array");
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number_at(j[i], path + "/" + std::to_string(i));
    return v;
}

inline MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& path, Index rows, Index cols)
{
    if (!j.is_array() || static_cast<Index>(j.size()) != rows)
        throw parse_error(path, "expected " + std::to_string(rows) + " rows");
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        const std::string rpath = path + "/" + std::to_string(i);
        if (!row.is_array() || static_cast<Index>(row.size()) != cols)
            throw parse_error(rpath, "expected " + std::to_string(cols) + " columns");
        for (Index c = 0; c < cols; ++c) m(i, c) = number_at(row[static_cast<std::size_t>(c)], rpath + "/" + std::to_string(c));
    }
    return m;
}

inline nlohmann::json mlp_to_json(const Mlp& net)
{
    nlohmann::json j;
    j["dims"] = net.layer_dims();
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        j["weights"].push_back(matrix_to_json(net.weights[l]));
        j["biases"].push_back(vector_to_json(net.biases[l]));
    }
    return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j, const std::string& path)
{
    const auto& dims_j = require(j, "dims", path);
    if (!dims_j.is_array() || dims_j.size() < 2) throw parse_error(path + "/dims", "need at least two layer sizes");
    std::vector<Index> dims;
    for (std::size_t i = 0; i < dims_j.size(); ++i) {
        if (!dims_j[i].is_number_integer() || dims_j[i].get<long long>() < 1)
            throw parse_error(path + "/dims/" + std::to_string(i), "expected a positive integer");
        dims.push_back(dims_j[i].get<Index>());
    }
    const auto& w = require(j, "weights", path);
    const auto& b = require(j, "biases", path);
    if (!w.is_array() || w.size() != dims.size() - 1)
        throw parse_error(path + "/weights", "expected " + std::to_string(dims.size() - 1) + " layers");
    if (!b.is_array() || b.size() != dims.size() - 1)
        throw parse_error(path + "/biases", "expected " + std::to_string(dims.size() - 1) + " layers");
    Mlp net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::string ls = std::to_string(l);
        net.weights.push_back(matrix_from_json(w[l], path + "/weights/" + ls, dims[l + 1], dims[l]));
        VectorXd bias = vector_from_json(b[l], path + "/biases/" + ls);
        if (bias.size() != dims[l + 1]) throw parse_error(path + "/biases/" + ls, "bias length differs from layer size");
        net.biases.push_back(std::move(bias));
    }
    return net;
}

inline nlohmann::json scaler_to_json(const MinMaxScaler& s)
{
    return {{"min", vector_to_json(s.lo)}, {"max", vector_to_json(s.hi)}};
}

inline MinMaxScaler scaler_from_json(const nlohmann::json& j, const std::string& path)
{
    MinMaxScaler s{vector_from_json(require(j, "min", path), path + "/min"),
                   vector_from_json(require(j, "max", path), path + "/max")};
    if (s.lo.size() != s.hi.size()) throw parse_error(path, "min and max lengths differ");
    for (Index i = 0; i < s.lo.size(); ++i)
        if (!(s.lo(i) < s.hi(i))) throw parse_error(path + "/min/" + std::to_string(i), "min must be < max");
    return s;
}

} // namespace detail

inline nlohmann::json model_to_json(const KoopmanModel& m)
{
    validate(m);
    using detail::matrix_to_json;
    using detail::vector_to_json;
    nlohmann::json j;
    j["kind"] = to_string(m.kind);
    j["n_x"] = m.n_x();
    j["n_u"] = m.n_u();
    j["n_z"] = m.n_z();
    j["encoder"] = detail::mlp_to_json(m.params.encoder);
    const auto& d = m.params.dynamics;
    nlohmann::json dyn;
    dyn["A_diag"] = vector_to_json(d.a_diag);
    if (d.n_pairs() > 0) {
        dyn["A_upper"] = vector_to_json(d.a_upper);
        dyn["A_lower"] = vector_to_json(d.a_lower);
    }
    dyn["B"] = matrix_to_json(d.b);
    if (m.kind == ModelKind::bilinear) {
        dyn["B_bilinear"] = nlohmann::json::array();
        for (const auto& bi : d.b_bilinear) dyn["B_bilinear"].push_back(matrix_to_json(bi));
    }
    j["dynamics"] = dyn;
    j["decoder"] = detail::mlp_to_json(m.params.decoder);
    j["scaler"] = detail::scaler_to_json(m.scaling.state_scaler);
    if (m.scaling.input_scaler) j["input_scaler"] = detail::scaler_to_json(*m.scaling.input_scaler);
    j["transforms"] = nlohmann::json::array();
    for (auto t : m.scaling.transforms) j["transforms"].push_back(to_string(t));
    j["training_provenance"] = {
        {"seed", m.provenance.seed}, {"config_hash", m.provenance.config_hash}, {"tool_version", tool_version}};
    return j;
}

inline KoopmanModel model_from_json(const nlohmann::json& j)
{
    using detail::require;
    if (!j.is_object()) throw parse_error("", "model document must be an object");
    KoopmanModel m;
    const auto& kind = require(j, "kind", "");
    if (!kind.is_string()) throw parse_error("/kind", "expected a string");
    try {
        m.kind = model_kind_from_string(kind.get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw parse_error("/kind", e.what());
    }
    auto int_field = [&](const char* key) {
        const auto& v = require(j, key, "");
        if (!v.is_number_integer() || v.get<long long>() < 1) throw parse_error(std::string("/") + key, "expected a positive integer");
        return v.get<Index>();
    };
    const Index n_x = int_field("n_x");
    const Index n_u = int_field("n_u");
    const Index n_z = int_field("n_z");

    m.params.encoder = detail::mlp_from_json(require(j, "encoder", ""), "/encoder");
    m.params.decoder = detail::mlp_from_json(require(j, "decoder", ""), "/decoder");
    if (m.params.encoder.input_dim() != n_x) throw parse_error("/encoder/dims/0", "differs from n_x");
    if (m.params.encoder.output_dim() != n_z) throw parse_error("/encoder/dims", "output differs from n_z");
    if (m.params.decoder.input_dim() != n_z) throw parse_error("/decoder/dims/0", "differs from n_z");
    if (m.params.decoder.output_dim() != n_x) throw parse_error("/decoder/dims", "output differs from n_x");

    const auto& dyn = require(j, "dynamics", "");
    auto& d = m.params.dynamics;
    d.a_diag = detail::vector_from_json(require(dyn, "A_diag", "/dynamics"), "/dynamics/A_diag");
    if (d.a_diag.size() != n_z) throw parse_error("/dynamics/A_diag", "length differs from n_z");
    if (dyn.contains("A_upper") || dyn.contains("A_lower")) {
        d.a_upper = detail::vector_from_json(require(dyn, "A_upper", "/dynamics"), "/dynamics/A_upper");
        d.a_lower = detail::vector_from_json(require(dyn, "A_lower", "/dynamics"), "/dynamics/A_lower");
        if (d.a_upper.size() != d.a_lower.size() || 2 * d.a_upper.size() > n_z)
            throw parse_error("/dynamics/A_upper", "invalid number of coupled pairs");
    } else {
        d.a_upper.resize(0);
        d.a_lower.resize(0);
    }
    d.b = detail::matrix_from_json(require(dyn, "B", "/dynamics"), "/dynamics/B", n_z, n_u);
    if (m.kind == ModelKind::bilinear) {
        const auto& bl = require(dyn, "B_bilinear", "/dynamics");
        if (!bl.is_array() || static_cast<Index>(bl.size()) != n_u)
            throw parse_error("/dynamics/B_bilinear", "expected one matrix per input");
        for (std::size_t i = 0; i < bl.size(); ++i)
            d.b_bilinear.push_back(
                detail::matrix_from_json(bl[i], "/dynamics/B_bilinear/" + std::to_string(i), n_z, n_z));
    } else if (dyn.contains("B_bilinear")) {
        throw parse_error("/dynamics/B_bilinear", "only bilinear models carry B_bilinear");
    }

    m.scaling.state_scaler = detail::scaler_from_json(require(j, "scaler", ""), "/scaler");
    if (m.scaling.state_scaler.size() != n_x) throw parse_error("/scaler", "length differs from n_x");
    if (j.contains("input_scaler")) {
        m.scaling.input_scaler = detail::scaler_from_json(j["input_scaler"], "/input_scaler");
        if (m.scaling.input_scaler->size() != n_u) throw parse_error("/input_scaler", "length differs from n_u");
    }
    if (j.contains("transforms")) {
        const auto& t = j["transforms"];
        if (!t.is_array()) throw parse_error("/transforms", "expected an array");
        for (std::size_t i = 0; i < t.size(); ++i) {
            try {
                m.scaling.transforms.push_back(transform_from_string(t[i].get<std::string>()));
            } catch (const std::exception& e) {
                throw parse_error("/transforms/" + std::to_string(i), e.what());
            }
        }
        if (!m.scaling.transforms.empty() && static_cast<Index>(m.scaling.transforms.size()) != n_x)
            throw parse_error("/transforms", "length differs from n_x");
    }
    if (j.contains("training_provenance")) {
        const auto& p = j["training_provenance"];
        if (p.contains("seed") && p["seed"].is_number_integer()) m.provenance.seed = p["seed"].get<std::uint64_t>();
        if (p.contains("config_hash") && p["config_hash"].is_string())
            m.provenance.config_hash = p["config_hash"].get<std::string>();
    }
    try {
        validate(m);
    } catch (const dimension_error& e) {
        throw parse_error("", e.what());
    }
    if (!m.params.encoder.all_finite() || !m.params.decoder.all_finite() || !m.params.dynamics.all_finite())
        throw parse_error("", "non-finite parameter");
    return m;
}

} // namespace koopman

#endif // KOOPMAN_MODELS_HPP
