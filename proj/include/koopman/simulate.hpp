#ifndef KOOPMAN_SIMULATE_HPP
#define KOOPMAN_SIMULATE_HPP

#include "koopman/dyn_systems.hpp"
#include "koopman/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace koopman {

/// Zero-order-hold piecewise constant input signal.
struct StepSequence {
    std::vector<VectorXd> step_values;
    int step_duration_samples = 1;
    double dt = 1.0;
    std::uint64_t seed = 0;

    Index n_samples() const { return static_cast<Index>(step_values.size()) * step_duration_samples; }

    /// Sample-wise input signal, one row per sampling instant.
    MatrixXd expand() const
    {
        if (step_values.empty()) return MatrixXd(0, 0);
        const Index n_u = step_values.front().size();
        MatrixXd u(n_samples(), n_u);
        Index row = 0;
        for (const auto& value : step_values)
            for (int k = 0; k < step_duration_samples; ++k) u.row(row++) = value.transpose();
        return u;
    }
};

/// i.i.d. uniform step heights per channel. With grid_levels >= 2 the values are
/// drawn uniformly from an evenly spaced grid of that many levels per channel.
inline StepSequence random_step_inputs(const std::vector<Bounds>& bounds, int n_steps, int step_duration_samples,
                                       double dt, std::uint64_t seed, int grid_levels = 0)
{
    if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
    if (step_duration_samples < 1) throw std::invalid_argument("step_duration_samples must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> level(0, std::max(grid_levels - 1, 0));

    StepSequence seq;
    seq.step_duration_samples = step_duration_samples;
    seq.dt = dt;
    seq.seed = seed;
    seq.step_values.reserve(static_cast<std::size_t>(n_steps));
    for (int s = 0; s < n_steps; ++s) {
        VectorXd v(static_cast<Index>(bounds.size()));
        for (std::size_t i = 0; i < bounds.size(); ++i) {
            const double frac = grid_levels >= 2 ? static_cast<double>(level(rng)) / (grid_levels - 1) : unit(rng);
            v(static_cast<Index>(i)) = std::clamp(bounds[i].lo + frac * (bounds[i].hi - bounds[i].lo),
                                                  bounds[i].lo, bounds[i].hi);
        }
        seq.step_values.push_back(std::move(v));
    }
    return seq;
}

/// Classical fixed-step RK4 under zero-order-hold inputs. `inputs` has one row per
/// sample; the result has inputs.rows()+1 rows, row k is the state at t = k*dt.
/// `substeps` RK4 steps of size dt/substeps are taken per sample.
inline MatrixXd rk4_integrate(const SystemSpec& spec, const VectorXd& x0, const MatrixXd& inputs, double dt,
                              int substeps = 1)
{
    if (x0.size() != spec.n_x()) throw dimension_error("x0 dimension does not match system");
    if (inputs.rows() > 0 && inputs.cols() != spec.n_u()) throw dimension_error("input columns do not match system");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
    if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
    if (!x0.allFinite()) throw integration_error(0, "non-finite initial state");

    const Index n = inputs.rows();
    MatrixXd traj(n + 1, spec.n_x());
    traj.row(0) = x0.transpose();
    VectorXd x = x0;
    const double h = dt / substeps;
    for (Index k = 0; k < n; ++k) {
        const VectorXd u = inputs.row(k).transpose();
        for (int s = 0; s < substeps; ++s) {
            const VectorXd k1 = eval_rhs(spec, x, u);
            const VectorXd k2 = eval_rhs(spec, x + 0.5 * h * k1, u);
            const VectorXd k3 = eval_rhs(spec, x + 0.5 * h * k2, u);
            const VectorXd k4 = eval_rhs(spec, x + h * k3, u);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if (!x.allFinite()) throw integration_error(static_cast<std::size_t>(k + 1), "integration blow-up");
        traj.row(k + 1) = x.transpose();
    }
    return traj;
}

inline MatrixXd rk4_integrate(const SystemSpec& spec, const VectorXd& x0, const StepSequence& seq, int substeps = 1)
{
    return rk4_integrate(spec, x0, seq.expand(), seq.dt, substeps);
}

// ---------------------------------------------------------------------------
// Per-state transforms and min-max scaling

enum class StateTransform { none, log, log1m };

inline std::string to_string(StateTransform t)
{
    switch (t) {
    case StateTransform::none: return "none";
    case StateTransform::log: return "log";
    case StateTransform::log1m: return "log1m";
    }
    return "none";
}

inline StateTransform transform_from_string(const std::string& s)
{
    if (s == "none") return StateTransform::none;
    if (s == "log") return StateTransform::log;
    if (s == "log1m") return StateTransform::log1m;
    throw std::invalid_argument("unknown state transform '" + s + "'");
}

/// ln(x) for stages at or below the feed stage (reboiler included), ln(1-x) above.
inline std::vector<StateTransform> column_transform_flags(int n_trays, int feed_tray)
{
    std::vector<StateTransform> flags(static_cast<std::size_t>(n_trays) + 2, StateTransform::log1m);
    for (int j = 0; j <= feed_tray; ++j) flags[static_cast<std::size_t>(j)] = StateTransform::log;
    return flags;
}

inline double apply_transform(StateTransform t, double x)
{
    switch (t) {
    case StateTransform::none: return x;
    case StateTransform::log:
        if (!(x > 0.0 && x < 1.0)) throw std::domain_error("log transform requires a composition in (0,1)");
        return std::log(x);
    case StateTransform::log1m:
        if (!(x > 0.0 && x < 1.0)) throw std::domain_error("log transform requires a composition in (0,1)");
        return std::log1p(-x);
    }
    return x;
}

inline double invert_transform(StateTransform t, double y)
{
    switch (t) {
    case StateTransform::none: return y;
    case StateTransform::log: return std::exp(y);
    case StateTransform::log1m: return -std::expm1(y);
    }
    return y;
}

/// Applies per-column transforms to a [N x n_x] matrix (rows = samples).
inline MatrixXd apply_transforms(const MatrixXd& rows, const std::vector<StateTransform>& flags)
{
    if (flags.empty()) return rows;
    if (static_cast<Index>(flags.size()) != rows.cols()) throw dimension_error("transform flags do not match states");
    MatrixXd out(rows.rows(), rows.cols());
    for (Index j = 0; j < rows.cols(); ++j)
        for (Index k = 0; k < rows.rows(); ++k)
            out(k, j) = apply_transform(flags[static_cast<std::size_t>(j)], rows(k, j));
    return out;
}

inline MatrixXd invert_transforms(const MatrixXd& rows, const std::vector<StateTransform>& flags)
{
    if (flags.empty()) return rows;
    if (static_cast<Index>(flags.size()) != rows.cols()) throw dimension_error("transform flags do not match states");
    MatrixXd out(rows.rows(), rows.cols());
    for (Index j = 0; j < rows.cols(); ++j)
        for (Index k = 0; k < rows.rows(); ++k)
            out(k, j) = invert_transform(flags[static_cast<std::size_t>(j)], rows(k, j));
    return out;
}

inline VectorXd column_log_transform(const VectorXd& x, int feed_tray)
{
    const auto flags = column_transform_flags(static_cast<int>(x.size()) - 2, feed_tray);
    return apply_transforms(x.transpose(), flags).transpose();
}

inline VectorXd column_log_transform_inverse(const VectorXd& y, int feed_tray)
{
    const auto flags = column_transform_flags(static_cast<int>(y.size()) - 2, feed_tray);
    return invert_transforms(y.transpose(), flags).transpose();
}

/// Per-channel affine map  min -> 0, max -> 1.
struct MinMaxScaler {
    VectorXd lo;
    VectorXd hi;

    Index size() const { return lo.size(); }

    MatrixXd apply(const MatrixXd& rows) const
    {
        check(rows.cols());
        return (rows.rowwise() - lo.transpose()).array().rowwise() / (hi - lo).transpose().array();
    }

    MatrixXd invert(const MatrixXd& rows) const
    {
        check(rows.cols());
        return (rows.array().rowwise() * (hi - lo).transpose().array()).matrix().rowwise() + lo.transpose();
    }

    VectorXd apply(const VectorXd& x) const { return apply(MatrixXd(x.transpose())).transpose(); }
    VectorXd invert(const VectorXd& x) const { return invert(MatrixXd(x.transpose())).transpose(); }

private:
    void check(Index cols) const
    {
        if (cols != lo.size()) throw dimension_error("scaler width does not match data");
    }
};

inline MinMaxScaler fit_scaler(const MatrixXd& rows)
{
    if (rows.rows() < 2) throw std::invalid_argument("fit_scaler needs at least 2 samples");
    MinMaxScaler s{rows.colwise().minCoeff().transpose(), rows.colwise().maxCoeff().transpose()};
    for (Index j = 0; j < s.lo.size(); ++j)
        if (!(s.lo(j) < s.hi(j)))
            throw config_error("/states/" + std::to_string(j),
                               "channel " + std::to_string(j + 1) +
                                   " is constant over the training data; drop or perturb it before scaling");
    return s;
}

// ---------------------------------------------------------------------------
// Snapshot datasets and windows

/// Raw state/input samples plus the transform and scaling applied before training.
/// Row k holds x(t_k) and the input u_k held over [t_k, t_k + dt).
struct SnapshotDataset {
    MatrixXd states; // N x n_x, raw
    MatrixXd inputs; // N x n_u, raw
    double dt = 1.0;
    std::vector<StateTransform> transforms; // empty == all none
    MinMaxScaler scaler;                    // on transformed states
    std::optional<MinMaxScaler> input_scaler;

    Index n_samples() const { return states.rows(); }

    /// States after transform and scaling, N x n_x.
    MatrixXd model_states() const { return scaler.apply(apply_transforms(states, transforms)); }
    MatrixXd model_inputs() const { return input_scaler ? input_scaler->apply(inputs) : inputs; }
};

/// Simulates from x0 under the step sequence and keeps the N samples that carry an input.
inline SnapshotDataset make_snapshot_dataset(const SystemSpec& spec, const VectorXd& x0, const StepSequence& seq,
                                             std::vector<StateTransform> transforms = {}, bool scale_inputs = false,
                                             int substeps = 1)
{
    const MatrixXd u = seq.expand();
    const MatrixXd traj = rk4_integrate(spec, x0, u, seq.dt, substeps);
    SnapshotDataset ds;
    ds.states = traj.topRows(u.rows());
    ds.inputs = u;
    ds.dt = seq.dt;
    ds.transforms = std::move(transforms);
    if (ds.n_samples() < 2) throw std::invalid_argument("dataset needs at least 2 samples");
    ds.scaler = fit_scaler(apply_transforms(ds.states, ds.transforms));
    if (scale_inputs) ds.input_scaler = fit_scaler(ds.inputs);
    return ds;
}

/// One training sample: p+1 consecutive snapshots (columns) and the p inputs between them.
struct Window {
    MatrixXd states; // n_x x (p+1), model coordinates
    MatrixXd inputs; // n_u x p, model coordinates

    Index horizon() const { return inputs.cols(); }
};

struct WindowSet {
    std::vector<Window> windows;
    int p = 0;
};

/// Windows with stride p sharing their boundary snapshot: window m covers samples
/// [m*p, m*p + p]; trailing samples that do not fill a window are dropped.
inline WindowSet window_dataset(const MatrixXd& model_states, const MatrixXd& model_inputs, int p)
{
    if (p < 1) throw std::invalid_argument("window length p must be >= 1");
    if (model_states.rows() < p + 1)
        throw std::invalid_argument("dataset has fewer than p+1 samples");
    if (model_inputs.rows() < model_states.rows() - 1) throw dimension_error("input rows do not cover the states");

    WindowSet set;
    set.p = p;
    const Index count = (model_states.rows() - 1) / p;
    set.windows.reserve(static_cast<std::size_t>(count));
    for (Index m = 0; m < count; ++m) {
        Window w;
        w.states = model_states.middleRows(m * p, p + 1).transpose();
        w.inputs = model_inputs.middleRows(m * p, p).transpose();
        set.windows.push_back(std::move(w));
    }
    return set;
}

inline WindowSet window_dataset(const SnapshotDataset& ds, int p)
{
    return window_dataset(ds.model_states(), ds.model_inputs(), p);
}

} // namespace koopman

#endif // KOOPMAN_SIMULATE_HPP
