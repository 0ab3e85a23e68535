#ifndef KOOPMAN_EVALUATION_HPP
#define KOOPMAN_EVALUATION_HPP

#include "koopman/dyn_systems.hpp"
#include "koopman/errors.hpp"
#include "koopman/models.hpp"
#include "koopman/simulate.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>

namespace koopman {

enum class NmseNormalization {
    energy,   // sum x^2 over all samples and states
    centered, // sum (x - mean_j)^2, diagnostics only
};

/// sum (pred - truth)^2 / sum truth^2 over all rows and columns.
inline double nmse(const MatrixXd& predicted, const MatrixXd& truth, NmseNormalization norm = NmseNormalization::energy)
{
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
        throw dimension_error("nmse: predicted and truth shapes differ");
    if (truth.rows() < 1) throw std::invalid_argument("nmse: need at least one row");
    const double denom = norm == NmseNormalization::energy
                             ? truth.squaredNorm()
                             : (truth.rowwise() - truth.colwise().mean()).squaredNorm();
    if (!(denom > 0.0)) throw std::domain_error("nmse: ground truth has zero energy");
    return (predicted - truth).squaredNorm() / denom;
}

/// Per-state NMSE (column-wise); columns with zero energy report NaN.
inline VectorXd nmse_per_state(const MatrixXd& predicted, const MatrixXd& truth)
{
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
        throw dimension_error("nmse: predicted and truth shapes differ");
    VectorXd out(truth.cols());
    for (Index j = 0; j < truth.cols(); ++j) {
        const double denom = truth.col(j).squaredNorm();
        out(j) = denom > 0.0 ? (predicted.col(j) - truth.col(j)).squaredNorm() / denom
                             : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

struct EvalReport {
    double nmse_total = 0.0;
    VectorXd nmse_per_state;
    MatrixXd inputs;          // K x n_u, raw
    MatrixXd truth_scaled;    // (K+1) x n_x, model coordinates
    MatrixXd predicted_scaled; // rows up to the divergence point
    MatrixXd truth_raw;
    MatrixXd predicted_raw;
    bool diverged = false;
    std::optional<Index> divergence_sample;
};

/// Scores an open-loop rollout against a recorded raw trajectory: `truth_raw` has
/// K+1 rows, `inputs_raw` K rows. The rollout starts from the scaled truth row 0.
inline EvalReport evaluate_trajectory(const KoopmanModel& model, const MatrixXd& truth_raw, const MatrixXd& inputs_raw)
{
    if (truth_raw.cols() != model.n_x()) throw dimension_error("truth columns differ from n_x");
    if (truth_raw.rows() != inputs_raw.rows() + 1) throw dimension_error("truth needs exactly one row more than inputs");
    if (inputs_raw.rows() > 0 && inputs_raw.cols() != model.n_u()) throw dimension_error("input columns differ from n_u");
    EvalReport rep;
    rep.inputs = inputs_raw;
    rep.truth_raw = truth_raw;
    rep.truth_scaled = model.scaling.states_to_model(truth_raw);

    std::optional<Index> diverged_at;
    const MatrixXd u_model = inputs_raw.rows() > 0 ? model.scaling.inputs_to_model(inputs_raw) : inputs_raw;
    rep.predicted_scaled = rollout(model, rep.truth_scaled.row(0).transpose(), u_model, &diverged_at);
    rep.diverged = diverged_at.has_value();
    rep.divergence_sample = diverged_at;

    const Index rows = rep.predicted_scaled.rows();
    if (rows == 0) {
        rep.nmse_total = std::numeric_limits<double>::infinity();
        rep.nmse_per_state = VectorXd::Constant(model.n_x(), std::numeric_limits<double>::infinity());
        rep.predicted_raw = MatrixXd(0, model.n_x());
        return rep;
    }
    rep.nmse_total = nmse(rep.predicted_scaled, rep.truth_scaled.topRows(rows));
    rep.nmse_per_state = nmse_per_state(rep.predicted_scaled, rep.truth_scaled.topRows(rows));
    try {
        rep.predicted_raw = model.scaling.states_from_model(rep.predicted_scaled);
    } catch (const std::domain_error&) {
        rep.predicted_raw = MatrixXd::Constant(rows, model.n_x(), std::numeric_limits<double>::quiet_NaN());
    }
    return rep;
}

/// Open-loop test: simulates the true system and the surrogate from x0 under the
/// same raw input sequence and scores the surrogate in model coordinates.
inline EvalReport evaluate(const KoopmanModel& model, const SystemSpec& spec, const VectorXd& x0_raw,
                           const MatrixXd& inputs_raw, double dt, int substeps = 1)
{
    if (model.n_x() != spec.n_x() || model.n_u() != spec.n_u())
        throw dimension_error("model and system dimensions differ");
    return evaluate_trajectory(model, rk4_integrate(spec, x0_raw, inputs_raw, dt, substeps), inputs_raw);
}

inline EvalReport evaluate(const KoopmanModel& model, const SystemSpec& spec, const VectorXd& x0_raw,
                           const StepSequence& seq, int substeps = 1)
{
    return evaluate(model, spec, x0_raw, seq.expand(), seq.dt, substeps);
}

} // namespace koopman

#endif // KOOPMAN_EVALUATION_HPP
