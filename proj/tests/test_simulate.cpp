#include "test_util.hpp"

#include <set>

using namespace ktest;

namespace {

double toy_x1_error(double dt, double t_end)
{
    const auto n = static_cast<Index>(std::llround(t_end / dt));
    const MatrixXd traj = rk4_integrate(make_toy_system(), VectorXd::Zero(2), MatrixXd::Ones(n, 1), dt);
    return std::abs(traj(n, 0) - 10.0 * (1.0 - std::exp(-0.1 * t_end)));
}

} // namespace

TEST(Rk4, EquilibriumStaysPut)
{
    const MatrixXd traj = rk4_integrate(make_toy_system(), VectorXd::Zero(2), MatrixXd::Zero(100, 1), 1.0);
    EXPECT_EQ(traj.rows(), 101);
    EXPECT_EQ(max_abs(traj), 0.0);
}

TEST(Rk4, OneUnitStepMatchesClosedForm)
{
    const MatrixXd traj = rk4_integrate(make_toy_system(), VectorXd::Zero(2), MatrixXd::Ones(1, 1), 1.0);
    EXPECT_NEAR(traj(1, 0), 10.0 * (1.0 - std::exp(-0.1)), 1e-5);
    EXPECT_NEAR(traj(1, 0), 0.951626, 1e-5);
}

TEST(Rk4, ReachesToySteadyState)
{
    const MatrixXd traj = rk4_integrate(make_toy_system(), VectorXd::Zero(2), MatrixXd::Ones(200, 1), 1.0);
    EXPECT_NEAR(traj(200, 0), 10.0, 1e-3);
    EXPECT_NEAR(traj(200, 1), 100.0, 1e-3);
}

TEST(Rk4, FourthOrderConvergence)
{
    const double e1 = toy_x1_error(1.0, 10.0);
    const double e2 = toy_x1_error(0.5, 10.0);
    const double e3 = toy_x1_error(0.25, 10.0);
    EXPECT_GE(e1 / e2, 12.0);
    EXPECT_LE(e1 / e2, 20.0);
    EXPECT_GE(e2 / e3, 12.0);
    EXPECT_LE(e2 / e3, 20.0);
    EXPECT_GE(std::log2(e2 / e3), 3.9);
}

TEST(Rk4, SubstepsRefineTheSameGrid)
{
    const auto sys = make_toy_system();
    const MatrixXd fine = rk4_integrate(sys, VectorXd::Zero(2), MatrixXd::Ones(20, 1), 0.5);
    const MatrixXd sub = rk4_integrate(sys, VectorXd::Zero(2), MatrixXd::Ones(10, 1), 1.0, 2);
    for (Index k = 0; k <= 10; ++k) EXPECT_NEAR(sub(k, 0), fine(2 * k, 0), 1e-13);
}

TEST(Rk4, BlowUpNamesTheSample)
{
    VectorXd x0(2);
    x0 << 1e160, 0.0;
    try {
        rk4_integrate(make_toy_system(), x0, MatrixXd::Zero(5, 1), 1.0);
        FAIL() << "expected integration_error";
    } catch (const integration_error& e) {
        EXPECT_EQ(e.sample(), 1u);
        EXPECT_NE(std::string(e.what()).find("sample 1"), std::string::npos);
    }
}

TEST(Rk4, RejectsBadArguments)
{
    const auto sys = make_toy_system();
    EXPECT_THROW(rk4_integrate(sys, VectorXd::Zero(3), MatrixXd::Zero(2, 1), 1.0), dimension_error);
    EXPECT_THROW(rk4_integrate(sys, VectorXd::Zero(2), MatrixXd::Zero(2, 1), 0.0), std::invalid_argument);
    EXPECT_THROW(rk4_integrate(sys, VectorXd::Constant(2, NAN), MatrixXd::Zero(2, 1), 1.0), integration_error);
}

TEST(StepInputs, DeterministicPerSeed)
{
    const auto a = random_step_inputs({{-1, 1}}, 30, 5, 1.0, 9);
    const auto b = random_step_inputs({{-1, 1}}, 30, 5, 1.0, 9);
    const auto c = random_step_inputs({{-1, 1}}, 30, 5, 1.0, 10);
    EXPECT_EQ(a.expand(), b.expand());
    EXPECT_NE(a.expand(), c.expand());
}

TEST(StepInputs, ExpandedLengthForToyProtocol)
{
    const auto seq = random_step_inputs({{-1, 1}}, 100, 200, 1.0, 42);
    const MatrixXd u = seq.expand();
    EXPECT_EQ(u.rows(), 20000);
    EXPECT_EQ(u.cols(), 1);
    for (Index k = 0; k < 200; ++k) EXPECT_EQ(u(k, 0), u(0, 0));
    EXPECT_NE(u(200, 0), u(199, 0));
}

TEST(StepInputs, StayInsideBounds)
{
    const auto seq = random_step_inputs({{-1, 1}, {0.0155, 0.0175}}, 10000, 1, 1.0, 4);
    const MatrixXd u = seq.expand();
    EXPECT_GE(u.col(0).minCoeff(), -1.0);
    EXPECT_LE(u.col(0).maxCoeff(), 1.0);
    EXPECT_GE(u.col(1).minCoeff(), 0.0155);
    EXPECT_LE(u.col(1).maxCoeff(), 0.0175);
    EXPECT_NEAR(u.col(0).mean(), 0.0, 0.05);
}

TEST(StepInputs, GridLevelsDrawFromTheGrid)
{
    const auto seq = random_step_inputs({{0.5, 0.6}}, 500, 1, 1.0, 8, 5);
    std::set<double> seen;
    for (const auto& v : seq.step_values) {
        const double level = (v(0) - 0.5) / 0.025;
        EXPECT_NEAR(level, std::round(level), 1e-9);
        seen.insert(std::round(level));
    }
    EXPECT_EQ(seen.size(), 5u);
}

TEST(Scaler, EndpointsMapToUnitInterval)
{
    MatrixXd rows(11, 1);
    for (int i = 0; i <= 10; ++i) rows(i, 0) = i;
    const MinMaxScaler s = fit_scaler(rows);
    const MatrixXd y = s.apply(rows);
    EXPECT_EQ(y(10, 0), 1.0);
    EXPECT_EQ(y(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(y(5, 0), 0.5);
}

TEST(Scaler, InverseIsIdentity)
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(3.0, 40.0);
    const MatrixXd rows = MatrixXd::NullaryExpr(50, 3, [&] { return n(rng); });
    const MinMaxScaler s = fit_scaler(rows);
    EXPECT_LT(max_abs(s.invert(s.apply(rows)) - rows), 1e-12 * max_abs(rows));
}

TEST(Scaler, ConstantChannelIsConfigError)
{
    MatrixXd rows(3, 2);
    rows << 5, 1, 5, 2, 5, 3;
    try {
        fit_scaler(rows);
        FAIL();
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("drop or perturb"), std::string::npos);
    }
    EXPECT_THROW(fit_scaler(MatrixXd::Ones(1, 2)), std::invalid_argument);
}

TEST(ColumnTransform, RectifyingAndStrippingExamples)
{
    VectorXd x = VectorXd::Constant(10, 0.5);
    x(9) = 1.0 - 1e-3;
    const VectorXd y = column_log_transform(x, 3);
    EXPECT_NEAR(y(9), -6.907755, 1e-6);
    EXPECT_NEAR(y(0), -0.693147, 1e-6);
    // feed tray 3 is stage 4 (index 3): log; index 4 is the first rectifying stage
    EXPECT_DOUBLE_EQ(y(3), std::log(0.5));
    EXPECT_DOUBLE_EQ(y(4), std::log1p(-0.5));
    x(2) = 0.1;
    x(4) = 0.1;
    const VectorXd y2 = column_log_transform(x, 3);
    EXPECT_DOUBLE_EQ(y2(2), std::log(0.1));
    EXPECT_DOUBLE_EQ(y2(4), std::log(0.9));
}

TEST(ColumnTransform, RoundTrip)
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unit(1e-6, 1.0 - 1e-6);
    for (int t = 0; t < 100; ++t) {
        const VectorXd x = VectorXd::NullaryExpr(10, [&] { return unit(rng); });
        EXPECT_LT((column_log_transform_inverse(column_log_transform(x, 3), 3) - x).lpNorm<Eigen::Infinity>(), 1e-12);
    }
}

TEST(ColumnTransform, SingularCompositionsThrow)
{
    VectorXd x = VectorXd::Constant(10, 0.5);
    x(0) = 0.0;
    EXPECT_THROW(column_log_transform(x, 3), std::domain_error);
    x(0) = 0.5;
    x(9) = 1.0;
    EXPECT_THROW(column_log_transform(x, 3), std::domain_error);
}

TEST(Windows, CountsFollowStrideP)
{
    auto count = [](Index n, int p) {
        return window_dataset(MatrixXd::Zero(n, 2), MatrixXd::Zero(n, 1), p).windows.size();
    };
    EXPECT_EQ(count(101, 50), 2u);
    EXPECT_EQ(count(20000, 50), 399u);
    EXPECT_EQ(count(51, 50), 1u);
    EXPECT_THROW(count(51, 0), std::invalid_argument);
    EXPECT_THROW(count(50, 50), std::invalid_argument);
}

TEST(Windows, ShareBoundaryAndKeepRecordedInputs)
{
    const Index n = 23;
    MatrixXd x(n, 2), u(n, 1);
    for (Index k = 0; k < n; ++k) {
        x.row(k) << k, -k;
        u(k, 0) = 100 + k;
    }
    const WindowSet ws = window_dataset(x, u, 5);
    ASSERT_EQ(ws.windows.size(), 4u);
    for (std::size_t m = 0; m < ws.windows.size(); ++m) {
        const auto& w = ws.windows[m];
        EXPECT_EQ(w.states.cols(), 6);
        EXPECT_EQ(w.inputs.cols(), 5);
        for (Index k = 0; k <= 5; ++k) EXPECT_EQ(w.states(0, k), static_cast<double>(5 * m + k));
        for (Index k = 0; k < 5; ++k) EXPECT_EQ(w.inputs(0, k), 100.0 + 5 * m + k);
    }
    EXPECT_EQ(ws.windows[0].states.col(5), ws.windows[1].states.col(0));
}

TEST(Dataset, ToyProtocolShapeAndScaling)
{
    const auto seq = random_step_inputs({{-1, 1}}, 100, 200, 1.0, 42);
    const SnapshotDataset ds = make_snapshot_dataset(make_toy_system(), VectorXd::Zero(2), seq);
    EXPECT_EQ(ds.n_samples(), 20000);
    EXPECT_EQ(ds.states.row(0), Eigen::RowVectorXd::Zero(2));
    const MatrixXd y = ds.model_states();
    EXPECT_DOUBLE_EQ(y.minCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(y.maxCoeff(), 1.0);
    EXPECT_FALSE(ds.input_scaler.has_value());
    EXPECT_EQ(ds.model_inputs(), ds.inputs);
    EXPECT_EQ(window_dataset(ds, 50).windows.size(), 399u);
}

TEST(Dataset, BitwiseDeterministic)
{
    const auto seq = random_step_inputs({{-1, 1}}, 10, 20, 1.0, 3);
    const auto a = make_snapshot_dataset(make_toy_system(), VectorXd::Zero(2), seq);
    const auto b = make_snapshot_dataset(make_toy_system(), VectorXd::Zero(2), seq);
    EXPECT_EQ(a.states, b.states);
    EXPECT_EQ(a.scaler.lo, b.scaler.lo);
    EXPECT_EQ(a.scaler.hi, b.scaler.hi);
}

TEST(Dataset, TrainingSplitScalingCoversUnitInterval)
{
    const auto seq = random_step_inputs({{-1, 1}}, 20, 50, 1.0, 6);
    const auto ds = make_snapshot_dataset(make_toy_system(), VectorXd::Zero(2), seq, {}, true);
    TrainConfig cfg;
    cfg.p = 10;
    const ScaledWindows sw = training_windows(ds, cfg);
    const auto [train_idx, val_idx] = split_windows(sw.windows.windows.size(), cfg.val_fraction, cfg.seed);
    VectorXd lo = VectorXd::Constant(2, INFINITY), hi = VectorXd::Constant(2, -INFINITY);
    for (auto i : train_idx) {
        lo = lo.cwiseMin(sw.windows.windows[i].states.rowwise().minCoeff());
        hi = hi.cwiseMax(sw.windows.windows[i].states.rowwise().maxCoeff());
    }
    EXPECT_EQ(lo, VectorXd::Zero(2));
    EXPECT_EQ(hi, VectorXd::Ones(2));
    ASSERT_TRUE(sw.scaling.input_scaler.has_value());
}

TEST(Dataset, ColumnLogTransformIsApplied)
{
    ColumnParams p;
    const auto sys = make_column_system(p);
    const auto seq = random_step_inputs(sys.input_bounds, 3, 60, 1.0, 1, 5);
    const auto flags = column_transform_flags(p.n_trays, p.feed_tray);
    const auto ds = make_snapshot_dataset(sys, VectorXd::Constant(10, 0.5), seq, flags, true, 2);
    EXPECT_EQ(flags[3], StateTransform::log);
    EXPECT_EQ(flags[4], StateTransform::log1m);
    const MatrixXd y = ds.model_states();
    EXPECT_GE(y.minCoeff(), 0.0);
    EXPECT_LE(y.maxCoeff(), 1.0);
    const VectorXd back = invert_transforms(ds.scaler.invert(y), flags).row(17).transpose();
    EXPECT_LT((back - ds.states.row(17).transpose()).norm(), 1e-12);
}
