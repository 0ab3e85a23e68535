#include "test_util.hpp"

using namespace ktest;

namespace {

VectorXd vec(std::initializer_list<double> v) { return Eigen::Map<const VectorXd>(v.begin(), static_cast<Index>(v.size())); }

} // namespace

TEST(Toy, SteadyStateOfUnitInputHasZeroDerivative)
{
    EXPECT_LT(eval_rhs(make_toy_system(), vec({10, 100}), vec({1})).norm(), 1e-15);
}

TEST(Toy, OriginIsEquilibrium)
{
    EXPECT_EQ(eval_rhs(make_toy_system(), vec({0, 0}), vec({0})), vec({0, 0}));
}

TEST(Toy, HandSubstitution)
{
    const VectorXd dx = eval_rhs(make_toy_system(), vec({1, 0}), vec({0}));
    EXPECT_DOUBLE_EQ(dx(0), -0.1);
    EXPECT_DOUBLE_EQ(dx(1), 1.0);
}

TEST(Toy, SteadyStateFormula)
{
    EXPECT_EQ(toy_steady_state(0.0), vec({0, 0}));
    EXPECT_EQ(toy_steady_state(1.0), vec({10, 100}));
    EXPECT_EQ(toy_steady_state(-1.0), vec({-10, 100}));
}

TEST(Toy, SteadyStatesAreEquilibriaForRandomInputs)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto sys = make_toy_system();
    for (int i = 0; i < 20; ++i) {
        const double ui = u(rng);
        EXPECT_LT(eval_rhs(sys, toy_steady_state(ui), vec({ui})).norm(), 1e-12);
    }
}

TEST(Toy, DimensionMismatchThrows)
{
    EXPECT_THROW(eval_rhs(make_toy_system(), vec({1, 2, 3}), vec({0})), dimension_error);
    EXPECT_THROW(eval_rhs(make_toy_system(), vec({1, 2}), vec({0, 1})), dimension_error);
}

TEST(Cstr, PureMixingAtFeedStateIsStationary)
{
    CstrParams p;
    p.k0 = 0.0;
    const VectorXd dx = eval_rhs(make_cstr_system(p), vec({p.c_in, p.t_in}), vec({0}));
    EXPECT_EQ(dx, vec({0, 0}));
}

TEST(Cstr, HeatDutyEntersTemperatureOnly)
{
    const auto sys = make_cstr_system();
    const CstrParams p;
    const VectorXd x = vec({1.0, 440.0});
    const VectorXd d = eval_rhs(sys, x, vec({1000})) - eval_rhs(sys, x, vec({0}));
    EXPECT_DOUBLE_EQ(d(0), 0.0);
    EXPECT_NEAR(d(1), 1000.0 / (p.rho_cp * p.volume), 1e-12);
}

TEST(Column, UniformCompositionWithUnitVolatilityIsStationary)
{
    ColumnParams p;
    p.alpha = 1.0;
    const auto sys = make_column_system(p);
    const double u1 = 0.55;
    const VectorXd x = VectorXd::Constant(sys.n_x(), 1.0 - u1);
    EXPECT_LT(eval_rhs(sys, x, vec({u1, 0.0165})).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(Column, StateCountFollowsTrays)
{
    ColumnParams p;
    p.n_trays = 5;
    p.feed_tray = 2;
    p.holdups = ColumnParams::default_holdups(5);
    EXPECT_EQ(make_column_system(p).n_x(), 7);
    EXPECT_EQ(make_column_system().n_x(), 10);
    EXPECT_EQ(make_column_system().n_u(), 2);
}

TEST(Column, CompositionOutsideUnitIntervalIsDomainError)
{
    const auto sys = make_column_system();
    VectorXd x = VectorXd::Constant(10, 0.5);
    x(3) = 1.2;
    EXPECT_THROW(eval_rhs(sys, x, vec({0.55, 0.0165})), std::domain_error);
    x(3) = -1e-9;
    EXPECT_THROW(eval_rhs(sys, x, vec({0.55, 0.0165})), std::domain_error);
}

TEST(Column, LightComponentBalanceCloses)
{
    // sum_j M_j dx_j/dt = F z_f - D x_D - B x_B
    const ColumnParams p;
    const auto sys = make_column_system(p);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.01, 0.99), u1(0.5, 0.6), u2(0.0155, 0.0175);
    for (int t = 0; t < 50; ++t) {
        const VectorXd x = VectorXd::NullaryExpr(10, [&] { return unit(rng); });
        const double xf = u1(rng);
        const double reflux = u2(rng);
        const VectorXd dx = eval_rhs(sys, x, vec({xf, reflux}));
        double acc = 0.0;
        for (Index j = 0; j < 10; ++j) acc += p.holdups[static_cast<std::size_t>(j)] * dx(j);
        const double distillate = p.vapor - reflux;
        const double bottoms = p.feed - distillate;
        const double expected = p.feed * (1.0 - xf) - distillate * x(9) - bottoms * x(0);
        EXPECT_NEAR(acc, expected, 1e-10);
    }
}

TEST(Column, VleIsMonotoneAndFixesEndpoints)
{
    EXPECT_DOUBLE_EQ(column_vle(0.0, 4.5), 0.0);
    EXPECT_DOUBLE_EQ(column_vle(1.0, 4.5), 1.0);
    EXPECT_NEAR(column_vle(0.5, 3.0), 0.75, 1e-15);
    EXPECT_GT(column_vle(0.3, 4.5), 0.3);
}

TEST(Affinity, Examples)
{
    const auto toy = make_toy_system();
    EXPECT_TRUE(input_affinity_check(toy, vec({3.0, -2.0}), vec({0}), vec({1}), 0.5));
    const auto cstr = make_cstr_system();
    EXPECT_TRUE(input_affinity_check(cstr, vec({1.0, 440.0}), vec({-2000}), vec({10000}), 0.3));
    EXPECT_TRUE(input_affinity_check(cstr, vec({1.2, 430.0}), vec({-2000}), vec({10000}), 0.0));
    EXPECT_THROW(input_affinity_check(toy, vec({0, 0}), vec({0}), vec({1}), 1.5), std::invalid_argument);
    EXPECT_THROW(input_affinity_check(toy, vec({0, 0}), vec({0, 1}), vec({1}), 0.5), dimension_error);
}

TEST(Affinity, HoldsForRandomDrawsOnEveryShippedSystem)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    struct Case {
        SystemSpec spec;
        std::vector<Bounds> state_box;
    };
    std::vector<Case> cases{
        {make_toy_system(), {{-10, 10}, {0, 100}}},
        {make_cstr_system(), {{0.5, 2.0}, {400, 480}}},
        {make_column_system(), std::vector<Bounds>(10, Bounds{0.001, 0.999})},
    };
    for (const auto& c : cases) {
        for (int t = 0; t < 100; ++t) {
            VectorXd x(c.spec.n_x()), ua(c.spec.n_u()), ub(c.spec.n_u());
            for (Index i = 0; i < x.size(); ++i) {
                const auto& b = c.state_box[static_cast<std::size_t>(i)];
                x(i) = b.lo + unit(rng) * (b.hi - b.lo);
            }
            for (Index i = 0; i < ua.size(); ++i) {
                const auto& b = c.spec.input_bounds[static_cast<std::size_t>(i)];
                ua(i) = b.lo + unit(rng) * (b.hi - b.lo);
                ub(i) = b.lo + unit(rng) * (b.hi - b.lo);
            }
            EXPECT_TRUE(input_affinity_check(c.spec, x, ua, ub, unit(rng))) << to_string(c.spec.kind);
        }
    }
}

TEST(Validation, RejectsInconsistentParameters)
{
    EXPECT_THROW(make_toy_system({1.0, -1.0}), config_error);
    CstrParams cp;
    cp.volume = 0.0;
    EXPECT_THROW(make_cstr_system(cp), config_error);
    ColumnParams p;
    p.feed_tray = 9;
    try {
        make_column_system(p);
        FAIL() << "expected config_error";
    } catch (const config_error& e) {
        EXPECT_EQ(e.path(), "/params/feed_tray");
    }
    p = ColumnParams{};
    p.holdups[4] = 0.0;
    EXPECT_THROW(make_column_system(p), config_error);
    p = ColumnParams{};
    p.alpha = -1.0;
    EXPECT_THROW(make_column_system(p), config_error);
}

TEST(Json, RoundTripsEveryKind)
{
    for (const auto& spec : {make_toy_system(), make_cstr_system(), make_column_system()}) {
        const SystemSpec back = system_from_json(system_to_json(spec));
        EXPECT_EQ(back.kind, spec.kind);
        EXPECT_EQ(back.n_x(), spec.n_x());
        EXPECT_EQ(system_to_json(back), system_to_json(spec));
    }
}

TEST(Json, ErrorsCarryFieldPaths)
{
    try {
        system_from_json(nlohmann::json{{"kind", "pendulum"}}, "/system");
        FAIL();
    } catch (const config_error& e) {
        EXPECT_EQ(e.path(), "/system/kind");
    }
    try {
        system_from_json(nlohmann::json{{"kind", "column"}, {"params", {{"alpha", "high"}}}}, "/system");
        FAIL();
    } catch (const config_error& e) {
        EXPECT_EQ(e.path(), "/system/params/alpha");
    }
    try {
        system_from_json(nlohmann::json{{"kind", "toy"}, {"input_bounds", {{1.0, 0.0}}}}, "/system");
        FAIL();
    } catch (const config_error& e) {
        EXPECT_EQ(e.path(), "/system/input_bounds/0");
    }
}
