#include "test_util.hpp"

using namespace ktest;

namespace {

VectorXd v1(double a) { return VectorXd::Constant(1, a); }

/// n_x = n_z = 1 linear model with identity encoder/decoder.
KoopmanModel scalar_linear(double a, double b)
{
    KoopmanModel m;
    m.kind = ModelKind::linear;
    m.params.encoder = zero_mlp({1, 1});
    m.params.encoder.weights[0](0, 0) = 1.0;
    m.params.decoder = m.params.encoder;
    m.params.dynamics.a_diag = v1(a);
    m.params.dynamics.b = MatrixXd::Constant(1, 1, b);
    m.scaling = identity_scaling(1);
    validate(m);
    return m;
}

/// Wiener copy of `lin` whose one-hidden-layer decoder computes the same affine map.
KoopmanModel affine_equivalent_wiener(const KoopmanModel& lin, double shift)
{
    const Index n_z = lin.n_z();
    const Mlp& c = lin.params.decoder;
    KoopmanModel w = lin;
    w.kind = ModelKind::wiener;
    Mlp dec = zero_mlp({n_z, n_z, lin.n_x()});
    dec.weights[0].setIdentity();
    dec.biases[0].setConstant(shift); // keeps the ELU in its identity branch
    dec.weights[1] = c.weights[0];
    dec.biases[1] = c.biases[0] - c.weights[0] * VectorXd::Constant(n_z, shift);
    w.params.decoder = dec;
    validate(w);
    return w;
}

} // namespace

TEST(Encode, ZeroEncoderGivesZeroLatent)
{
    KoopmanModel m = random_model(ModelKind::wiener, 3, 1, 2, {5}, 1);
    m.params.encoder = zeros_like(m.params.encoder);
    EXPECT_EQ(encode(m, VectorXd(VectorXd::Constant(3, 0.7))), VectorXd::Zero(2));
}

TEST(Encode, DeterministicAndMatchesOracle)
{
    const KoopmanModel m = random_model(ModelKind::wiener, 2, 1, 2, {20}, 4);
    const VectorXd x = VectorXd::Constant(2, 0.5);
    EXPECT_EQ(encode(m, x), encode(m, x));
    EXPECT_LT((encode(m, x) - reference_forward(m.params.encoder, x)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(LatentStep, IdentityDynamics)
{
    KoopmanModel m = random_model(ModelKind::wiener, 2, 1, 3, {4}, 2);
    m.params.dynamics.a_diag.setOnes();
    m.params.dynamics.b.setZero();
    VectorXd z(3);
    z << 0.3, -1.0, 2.0;
    EXPECT_EQ(latent_step(m, z, v1(0.8)), z);
}

TEST(LatentStep, HandArithmetic)
{
    const KoopmanModel m = scalar_linear(0.9, 0.5);
    EXPECT_NEAR(latent_step(m, v1(2.0), v1(1.0))(0), 2.3, 1e-15);

    KoopmanModel b = m;
    b.kind = ModelKind::bilinear;
    b.params.dynamics.b_bilinear = {MatrixXd::Constant(1, 1, 0.2)};
    EXPECT_NEAR(latent_step(b, v1(2.0), v1(1.0))(0), 2.7, 1e-15);
    EXPECT_NEAR(latent_step(b, v1(2.0), v1(-1.0))(0), 0.9 * 2 - 0.4 - 0.5, 1e-15);
}

TEST(LatentStep, BilinearWithZeroTermsEqualsLinear)
{
    const KoopmanModel lin = random_model(ModelKind::linear, 3, 2, 3, {6}, 5);
    KoopmanModel bil = lin;
    bil.kind = ModelKind::bilinear;
    bil.params.dynamics.b_bilinear.assign(2, MatrixXd::Zero(3, 3));
    VectorXd z(3), u(2);
    z << 0.1, -0.4, 1.3;
    u << 0.7, -0.2;
    EXPECT_EQ(latent_step(bil, z, u), latent_step(lin, z, u));
}

TEST(LatentStep, MatchesDenseOracleWithCouplingAndBilinearTerms)
{
    const KoopmanModel m = random_model(ModelKind::bilinear, 2, 2, 5, {4}, 6, 2);
    const auto& d = m.params.dynamics;
    MatrixXd a = d.a_diag.asDiagonal();
    for (Index i = 0; i < d.n_pairs(); ++i) {
        a(2 * i, 2 * i + 1) = d.a_upper(i);
        a(2 * i + 1, 2 * i) = d.a_lower(i);
    }
    VectorXd z(5), u(2);
    z << 0.3, -0.2, 0.9, 1.1, -0.5;
    u << 0.4, -0.8;
    VectorXd expected = a * z + d.b * u;
    for (Index i = 0; i < 2; ++i) expected += u(i) * (d.b_bilinear[static_cast<std::size_t>(i)] * z);
    EXPECT_LT((latent_step(m, z, u) - expected).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(Rollout, ZeroHorizonIsReconstruction)
{
    const KoopmanModel m = random_model(ModelKind::wiener, 3, 1, 2, {5}, 3);
    VectorXd x0(3);
    x0 << 0.2, 0.5, 0.9;
    const MatrixXd r = rollout(m, x0, MatrixXd(0, 1));
    ASSERT_EQ(r.rows(), 1);
    EXPECT_EQ(r.row(0).transpose(), decode(m, encode(m, x0)));
}

TEST(Rollout, IdentityDynamicsRepeatsFirstRow)
{
    KoopmanModel m = random_model(ModelKind::wiener, 2, 1, 2, {5}, 3);
    m.params.dynamics.a_diag.setOnes();
    m.params.dynamics.b.setZero();
    const MatrixXd r = rollout(m, VectorXd::Constant(2, 0.4), MatrixXd::Random(10, 1));
    for (Index k = 1; k < r.rows(); ++k) EXPECT_EQ(r.row(k), r.row(0));
}

TEST(Rollout, MatchesStepByStepOracle)
{
    for (auto kind : {ModelKind::wiener, ModelKind::linear, ModelKind::bilinear}) {
        const KoopmanModel m = random_model(kind, 3, 2, 2, {7}, 12);
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        const MatrixXd u = MatrixXd::NullaryExpr(25, 2, [&] { return unit(rng); });
        const VectorXd x0 = VectorXd::Constant(3, 0.3);
        const MatrixXd r = rollout(m, x0, u);
        ASSERT_EQ(r.rows(), 26);

        VectorXd z = reference_forward(m.params.encoder, x0);
        for (Index k = 0; k <= 25; ++k) {
            const VectorXd x = reference_forward(m.params.decoder, z);
            EXPECT_LT((r.row(k).transpose() - x).lpNorm<Eigen::Infinity>(), 1e-12) << to_string(kind) << " k=" << k;
            if (k == 25) break;
            const auto& d = m.params.dynamics;
            VectorXd next = d.a_diag.cwiseProduct(z) + d.b * u.row(k).transpose();
            for (std::size_t i = 0; i < d.b_bilinear.size(); ++i)
                next += u(k, static_cast<Index>(i)) * (d.b_bilinear[i] * z);
            z = next;
        }
    }
}

TEST(Rollout, DivergenceReportsSample)
{
    KoopmanModel m = scalar_linear(1e200, 0.0);
    const MatrixXd u = MatrixXd::Zero(10, 1);
    try {
        rollout(m, v1(1.0), u);
        FAIL();
    } catch (const divergence_error& e) {
        EXPECT_EQ(e.sample(), 2u);
    }
    std::optional<Index> at;
    const MatrixXd partial = rollout(m, v1(1.0), u, &at);
    ASSERT_TRUE(at.has_value());
    EXPECT_EQ(*at, 2);
    EXPECT_EQ(partial.rows(), 2);
}

TEST(Decode, LinearIdentityPadded)
{
    KoopmanModel m = random_model(ModelKind::linear, 3, 1, 2, {4}, 1);
    m.params.decoder.weights[0] = MatrixXd::Identity(3, 2);
    m.params.decoder.biases[0].setZero();
    VectorXd z(2);
    z << 1, 0;
    VectorXd expected(3);
    expected << 1, 0, 0;
    EXPECT_EQ(decode(m, z), expected);
}

TEST(Decode, WienerWithZeroHiddenWeightsIsConstant)
{
    KoopmanModel m = random_model(ModelKind::wiener, 3, 1, 2, {4}, 1);
    for (std::size_t l = 0; l + 1 < m.params.decoder.n_layers(); ++l) {
        m.params.decoder.weights[l].setZero();
        m.params.decoder.biases[l].setZero();
    }
    EXPECT_EQ(decode(m, VectorXd(VectorXd::Constant(2, 5.0))), m.params.decoder.biases.back());
    EXPECT_EQ(decode(m, VectorXd(VectorXd::Constant(2, -3.0))), m.params.decoder.biases.back());
}

TEST(Decode, LinearMatchesMatVecOracle)
{
    const KoopmanModel m = random_model(ModelKind::linear, 4, 1, 3, {5}, 9);
    VectorXd z(3);
    z << 0.2, -1.5, 0.8;
    const auto& c = m.params.decoder.weights[0];
    for (Index i = 0; i < 4; ++i) {
        double acc = m.params.decoder.biases[0](i);
        for (Index j = 0; j < 3; ++j) acc += c(i, j) * z(j);
        EXPECT_NEAR(decode(m, z)(i), acc, 1e-12);
    }
}

TEST(Properties, LatentRolloutIsAffineInInitialState)
{
    for (auto kind : {ModelKind::wiener, ModelKind::linear}) {
        const KoopmanModel m = random_model(kind, 2, 1, 3, {4}, 21);
        const MatrixXd u = MatrixXd::Random(30, 1);
        VectorXd za(3), zb(3);
        za << 0.3, -0.6, 1.0;
        zb << -1.2, 0.4, 0.05;
        const double alpha = 0.35;
        const MatrixXd mix = latent_rollout(m, alpha * za + (1 - alpha) * zb, u);
        const MatrixXd lin = alpha * latent_rollout(m, za, u) + (1 - alpha) * latent_rollout(m, zb, u);
        EXPECT_LT(max_abs(mix - lin), 1e-12);
    }
}

TEST(Properties, BilinearWithZeroTermsMatchesLinearOver1000Steps)
{
    const KoopmanModel lin = random_model(ModelKind::linear, 2, 1, 2, {20}, 31);
    KoopmanModel bil = lin;
    bil.kind = ModelKind::bilinear;
    bil.params.dynamics.b_bilinear = {MatrixXd::Zero(2, 2)};
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const MatrixXd u = MatrixXd::NullaryExpr(1000, 1, [&] { return unit(rng); });
    const VectorXd x0 = VectorXd::Constant(2, 0.5);
    EXPECT_LE(max_abs(rollout(bil, x0, u) - rollout(lin, x0, u)), 1e-12);
}

TEST(Properties, WienerWithAffineEquivalentDecoderMatchesLinear)
{
    const KoopmanModel lin = random_model(ModelKind::linear, 3, 2, 2, {10}, 41);
    const KoopmanModel w = affine_equivalent_wiener(lin, 50.0);
    const MatrixXd u = MatrixXd::Random(200, 2) * 0.5;
    const VectorXd x0 = VectorXd::Constant(3, 0.25);
    EXPECT_LE(max_abs(rollout(w, x0, u) - rollout(lin, x0, u)), 1e-10);
}

TEST(Properties, StableDiagonalDecaysMonotonically)
{
    KoopmanModel m = random_model(ModelKind::linear, 2, 1, 4, {3}, 7);
    m.params.dynamics.a_diag << 0.99, -0.5, 0.1, 0.0;
    VectorXd z0(4);
    z0 << 1.0, -2.0, 3.0, 4.0;
    const MatrixXd z = latent_rollout(m, z0, MatrixXd::Zero(40, 1));
    for (Index k = 1; k < z.cols(); ++k)
        for (Index i = 0; i < 4; ++i) EXPECT_LE(std::abs(z(i, k)), std::abs(z(i, k - 1)));
}

TEST(Init, StructureFollowsKind)
{
    const KoopmanModel w = init_model({ModelKind::wiener, 2, 1, 2, {20}, {}, 0}, 1, identity_scaling(2));
    EXPECT_EQ(w.params.decoder.layer_dims(), (std::vector<Index>{2, 20, 2}));
    EXPECT_TRUE(w.params.dynamics.b_bilinear.empty());
    EXPECT_GT(w.params.dynamics.a_diag.minCoeff(), 0.0);
    EXPECT_LT(w.params.dynamics.a_diag.maxCoeff(), 1.0);

    const KoopmanModel b = init_model({ModelKind::bilinear, 2, 3, 2, {20}, {}, 0}, 1, identity_scaling(2));
    EXPECT_EQ(b.params.decoder.layer_dims(), (std::vector<Index>{2, 2}));
    ASSERT_EQ(b.params.dynamics.b_bilinear.size(), 3u);
    for (const auto& bi : b.params.dynamics.b_bilinear) EXPECT_EQ(max_abs(bi), 0.0);
    for (const auto& bias : b.params.encoder.biases) EXPECT_EQ(max_abs(bias), 0.0);

    EXPECT_THROW(init_model({ModelKind::wiener, 2, 1, 2, {}, {}, 0}, 1, identity_scaling(2)), std::invalid_argument);
}

TEST(Validate, RejectsStructuralMismatches)
{
    KoopmanModel m = random_model(ModelKind::linear, 2, 1, 2, {4}, 1);
    KoopmanModel bad = m;
    bad.params.dynamics.b_bilinear = {MatrixXd::Zero(2, 2)};
    EXPECT_THROW(validate(bad), dimension_error);
    bad = m;
    bad.kind = ModelKind::bilinear;
    EXPECT_THROW(validate(bad), dimension_error);
    bad = m;
    bad.params.decoder = init_mlp({2, 3, 2}, 1);
    EXPECT_THROW(validate(bad), dimension_error);
    bad = m;
    bad.params.dynamics.a_diag = VectorXd::Zero(3);
    EXPECT_THROW(validate(bad), dimension_error);
}

TEST(Serialize, RoundTripIsBitwise)
{
    for (auto kind : {ModelKind::wiener, ModelKind::linear, ModelKind::bilinear}) {
        KoopmanModel m = random_model(kind, 3, 2, 4, {6, 5}, 77, 1);
        m.scaling.state_scaler = MinMaxScaler{VectorXd::Constant(3, -0.1234567890123), VectorXd::Constant(3, 7.0 / 3.0)};
        m.scaling.input_scaler = MinMaxScaler{VectorXd::Constant(2, -2000.0), VectorXd::Constant(2, 1e4)};
        m.scaling.transforms = {StateTransform::log, StateTransform::none, StateTransform::log1m};
        m.provenance = {12345678901234ull, "abcdef0123456789"};
        const nlohmann::json doc = model_to_json(m);
        const KoopmanModel back = model_from_json(nlohmann::json::parse(doc.dump()));
        EXPECT_EQ(back.kind, m.kind);
        EXPECT_EQ(flatten(back.params).values, flatten(m.params).values);
        EXPECT_EQ(back.scaling.state_scaler.lo, m.scaling.state_scaler.lo);
        EXPECT_EQ(back.scaling.state_scaler.hi, m.scaling.state_scaler.hi);
        ASSERT_TRUE(back.scaling.input_scaler.has_value());
        EXPECT_EQ(back.scaling.input_scaler->hi, m.scaling.input_scaler->hi);
        EXPECT_EQ(back.scaling.transforms, m.scaling.transforms);
        EXPECT_EQ(back.provenance.seed, m.provenance.seed);
        EXPECT_EQ(back.provenance.config_hash, m.provenance.config_hash);
        EXPECT_EQ(model_to_json(back).dump(), doc.dump());
        EXPECT_EQ(doc["kind"], to_string(kind));
        EXPECT_EQ(doc["n_z"], 4);
    }
}

TEST(Serialize, MismatchedADiagIsParseErrorWithPointer)
{
    nlohmann::json doc = model_to_json(random_model(ModelKind::wiener, 2, 1, 2, {4}, 1));
    doc["dynamics"]["A_diag"] = {0.5, 0.5, 0.5};
    try {
        model_from_json(doc);
        FAIL();
    } catch (const parse_error& e) {
        EXPECT_EQ(e.path(), "/dynamics/A_diag");
    }
}

TEST(Serialize, SchemaViolationsNamePath)
{
    const nlohmann::json good = model_to_json(random_model(ModelKind::linear, 2, 1, 2, {4}, 1));
    nlohmann::json doc = good;
    doc.erase("kind");
    EXPECT_THROW(model_from_json(doc), parse_error);
    doc = good;
    doc["kind"] = "quadratic";
    EXPECT_THROW(model_from_json(doc), parse_error);
    doc = good;
    doc["encoder"]["weights"][0][0][0] = "x";
    try {
        model_from_json(doc);
        FAIL();
    } catch (const parse_error& e) {
        EXPECT_EQ(e.path().rfind("/encoder/weights/0", 0), 0u) << e.path();
    }
}
