#ifndef KOOPMAN_TRAINING_HPP
#define KOOPMAN_TRAINING_HPP

// Loss terms and the training loop.
//
// For a window with snapshots x_0..x_p and inputs u_0..u_{p-1}:
//   L1  reconstruction        x_k     vs  dec(enc(x_k)),              k = 0..p
//   L2  single-step           x_{k+1} vs  dec(step(enc(x_k), u_k)),   k = 0..p-1
//   L3  multi-step            x_{k+1} vs  dec(z_{k+1}),  z_0 = enc(x_0)
// Each term is normalised by the squared magnitude of the ground-truth snapshots
// over the same index range (the 1/p and 1/(p-1) prefactors apply to numerator and
// normaliser alike and cancel), so a zero predictor scores 1.

#include "koopman/errors.hpp"
#include "koopman/models.hpp"
#include "koopman/nn.hpp"
#include "koopman/simulate.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace koopman {

struct TrainConfig {
    ModelKind model_kind = ModelKind::wiener;
    Index n_z = 2;
    std::vector<Index> encoder_hidden{20};
    std::vector<Index> decoder_hidden; // empty => mirror of encoder_hidden (Wiener only)
    Index coupled_pairs = 0;

    double w1 = 0.1;  // reconstruction
    double w2 = 1.0;  // single-step prediction
    double w3 = 1.0;  // multi-step prediction
    double wr = 1e-9; // l1 on all parameters
    double lr = 0.001;
    int p = 50;
    int batch_size = 32;
    int epochs = 2000;
    double val_fraction = 0.2;
    std::uint64_t seed = 1;
};

inline void validate(const TrainConfig& c, const std::string& path = "")
{
    auto fail = [&](const std::string& field, const std::string& msg) { throw config_error(path + "/" + field, msg); };
    if (!(c.w1 >= 0.0)) fail("w1", "must be >= 0");
    if (!(c.w2 >= 0.0)) fail("w2", "must be >= 0");
    if (!(c.w3 >= 0.0)) fail("w3", "must be >= 0");
    if (!(c.wr >= 0.0)) fail("wr", "must be >= 0");
    if (!(c.lr > 0.0)) fail("lr", "must be > 0");
    if (c.p < 2) fail("p", "must be >= 2");
    if (c.batch_size < 1) fail("batch_size", "must be >= 1");
    if (c.epochs < 0) fail("epochs", "must be >= 0");
    if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) fail("val_fraction", "must lie in (0, 1)");
    if (c.n_z < 1) fail("n_z", "must be >= 1");
    if (c.coupled_pairs < 0 || 2 * c.coupled_pairs > c.n_z) fail("coupled_pairs", "must lie in [0, n_z/2]");
    for (std::size_t i = 0; i < c.encoder_hidden.size(); ++i)
        if (c.encoder_hidden[i] < 1) fail("encoder_hidden/" + std::to_string(i), "must be >= 1");
    for (std::size_t i = 0; i < c.decoder_hidden.size(); ++i)
        if (c.decoder_hidden[i] < 1) fail("decoder_hidden/" + std::to_string(i), "must be >= 1");
    if (c.model_kind == ModelKind::wiener && c.decoder_hidden.empty() && c.encoder_hidden.empty())
        fail("decoder_hidden", "Wiener models need at least one decoder hidden layer");
}

inline nlohmann::json train_config_to_json(const TrainConfig& c)
{
    return {{"model_kind", to_string(c.model_kind)},
            {"n_z", c.n_z},
            {"encoder_hidden", c.encoder_hidden},
            {"decoder_hidden", c.decoder_hidden},
            {"coupled_pairs", c.coupled_pairs},
            {"w1", c.w1},
            {"w2", c.w2},
            {"w3", c.w3},
            {"wr", c.wr},
            {"lr", c.lr},
            {"p", c.p},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"val_fraction", c.val_fraction},
            {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path = "")
{
    if (!j.is_object()) throw config_error(path, "training configuration must be an object");
    TrainConfig c;
    auto read = [&](const char* key, auto& out) {
        if (!j.contains(key)) return;
        try {
            out = j.at(key).get<std::decay_t<decltype(out)>>();
        } catch (const nlohmann::json::exception& e) {
            throw config_error(path + "/" + key, e.what());
        }
    };
    if (j.contains("model_kind")) {
        try {
            c.model_kind = model_kind_from_string(j["model_kind"].get<std::string>());
        } catch (const std::exception& e) {
            throw config_error(path + "/model_kind", e.what());
        }
    }
    read("n_z", c.n_z);
    read("encoder_hidden", c.encoder_hidden);
    read("decoder_hidden", c.decoder_hidden);
    read("coupled_pairs", c.coupled_pairs);
    read("w1", c.w1);
    read("w2", c.w2);
    read("w3", c.w3);
    read("wr", c.wr);
    read("lr", c.lr);
    read("p", c.p);
    read("batch_size", c.batch_size);
    read("epochs", c.epochs);
    read("val_fraction", c.val_fraction);
    read("seed", c.seed);
    validate(c, path);
    return c;
}

inline ModelShape model_shape(const TrainConfig& c, Index n_x, Index n_u)
{
    return {c.model_kind, n_x, n_u, c.n_z, c.encoder_hidden, c.decoder_hidden, c.coupled_pairs};
}

struct LossTerms {
    double reconstruction = 0.0; // L1
    double single_step = 0.0;    // L2
    double multi_step = 0.0;     // L3
    double regularization = 0.0;
    double total = 0.0;
};

struct LossWeights {
    double w1 = 0.1;
    double w2 = 1.0;
    double w3 = 1.0;
    double wr = 1e-9;

    static LossWeights from(const TrainConfig& c) { return {c.w1, c.w2, c.w3, c.wr}; }
};

/// Batch loss (mean over windows of w1*L1 + w2*L2 + w3*L3, plus wr * sum|theta|).
/// When `grad` is non-null it receives the full gradient (l1 subgradient included),
/// laid out like the model parameters. All windows must share the same horizon.
inline LossTerms batch_loss(const KoopmanModel& model, std::span<const Window* const> batch, const LossWeights& lw,
                            KoopmanParams* grad = nullptr)
{
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const auto& params = model.params;
    const Index n_w = static_cast<Index>(batch.size());
    const Index p = batch.front()->horizon();
    const Index n_x = model.n_x();
    const Index n_u = model.n_u();
    const Index n_z = model.n_z();
    if (p < 1) throw std::invalid_argument("window horizon must be >= 1");
    for (const Window* win : batch) {
        if (win->horizon() != p || win->states.cols() != p + 1)
            throw dimension_error("all windows in a batch need p+1 snapshots of equal p");
        if (win->states.rows() != n_x || win->inputs.rows() != n_u) throw dimension_error("window dimensions differ from model");
    }

    const Index n_snap = n_w * (p + 1);
    const Index n_pred = n_w * p;

    MatrixXd x(n_x, n_snap);
    MatrixXd u(n_u, n_pred);
    MatrixXd x_next(n_x, n_pred);
    for (Index w = 0; w < n_w; ++w) {
        x.middleCols(w * (p + 1), p + 1) = batch[static_cast<std::size_t>(w)]->states;
        u.middleCols(w * p, p) = batch[static_cast<std::size_t>(w)]->inputs;
        x_next.middleCols(w * p, p) = batch[static_cast<std::size_t>(w)]->states.rightCols(p);
    }

    MlpCache enc_cache;
    const MatrixXd z = forward(params.encoder, x, grad ? &enc_cache : nullptr);

    // single-step sources: every snapshot except the last of each window
    MatrixXd z_src(n_z, n_pred);
    for (Index w = 0; w < n_w; ++w) z_src.middleCols(w * p, p) = z.middleCols(w * (p + 1), p);
    const MatrixXd z_one = params.dynamics.step(z_src, u);

    // multi-step rollout, one column per window
    std::vector<MatrixXd> u_at(static_cast<std::size_t>(p), MatrixXd(n_u, n_w));
    for (Index k = 0; k < p; ++k)
        for (Index w = 0; w < n_w; ++w) u_at[static_cast<std::size_t>(k)].col(w) = u.col(w * p + k);
    std::vector<MatrixXd> z_roll(static_cast<std::size_t>(p + 1), MatrixXd(n_z, n_w));
    for (Index w = 0; w < n_w; ++w) z_roll[0].col(w) = z.col(w * (p + 1));
    for (Index k = 0; k < p; ++k)
        z_roll[static_cast<std::size_t>(k + 1)] =
            params.dynamics.step(z_roll[static_cast<std::size_t>(k)], u_at[static_cast<std::size_t>(k)]);

    // one decoder pass over [reconstruction | single-step | multi-step]
    MatrixXd dec_in(n_z, n_snap + 2 * n_pred);
    dec_in.leftCols(n_snap) = z;
    dec_in.middleCols(n_snap, n_pred) = z_one;
    for (Index k = 0; k < p; ++k)
        for (Index w = 0; w < n_w; ++w)
            dec_in.col(n_snap + n_pred + w * p + k) = z_roll[static_cast<std::size_t>(k + 1)].col(w);

    MlpCache dec_cache;
    const MatrixXd y = forward(params.decoder, dec_in, grad ? &dec_cache : nullptr);

    MatrixXd err(n_x, y.cols());
    err.leftCols(n_snap) = y.leftCols(n_snap) - x;
    err.middleCols(n_snap, n_pred) = y.middleCols(n_snap, n_pred) - x_next;
    err.rightCols(n_pred) = y.rightCols(n_pred) - x_next;

    LossTerms terms;
    const Eigen::RowVectorXd col_err = err.colwise().squaredNorm();
    const Eigen::RowVectorXd col_x = x.colwise().squaredNorm();
    const Eigen::RowVectorXd col_xn = x_next.colwise().squaredNorm();
    std::vector<double> den_all(static_cast<std::size_t>(n_w)), den_next(static_cast<std::size_t>(n_w));
    for (Index w = 0; w < n_w; ++w) {
        const double d1 = col_x.segment(w * (p + 1), p + 1).sum();
        const double d2 = col_xn.segment(w * p, p).sum();
        if (!(d1 > 0.0) || !(d2 > 0.0)) throw training_error("window with zero data energy cannot be normalised");
        den_all[static_cast<std::size_t>(w)] = d1;
        den_next[static_cast<std::size_t>(w)] = d2;
        terms.reconstruction += col_err.segment(w * (p + 1), p + 1).sum() / d1;
        terms.single_step += col_err.segment(n_snap + w * p, p).sum() / d2;
        terms.multi_step += col_err.segment(n_snap + n_pred + w * p, p).sum() / d2;
    }
    const double inv_w = 1.0 / static_cast<double>(n_w);
    terms.reconstruction *= inv_w;
    terms.single_step *= inv_w;
    terms.multi_step *= inv_w;

    const ParamVector flat = flatten(params);
    auto [penalty, subgrad] = l1_penalty_and_subgradient(flat.values, lw.wr);
    terms.regularization = penalty;
    terms.total = lw.w1 * terms.reconstruction + lw.w2 * terms.single_step + lw.w3 * terms.multi_step + penalty;
    if (!std::isfinite(terms.total)) throw training_error("non-finite loss");

    if (!grad) return terms;

    KoopmanParams g = params.zeros_like();
    MatrixXd d_y(n_x, y.cols());
    for (Index w = 0; w < n_w; ++w) {
        const std::size_t ws = static_cast<std::size_t>(w);
        d_y.middleCols(w * (p + 1), p + 1) = err.middleCols(w * (p + 1), p + 1) * (2.0 * lw.w1 * inv_w / den_all[ws]);
        d_y.middleCols(n_snap + w * p, p) = err.middleCols(n_snap + w * p, p) * (2.0 * lw.w2 * inv_w / den_next[ws]);
        d_y.middleCols(n_snap + n_pred + w * p, p) =
            err.middleCols(n_snap + n_pred + w * p, p) * (2.0 * lw.w3 * inv_w / den_next[ws]);
    }
    const MatrixXd d_dec_in = backward(params.decoder, dec_cache, d_y, g.decoder);

    MatrixXd d_z = d_dec_in.leftCols(n_snap);

    const MatrixXd d_src = params.dynamics.step_backward(d_dec_in.middleCols(n_snap, n_pred), z_src, u, g.dynamics);
    for (Index w = 0; w < n_w; ++w) d_z.middleCols(w * (p + 1), p) += d_src.middleCols(w * p, p);

    auto roll_cotangent = [&](Index k) { // cotangent from decoding z_roll[k], k >= 1
        MatrixXd c(n_z, n_w);
        for (Index w = 0; w < n_w; ++w) c.col(w) = d_dec_in.col(n_snap + n_pred + w * p + (k - 1));
        return c;
    };
    MatrixXd carry = roll_cotangent(p);
    for (Index k = p - 1; k >= 0; --k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        MatrixXd d_prev = params.dynamics.step_backward(carry, z_roll[ks], u_at[ks], g.dynamics);
        if (k >= 1)
            carry = d_prev + roll_cotangent(k);
        else
            for (Index w = 0; w < n_w; ++w) d_z.col(w * (p + 1)) += d_prev.col(w);
    }

    backward(params.encoder, enc_cache, d_z, g.encoder);

    ParamVector g_flat = flatten(g);
    g_flat.values += subgrad;
    unflatten(g_flat.values, g);
    *grad = std::move(g);
    return terms;
}

inline LossTerms batch_loss(const KoopmanModel& model, const std::vector<Window>& windows, const LossWeights& w,
                            KoopmanParams* grad = nullptr)
{
    std::vector<const Window*> ptrs;
    for (const auto& win : windows) ptrs.push_back(&win);
    return batch_loss(model, std::span<const Window* const>(ptrs), w, grad);
}

inline double loss_reconstruction(const KoopmanModel& model, const Window& window)
{
    const Window* ptr = &window;
    return batch_loss(model, std::span<const Window* const>(&ptr, 1), {1.0, 0.0, 0.0, 0.0}).reconstruction;
}

inline double loss_single_step(const KoopmanModel& model, const Window& window)
{
    const Window* ptr = &window;
    return batch_loss(model, std::span<const Window* const>(&ptr, 1), {0.0, 1.0, 0.0, 0.0}).single_step;
}

inline double loss_multi_step(const KoopmanModel& model, const Window& window)
{
    const Window* ptr = &window;
    return batch_loss(model, std::span<const Window* const>(&ptr, 1), {0.0, 0.0, 1.0, 0.0}).multi_step;
}

struct TotalLoss {
    LossTerms terms;
    ParamVector gradient;
};

/// Loss and flat gradient of a batch under the weights of `config`.
inline TotalLoss total_loss(const KoopmanModel& model, const std::vector<Window>& batch, const TrainConfig& config)
{
    KoopmanParams g;
    TotalLoss out;
    out.terms = batch_loss(model, batch, LossWeights::from(config), &g);
    out.gradient = flatten(g);
    return out;
}

/// Loss over an arbitrary number of windows, evaluated in chunks; no gradient.
inline LossTerms dataset_loss(const KoopmanModel& model, std::span<const Window* const> windows, const LossWeights& w,
                              std::size_t chunk = 256)
{
    LossTerms acc;
    if (windows.empty()) return acc;
    for (std::size_t start = 0; start < windows.size(); start += chunk) {
        const std::size_t n = std::min(chunk, windows.size() - start);
        const LossTerms t = batch_loss(model, windows.subspan(start, n), {w.w1, w.w2, w.w3, 0.0});
        const double f = static_cast<double>(n);
        acc.reconstruction += f * t.reconstruction;
        acc.single_step += f * t.single_step;
        acc.multi_step += f * t.multi_step;
    }
    const double inv = 1.0 / static_cast<double>(windows.size());
    acc.reconstruction *= inv;
    acc.single_step *= inv;
    acc.multi_step *= inv;
    acc.regularization = w.wr * flatten(model.params).values.lpNorm<1>();
    acc.total = w.w1 * acc.reconstruction + w.w2 * acc.single_step + w.w3 * acc.multi_step + acc.regularization;
    return acc;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
    int epoch = 0; // 0 = initial parameters
    LossTerms train;
    LossTerms val;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
    std::size_t n_train_windows = 0;
    std::size_t n_val_windows = 0;
};

struct TrainResult {
    KoopmanModel model;
    TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id)};
    return std::mt19937_64(seq);
}

} // namespace detail

/// Seeded random split of windows into (train, validation) index lists.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_windows(std::size_t n, double val_fraction,
                                                                                    std::uint64_t seed)
{
    if (n < 2) throw std::invalid_argument("need at least two windows to split into training and validation");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = detail::stream(seed, 2);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    return {train, val};
}

/// Trains one model with Adam and restores the parameters of the epoch with the
/// lowest validation loss. Windows must already be in model coordinates.
inline TrainResult train(const WindowSet& data, const DataScaling& scaling, const TrainConfig& config,
                         const EpochCallback& on_epoch = {})
{
    validate(config);
    if (data.windows.size() < 2) throw std::invalid_argument("training needs at least two windows");
    const auto start_time = std::chrono::steady_clock::now();
    const Index n_x = data.windows.front().states.rows();
    const Index n_u = data.windows.front().inputs.rows();

    auto [train_idx, val_idx] = split_windows(data.windows.size(), config.val_fraction, config.seed);
    std::vector<const Window*> train_set, val_set;
    for (auto i : train_idx) train_set.push_back(&data.windows[i]);
    for (auto i : val_idx) val_set.push_back(&data.windows[i]);

    auto init_rng = detail::stream(config.seed, 1);
    KoopmanModel model = init_model(model_shape(config, n_x, n_u), init_rng(), scaling);
    model.provenance.seed = config.seed;
    const LossWeights weights = LossWeights::from(config);

    TrainReport report;
    report.seed = config.seed;
    report.n_train_windows = train_set.size();
    report.n_val_windows = val_set.size();

    ParamVector theta = flatten(model.params);
    AdamState adam = AdamState::for_size(theta.values.size(), config.lr);
    VectorXd best_theta = theta.values;

    EpochRecord initial;
    initial.train = dataset_loss(model, train_set, weights);
    initial.val = dataset_loss(model, val_set, weights);
    report.epochs.push_back(initial);
    report.best_val_loss = initial.val.total;
    if (on_epoch) on_epoch(initial);

    auto shuffle_rng = detail::stream(config.seed, 3);
    std::vector<const Window*> order = train_set;
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    KoopmanParams grad;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += bs, ++batch_no) {
            const std::size_t n = std::min(bs, order.size() - start);
            LossTerms t;
            try {
                t = batch_loss(model, std::span<const Window* const>(order).subspan(start, n), weights, &grad);
                const VectorXd g = flatten(grad).values;
                adam_step(adam, theta, g);
            } catch (const training_error& e) {
                throw training_error(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_no) + ")");
            }
            unflatten(theta.values, model.params);
            const double f = static_cast<double>(n) / static_cast<double>(order.size());
            rec.train.reconstruction += f * t.reconstruction;
            rec.train.single_step += f * t.single_step;
            rec.train.multi_step += f * t.multi_step;
            rec.train.regularization += f * t.regularization;
            rec.train.total += f * t.total;
        }
        rec.val = dataset_loss(model, val_set, weights);
        if (!std::isfinite(rec.val.total))
            throw training_error("non-finite validation loss (epoch " + std::to_string(epoch) + ")");
        if (rec.val.total < report.best_val_loss) {
            report.best_val_loss = rec.val.total;
            report.best_epoch = epoch;
            best_theta = theta.values;
        }
        report.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }

    unflatten(best_theta, model.params);
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    return {std::move(model), std::move(report)};
}

struct ScaledWindows {
    WindowSet windows;
    DataScaling scaling;
};

/// Windows of `dataset` scaled with min/max taken over the snapshots of the
/// training windows selected by (config.seed, config.val_fraction); the same
/// split is drawn again inside train().
inline ScaledWindows training_windows(const SnapshotDataset& dataset, const TrainConfig& config)
{
    validate(config);
    const Index n = dataset.n_samples();
    if (n < config.p + 1) throw std::invalid_argument("dataset has fewer than p+1 samples");
    const auto count = static_cast<std::size_t>((n - 1) / config.p);
    const auto train_idx = split_windows(count, config.val_fraction, config.seed).first;

    std::vector<Index> rows;
    for (auto m : train_idx)
        for (Index k = 0; k <= config.p; ++k) rows.push_back(static_cast<Index>(m) * config.p + k);
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    const auto rows_of = [&](const MatrixXd& m) {
        MatrixXd out(static_cast<Index>(rows.size()), m.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
        return out;
    };

    ScaledWindows out;
    out.scaling.transforms = dataset.transforms;
    out.scaling.state_scaler = fit_scaler(rows_of(apply_transforms(dataset.states, dataset.transforms)));
    if (dataset.input_scaler) out.scaling.input_scaler = fit_scaler(rows_of(dataset.inputs));
    const MatrixXd u = out.scaling.input_scaler ? out.scaling.input_scaler->apply(dataset.inputs) : dataset.inputs;
    out.windows = window_dataset(out.scaling.states_to_model(dataset.states), u, config.p);
    return out;
}

/// Trains on a raw dataset; scaling is fit on the training split only.
inline TrainResult train(const SnapshotDataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {})
{
    const ScaledWindows sw = training_windows(dataset, config);
    return train(sw.windows, sw.scaling, config, on_epoch);
}

struct MultiSeedResult {
    std::vector<std::optional<TrainResult>> runs; // one slot per seed, empty if the run failed
    std::vector<std::string> errors;              // per seed, empty string on success
    std::size_t best = 0;

    const TrainResult& best_run() const { return *runs.at(best); }
};

namespace detail {

template <class RunOne>
MultiSeedResult run_seeds(const TrainConfig& config, const std::vector<std::uint64_t>& seeds, unsigned max_threads,
                          RunOne&& run_one)
{
    if (seeds.empty()) throw std::invalid_argument("multi_seed_train needs at least one seed");
    MultiSeedResult out;
    out.runs.resize(seeds.size());
    out.errors.resize(seeds.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
            TrainConfig cfg = config;
            cfg.seed = seeds[i];
            try {
                out.runs[i] = run_one(cfg);
            } catch (const std::exception& e) {
                out.errors[i] = e.what();
            }
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(max_threads, static_cast<unsigned>(seeds.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    bool any = false;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!out.runs[i]) continue;
        if (!any || out.runs[i]->report.best_val_loss < best) {
            best = out.runs[i]->report.best_val_loss;
            out.best = i;
        }
        any = true;
    }
    if (!any) {
        std::string first;
        for (const auto& e : out.errors)
            if (!e.empty()) {
                first = e;
                break;
            }
        throw training_error("all training runs failed; first error: " + first);
    }
    return out;
}

} // namespace detail

/// Runs `train` for every seed (up to `max_threads` concurrently) and selects the
/// run with the smallest best validation loss. Fails only if every run fails.
inline MultiSeedResult multi_seed_train(const WindowSet& data, const DataScaling& scaling, const TrainConfig& config,
                                        const std::vector<std::uint64_t>& seeds, unsigned max_threads = 1)
{
    return detail::run_seeds(config, seeds, max_threads,
                             [&](const TrainConfig& cfg) { return train(data, scaling, cfg); });
}

/// As above on a raw dataset; each seed gets its own split and training-split scaling.
inline MultiSeedResult multi_seed_train(const SnapshotDataset& dataset, const TrainConfig& config,
                                        const std::vector<std::uint64_t>& seeds, unsigned max_threads = 1)
{
    return detail::run_seeds(config, seeds, max_threads,
                             [&](const TrainConfig& cfg) { return train(dataset, cfg); });
}

} // namespace koopman

#endif // KOOPMAN_TRAINING_HPP
