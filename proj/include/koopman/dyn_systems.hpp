#ifndef KOOPMAN_DYN_SYSTEMS_HPP
#define KOOPMAN_DYN_SYSTEMS_HPP

// Benchmark input-affine systems  dx/dt = f(x) + sum_i h_i(x) u_i.
//
//   toy     2 states, 1 input, input multiplicity in x2 (steady state [10u, 100u^2])
//   cstr    exothermic second-order A -> B reactor, input = heat duty
//   column  binary distillation column, constant relative volatility and
//           constant molar overflow; inputs = heavy-boiler feed fraction and reflux

#include "koopman/errors.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace koopman {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class SystemKind { toy, cstr, column };

inline std::string to_string(SystemKind kind)
{
    switch (kind) {
    case SystemKind::toy: return "toy";
    case SystemKind::cstr: return "cstr";
    case SystemKind::column: return "column";
    }
    return "unknown";
}

struct Bounds {
    double lo = 0.0;
    double hi = 1.0;
};

struct ToyParams {};

// Defaults are a plausible literature parameterisation (hours, kmol, m^3, K, kJ),
// not values taken from the case-study source; override them in the config.
struct CstrParams {
    double flow = 5.0;        // F   [m^3/h]
    double volume = 1.0;      // V   [m^3]
    double c_in = 4.0;        // cA,in [kmol/m^3]
    double k0 = 8.46e6;       // [m^3/(kmol h)]
    double e_over_r = 6013.95; // E/R [K]
    double t_in = 300.0;      // [K]
    double dh = -1.15e4;      // reaction enthalpy [kJ/kmol]
    double rho_cp = 231.0;    // [kJ/(m^3 K)]
};

// Stage 1 = reboiler, stages 2..n_trays+1 = trays bottom-to-top,
// stage n_trays+2 = total condenser. States are light-boiler mole fractions.
// Defaults are placeholder values (minutes, kmol), not the reference column.
struct ColumnParams {
    int n_trays = 8;
    int feed_tray = 3;        // tray index from the bottom, 1..n_trays
    double alpha = 4.5;
    double vapor = 0.023;     // V [kmol/min]; V - L stays below the light feed flow
    double feed = 0.02;       // F [kmol/min]
    std::vector<double> holdups = default_holdups(8);

    static std::vector<double> default_holdups(int n_trays)
    {
        std::vector<double> h(static_cast<std::size_t>(n_trays) + 2, 0.1);
        h.front() = 0.3;
        h.back() = 0.2;
        return h;
    }

    /// 1-based stage index of the feed tray (reboiler is stage 1).
    int feed_stage() const { return feed_tray + 1; }
};

struct SystemSpec {
    SystemKind kind = SystemKind::toy;
    std::variant<ToyParams, CstrParams, ColumnParams> params;
    std::vector<Bounds> input_bounds;

    Index n_x() const
    {
        switch (kind) {
        case SystemKind::toy: return 2;
        case SystemKind::cstr: return 2;
        case SystemKind::column: return std::get<ColumnParams>(params).n_trays + 2;
        }
        return 0;
    }

    Index n_u() const
    {
        switch (kind) {
        case SystemKind::toy: return 1;
        case SystemKind::cstr: return 1;
        case SystemKind::column: return 2;
        }
        return 0;
    }
};

inline void validate(const SystemSpec& spec)
{
    const bool params_match =
        (spec.kind == SystemKind::toy && std::holds_alternative<ToyParams>(spec.params)) ||
        (spec.kind == SystemKind::cstr && std::holds_alternative<CstrParams>(spec.params)) ||
        (spec.kind == SystemKind::column && std::holds_alternative<ColumnParams>(spec.params));
    if (!params_match)
        throw config_error("/params", "parameter record does not match system kind " + to_string(spec.kind));

    if (spec.kind == SystemKind::cstr) {
        const auto& p = std::get<CstrParams>(spec.params);
        if (!(p.volume > 0.0)) throw config_error("/params/volume", "must be > 0");
        if (!(p.rho_cp > 0.0)) throw config_error("/params/rho_cp", "must be > 0");
        if (!(p.k0 >= 0.0)) throw config_error("/params/k0", "must be >= 0");
    }
    if (spec.kind == SystemKind::column) {
        const auto& p = std::get<ColumnParams>(spec.params);
        if (p.n_trays < 1) throw config_error("/params/n_trays", "must be >= 1");
        if (p.feed_tray < 1 || p.feed_tray > p.n_trays)
            throw config_error("/params/feed_tray", "must lie in [1, n_trays]");
        if (!(p.alpha > 0.0)) throw config_error("/params/alpha", "must be > 0");
        if (static_cast<int>(p.holdups.size()) != p.n_trays + 2)
            throw config_error("/params/holdups", "expected n_trays + 2 entries");
        for (std::size_t j = 0; j < p.holdups.size(); ++j)
            if (!(p.holdups[j] > 0.0))
                throw config_error("/params/holdups/" + std::to_string(j), "holdup must be > 0");
    }
    if (static_cast<Index>(spec.input_bounds.size()) != spec.n_u())
        throw config_error("/input_bounds", "expected " + std::to_string(spec.n_u()) + " input channels");
    for (std::size_t i = 0; i < spec.input_bounds.size(); ++i)
        if (!(spec.input_bounds[i].lo < spec.input_bounds[i].hi))
            throw config_error("/input_bounds/" + std::to_string(i), "requires lo < hi");
}

inline SystemSpec make_toy_system(Bounds bounds = {-1.0, 1.0})
{
    SystemSpec spec{SystemKind::toy, ToyParams{}, {bounds}};
    validate(spec);
    return spec;
}

inline SystemSpec make_cstr_system(const CstrParams& params = {}, Bounds bounds = {-2000.0, 10000.0})
{
    SystemSpec spec{SystemKind::cstr, params, {bounds}};
    validate(spec);
    return spec;
}

inline SystemSpec make_column_system(const ColumnParams& params = {},
                                     std::vector<Bounds> bounds = {{0.5, 0.6}, {0.0155, 0.0175}})
{
    SystemSpec spec{SystemKind::column, params, std::move(bounds)};
    validate(spec);
    return spec;
}

/// Steady state of the toy system for a constant input.
inline VectorXd toy_steady_state(double u)
{
    VectorXd x(2);
    x << 10.0 * u, 100.0 * u * u;
    return x;
}

/// Constant-relative-volatility vapour composition in equilibrium with liquid x.
inline double column_vle(double x, double alpha) { return alpha * x / (1.0 + (alpha - 1.0) * x); }

namespace detail {

inline VectorXd toy_rhs(const VectorXd& x, const VectorXd& u)
{
    VectorXd dx(2);
    dx(0) = -0.1 * x(0) + u(0);
    dx(1) = x(0) * x(0) - x(1);
    return dx;
}

inline VectorXd cstr_rhs(const CstrParams& p, const VectorXd& x, const VectorXd& u)
{
    const double ca = x(0);
    const double temp = x(1);
    const double dilution = p.flow / p.volume;
    const double rate = p.k0 * std::exp(-p.e_over_r / temp) * ca * ca;
    VectorXd dx(2);
    dx(0) = dilution * (p.c_in - ca) - rate;
    dx(1) = dilution * (p.t_in - temp) - p.dh / p.rho_cp * rate + u(0) / (p.rho_cp * p.volume);
    return dx;
}

inline VectorXd column_rhs(const ColumnParams& p, const VectorXd& x, const VectorXd& u)
{
    const Index n = x.size();
    for (Index j = 0; j < n; ++j)
        if (!(x(j) >= 0.0 && x(j) <= 1.0))
            throw std::domain_error("column composition outside [0,1] at stage " + std::to_string(j + 1));

    const double z_feed = 1.0 - u(0); // light-boiler fraction of the feed
    const double reflux = u(1);
    const double vapor = p.vapor;
    const double distillate = vapor - reflux;
    const double bottoms = p.feed - distillate;
    const Index feed_idx = p.feed_stage() - 1; // 0-based

    VectorXd y(n);
    for (Index j = 0; j < n; ++j) y(j) = column_vle(x(j), p.alpha);

    // liquid flow leaving stage j (trays only); stripping section carries the feed
    auto liquid_out = [&](Index j) { return j <= feed_idx ? reflux + p.feed : reflux; };

    VectorXd dx(n);
    // reboiler
    dx(0) = liquid_out(1) * x(1) - vapor * y(0) - bottoms * x(0);
    // trays
    for (Index j = 1; j < n - 1; ++j) {
        const double from_above = (j + 1 == n - 1) ? reflux * x(n - 1) : liquid_out(j + 1) * x(j + 1);
        double acc = from_above + vapor * y(j - 1) - liquid_out(j) * x(j) - vapor * y(j);
        if (j == feed_idx) acc += p.feed * z_feed;
        dx(j) = acc;
    }
    // total condenser, level held by the distillate draw
    dx(n - 1) = vapor * y(n - 2) - vapor * x(n - 1);

    for (Index j = 0; j < n; ++j) dx(j) /= p.holdups[static_cast<std::size_t>(j)];
    return dx;
}

} // namespace detail

/// Right-hand side dx/dt of the system at (x, u).
inline VectorXd eval_rhs(const SystemSpec& spec, const VectorXd& x, const VectorXd& u)
{
    if (x.size() != spec.n_x())
        throw dimension_error("state has " + std::to_string(x.size()) + " entries, system expects " +
                              std::to_string(spec.n_x()));
    if (u.size() != spec.n_u())
        throw dimension_error("input has " + std::to_string(u.size()) + " entries, system expects " +
                              std::to_string(spec.n_u()));
    switch (spec.kind) {
    case SystemKind::toy: return detail::toy_rhs(x, u);
    case SystemKind::cstr: return detail::cstr_rhs(std::get<CstrParams>(spec.params), x, u);
    case SystemKind::column: return detail::column_rhs(std::get<ColumnParams>(spec.params), x, u);
    }
    throw std::logic_error("unhandled system kind");
}

/// Checks that the right-hand side is affine in u at x:
/// f(x, l*ua + (1-l)*ub) == l*f(x, ua) + (1-l)*f(x, ub) to 1e-10 relative.
inline bool input_affinity_check(const SystemSpec& spec, const VectorXd& x, const VectorXd& u_a,
                                 const VectorXd& u_b, double lambda)
{
    if (u_a.size() != spec.n_u() || u_b.size() != spec.n_u())
        throw dimension_error("input dimension mismatch in affinity check");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0,1]");

    const VectorXd mixed = eval_rhs(spec, x, lambda * u_a + (1.0 - lambda) * u_b);
    const VectorXd combined = lambda * eval_rhs(spec, x, u_a) + (1.0 - lambda) * eval_rhs(spec, x, u_b);
    const double scale = std::max(mixed.lpNorm<Eigen::Infinity>(), combined.lpNorm<Eigen::Infinity>());
    return (mixed - combined).lpNorm<Eigen::Infinity>() <= 1e-10 * scale;
}

// ---------------------------------------------------------------------------
// JSON:  { "kind": "toy"|"cstr"|"column", "params": {...}, "input_bounds": [[lo,hi],...] }

namespace detail {

template <class T>
void read_optional(const nlohmann::json& j, const char* key, T& out, const std::string& path)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(path + "/" + key, e.what());
    }
}

} // namespace detail

inline SystemSpec system_from_json(const nlohmann::json& j, const std::string& path = "")
{
    if (!j.is_object()) throw config_error(path, "system definition must be an object");
    if (!j.contains("kind") || !j["kind"].is_string()) throw config_error(path + "/kind", "missing system kind");

    SystemSpec spec;
    const auto kind = j["kind"].get<std::string>();
    const nlohmann::json params = j.value("params", nlohmann::json::object());
    const std::string ppath = path + "/params";
    if (kind == "toy") {
        spec.kind = SystemKind::toy;
        spec.params = ToyParams{};
        spec.input_bounds = {{-1.0, 1.0}};
    } else if (kind == "cstr") {
        CstrParams p;
        detail::read_optional(params, "flow", p.flow, ppath);
        detail::read_optional(params, "volume", p.volume, ppath);
        detail::read_optional(params, "c_in", p.c_in, ppath);
        detail::read_optional(params, "k0", p.k0, ppath);
        detail::read_optional(params, "e_over_r", p.e_over_r, ppath);
        detail::read_optional(params, "t_in", p.t_in, ppath);
        detail::read_optional(params, "dh", p.dh, ppath);
        detail::read_optional(params, "rho_cp", p.rho_cp, ppath);
        spec.kind = SystemKind::cstr;
        spec.params = p;
        spec.input_bounds = {{-2000.0, 10000.0}};
    } else if (kind == "column") {
        ColumnParams p;
        detail::read_optional(params, "n_trays", p.n_trays, ppath);
        detail::read_optional(params, "feed_tray", p.feed_tray, ppath);
        detail::read_optional(params, "alpha", p.alpha, ppath);
        detail::read_optional(params, "vapor", p.vapor, ppath);
        detail::read_optional(params, "feed", p.feed, ppath);
        if (p.n_trays >= 1) p.holdups = ColumnParams::default_holdups(p.n_trays);
        detail::read_optional(params, "holdups", p.holdups, ppath);
        spec.kind = SystemKind::column;
        spec.params = p;
        spec.input_bounds = {{0.5, 0.6}, {0.0155, 0.0175}};
    } else {
        throw config_error(path + "/kind", "unknown system kind '" + kind + "'");
    }

    if (j.contains("input_bounds")) {
        const auto& b = j["input_bounds"];
        if (!b.is_array()) throw config_error(path + "/input_bounds", "must be an array of [lo, hi] pairs");
        spec.input_bounds.clear();
        for (std::size_t i = 0; i < b.size(); ++i) {
            const auto& pair = b[i];
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
                throw config_error(path + "/input_bounds/" + std::to_string(i), "expected [lo, hi]");
            spec.input_bounds.push_back({pair[0].get<double>(), pair[1].get<double>()});
        }
    }
    try {
        validate(spec);
    } catch (const config_error& e) {
        throw config_error(path + e.path(), e.what());
    }
    return spec;
}

inline nlohmann::json system_to_json(const SystemSpec& spec)
{
    nlohmann::json j;
    j["kind"] = to_string(spec.kind);
    nlohmann::json params = nlohmann::json::object();
    if (spec.kind == SystemKind::cstr) {
        const auto& p = std::get<CstrParams>(spec.params);
        params = {{"flow", p.flow},   {"volume", p.volume}, {"c_in", p.c_in}, {"k0", p.k0},
                  {"e_over_r", p.e_over_r}, {"t_in", p.t_in}, {"dh", p.dh},   {"rho_cp", p.rho_cp}};
    } else if (spec.kind == SystemKind::column) {
        const auto& p = std::get<ColumnParams>(spec.params);
        params = {{"n_trays", p.n_trays}, {"feed_tray", p.feed_tray}, {"alpha", p.alpha},
                  {"vapor", p.vapor},     {"feed", p.feed},           {"holdups", p.holdups}};
    }
    j["params"] = params;
    j["input_bounds"] = nlohmann::json::array();
    for (const auto& b : spec.input_bounds) j["input_bounds"].push_back({b.lo, b.hi});
    return j;
}

} // namespace koopman

#endif // KOOPMAN_DYN_SYSTEMS_HPP
