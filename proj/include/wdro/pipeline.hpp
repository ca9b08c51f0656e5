#pragma once

// End-to-end runs: load prices, pick radii, solve every strategy on the
// in-sample window, backtest out of sample, and write reports. Everything
// written is a deterministic function of the config and the data bytes.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wdro/backtest.hpp"
#include "wdro/baselines.hpp"
#include "wdro/error.hpp"
#include "wdro/market_data.hpp"
#include "wdro/metrics.hpp"
#include "wdro/nonrobust.hpp"
#include "wdro/radius.hpp"
#include "wdro/robust.hpp"

namespace wdro {

using json = nlohmann::json;

enum class Strategy { NMC, BMC, KMC, RMC1, RMC2 };

inline const std::vector<Strategy>& all_strategies() {
    static const std::vector<Strategy> all{Strategy::NMC, Strategy::BMC, Strategy::KMC, Strategy::RMC1,
                                           Strategy::RMC2};
    return all;
}

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::NMC: return "NMC";
        case Strategy::BMC: return "BMC";
        case Strategy::KMC: return "KMC";
        case Strategy::RMC1: return "RMC1";
        case Strategy::RMC2: return "RMC2";
    }
    return "?";
}

/// Accepts the canonical names case-insensitively, with or without a dash.
inline Strategy parse_strategy(std::string name) {
    std::string key;
    for (char c : name)
        if (c != '-' && c != '_') key += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (Strategy s : all_strategies())
        if (key == strategy_name(s)) return s;
    throw ConfigError("unknown strategy '" + name + "' (expected NMC, BMC, KMC, RMC1 or RMC2)");
}

struct RunConfig {
    std::string data = "data/synthetic_prices.csv";
    std::size_t in_sample_len = 504;
    double tail_mass = 0.05;
    double rho = -0.05;                 // worst acceptable mean daily return, shared by all models
    std::optional<double> radius_rho;   // target for radius selection; unset: equal-weight in-sample mean
    std::optional<double> delta;        // fixed radius for both robust models instead of the selected one
    int kappa = 0;                      // order reported by `radius`: 1, 2, or 0 for both
    double confidence = 0.95;
    int mc_samples = 10000;
    std::uint64_t seed = 0;
    double smoothing_t = 1e-4;
    double threshold = 0.05;
    double tc_rate = 0.002;
    bool charge_tc = true;
    bool report_only_tc = false;
    bool static_weights = false;
    std::size_t lookback = 504;
    std::vector<Strategy> strategies = all_strategies();
    bool long_only = true;
    double box_width = 0.3;
    int bootstrap_resamples = 500;
    double bootstrap_level = 0.95;
    // not part of the hash: they do not change any result
    unsigned threads = 0;
    std::string output = "out";

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError(m); };
        if (!(tail_mass > 0.0 && tail_mass < 1.0)) fail("tail_mass must lie in (0, 1)");
        if (in_sample_len < 10) fail("in_sample_len must be at least 10");
        if (!std::isfinite(rho)) fail("rho must be finite");
        if (radius_rho && !std::isfinite(*radius_rho)) fail("radius_rho must be finite");
        if (delta && !(*delta >= 0.0 && std::isfinite(*delta))) fail("delta must be finite and nonnegative");
        if (kappa < 0 || kappa > 2) fail("kappa must be 0, 1 or 2");
        if (!(confidence > 0.0 && confidence < 1.0)) fail("confidence must lie in (0, 1)");
        if (mc_samples < 100) fail("mc_samples must be at least 100");
        if (!(smoothing_t > 0.0 && std::isfinite(smoothing_t))) fail("smoothing_t must be positive");
        if (!(threshold > 0.0)) fail("threshold must be positive");
        if (!(tc_rate >= 0.0 && std::isfinite(tc_rate))) fail("tc_rate must be finite and nonnegative");
        if (lookback < 10 || lookback > in_sample_len) fail("lookback must lie in [10, in_sample_len]");
        if (strategies.empty()) fail("at least one strategy is required");
        for (std::size_t i = 0; i < strategies.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (strategies[i] == strategies[j]) fail(std::string("duplicate strategy ") + strategy_name(strategies[i]));
        if (!(box_width >= 0.0 && box_width <= 1.0)) fail("box_width must lie in [0, 1]");
        if (bootstrap_resamples < 10) fail("bootstrap_resamples must be at least 10");
        if (!(bootstrap_level > 0.0 && bootstrap_level < 1.0)) fail("bootstrap_level must lie in (0, 1)");
        if (output.empty()) fail("output directory must be set");
    }
};

/// Serialized config. With `for_hash`, fields that cannot affect results
/// (thread count, output location, data path) are left out.
inline json config_to_json(const RunConfig& c, bool for_hash = false) {
    json j;
    j["in_sample_len"] = c.in_sample_len;
    j["tail_mass"] = c.tail_mass;
    j["rho"] = c.rho;
    j["radius_rho"] = c.radius_rho ? json(*c.radius_rho) : json(nullptr);
    j["delta"] = c.delta ? json(*c.delta) : json(nullptr);
    j["kappa"] = c.kappa;
    j["confidence"] = c.confidence;
    j["mc_samples"] = c.mc_samples;
    j["seed"] = c.seed;
    j["smoothing_t"] = c.smoothing_t;
    j["threshold"] = c.threshold;
    j["tc_rate"] = c.tc_rate;
    j["charge_tc"] = c.charge_tc;
    j["report_only_tc"] = c.report_only_tc;
    j["static_weights"] = c.static_weights;
    j["lookback"] = c.lookback;
    std::vector<std::string> names;
    for (Strategy s : c.strategies) names.emplace_back(strategy_name(s));
    j["strategies"] = names;
    j["long_only"] = c.long_only;
    j["box_width"] = c.box_width;
    j["bootstrap_resamples"] = c.bootstrap_resamples;
    j["bootstrap_level"] = c.bootstrap_level;
    if (!for_hash) {
        j["data"] = c.data;
        j["threads"] = c.threads;
        j["output"] = c.output;
    }
    return j;
}

/// Overlay the keys present in `j` onto `c`. Unknown keys are an error.
inline void apply_config_json(RunConfig& c, const json& j) {
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "data") c.data = v.get<std::string>();
            else if (key == "in_sample_len") c.in_sample_len = v.get<std::size_t>();
            else if (key == "tail_mass") c.tail_mass = v.get<double>();
            else if (key == "rho") c.rho = v.get<double>();
            else if (key == "radius_rho") c.radius_rho = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
            else if (key == "delta") c.delta = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
            else if (key == "kappa") c.kappa = v.get<int>();
            else if (key == "confidence") c.confidence = v.get<double>();
            else if (key == "mc_samples") c.mc_samples = v.get<int>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "smoothing_t") c.smoothing_t = v.get<double>();
            else if (key == "threshold") c.threshold = v.get<double>();
            else if (key == "tc_rate") c.tc_rate = v.get<double>();
            else if (key == "charge_tc") c.charge_tc = v.get<bool>();
            else if (key == "report_only_tc") c.report_only_tc = v.get<bool>();
            else if (key == "static_weights") c.static_weights = v.get<bool>();
            else if (key == "lookback") c.lookback = v.get<std::size_t>();
            else if (key == "strategies") {
                c.strategies.clear();
                for (const auto& s : v) c.strategies.push_back(parse_strategy(s.get<std::string>()));
            } else if (key == "long_only") c.long_only = v.get<bool>();
            else if (key == "box_width") c.box_width = v.get<double>();
            else if (key == "bootstrap_resamples") c.bootstrap_resamples = v.get<int>();
            else if (key == "bootstrap_level") c.bootstrap_level = v.get<double>();
            else if (key == "threads") c.threads = v.get<unsigned>();
            else if (key == "output") c.output = v.get<std::string>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    RunConfig c;
    apply_config_json(c, j);
    return c;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open price file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Hash of the result-relevant config fields and the raw data bytes.
inline std::string config_hash(const RunConfig& c, std::string_view data_bytes) {
    return hex64(fnv1a(data_bytes, fnv1a(config_to_json(c, true).dump())));
}

// ---- output helpers -------------------------------------------------------

inline std::string fmt_num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

/// RFC 4180 field: quoted only when it holds a comma, quote or line break.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    return out + "\r\n";
}

/// Collects files in memory and writes them in one pass, so a failed run
/// leaves no partial report set.
class OutputSet {
public:
    void add(std::string name, std::string content) { files_[std::move(name)] = std::move(content); }
    const std::map<std::string, std::string>& files() const { return files_; }

    std::vector<std::string> write(const std::string& dir) const {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
        std::vector<std::string> written;
        for (const auto& [name, content] : files_) {
            const auto path = (std::filesystem::path(dir) / name).string();
            std::ofstream out(path, std::ios::binary);
            if (!out) throw ConfigError("cannot write '" + path + "'");
            out << content;
            written.push_back(path);
        }
        return written;
    }

private:
    std::map<std::string, std::string> files_;
};

inline std::string json_text(const json& j) { return j.dump(2) + "\n"; }

// ---- data ------------------------------------------------------------------

struct LoadedData {
    std::string bytes;
    PriceSeries prices;
    ReturnsMatrix returns;
    ReturnsMatrix in_sample, out_sample;
};

inline LoadedData load_data(const RunConfig& cfg) {
    LoadedData d;
    d.bytes = read_file(cfg.data);
    std::istringstream in(d.bytes);
    d.prices = parse_prices(in);
    d.returns = compute_returns(d.prices);
    if (cfg.in_sample_len + 2 > d.returns.samples())
        throw InsufficientDataError("in_sample_len " + std::to_string(cfg.in_sample_len) + " leaves fewer than 2 of " +
                                    std::to_string(d.returns.samples()) + " returns for the backtest");
    std::tie(d.in_sample, d.out_sample) = split(d.returns, cfg.in_sample_len);
    return d;
}

/// Zero out dust weights and renormalize. Interior-point solutions carry
/// entries around 1e-9 for assets the model drops; kept, they would trip the
/// relative drift test on every move.
inline Vector clean_weights(const Vector& w, bool long_only, double dust = 1e-6) {
    Vector out = w;
    for (Eigen::Index i = 0; i < out.size(); ++i)
        if (std::abs(out(i)) < dust || (long_only && out(i) < 0.0)) out(i) = 0.0;
    const double s = out.sum();
    if (!(s > 0.0)) throw NumericalError("portfolio weights vanish after cleaning");
    return out / s;
}

// ---- radius and model parameters -------------------------------------------

struct ModelParameters {
    double rho = 0.0;
    double radius_rho = 0.0;
    std::optional<RadiusResult> radius1, radius2;  // absent when delta is fixed
    double delta1 = 0.0, delta2 = 0.0;
    BoxSpec box;
    MomentAmbiguity moments;  // gammas from the in-sample bootstrap
};

inline double default_radius_rho(const ReturnsMatrix& r) { return r.mean().mean(); }

inline RadiusConfig radius_config(const RunConfig& cfg, int kappa) {
    RadiusConfig rc;
    rc.kappa = kappa;
    rc.confidence = cfg.confidence;
    rc.mc_samples = cfg.mc_samples;
    rc.seed = cfg.seed;
    rc.threads = cfg.threads;
    return rc;
}

inline RadiusResult select_radius_for(const RunConfig& cfg, const ReturnsMatrix& in, double radius_rho, int kappa) {
    const auto res = select_radius(in, radius_rho, TailSpec(cfg.tail_mass), radius_config(cfg, kappa),
                                   SmoothingParam(cfg.smoothing_t));
    if (!res.smooth_converged) throw NumericalError("smoothed problem did not converge during radius selection");
    return res;
}

inline bool uses(const RunConfig& cfg, Strategy s) {
    return std::find(cfg.strategies.begin(), cfg.strategies.end(), s) != cfg.strategies.end();
}

/// Everything fixed from the in-sample window: radii, box, moment gammas.
inline ModelParameters estimate_parameters(const RunConfig& cfg, const ReturnsMatrix& in) {
    ModelParameters p;
    p.rho = cfg.rho;
    p.radius_rho = cfg.radius_rho ? *cfg.radius_rho : default_radius_rho(in);
    const bool need1 = uses(cfg, Strategy::RMC1), need2 = uses(cfg, Strategy::RMC2);
    if (cfg.delta) {
        p.delta1 = p.delta2 = *cfg.delta;
    } else {
        std::future<RadiusResult> f1, f2;
        if (need1) f1 = std::async(std::launch::async, select_radius_for, cfg, std::cref(in), p.radius_rho, 1);
        if (need2) f2 = std::async(std::launch::async, select_radius_for, cfg, std::cref(in), p.radius_rho, 2);
        if (need1) p.radius1 = f1.get(), p.delta1 = p.radius1->delta_star;
        if (need2) p.radius2 = f2.get(), p.delta2 = p.radius2->delta_star;
    }
    p.box = BoxSpec::uniform(in.samples(), cfg.box_width);
    if (uses(cfg, Strategy::KMC)) {
        BootstrapOptions bo;
        bo.resamples = cfg.bootstrap_resamples;
        bo.level = cfg.bootstrap_level;
        bo.seed = cfg.seed;
        bo.threads = cfg.threads;
        p.moments = bootstrap_gammas(in, bo);
    }
    return p;
}

/// Solve one model on a window with the fixed parameters.
inline SolveReport solve_strategy(Strategy s, const ReturnsMatrix& r, const ModelParameters& p, const RunConfig& cfg) {
    const TailSpec tail(cfg.tail_mass);
    switch (s) {
        case Strategy::NMC: {
            NmcOptions o;
            o.long_only = cfg.long_only;
            return solve_nmc(r, p.rho, tail, o);
        }
        case Strategy::BMC: return solve_bmc(r, BoxSpec::uniform(r.samples(), cfg.box_width), p.rho, tail);
        case Strategy::KMC: {
            KmcOptions o;
            o.long_only = cfg.long_only;
            const auto amb = MomentAmbiguity::from_returns(r, p.moments.gamma1, p.moments.gamma2);
            return solve_kmc(r, amb, p.rho, tail, o);
        }
        case Strategy::RMC1:
        case Strategy::RMC2: {
            RobustConfig rc;
            rc.kappa = s == Strategy::RMC1 ? 1 : 2;
            rc.delta = s == Strategy::RMC1 ? p.delta1 : p.delta2;
            rc.tail = tail;
            rc.rho = p.rho;
            rc.long_only = cfg.long_only;
            return solve_robust(r, rc);
        }
    }
    throw ArgumentError("unknown strategy");
}

inline SolveReport require_optimal(SolveReport rep, Strategy s) {
    if (!rep.optimal())
        throw NumericalError(std::string(strategy_name(s)) + ": solver finished with status " + to_string(rep.status) +
                             (rep.status == SolveStatus::infeasible ? " (lower rho or the radius)" : ""));
    return rep;
}

// ---- JSON views ------------------------------------------------------------

inline json radius_json(const RadiusResult& r) {
    json j;
    j["kappa"] = r.kappa;
    j["delta_star"] = r.delta_star;
    j["eta_quantile"] = r.eta_quantile;
    j["lambda1_hat"] = r.lambda1_hat;
    j["lambda2_hat"] = r.lambda2_hat;
    j["multiplier_residual"] = r.multiplier_residual;
    j["samples"] = r.samples;
    j["seed"] = r.seed;
    if (r.kappa == 2) {
        j["c_constant"] = r.c_constant;
        j["c_negative"] = r.c_negative;
    }
    return j;
}

inline json report_json(const SolveReport& rep, const std::vector<std::string>& tickers) {
    json j;
    j["model"] = rep.model;
    j["status"] = to_string(rep.status);
    j["objective"] = rep.objective;
    j["kkt_residual"] = rep.kkt_residual;
    j["tolerance"] = rep.tolerance;
    j["iterations"] = rep.iterations;
    j["cvar_threshold"] = rep.portfolio.threshold;
    json w = json::object();
    for (std::size_t i = 0; i < tickers.size(); ++i) w[tickers[i]] = rep.portfolio.weights(static_cast<Eigen::Index>(i));
    j["weights"] = w;
    j["duals"] = rep.duals;
    j["parameters"] = rep.parameters;
    return j;
}

inline json parameters_json(const ModelParameters& p) {
    json j;
    j["rho"] = p.rho;
    j["radius_rho"] = p.radius_rho;
    j["delta_rmc1"] = p.delta1;
    j["delta_rmc2"] = p.delta2;
    j["radius_rmc1"] = p.radius1 ? radius_json(*p.radius1) : json(nullptr);
    j["radius_rmc2"] = p.radius2 ? radius_json(*p.radius2) : json(nullptr);
    j["kmc_gamma1"] = p.moments.gamma1;
    j["kmc_gamma2"] = p.moments.gamma2;
    j["kmc_singular_covariance"] = p.moments.singular_covariance;
    return j;
}

inline json header_json(const RunConfig& cfg, const std::string& hash, const std::string& command) {
    json j;
    j["command"] = command;
    j["config_hash"] = hash;
    j["config"] = config_to_json(cfg, true);
    return j;
}

// ---- commands --------------------------------------------------------------

struct Context {
    RunConfig cfg;
    LoadedData data;
    std::string hash;
};

inline Context make_context(const RunConfig& cfg) {
    cfg.validate();
    Context ctx{cfg, load_data(cfg), {}};
    ctx.hash = config_hash(cfg, ctx.data.bytes);
    return ctx;
}

/// Parse the prices, write the return matrix and a summary.
inline OutputSet cmd_ingest(const RunConfig& cfg) {
    const Context ctx = make_context(cfg);
    const auto& d = ctx.data;
    OutputSet out;
    std::string csv;
    std::vector<std::string> head{"config_hash", "date"};
    head.insert(head.end(), d.returns.tickers().begin(), d.returns.tickers().end());
    csv += csv_row(head);
    for (std::size_t i = 0; i < d.returns.samples(); ++i) {
        std::vector<std::string> row{ctx.hash, d.returns.dates()[i]};
        for (std::size_t j = 0; j < d.returns.assets(); ++j)
            row.push_back(fmt_num(d.returns.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        csv += csv_row(row);
    }
    out.add("returns.csv", csv);
    json j = header_json(cfg, ctx.hash, "ingest");
    j["tickers"] = d.returns.tickers();
    j["price_rows"] = d.prices.length();
    j["dropped_rows"] = d.prices.dropped_rows;
    j["return_rows"] = d.returns.samples();
    j["in_sample"] = {{"first", d.in_sample.dates().front()}, {"last", d.in_sample.dates().back()},
                      {"rows", d.in_sample.samples()}};
    j["out_of_sample"] = {{"first", d.out_sample.dates().front()}, {"last", d.out_sample.dates().back()},
                          {"rows", d.out_sample.samples()}};
    out.add("ingest.json", json_text(j));
    return out;
}

/// Radius selection on the in-sample window for the orders named by `kappa`.
inline OutputSet cmd_radius(const RunConfig& cfg) {
    const Context ctx = make_context(cfg);
    const double rr = cfg.radius_rho ? *cfg.radius_rho : default_radius_rho(ctx.data.in_sample);
    std::vector<int> orders = cfg.kappa == 0 ? std::vector<int>{1, 2} : std::vector<int>{cfg.kappa};
    std::vector<std::future<RadiusResult>> jobs;
    for (int k : orders)
        jobs.push_back(std::async(std::launch::async, select_radius_for, cfg, std::cref(ctx.data.in_sample), rr, k));
    json j = header_json(cfg, ctx.hash, "radius");
    j["radius_rho"] = rr;
    json list = json::array();
    for (auto& f : jobs) list.push_back(radius_json(f.get()));
    j["radii"] = list;
    OutputSet out;
    out.add("radius.json", json_text(j));
    return out;
}

struct SolvedStrategies {
    ModelParameters params;
    std::vector<SolveReport> reports;  // in cfg.strategies order
};

inline SolvedStrategies solve_all(const Context& ctx) {
    SolvedStrategies s;
    s.params = estimate_parameters(ctx.cfg, ctx.data.in_sample);
    std::vector<std::future<SolveReport>> jobs;
    for (Strategy st : ctx.cfg.strategies)
        jobs.push_back(std::async(std::launch::async, [&, st] {
            return require_optimal(solve_strategy(st, ctx.data.in_sample, s.params, ctx.cfg), st);
        }));
    for (auto& f : jobs) s.reports.push_back(f.get());
    return s;
}

/// Solve every requested strategy on the in-sample window.
inline OutputSet cmd_solve(const RunConfig& cfg) {
    const Context ctx = make_context(cfg);
    const auto solved = solve_all(ctx);
    OutputSet out;
    for (std::size_t k = 0; k < cfg.strategies.size(); ++k) {
        json j = header_json(cfg, ctx.hash, "solve");
        j["report"] = report_json(solved.reports[k], ctx.data.returns.tickers());
        j["parameters"] = parameters_json(solved.params);
        out.add(std::string("solve_") + strategy_name(cfg.strategies[k]) + ".json", json_text(j));
    }
    return out;
}

struct StrategyRun {
    Strategy strategy;
    SolveReport initial;
    BacktestResult result;
    MetricBundle metrics;
    std::size_t failed_reestimates = 0;
};

/// Target estimator for one strategy: the in-sample solution at t = 0, then
/// a re-solve on the trailing `lookback` rows at each rebalance. Results are
/// cached by t so repeated backtests reuse them. A re-solve that does not
/// reach optimality keeps the previous target.
class TargetEstimator {
public:
    TargetEstimator(Strategy s, const Context& ctx, const ModelParameters& p, Vector initial)
        : s_(s), ctx_(ctx), p_(p), last_(std::move(initial)) {
        cache_[0] = last_;
    }

    Vector operator()(std::size_t t) {
        if (auto it = cache_.find(t); it != cache_.end()) return last_ = it->second;
        const auto& full = ctx_.data.returns;
        const std::size_t end = ctx_.cfg.in_sample_len + t;
        const auto window = full.slice(end - ctx_.cfg.lookback, ctx_.cfg.lookback);
        const auto rep = solve_strategy(s_, window, p_, ctx_.cfg);
        if (rep.optimal()) {
            last_ = clean_weights(rep.portfolio.weights, ctx_.cfg.long_only);
        } else {
            ++failures_;
        }
        return cache_[t] = last_;
    }

    std::size_t failures() const { return failures_; }

private:
    Strategy s_;
    const Context& ctx_;
    const ModelParameters& p_;
    Vector last_;
    std::map<std::size_t, Vector> cache_;
    std::size_t failures_ = 0;
};

inline BacktestOptions backtest_options(const RunConfig& cfg, bool charge) {
    BacktestOptions o;
    o.threshold = cfg.threshold;
    o.tc_rate = cfg.tc_rate;
    o.charge_tc = charge;
    o.cost_mode = cfg.report_only_tc ? CostMode::report_only : CostMode::compound;
    return o;
}

/// Backtest each strategy once per entry of `charge_modes`, in parallel
/// across strategies. Output order follows cfg.strategies.
inline std::vector<std::vector<StrategyRun>> backtest_all(const Context& ctx, const SolvedStrategies& solved,
                                                          const std::vector<bool>& charge_modes) {
    const auto& cfg = ctx.cfg;
    const TailSpec tail(cfg.tail_mass);
    std::vector<std::future<std::vector<StrategyRun>>> jobs;
    for (std::size_t k = 0; k < cfg.strategies.size(); ++k) {
        jobs.push_back(std::async(std::launch::async, [&, k] {
            const Strategy st = cfg.strategies[k];
            const Vector w0 = clean_weights(solved.reports[k].portfolio.weights, cfg.long_only);
            TargetEstimator est(st, ctx, solved.params, w0);
            std::vector<StrategyRun> runs;
            for (bool charge : charge_modes) {
                StrategyRun run{st, solved.reports[k], {}, {}, 0};
                const auto opt = backtest_options(cfg, charge);
                if (cfg.static_weights) {
                    run.result = run_backtest(StrategySchedule::constant(w0), ctx.data.out_sample, opt);
                } else {
                    run.result = run_backtest([&](std::size_t t) { return est(t); }, ctx.data.out_sample, opt);
                    run.failed_reestimates = est.failures();
                }
                run.metrics = compute_metrics(run.result.daily_returns, tail);
                runs.push_back(std::move(run));
            }
            return runs;
        }));
    }
    std::vector<std::vector<StrategyRun>> by_mode(charge_modes.size());
    for (auto& f : jobs) {
        auto runs = f.get();
        for (std::size_t m = 0; m < runs.size(); ++m) by_mode[m].push_back(std::move(runs[m]));
    }
    return by_mode;
}

inline std::string metrics_csv(const std::vector<StrategyRun>& runs, const std::string& hash, bool charged) {
    std::string csv = csv_row({"config_hash", "strategy", "costs", "mean", "std", "cvar", "sharpe", "mean_over_cvar",
                               "max_drawdown", "final_wealth", "rebalances", "total_tc", "failed_reestimates"});
    for (const auto& r : runs) {
        const auto& m = r.metrics;
        csv += csv_row({hash, strategy_name(r.strategy), charged ? "tc" : "no_tc", fmt_num(m.mean_daily),
                        fmt_num(m.std_daily), fmt_num(m.cvar_tail), fmt_num(m.sharpe_annualized),
                        fmt_num(m.mean_over_cvar), fmt_num(m.max_drawdown), fmt_num(r.result.wealth.back()),
                        std::to_string(r.result.rebalance_rows.size()), fmt_num(r.result.total_tc),
                        std::to_string(r.failed_reestimates)});
    }
    return csv;
}

/// Per-strategy path: one row per date with wealth, return, rebalance flag
/// and the realized weights after any trade.
inline std::string wealth_csv(const StrategyRun& run, const ReturnsMatrix& out_sample, const std::string& start_date,
                              const std::string& hash) {
    std::vector<std::string> head{"config_hash", "date", "wealth", "daily_return", "rebalanced", "tc"};
    for (const auto& t : out_sample.tickers()) head.push_back("w_" + t);
    std::string csv = csv_row(head);
    const auto& res = run.result;
    std::size_t next = 0;
    for (std::size_t t = 0; t < res.wealth.size(); ++t) {
        bool reb = false;
        double cost = 0.0;
        if (next < res.rebalance_rows.size() && res.rebalance_rows[next] == t) {
            reb = true;
            cost = res.rebalance_costs[next++];
        }
        std::vector<std::string> row{hash, t == 0 ? start_date : out_sample.dates()[t - 1], fmt_num(res.wealth[t]),
                                     t == 0 ? "" : fmt_num(res.daily_returns[t - 1]), reb ? "1" : "0", fmt_num(cost)};
        for (Eigen::Index j = 0; j < res.weights_path.cols(); ++j)
            row.push_back(fmt_num(res.weights_path(static_cast<Eigen::Index>(t), j)));
        csv += csv_row(row);
    }
    return csv;
}

/// Strategies side by side: cumulative wealth and trailing one-year Sharpe.
inline void figure_series(OutputSet& out, const std::vector<StrategyRun>& runs, const ReturnsMatrix& out_sample,
                          const std::string& start_date, const std::string& hash, const std::string& suffix) {
    std::vector<std::string> head{"config_hash", "date"};
    for (const auto& r : runs) head.emplace_back(strategy_name(r.strategy));
    std::string wealth = csv_row(head), rolling = csv_row(head);
    const std::size_t T = runs.front().result.wealth.size();
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<std::string> row{hash, t == 0 ? start_date : out_sample.dates()[t - 1]};
        for (const auto& r : runs) row.push_back(fmt_num(r.result.wealth[t]));
        wealth += csv_row(row);
    }
    const std::size_t R = runs.front().metrics.rolling_sharpe.size();
    for (std::size_t k = 0; k < R; ++k) {
        // window k ends on return row k + 251
        std::vector<std::string> row{hash, out_sample.dates()[k + kRollingWindow - 1]};
        for (const auto& r : runs) row.push_back(fmt_num(r.metrics.rolling_sharpe[k]));
        rolling += csv_row(row);
    }
    out.add("cumulative_wealth" + suffix + ".csv", wealth);
    out.add("rolling_sharpe" + suffix + ".csv", rolling);
}

inline void add_backtest_files(OutputSet& out, const Context& ctx, const std::vector<StrategyRun>& runs, bool charged,
                               const std::string& suffix) {
    const std::string start = ctx.data.in_sample.dates().back();
    for (const auto& r : runs)
        out.add(std::string("wealth_") + strategy_name(r.strategy) + suffix + ".csv",
                wealth_csv(r, ctx.data.out_sample, start, ctx.hash));
    out.add("metrics" + suffix + ".csv", metrics_csv(runs, ctx.hash, charged));
    figure_series(out, runs, ctx.data.out_sample, start, ctx.hash, suffix);
}

inline json run_summary(const Context& ctx, const SolvedStrategies& solved, const std::string& command) {
    json j = header_json(ctx.cfg, ctx.hash, command);
    j["parameters"] = parameters_json(solved.params);
    json reps = json::object();
    for (std::size_t k = 0; k < solved.reports.size(); ++k)
        reps[strategy_name(ctx.cfg.strategies[k])] = report_json(solved.reports[k], ctx.data.returns.tickers());
    j["in_sample_reports"] = reps;
    j["out_of_sample"] = {{"first", ctx.data.out_sample.dates().front()},
                          {"last", ctx.data.out_sample.dates().back()},
                          {"rows", ctx.data.out_sample.samples()}};
    return j;
}

/// Solve, then backtest with the configured cost setting.
inline OutputSet cmd_backtest(const RunConfig& cfg) {
    const Context ctx = make_context(cfg);
    const auto solved = solve_all(ctx);
    const auto runs = backtest_all(ctx, solved, {cfg.charge_tc});
    OutputSet out;
    add_backtest_files(out, ctx, runs[0], cfg.charge_tc, "");
    out.add("summary.json", json_text(run_summary(ctx, solved, "backtest")));
    return out;
}

/// Solve, then backtest with and without costs: two metric tables and two
/// sets of figure series.
inline OutputSet cmd_compare(const RunConfig& cfg) {
    const Context ctx = make_context(cfg);
    const auto solved = solve_all(ctx);
    const auto runs = backtest_all(ctx, solved, {false, true});
    OutputSet out;
    add_backtest_files(out, ctx, runs[0], false, "_no_tc");
    add_backtest_files(out, ctx, runs[1], true, "_tc");
    out.add("summary.json", json_text(run_summary(ctx, solved, "compare")));
    return out;
}

// ---- synthetic data ----------------------------------------------------------

struct SynthConfig {
    int assets = 8;
    int days = 1000;  // price rows
    std::uint64_t seed = 7;
    std::string start = "2015-01-02";
};

/// Weekdays from `start` (ISO date), `count` of them.
inline std::vector<std::string> business_days(const std::string& start, int count) {
    using namespace std::chrono;
    int y = 0;
    unsigned m = 0, d = 0;
    if (std::sscanf(start.c_str(), "%d-%u-%u", &y, &m, &d) != 3) throw ArgumentError("start must be YYYY-MM-DD");
    year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok()) throw ArgumentError("invalid start date");
    sys_days day_ = ymd;
    std::vector<std::string> out;
    while (static_cast<int>(out.size()) < count) {
        const weekday wd{day_};
        if (wd != Saturday && wd != Sunday) {
            const year_month_day c{day_};
            char buf[16];
            std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(c.year()), static_cast<unsigned>(c.month()),
                          static_cast<unsigned>(c.day()));
            out.emplace_back(buf);
        }
        day_ += days{1};
    }
    return out;
}

/// One-factor lognormal prices: asset i has beta in [0.6, 1.4], idiosyncratic
/// volatility in [0.8%, 1.6%] and a small drift, on a market factor with
/// 1% daily volatility.
inline PriceSeries synthetic_prices(const SynthConfig& sc) {
    if (sc.assets < 1 || sc.days < 3) throw ArgumentError("need at least one asset and three days");
    std::mt19937_64 rng(sc.seed);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = sc.assets;
    Vector beta(n), idio(n), drift(n);
    for (int i = 0; i < n; ++i) {
        beta(i) = 0.6 + 0.8 * u(rng);
        idio(i) = 0.008 + 0.008 * u(rng);
        drift(i) = 1e-4 + 5e-4 * u(rng);
    }
    PriceSeries p;
    p.dates = business_days(sc.start, sc.days);
    for (int i = 0; i < n; ++i) p.tickers.push_back("S" + std::to_string(i + 1));
    p.prices.resize(sc.days, n);
    p.prices.row(0).setConstant(100.0);
    for (int t = 1; t < sc.days; ++t) {
        const double f = 0.01 * z(rng);
        for (int i = 0; i < n; ++i) {
            const double s2 = beta(i) * beta(i) * 1e-4 + idio(i) * idio(i);
            const double lr = drift(i) - 0.5 * s2 + beta(i) * f + idio(i) * z(rng);
            p.prices(t, i) = p.prices(t - 1, i) * std::exp(lr);
        }
    }
    return p;
}

inline std::string prices_csv(const PriceSeries& p) {
    std::vector<std::string> head{"date"};
    head.insert(head.end(), p.tickers.begin(), p.tickers.end());
    std::string csv = csv_row(head);
    for (std::size_t t = 0; t < p.length(); ++t) {
        std::vector<std::string> row{p.dates[t]};
        for (std::size_t i = 0; i < p.assets(); ++i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6f", p.prices(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)));
            row.emplace_back(buf);
        }
        csv += csv_row(row);
    }
    return csv;
}

}  // namespace wdro
