// Command-line front end. Exit codes: 0 success, 1 configuration error,
// 2 data error, 3 solver or numerical failure.

#include <iostream>

#include <CLI11.hpp>

#include "wdro/pipeline.hpp"

namespace {

using namespace wdro;

// Flag values live here until parsing finishes; only flags the user actually
// gave are applied on top of the config file.
struct Flags {
    std::string config_file, data, output, rho_text, radius_rho_text, delta_text;
    std::size_t in_sample_len = 0, lookback = 0;
    double tail_mass = 0, confidence = 0, smoothing_t = 0, threshold = 0, tc_rate = 0, box_width = 0,
           bootstrap_level = 0;
    int kappa = 0, mc_samples = 0, bootstrap_resamples = 0;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::vector<std::string> strategies;
};

void add_run_options(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config_file, "JSON config file; flags override its values");
    sub->add_option("--data", f.data, "price CSV (date,<ticker>,...)");
    sub->add_option("--output,-o", f.output, "output directory");
    sub->add_option("--in-sample-len", f.in_sample_len, "returns used for estimation");
    sub->add_option("--tail-mass", f.tail_mass, "CVaR tail mass alpha");
    sub->add_option("--rho", f.rho_text, "worst acceptable mean daily return");
    sub->add_option("--radius-rho", f.radius_rho_text, "target used for radius selection, or 'auto'");
    sub->add_option("--delta", f.delta_text, "fixed radius for both robust models, or 'auto'");
    sub->add_option("--kappa", f.kappa, "radius order for `radius` (1, 2, or 0 for both)");
    sub->add_option("--confidence", f.confidence, "radius confidence level");
    sub->add_option("--mc-samples", f.mc_samples, "Monte-Carlo draws for the radius quantile");
    sub->add_option("--seed", f.seed, "seed for every random stream");
    sub->add_option("--smoothing-t", f.smoothing_t, "softplus temperature for radius selection");
    sub->add_option("--threshold", f.threshold, "relative drift that triggers a rebalance");
    sub->add_option("--tc-rate", f.tc_rate, "linear transaction cost rate");
    sub->add_flag("--tc,!--no-tc", "charge transaction costs (backtest)");
    sub->add_flag("--report-only-tc", "record costs without deducting them");
    sub->add_flag("--static-weights", "hold the in-sample solution instead of re-estimating");
    sub->add_option("--lookback", f.lookback, "re-estimation window");
    sub->add_option("--strategies", f.strategies, "subset of NMC BMC KMC RMC1 RMC2")->delimiter(',');
    sub->add_flag("--long-only,!--allow-short", "forbid short positions");
    sub->add_option("--box-width", f.box_width, "BMC box half-width times N");
    sub->add_option("--bootstrap-resamples", f.bootstrap_resamples, "KMC bootstrap resamples");
    sub->add_option("--bootstrap-level", f.bootstrap_level, "KMC bootstrap quantile level");
    sub->add_option("--threads", f.threads, "worker threads (0: all cores); results do not depend on it");
}

std::optional<double> optional_number(const std::string& text, const char* flag) {
    if (text == "auto") return std::nullopt;
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(std::string(flag) + " expects a number or 'auto', got '" + text + "'");
    }
}

RunConfig build_config(const CLI::App* sub, const Flags& f) {
    RunConfig c = f.config_file.empty() ? RunConfig{} : load_config_file(f.config_file);
    auto given = [&](const char* name) { return sub->count(name) > 0; };
    if (given("--data")) c.data = f.data;
    if (given("--output")) c.output = f.output;
    if (given("--in-sample-len")) c.in_sample_len = f.in_sample_len;
    if (given("--tail-mass")) c.tail_mass = f.tail_mass;
    if (given("--rho")) {
        const auto v = optional_number(f.rho_text, "--rho");
        if (!v) throw ConfigError("--rho needs a number");
        c.rho = *v;
    }
    if (given("--radius-rho")) c.radius_rho = optional_number(f.radius_rho_text, "--radius-rho");
    if (given("--delta")) c.delta = optional_number(f.delta_text, "--delta");
    if (given("--kappa")) c.kappa = f.kappa;
    if (given("--confidence")) c.confidence = f.confidence;
    if (given("--mc-samples")) c.mc_samples = f.mc_samples;
    if (given("--seed")) c.seed = f.seed;
    if (given("--smoothing-t")) c.smoothing_t = f.smoothing_t;
    if (given("--threshold")) c.threshold = f.threshold;
    if (given("--tc-rate")) c.tc_rate = f.tc_rate;
    if (given("--tc") || given("--no-tc")) c.charge_tc = sub->get_option("--tc")->as<bool>();
    if (given("--report-only-tc")) c.report_only_tc = true;
    if (given("--static-weights")) c.static_weights = true;
    if (given("--lookback")) c.lookback = f.lookback;
    if (given("--strategies")) {
        c.strategies.clear();
        for (const auto& s : f.strategies) c.strategies.push_back(parse_strategy(s));
    }
    if (given("--long-only") || given("--allow-short")) c.long_only = sub->get_option("--long-only")->as<bool>();
    if (given("--box-width")) c.box_width = f.box_width;
    if (given("--bootstrap-resamples")) c.bootstrap_resamples = f.bootstrap_resamples;
    if (given("--bootstrap-level")) c.bootstrap_level = f.bootstrap_level;
    if (given("--threads")) c.threads = f.threads;
    c.validate();
    return c;
}

int report_error(const char* kind, const std::exception& e, int code) {
    std::cerr << "wdro: " << kind << ": " << e.what() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wasserstein-robust mean-CVaR portfolios: radius selection, solving and backtesting"};
    app.require_subcommand(1);
    Flags f;
    struct Command {
        const char* name;
        const char* help;
        OutputSet (*run)(const RunConfig&);
    };
    const Command commands[] = {
        {"ingest", "parse prices and write the return matrix", cmd_ingest},
        {"radius", "select the ambiguity radius on the in-sample window", cmd_radius},
        {"solve", "solve each strategy on the in-sample window", cmd_solve},
        {"backtest", "solve and backtest out of sample", cmd_backtest},
        {"compare", "backtest with and without costs; write both metric tables", cmd_compare},
    };
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        add_run_options(sub, f);
        subs.emplace_back(sub, &c);
    }
    SynthConfig sc;
    std::string synth_out = "data/synthetic_prices.csv";
    auto* synth = app.add_subcommand("synth", "write a synthetic price file");
    synth->add_option("--assets", sc.assets, "number of assets");
    synth->add_option("--days", sc.days, "number of price rows");
    synth->add_option("--seed", sc.seed, "generator seed");
    synth->add_option("--start", sc.start, "first date (YYYY-MM-DD)");
    synth->add_option("--output,-o", synth_out, "destination file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) {
            std::ofstream out(synth_out, std::ios::binary);
            if (!out) throw ConfigError("cannot write '" + synth_out + "'");
            out << prices_csv(synthetic_prices(sc));
            std::cout << synth_out << '\n';
            return 0;
        }
        for (const auto& [sub, cmd] : subs) {
            if (!sub->parsed()) continue;
            const RunConfig cfg = build_config(sub, f);
            const auto files = cmd->run(cfg).write(cfg.output);
            for (const auto& p : files) std::cout << p << '\n';
            return 0;
        }
    } catch (const ConfigError& e) {
        return report_error("config error", e, 1);
    } catch (const ArgumentError& e) {
        return report_error("config error", e, 1);
    } catch (const DataError& e) {
        return report_error("data error", e, 2);
    } catch (const NumericalError& e) {
        return report_error("solver failure", e, 3);
    } catch (const std::exception& e) {
        return report_error("solver failure", e, 3);
    }
    return 1;
}
