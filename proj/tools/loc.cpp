// loc: run, validate and synthesize data-collection experiments.
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "loc/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kIoError = 3;

int report(const std::exception& e, int code) {
    std::cerr << "loc: " << e.what() << "\n";
    return code;
}

template <class F>
int guarded(F&& body) {
    try {
        body();
        return kOk;
    } catch (const loc::IoError& e) {
        return report(e, kIoError);
    } catch (const loc::Error& e) {
        return report(e, kConfigError);
    } catch (const std::exception& e) {
        return report(e, kConfigError);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Plan multi-round data collection and evaluate collection policies on learning-curve oracles"};
    app.set_version_flag("--version", std::string(loc::kVersion));
    app.require_subcommand(1);

    std::string run_config;
    auto* run = app.add_subcommand("run", "Run the policy sweep described by a config file");
    run->add_option("config", run_config, "Experiment config (key = value)")->required();

    std::string validate_config;
    auto* validate = app.add_subcommand("validate", "Parse and check a config file and its curve files");
    validate->add_option("config", validate_config, "Experiment config (key = value)")->required();

    std::string kind = "power", out;
    std::vector<double> theta;
    std::size_t knots = 10;
    double q_lo = 1.0, q_hi = 10000.0;
    auto* synth = app.add_subcommand("synth", "Write a curve file sampled from a power-law or logarithmic curve");
    synth->add_option("--kind", kind, "power or log")->check(CLI::IsMember({"power", "log"}));
    synth->add_option("--theta", theta, "Three curve parameters, e.g. --theta 1 0.5 0")->required()->expected(3);
    synth->add_option("--knots", knots, "Number of log-spaced knots");
    synth->add_option("--min", q_lo, "Smallest size");
    synth->add_option("--max", q_hi, "Largest size");
    synth->add_option("--out", out, "Output curve file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (*run) {
        return guarded([&] {
            const auto cfg = loc::experiment::load_config(run_config);
            const auto res = loc::experiment::run_experiment(cfg);
            std::cout << res.aggregate_csv;
            std::cout << "wrote " << (cfg.output_dir / "runs.csv").string() << ", aggregate.csv, summary.json\n";
        });
    }
    if (*validate) {
        return guarded([&] {
            const auto cfg = loc::experiment::load_config(validate_config);
            loc::experiment::validate_config(cfg);
            const auto oracle = loc::experiment::load_curve_file(cfg.curve_file);
            if (loc::simulator::oracle_dimension(oracle) != cfg.sources())
                throw loc::ConfigError("curve file dimension does not match the number of cost components");
            if (!cfg.calibration_curve.empty()) loc::experiment::load_curve_file(cfg.calibration_curve);
            const std::size_t cells = cfg.policies.size() * cfg.targets.size() * cfg.horizons.size() *
                                      cfg.costs.size() * cfg.penalties.size() * cfg.seeds.size();
            std::cout << "ok: " << cells << " runs\n";
        });
    }
    return guarded([&] {
        loc::experiment::synth_curve(kind == "power" ? loc::experiment::SynthKind::PowerLaw
                                                     : loc::experiment::SynthKind::Logarithmic,
                                     theta, knots, q_lo, q_hi, out);
    });
}
