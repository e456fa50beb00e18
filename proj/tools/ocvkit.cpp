// ocvkit: low-rate OCV characterization from cycling logs.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ocvkit/cli.hpp"

int main(int argc, char** argv) {
    using namespace ocvkit;
    using namespace ocvkit::cli;

    CLI::App app{"Pseudo-OCV extraction, empirical OCV model fitting and OCV uncertainty metrics"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string models = "nernst,combined,combined+3";
    std::string which = "all";
    std::uint64_t seed = 0;

    auto add_data_flags = [&](CLI::App* sub) {
        sub->add_option("--manifest", cfg.manifest, "Experiment manifest")->required();
        sub->add_option("--grid-k", cfg.grid_k, "Number of SOC grid points")->capture_default_str();
        sub->add_option("--epsilon", cfg.epsilon, "SOC scaling constant for model fits")->capture_default_str();
        sub->add_option("--models", models, "Comma-separated model kinds")->capture_default_str();
        sub->add_option("--out", cfg.out, "Output directory")->capture_default_str();
        sub->add_option("--nominal-ah", cfg.nominal_ah, "Nominal capacity for rest detection [Ah]")
            ->capture_default_str();
        sub->add_option("--time-column", cfg.parse.time_column)->capture_default_str();
        sub->add_option("--current-column", cfg.parse.current_column)->capture_default_str();
        sub->add_option("--voltage-column", cfg.parse.voltage_column)->capture_default_str();
        sub->add_flag("--discharge-positive", cfg.parse.discharge_positive,
                      "Source logs discharge current as positive");
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and manifest");
    synth->add_option("--scenario", cfg.scenario, "Scenario JSON file")->required();
    synth->add_option("--out", cfg.out, "Output directory")->capture_default_str();
    auto* seed_opt = synth->add_option("--seed", seed, "Override the scenario seed");

    auto* pseudo = app.add_subcommand("pseudo-ocv", "Extract pseudo-OCV tables");
    add_data_flags(pseudo);
    auto* fitc = app.add_subcommand("fit", "Fit OCV models; capacity and resistance table");
    add_data_flags(fitc);
    auto* metrics = app.add_subcommand("metrics", "Uncertainty metrics and zero-mean tests");
    add_data_flags(metrics);
    metrics->add_option("--which", which, "c2c, crate, curvefit or all")->capture_default_str();
    metrics->add_option("--alpha", cfg.alpha, "Significance level")->capture_default_str();
    auto* report = app.add_subcommand("report", "Run pseudo-ocv, fit and metrics together");
    add_data_flags(report);
    report->add_option("--alpha", cfg.alpha, "Significance level")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    return run_guarded(
        [&] {
            cfg.models = parse_models(models);
            cfg.which = parse_which(which);
            if (*seed_opt) {
                cfg.seed = seed;
            }
            if (synth->parsed()) return cmd_synth(cfg, std::cerr);
            if (pseudo->parsed()) return cmd_pseudo_ocv(cfg, std::cerr);
            if (fitc->parsed()) return cmd_fit(cfg, std::cerr);
            if (metrics->parsed()) return cmd_metrics(cfg, std::cerr);
            return cmd_report(cfg, std::cerr);
        },
        std::cerr);
}
