#include "pdesrc/error.hpp"
#include "pdesrc/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

namespace {

constexpr const char* version_string = "pdesrc 1.0.0";

int report_error(const std::string& kind, const std::string& message) {
    nlohmann::json j{{"status", "error"}, {"kind", kind}, {"message", message}};
    std::cerr << j.dump() << '\n';
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inverse source estimation for diffusion, Poisson and wave fields"};
    app.require_subcommand(1);

    std::string run_config;
    bool deterministic = false;
    bool dry_run = false;
    int jobs = 1;
    auto* run = app.add_subcommand("run", "run an experiment configuration");
    run->add_option("config", run_config, "TOML configuration file")->required();
    run->add_flag("--deterministic", deterministic, "omit the timestamp header line from CSV outputs");
    run->add_option("--jobs", jobs, "number of worker threads")->check(CLI::PositiveNumber);
    run->add_flag("--dry-run", dry_run, "validate the configuration and print the plan only");

    std::string validate_config_path;
    auto* validate = app.add_subcommand("validate", "compute weight diagnostics without estimation");
    validate->add_option("config", validate_config_path, "TOML configuration file")->required();

    auto* version = app.add_subcommand("version", "print the version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("UsageError", e.what());
    }

    try {
        if (version->parsed()) {
            std::cout << version_string << '\n';
            return 0;
        }
        if (run->parsed()) {
            auto cfg = pdesrc::load_config(run_config);
            pdesrc::RunOptions opts{deterministic, jobs, dry_run};
            auto summary = pdesrc::run_experiment(cfg, opts);
            std::cout << summary.dump(2) << '\n';
            return 0;
        }
        if (validate->parsed()) {
            auto cfg = pdesrc::load_config(validate_config_path);
            std::cout << pdesrc::validate_experiment(cfg).dump(2) << '\n';
            return 0;
        }
    } catch (const pdesrc::Error& e) {
        return report_error(pdesrc::to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
        return report_error("InternalError", e.what());
    }
    return 1;
}
