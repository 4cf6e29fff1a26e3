#pragma once

#include "pdesrc/gossip.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace pdesrc {

struct GridSpec {
    std::vector<int> counts;
    Vec spacing; // empty means spread evenly over the region
    Vec origin;  // empty means the region's lower corner
    double epsilon = 0.0;

    UniformGrid resolve(const Box& region) const;
    bool operator==(const GridSpec&) const = default;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::string mode = "centralized"; // centralized | distributed | unknown_count
    int trials = 1;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    bool write_samples = false;

    FieldModel model;
    TemporalFilter filter;
    Box region;
    SourceSet sources;

    std::string layout = "uniform"; // uniform | random
    GridSpec grid;
    int num_sensors = 0;
    double sampling_interval = 1.0;
    double T = 1.0;
    std::vector<int> time_samples; // L+1 values to sweep; empty means T / sampling_interval + 1
    double standoff = 0.0;         // minimum sensor-to-source distance; 0 means 1e-6 diam(region)

    double r_con = 0.4;
    long rounds = 100000;
    long stride = 1000;

    std::vector<double> snr_db; // empty means noiseless

    std::string method = "closed_form";
    int M = 1;
    std::vector<int> K;
    std::vector<int> k_offset;
    int r = 1;
    double headroom = 0.8;
    bool cadzow = true;
    int cadzow_max_iter = 10;
    bool prewhiten = true;
    double validity_threshold = 0.01;
    std::optional<GridSpec> resample_grid;
    std::optional<GridSpec> dense_grid;

    bool operator==(const ExperimentConfig&) const;
};

// Parses and validates a TOML document; errors name the offending key.
ExperimentConfig parse_config(const std::string& toml_text, const std::string& origin = "config");
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_toml(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

EstimatorConfig estimator_config(const ExperimentConfig& cfg, const SensorNetwork& net);

struct Combo {
    std::optional<double> snr_db;
    int time_samples = 1;
};

std::vector<Combo> experiment_combos(const ExperimentConfig& cfg);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

struct TrialResult {
    Combo combo;
    int trial = 0;
    SensorNetwork net;
    SampleMatrix samples;
    EstimationReport report;
    std::optional<DistributedResult> distributed;
    std::vector<double> location_errors; // per true source, physical distance
    std::vector<double> tau_errors;
    std::vector<double> intensity_errors;
    std::string error; // non-empty when the trial failed
};

SensorNetwork build_network(const ExperimentConfig& cfg, const Combo& combo, int trial);
TrialResult run_trial(const ExperimentConfig& cfg, const Combo& combo, int trial);
nlohmann::json trial_to_json(const ExperimentConfig& cfg, const TrialResult& t);

struct RunOptions {
    bool deterministic = false;
    int jobs = 1;
    bool dry_run = false;
};

nlohmann::json experiment_plan(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

// Runs every combo and trial, writes per-trial JSON, aggregate.csv and gossip traces.
nlohmann::json run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

// Weight diagnostics without estimation; writes reproduction_error.csv and validate.json.
nlohmann::json validate_experiment(const ExperimentConfig& cfg);

} // namespace pdesrc
