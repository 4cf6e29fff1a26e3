#pragma once

#include "pdesrc/esprit.hpp"
#include "pdesrc/weights.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>

namespace pdesrc {

struct EstimatorConfig {
    WeightMethod method = WeightMethod::ClosedForm;
    std::vector<int> K;        // per-dimension maximum local index
    std::vector<int> k_offset; // empty means zeros
    int r = 1;
    TemporalFilter filter;
    double headroom = 0.8;
    std::uint64_t seed = 0;
    bool cadzow = true; // applied only when samples carry noise
    int cadzow_max_iter = 10;
    bool prewhiten = true;
    std::vector<int> levels; // empty means default_levels
    std::optional<DenseGrid> dense_grid;
    double condition_ceiling = 1e8;
    std::optional<UniformGrid> resample_grid;
    double validity_threshold = 0.01;
    bool compute_residual = true;
};

struct Diagnostics {
    std::optional<double> weight_condition;
    bool weights_rank_deficient = false;
    double eigvec_condition = 0.0;
    double vandermonde_condition = 0.0;
    int esprit_attempts = 0;
    std::vector<double> singular_values;
    std::vector<double> reproduction_errors;
    std::vector<std::string> notes;
};

struct EstimationReport {
    SourceSet sources;
    std::vector<bool> valid;
    double residual = 0.0;
    Diagnostics diagnostics;
};

MeasurementTensor generalized_measurements(const WeightSet& weights, const SampleMatrix& samples);

// Physical sources from a measurement tensor; `raw` optionally receives the ESPRIT output.
SourceSet extract_sources(const MeasurementTensor& Q, int M, const DomainScaling& scaling, std::uint64_t seed,
                          HarmonicEstimate* raw = nullptr, std::vector<int> levels = {});

std::vector<bool> validity_flags(const SourceSet& sources, const Box& region, double threshold);

DomainScaling scaling_for(const SensorNetwork& net, double headroom);

// Weights for the configured method together with the network/samples they apply to.
struct PreparedWeights {
    WeightSet weights;
    SensorNetwork net;
    SampleMatrix samples;
};

PreparedWeights prepare_weights(const FieldModel& model, const SensorNetwork& net, const SampleMatrix& samples,
                                const EstimatorConfig& cfg, const DomainScaling& scaling);

// Cadzow denoising of a measurement tensor, whitened by sigma * ||w(k)|| when requested.
MeasurementTensor denoise_measurements(const MeasurementTensor& Q, const WeightSet& weights, double sigma, int M,
                                       const EstimatorConfig& cfg);

EstimationReport estimate_centralized(const FieldModel& model, const SensorNetwork& net, const SampleMatrix& samples,
                                      int M, const EstimatorConfig& cfg);

struct UnknownCountConfig {
    int guess = 2;
    int window_step = 0; // 0 means max(1, L/10)
    int max_adjustments = 50;
    double stop_threshold = 0.01; // relative to the initial peak magnitude
};

EstimationReport estimate_unknown_count(const FieldModel& model, const SensorNetwork& net, const SampleMatrix& samples,
                                        const EstimatorConfig& cfg, const UnknownCountConfig& ucfg = {});

SampleMatrix subtract_source(const SampleMatrix& samples, const FieldModel& model, const Source& source,
                             const SensorNetwork& net, const TemporalFilter& filter);

double residual_norm(const FieldModel& model, const SensorNetwork& net, const SampleMatrix& samples,
                     const SourceSet& sources, const TemporalFilter& filter);

// Minimum-cost matching of estimates to truth in scaled location space.
// Entry m of the result is the estimate index matched to truth[m], or -1.
std::vector<int> match_sources(const SourceSet& truth, const SourceSet& estimate, const DomainScaling& scaling);

struct SourceErrors {
    double location = 0.0;    // max Euclidean distance, physical units
    double scaled_location = 0.0; // max per-coordinate error in scaled radians
    double intensity_rel = 0.0;
    double tau = 0.0;         // max absolute activation-time error, seconds
    double max_scaled = 0.0;  // max of scaled location, relative intensity and tau / T
};

SourceErrors source_errors(const SourceSet& truth, const SourceSet& estimate, const DomainScaling& scaling,
                           bool with_time = true);

nlohmann::json report_to_json(const EstimationReport& report);
nlohmann::json sources_to_json(const SourceSet& sources);

} // namespace pdesrc
