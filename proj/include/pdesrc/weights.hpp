#pragma once

#include "pdesrc/forward.hpp"

#include <json.hpp>

namespace pdesrc {

enum class WeightMethod { ClosedForm, LeastSquares, InterpolateResample };

const char* to_string(WeightMethod m);
WeightMethod weight_method_from_string(const std::string& s);

// Weights w_{n,l}(k, r) for every k of a measurement box at one temporal index r.
struct WeightSet {
    WeightMethod method = WeightMethod::ClosedForm;
    std::vector<int> shape;    // K_i + 1
    std::vector<int> k_offset;
    int r = 1;
    double T = 1.0;
    std::vector<Eigen::MatrixXcd> values; // one N x (L+1) block per flattened k
    std::vector<bool> excluded;
    std::optional<double> condition_number;
    bool rank_deficient = false;

    size_t num_k() const { return values.size(); }
    Eigen::Index num_sensors() const { return values.empty() ? 0 : values.front().rows(); }
    Eigen::Index num_times() const { return values.empty() ? 0 : values.front().cols(); }
};

struct DenseGrid {
    std::vector<Vec> points;
    Vec times;
};

// Regular lattice of `counts` points per axis, spacing `spacing`, shifted by `eps`.
DenseGrid lattice_grid(const Vec& origin, const std::vector<int>& counts, const Vec& spacing, double eps,
                       const Vec& times);

// Default probe grid: lattice over the region with about 2 N (L+1) points,
// J = L+1 snapshots over (0, T] (one snapshot for static fields).
DenseGrid default_dense_grid(const FieldModel& model, const SensorNetwork& net);

// Angular frequencies omega_i = alpha_i * (k_offset_i + k_i) of a flattened k index.
Vec spatial_frequency(const std::vector<int>& shape, const std::vector<int>& k_offset,
                      const DomainScaling& scaling, size_t flat_index);

WeightSet uniform_coeffs(const FieldModel& model, const SensorNetwork& net, const std::vector<int>& K, int r,
                         const TemporalFilter& filter, const DomainScaling& scaling,
                         const std::vector<int>& k_offset = {});

WeightSet ls_coeffs(const FieldModel& model, const SensorNetwork& net, const DenseGrid& grid,
                    const std::vector<int>& K, int r, const TemporalFilter& filter, const DomainScaling& scaling,
                    const std::vector<int>& k_offset = {}, double condition_ceiling = 1e8);

struct Resampled {
    SampleMatrix samples;
    SensorNetwork net;
};

Resampled interp_resample(const SampleMatrix& samples, const SensorNetwork& net, const UniformGrid& target);

// Row-stochastic matrix mapping scattered sensor values to target points.
Eigen::MatrixXd interpolation_matrix(const std::vector<Vec>& sensors, const std::vector<Vec>& targets);

// Relative L2 gap between sum_{n,l} w g(x_n - x, t_l - t) and the target exponential over the probe points.
double reproduction_error(const WeightSet& weights, const FieldModel& model, const TemporalFilter& filter,
                          const SensorNetwork& net, const DomainScaling& scaling, size_t k_flat,
                          const DenseGrid& probe);

nlohmann::json weights_to_json(const WeightSet& w);

} // namespace pdesrc
