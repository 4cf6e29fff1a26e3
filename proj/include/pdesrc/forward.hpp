#pragma once

#include "pdesrc/greens.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

namespace pdesrc {

// Axis-aligned monitored region.
struct Box {
    Vec lo;
    Vec hi;

    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(const Vec& x, double tol = 0.0) const;
    double diameter() const;
    double width(int i) const { return hi[i] - lo[i]; }
    static Box unit(int d) { return {Vec(d, 0.0), Vec(d, 1.0)}; }
};

struct Source {
    double c = 1.0;
    double tau = 0.0;
    Vec xi;
};

using SourceSet = std::vector<Source>;

struct UniformGrid {
    std::vector<int> counts;
    Vec spacing;
    Vec origin;

    int dim() const { return static_cast<int>(counts.size()); }
    size_t size() const;
    // Lexicographic enumeration, last coordinate varying fastest.
    std::vector<Vec> nodes() const;
};

struct SensorNetwork {
    std::vector<Vec> positions;
    Vec times;
    Box region;
    std::optional<UniformGrid> grid;

    int dim() const { return region.dim(); }
    size_t num_sensors() const { return positions.size(); }
    size_t num_times() const { return times.size(); }
    double T() const { return times.back(); }
    double dt() const { return times.size() > 1 ? times[1] - times[0] : 1.0; }

    static SensorNetwork uniform(const UniformGrid& grid, const Box& region, int L, double dt);
    static SensorNetwork scattered(std::vector<Vec> positions, const Box& region, int L, double dt);
    void validate() const;
};

struct SampleMatrix {
    Eigen::MatrixXd values; // N x (L+1)
    double noise_sigma = 0.0;
};

// Per-dimension affine map x -> alpha * (x - lo) taking the region into [0, 2 pi rho).
struct DomainScaling {
    Vec lo;
    Vec alpha;
    double T = 1.0;
    double center = 3.14159265358979323846; // middle of the scaled region, used for branch selection

    static DomainScaling identity(int d, double T);
    static DomainScaling from_region(const Box& region, double T, double rho = 0.8);

    int dim() const { return static_cast<int>(lo.size()); }
    Vec to_scaled(const Vec& x) const;
    Vec from_scaled(const Vec& xs) const;
};

// Generalized measurements Q(k, r) on the index box {offset_i .. offset_i + K_i}.
struct MeasurementTensor {
    std::vector<int> shape;    // K_i + 1
    std::vector<int> k_offset; // actual index = k_offset + local index
    Eigen::VectorXcd values;   // lexicographic, last index fastest
    std::vector<bool> excluded;
    int r = 1;
    double T = 1.0;

    int dim() const { return static_cast<int>(shape.size()); }
    size_t size() const { return static_cast<size_t>(values.size()); }
    size_t flat(const std::vector<int>& local) const;
    std::vector<int> multi(size_t flat_index) const;
    std::vector<int> actual(size_t flat_index) const;
    cplx operator()(const std::vector<int>& local) const { return values[static_cast<Eigen::Index>(flat(local))]; }
};

size_t shape_size(const std::vector<int>& shape);
std::vector<int> unflatten(const std::vector<int>& shape, size_t flat_index);

SampleMatrix synthesize_samples(const FieldModel& model, const SourceSet& sources,
                                const SensorNetwork& net, const TemporalFilter& filter);

SampleMatrix add_noise(const SampleMatrix& samples, double snr_db, std::uint64_t seed);

// K holds the per-dimension maximum local index K_i.
MeasurementTensor oracle_measurements(const SourceSet& sources, const std::vector<int>& K, int r, double T,
                                      const DomainScaling& scaling, const std::vector<int>& k_offset = {});

void write_samples_csv(std::ostream& out, const SensorNetwork& net, const SampleMatrix& samples);

} // namespace pdesrc
