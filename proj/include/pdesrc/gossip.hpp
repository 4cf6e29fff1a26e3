#pragma once

#include "pdesrc/estimator.hpp"

#include <cstdint>
#include <ostream>
#include <random>

namespace pdesrc {

struct CommGraph {
    std::vector<Vec> positions;
    double r_con = 0.0;
    std::vector<std::vector<int>> neighbors;

    size_t num_nodes() const { return positions.size(); }
    size_t num_edges() const;
    bool connected() const;
};

// Edges between every pair of nodes within distance r_con.
CommGraph graph_from_positions(std::vector<Vec> positions, double r_con);

// Nodes uniform over the unit box [0, 1]^d, redrawn until the graph is connected.
CommGraph generate_rgg(int N, double r_con, std::uint64_t seed, int d = 2);

struct GossipState {
    Eigen::MatrixXcd Y; // one row per node, one column per measurement entry
    long round = 0;

    Eigen::VectorXcd mean() const { return Y.colwise().mean().transpose(); }
    double spread() const; // sum_n ||y_n - mean||^2
    double max_deviation() const; // max_n ||y_n - mean|| / ||mean||
};

GossipState local_measures(const WeightSet& weights, const SampleMatrix& samples);

// Measures of a single node from its own sample row and weight slice.
Eigen::VectorXcd node_measure(const WeightSet& weights, const Eigen::RowVectorXd& samples_row, Eigen::Index node,
                              Eigen::Index num_nodes);

struct TraceRow {
    long round = 0;
    int node = 0;
    double deviation = 0.0;
};

struct GossipTrace {
    std::vector<TraceRow> rows;
};

struct GossipOptions {
    long stride = 1000;            // trace sampling period in rounds
    double stop_deviation = 0.0;   // > 0 stops early once max deviation falls below it
};

GossipTrace gossip_rounds(const CommGraph& graph, GossipState& state, long rounds, std::uint64_t seed,
                          const GossipOptions& opts = {});

// Continues an existing selection stream, so split runs match one uninterrupted run.
GossipTrace gossip_rounds(const CommGraph& graph, GossipState& state, long rounds, std::mt19937_64& rng,
                          const GossipOptions& opts = {});

struct TrajectoryRow {
    long round = 0;
    int node = 0;
    Source source;
};

struct DistributedResult {
    std::vector<EstimationReport> nodes;
    GossipTrace trace;
    std::vector<TrajectoryRow> trajectories;
    MeasurementTensor centralized;
};

DistributedResult estimate_distributed(const FieldModel& model, const CommGraph& graph, const SensorNetwork& net,
                                       const SampleMatrix& samples, int M, const EstimatorConfig& cfg, long rounds,
                                       std::uint64_t seed, const GossipOptions& opts = {}, int tracked_nodes = 3);

void write_trace_csv(std::ostream& out, const GossipTrace& trace);
void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows, int d);

} // namespace pdesrc
