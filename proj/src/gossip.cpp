#include "pdesrc/gossip.hpp"
#include "pdesrc/error.hpp"

#include <cmath>
#include <iomanip>
#include <algorithm>
#include <queue>
#include <random>

namespace pdesrc {

size_t CommGraph::num_edges() const {
    size_t e = 0;
    for (const auto& nb : neighbors) e += nb.size();
    return e / 2;
}

bool CommGraph::connected() const {
    if (positions.empty()) return false;
    std::vector<bool> seen(positions.size(), false);
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    size_t count = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : neighbors[u])
            if (!seen[v]) {
                seen[v] = true;
                ++count;
                q.push(v);
            }
    }
    return count == positions.size();
}

CommGraph graph_from_positions(std::vector<Vec> positions, double r_con) {
    CommGraph g;
    g.positions = std::move(positions);
    g.r_con = r_con;
    const size_t N = g.positions.size();
    g.neighbors.assign(N, {});
    const double r2 = r_con * r_con;
    for (size_t a = 0; a < N; ++a)
        for (size_t b = a + 1; b < N; ++b) {
            double s = 0.0;
            for (size_t i = 0; i < g.positions[a].size(); ++i) {
                double t = g.positions[a][i] - g.positions[b][i];
                s += t * t;
            }
            if (s <= r2) {
                g.neighbors[a].push_back(static_cast<int>(b));
                g.neighbors[b].push_back(static_cast<int>(a));
            }
        }
    return g;
}

CommGraph generate_rgg(int N, double r_con, std::uint64_t seed, int d) {
    if (N < 2) fail(ErrorKind::InvalidArgument, "a communication graph needs at least two nodes");
    if (d < 1) fail(ErrorKind::InvalidArgument, "graph dimension must be positive");
    if (!(r_con > 0.0) || r_con > std::sqrt(static_cast<double>(d)) + 1e-15)
        fail(ErrorKind::InvalidArgument, "r_con must lie in (0, sqrt(d)]");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<Vec> pos(N, Vec(d));
        for (auto& p : pos)
            for (double& v : p) v = unif(rng);
        CommGraph g = graph_from_positions(std::move(pos), r_con);
        if (g.connected()) return g;
    }
    fail(ErrorKind::ConnectivityFailure, "no connected graph after 100 draws; r_con too small for N");
}

double GossipState::spread() const {
    Eigen::RowVectorXcd m = Y.colwise().mean();
    return (Y.rowwise() - m).squaredNorm();
}

double GossipState::max_deviation() const {
    Eigen::RowVectorXcd m = Y.colwise().mean();
    double ref = m.norm();
    double worst = 0.0;
    for (Eigen::Index n = 0; n < Y.rows(); ++n) worst = std::max(worst, (Y.row(n) - m).norm());
    return ref > 0.0 ? worst / ref : worst;
}

Eigen::VectorXcd node_measure(const WeightSet& weights, const Eigen::RowVectorXd& samples_row, Eigen::Index node,
                              Eigen::Index num_nodes) {
    Eigen::VectorXcd y(static_cast<Eigen::Index>(weights.num_k()));
    for (size_t f = 0; f < weights.num_k(); ++f) {
        const auto& W = weights.values[f];
        if (W.cols() != samples_row.size()) fail(ErrorKind::ShapeError, "sample row length does not match weights");
        cplx acc = 0.0;
        for (Eigen::Index l = 0; l < W.cols(); ++l) acc += W(node, l) * samples_row[l];
        y[static_cast<Eigen::Index>(f)] = static_cast<double>(num_nodes) * acc;
    }
    return y;
}

GossipState local_measures(const WeightSet& weights, const SampleMatrix& samples) {
    const Eigen::Index N = samples.values.rows();
    if (weights.num_sensors() != N) fail(ErrorKind::ShapeError, "weights and samples disagree on the sensor count");
    GossipState s;
    s.Y.resize(N, static_cast<Eigen::Index>(weights.num_k()));
    for (Eigen::Index n = 0; n < N; ++n) s.Y.row(n) = node_measure(weights, samples.values.row(n), n, N).transpose();
    return s;
}

GossipTrace gossip_rounds(const CommGraph& graph, GossipState& state, long rounds, std::uint64_t seed,
                          const GossipOptions& opts) {
    std::mt19937_64 rng(seed);
    return gossip_rounds(graph, state, rounds, rng, opts);
}

GossipTrace gossip_rounds(const CommGraph& graph, GossipState& state, long rounds, std::mt19937_64& rng,
                          const GossipOptions& opts) {
    const auto N = static_cast<int>(graph.num_nodes());
    if (state.Y.rows() != N) fail(ErrorKind::ShapeError, "gossip state and graph sizes differ");
    GossipTrace trace;
    std::uniform_int_distribution<int> pick_node(0, N - 1);
    auto record = [&]() {
        Eigen::RowVectorXcd m = state.Y.colwise().mean();
        double ref = m.norm();
        for (int n = 0; n < N; ++n) {
            double dev = (state.Y.row(n) - m).norm();
            trace.rows.push_back({state.round, n, ref > 0.0 ? dev / ref : dev});
        }
    };
    record();
    for (long i = 0; i < rounds; ++i) {
        int a = pick_node(rng);
        const auto& nb = graph.neighbors[a];
        if (nb.empty()) fail(ErrorKind::ConnectivityFailure, "node without neighbours in gossip graph");
        std::uniform_int_distribution<size_t> pick_nb(0, nb.size() - 1);
        int b = nb[pick_nb(rng)];
        Eigen::RowVectorXcd avg = 0.5 * (state.Y.row(a) + state.Y.row(b));
        state.Y.row(a) = avg;
        state.Y.row(b) = avg;
        ++state.round;
        if (opts.stride > 0 && state.round % opts.stride == 0) {
            record();
            if (opts.stop_deviation > 0.0 && state.max_deviation() < opts.stop_deviation) break;
        }
    }
    return trace;
}

DistributedResult estimate_distributed(const FieldModel& model, const CommGraph& graph, const SensorNetwork& net,
                                       const SampleMatrix& samples, int M, const EstimatorConfig& cfg, long rounds,
                                       std::uint64_t seed, const GossipOptions& opts, int tracked_nodes) {
    if (graph.num_nodes() != net.num_sensors()) fail(ErrorKind::ShapeError, "graph and network sizes differ");
    if (cfg.method == WeightMethod::InterpolateResample)
        fail(ErrorKind::Unsupported, "distributed estimation needs per-sensor weights (closed form or least squares)");
    DomainScaling scaling = scaling_for(net, cfg.headroom);
    PreparedWeights p = prepare_weights(model, net, samples, cfg, scaling);
    DistributedResult res;
    res.centralized = generalized_measurements(p.weights, p.samples);
    GossipState state = local_measures(p.weights, p.samples);

    auto node_tensor = [&](Eigen::Index n) {
        MeasurementTensor Q = res.centralized;
        Q.values = state.Y.row(n).transpose();
        if (cfg.cadzow && samples.noise_sigma > 0.0)
            Q = denoise_measurements(Q, p.weights, samples.noise_sigma, M, cfg);
        return Q;
    };

    const int N = static_cast<int>(graph.num_nodes());
    std::vector<int> tracked;
    {
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
        std::vector<int> all(N);
        for (int n = 0; n < N; ++n) all[n] = n;
        std::shuffle(all.begin(), all.end(), rng);
        tracked.assign(all.begin(), all.begin() + std::min(tracked_nodes, N));
    }
    auto snapshot = [&]() {
        for (int n : tracked) {
            try {
                auto src = extract_sources(node_tensor(n), M, scaling, cfg.seed, nullptr, cfg.levels);
                for (const auto& s : src) res.trajectories.push_back({state.round, n, s});
            } catch (const Error&) {
                // Early rounds can be too far from consensus for a stable fit; skip the point.
            }
        }
    };

    // Gossip in chunks of one stride so trajectories can be sampled between chunks.
    long stride = opts.stride > 0 ? opts.stride : rounds;
    GossipOptions chunk = opts;
    chunk.stride = stride;
    std::mt19937_64 rng(seed);
    snapshot();
    long done = 0;
    res.trace.rows.clear();
    while (done < rounds) {
        long n = std::min(stride, rounds - done);
        GossipTrace part = gossip_rounds(graph, state, n, rng, chunk);
        size_t skip = done == 0 ? 0 : static_cast<size_t>(N); // drop duplicated start-of-chunk rows
        res.trace.rows.insert(res.trace.rows.end(), part.rows.begin() + static_cast<long>(std::min(skip, part.rows.size())),
                              part.rows.end());
        done += n;
        snapshot();
        if (opts.stop_deviation > 0.0 && state.max_deviation() < opts.stop_deviation) break;
    }

    for (int n = 0; n < N; ++n) {
        EstimationReport rep;
        rep.sources = extract_sources(node_tensor(n), M, scaling, cfg.seed, nullptr, cfg.levels);
        rep.valid = validity_flags(rep.sources, net.region, cfg.validity_threshold);
        rep.residual = cfg.compute_residual ? residual_norm(model, net, samples, rep.sources, cfg.filter) : 0.0;
        res.nodes.push_back(std::move(rep));
    }
    return res;
}

void write_trace_csv(std::ostream& out, const GossipTrace& trace) {
    out << "round,node,deviation\n" << std::setprecision(10);
    for (const auto& r : trace.rows) out << r.round << ',' << r.node << ',' << r.deviation << '\n';
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows, int d) {
    out << "round,node,c,tau";
    for (int i = 1; i <= d; ++i) out << ",xi_" << i;
    out << '\n' << std::setprecision(12);
    for (const auto& r : rows) {
        out << r.round << ',' << r.node << ',' << r.source.c << ',' << r.source.tau;
        for (double x : r.source.xi) out << ',' << x;
        out << '\n';
    }
}

} // namespace pdesrc
