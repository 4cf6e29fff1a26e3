#include "pdesrc/estimator.hpp"
#include "pdesrc/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace pdesrc {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

// Wraps an angle into [center - pi, center + pi).
double wrap_around(double angle, double center) {
    double a = std::fmod(angle - center + std::numbers::pi, two_pi);
    if (a < 0.0) a += two_pi;
    return a - std::numbers::pi + center;
}

SensorNetwork window_net(const SensorNetwork& net, int L) {
    SensorNetwork out = net;
    out.times.resize(static_cast<size_t>(L) + 1);
    return out;
}

SampleMatrix window_samples(const SampleMatrix& s, int L) {
    SampleMatrix out;
    out.values = s.values.leftCols(L + 1);
    out.noise_sigma = s.noise_sigma;
    return out;
}

} // namespace

MeasurementTensor generalized_measurements(const WeightSet& weights, const SampleMatrix& samples) {
    MeasurementTensor Q;
    Q.shape = weights.shape;
    Q.k_offset = weights.k_offset;
    Q.r = weights.r;
    Q.T = weights.T;
    Q.excluded = weights.excluded;
    Q.values = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(weights.num_k()));
    for (size_t f = 0; f < weights.num_k(); ++f) {
        const auto& W = weights.values[f];
        if (W.rows() != samples.values.rows() || W.cols() != samples.values.cols())
            fail(ErrorKind::ShapeError, "weight block and sample matrix shapes differ");
        if (weights.excluded[f]) continue;
        Q.values[static_cast<Eigen::Index>(f)] = (W.array() * samples.values.array().cast<cplx>()).sum();
    }
    return Q;
}

DomainScaling scaling_for(const SensorNetwork& net, double headroom) {
    double T = net.T() > 0.0 ? net.T() : 1.0;
    return DomainScaling::from_region(net.region, T, headroom);
}

SourceSet extract_sources(const MeasurementTensor& Q, int M, const DomainScaling& scaling, std::uint64_t seed,
                          HarmonicEstimate* raw, std::vector<int> levels) {
    for (bool ex : Q.excluded)
        if (ex) fail(ErrorKind::ShapeError, "measurement tensor has excluded entries; choose a k offset or r != 0");
    HarmonicEstimate est = nd_esprit(Q, M, std::move(levels), seed);
    const int d = Q.dim();
    // The noiseless model has unit-modulus frequencies; refit amplitudes on the unit circle.
    Eigen::MatrixXcd unit = est.frequencies;
    for (Eigen::Index m = 0; m < unit.rows(); ++m)
        for (Eigen::Index i = 0; i < unit.cols(); ++i) {
            double mod = std::abs(unit(m, i));
            if (mod > 0.0) unit(m, i) /= mod;
        }
    Eigen::VectorXcd amps = est.amplitudes;
    try {
        amps = amplitude_ls(Q, unit).amplitudes;
    } catch (const Error&) {
        // Keep the unconstrained fit when unit-modulus frequencies collide.
    }
    if (raw) *raw = est;

    SourceSet out;
    for (int m = 0; m < M; ++m) {
        Source s;
        s.c = std::abs(amps[m]);
        if (Q.r != 0) {
            double phase = wrap_around(std::arg(amps[m]), 0.5 * Q.r);
            s.tau = Q.T * phase / Q.r;
        }
        Vec xs(d);
        for (int i = 0; i < d; ++i) {
            xs[i] = wrap_around(std::arg(est.frequencies(m, i)), scaling.center);
        }
        s.xi = scaling.from_scaled(xs);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<bool> validity_flags(const SourceSet& sources, const Box& region, double threshold) {
    double cmax = 0.0;
    for (const auto& s : sources) cmax = std::max(cmax, std::abs(s.c));
    std::vector<bool> valid;
    for (const auto& s : sources)
        valid.push_back(cmax > 0.0 && std::abs(s.c) >= threshold * cmax && region.contains(s.xi));
    return valid;
}

PreparedWeights prepare_weights(const FieldModel& model, const SensorNetwork& net, const SampleMatrix& samples,
                                const EstimatorConfig& cfg, const DomainScaling& scaling) {
    PreparedWeights p;
    switch (cfg.method) {
    case WeightMethod::ClosedForm:
        p.net = net;
        p.samples = samples;
        p.weights = uniform_coeffs(model, net, cfg.K, cfg.r, cfg.filter, scaling, cfg.k_offset);
        break;
    case WeightMethod::LeastSquares: {
        p.net = net;
        p.samples = samples;
        DenseGrid grid = cfg.dense_grid ? *cfg.dense_grid : default_dense_grid(model, net);
        p.weights = ls_coeffs(model, net, grid, cfg.K, cfg.r, cfg.filter, scaling, cfg.k_offset,
                              cfg.condition_ceiling);
        break;
    }
    case WeightMethod::InterpolateResample: {
        if (!cfg.resample_grid) fail(ErrorKind::ConfigError, "resample_grid is required for interpolate_resample");
        Resampled res = interp_resample(samples, net, *cfg.resample_grid);
        p.net = res.net;
        p.samples = res.samples;
        p.weights = uniform_coeffs(model, p.net, cfg.K, cfg.r, cfg.filter, scaling, cfg.k_offset);
        break;
    }
    }
    return p;
}

MeasurementTensor denoise_measurements(const MeasurementTensor& Q, const WeightSet& weights, double sigma, int M,
                                       const EstimatorConfig& cfg) {
    std::vector<int> L = cfg.levels.empty() ? default_levels(Q.shape) : cfg.levels;
    Eigen::MatrixXcd H = build_multilevel_hankel(Q, L);
    Eigen::VectorXd scale;
    if (cfg.prewhiten) {
        scale.resize(static_cast<Eigen::Index>(Q.size()));
        for (size_t f = 0; f < Q.size(); ++f) {
            double s = sigma * weights.values[f].norm();
            scale[static_cast<Eigen::Index>(f)] = s > 0.0 ? s : 1.0;
        }
    }
    Eigen::MatrixXcd D = denoise_cadzow(H, M, Q.shape, L, cfg.cadzow_max_iter, cfg.prewhiten ? &scale : nullptr);
    return tensor_from_hankel(D, Q, L);
}

double residual_norm(const FieldModel& model, const SensorNetwork& net, const SampleMatrix& samples,
                     const SourceSet& sources, const TemporalFilter& filter) {
    double ref = samples.values.norm();
    if (ref == 0.0) return 0.0;
    try {
        SampleMatrix fit = synthesize_samples(model, sources, net, filter);
        return (samples.values - fit.values).norm() / ref;
    } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
    }
}

EstimationReport estimate_centralized(const FieldModel& model, const SensorNetwork& net, const SampleMatrix& samples,
                                      int M, const EstimatorConfig& cfg) {
    model.validate();
    cfg.filter.validate();
    if (static_cast<int>(cfg.K.size()) != model.dim)
        fail(ErrorKind::ConfigError, "K: expected " + std::to_string(model.dim) + " entries");
    for (int k : cfg.K)
        if (k < 2 * M - 1) fail(ErrorKind::ConfigError, "K: every entry must be at least 2M - 1");
    if (model.is_static() && cfg.r != 0) fail(ErrorKind::ConfigError, "r: static fields use r = 0");

    DomainScaling scaling = scaling_for(net, cfg.headroom);
    PreparedWeights p = prepare_weights(model, net, samples, cfg, scaling);
    MeasurementTensor Q = generalized_measurements(p.weights, p.samples);
    EstimationReport rep;
    if (cfg.cadzow && samples.noise_sigma > 0.0) {
        Q = denoise_measurements(Q, p.weights, p.samples.noise_sigma, M, cfg);
        rep.diagnostics.notes.push_back("cadzow");
    }
    HarmonicEstimate raw;
    rep.sources = extract_sources(Q, M, scaling, cfg.seed, &raw, cfg.levels);
    if (model.is_static())
        for (auto& s : rep.sources) s.tau = 0.0;
    rep.valid = validity_flags(rep.sources, net.region, cfg.validity_threshold);
    if (cfg.compute_residual) rep.residual = residual_norm(model, net, samples, rep.sources, cfg.filter);
    rep.diagnostics.weight_condition = p.weights.condition_number;
    rep.diagnostics.weights_rank_deficient = p.weights.rank_deficient;
    rep.diagnostics.eigvec_condition = raw.eigvec_condition;
    rep.diagnostics.vandermonde_condition = raw.vandermonde_condition;
    rep.diagnostics.esprit_attempts = raw.attempts;
    rep.diagnostics.singular_values.assign(raw.singular_values.data(),
                                           raw.singular_values.data() + raw.singular_values.size());
    return rep;
}

SampleMatrix subtract_source(const SampleMatrix& samples, const FieldModel& model, const Source& source,
                             const SensorNetwork& net, const TemporalFilter& filter) {
    SampleMatrix out = samples;
    out.values -= synthesize_samples(model, {source}, net, filter).values;
    return out;
}

EstimationReport estimate_unknown_count(const FieldModel& model, const SensorNetwork& net, const SampleMatrix& samples,
                                        const EstimatorConfig& cfg, const UnknownCountConfig& ucfg) {
    if (model.is_static()) fail(ErrorKind::Unsupported, "the window search needs a dynamic field");
    const int L = static_cast<int>(net.num_times()) - 1;
    if (L < 1) fail(ErrorKind::ConfigError, "window search needs at least two time samples");
    const int step = ucfg.window_step > 0 ? ucfg.window_step : std::max(1, L / 10);
    const double peak0 = samples.values.cwiseAbs().maxCoeff();

    EstimationReport rep;
    SampleMatrix residual = samples;
    int Lw = L;
    int adjustments = 0;
    while (Lw <= L && peak0 > 0.0) {
        if (residual.values.cwiseAbs().maxCoeff() < ucfg.stop_threshold * peak0) break;
        if (Lw < 1) Lw = 1;
        SensorNetwork sub = window_net(net, Lw);
        SampleMatrix sub_samples = window_samples(residual, Lw);
        int valid_count = 0;
        if (sub_samples.values.cwiseAbs().maxCoeff() >= ucfg.stop_threshold * peak0) {
            EstimatorConfig probe = cfg;
            probe.compute_residual = false;
            int guess = ucfg.guess;
            for (int& k : probe.K) k = std::max(k, 2 * guess - 1);
            try {
                auto est = estimate_centralized(model, sub, sub_samples, guess, probe);
                for (bool v : est.valid) valid_count += v ? 1 : 0;
            } catch (const Error&) {
                valid_count = 0;
            }
        }
        if (valid_count > 1) {
            if (++adjustments > ucfg.max_adjustments || Lw - step < 1)
                fail(ErrorKind::NoConvergence, "window search could not isolate a single source");
            Lw -= step;
            continue;
        }
        if (valid_count < 1) {
            if (++adjustments > ucfg.max_adjustments)
                fail(ErrorKind::NoConvergence, "window search exceeded its adjustment budget");
            if (Lw == L) break;
            Lw = std::min(L, Lw + step);
            continue;
        }
        EstimatorConfig single = cfg;
        single.compute_residual = false;
        auto est = estimate_centralized(model, sub, sub_samples, 1, single);
        const Source& s = est.sources.front();
        rep.sources.push_back(s);
        rep.diagnostics.notes.push_back("window L'=" + std::to_string(Lw));
        residual = subtract_source(residual, model, s, net, cfg.filter);
        if (Lw == L) break;
        // the remaining sources are searched for again starting from the full record
        Lw = L;
    }
    rep.valid.assign(rep.sources.size(), true);
    double ref = samples.values.norm();
    rep.residual = ref > 0.0 ? residual.values.norm() / ref : 0.0;
    return rep;
}

std::vector<int> match_sources(const SourceSet& truth, const SourceSet& estimate, const DomainScaling& scaling) {
    const size_t nt = truth.size();
    const size_t ne = estimate.size();
    std::vector<int> best(nt, -1);
    if (nt == 0 || ne == 0) return best;
    std::vector<std::vector<double>> cost(nt, std::vector<double>(ne));
    for (size_t a = 0; a < nt; ++a) {
        Vec ta = scaling.to_scaled(truth[a].xi);
        for (size_t b = 0; b < ne; ++b) {
            Vec eb = scaling.to_scaled(estimate[b].xi);
            double s = 0.0;
            for (size_t i = 0; i < ta.size(); ++i) s += (ta[i] - eb[i]) * (ta[i] - eb[i]);
            cost[a][b] = std::sqrt(s);
        }
    }
    // Exhaustive search over assignments; source counts here are small.
    // Permute the larger side and pair its leading entries with the smaller side.
    const bool by_estimate = ne >= nt;
    std::vector<int> perm(by_estimate ? ne : nt);
    std::iota(perm.begin(), perm.end(), 0);
    double best_cost = std::numeric_limits<double>::infinity();
    const size_t take = std::min(nt, ne);
    if (perm.size() > 9) {
        // Too many for exhaustive search: take the globally closest pairs first.
        std::vector<std::pair<size_t, size_t>> pairs;
        for (size_t a = 0; a < nt; ++a)
            for (size_t b = 0; b < ne; ++b) pairs.emplace_back(a, b);
        std::sort(pairs.begin(), pairs.end(),
                  [&](const auto& x, const auto& y) { return cost[x.first][x.second] < cost[y.first][y.second]; });
        std::vector<bool> used(ne, false);
        for (const auto& [a, b] : pairs)
            if (best[a] < 0 && !used[b]) {
                used[b] = true;
                best[a] = static_cast<int>(b);
            }
        return best;
    }
    do {
        double c = 0.0;
        for (size_t i = 0; i < take; ++i) c += by_estimate ? cost[i][perm[i]] : cost[perm[i]][i];
        if (c < best_cost) {
            best_cost = c;
            std::fill(best.begin(), best.end(), -1);
            for (size_t i = 0; i < take; ++i) {
                if (by_estimate) best[i] = perm[i];
                else best[perm[i]] = static_cast<int>(i);
            }
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

SourceErrors source_errors(const SourceSet& truth, const SourceSet& estimate, const DomainScaling& scaling,
                           bool with_time) {
    SourceErrors e;
    auto match = match_sources(truth, estimate, scaling);
    for (size_t a = 0; a < truth.size(); ++a) {
        if (match[a] < 0) {
            e.location = e.scaled_location = e.intensity_rel = e.tau = e.max_scaled =
                std::numeric_limits<double>::infinity();
            return e;
        }
        const Source& t = truth[a];
        const Source& s = estimate[static_cast<size_t>(match[a])];
        Vec ts = scaling.to_scaled(t.xi);
        Vec es = scaling.to_scaled(s.xi);
        double dist = 0.0;
        for (size_t i = 0; i < t.xi.size(); ++i) {
            dist += (t.xi[i] - s.xi[i]) * (t.xi[i] - s.xi[i]);
            e.scaled_location = std::max(e.scaled_location, std::abs(ts[i] - es[i]));
        }
        e.location = std::max(e.location, std::sqrt(dist));
        double cref = std::abs(t.c) > 0.0 ? std::abs(t.c) : 1.0;
        e.intensity_rel = std::max(e.intensity_rel, std::abs(t.c - s.c) / cref);
        if (with_time) e.tau = std::max(e.tau, std::abs(t.tau - s.tau));
    }
    e.max_scaled = std::max({e.scaled_location, e.intensity_rel, with_time ? e.tau / scaling.T : 0.0});
    return e;
}

nlohmann::json sources_to_json(const SourceSet& sources) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : sources) arr.push_back({{"c", s.c}, {"tau_seconds", s.tau}, {"xi", s.xi}});
    return arr;
}

nlohmann::json report_to_json(const EstimationReport& report) {
    nlohmann::json j;
    j["schema"] = "v1";
    j["sources"] = sources_to_json(report.sources);
    j["valid"] = report.valid;
    if (std::isfinite(report.residual)) j["residual"] = report.residual;
    else j["residual"] = nullptr;
    const auto& d = report.diagnostics;
    nlohmann::json diag;
    if (d.weight_condition) diag["weight_condition"] = *d.weight_condition;
    else diag["weight_condition"] = nullptr;
    diag["weights_rank_deficient"] = d.weights_rank_deficient;
    diag["eigvec_condition"] = d.eigvec_condition;
    diag["vandermonde_condition"] = d.vandermonde_condition;
    diag["esprit_attempts"] = d.esprit_attempts;
    diag["singular_values"] = d.singular_values;
    diag["reproduction_errors"] = d.reproduction_errors;
    diag["notes"] = d.notes;
    j["diagnostics"] = std::move(diag);
    return j;
}

} // namespace pdesrc
