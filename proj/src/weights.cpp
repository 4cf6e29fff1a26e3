#include "pdesrc/weights.hpp"
#include "pdesrc/error.hpp"
#include "delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pdesrc {

namespace {

constexpr cplx I1{0.0, 1.0};

std::vector<int> resolve_offset(const std::vector<int>& k_offset, int d) {
    if (k_offset.empty()) return std::vector<int>(d, 0);
    if (static_cast<int>(k_offset.size()) != d) fail(ErrorKind::ShapeError, "k offset length does not match dimension");
    return k_offset;
}

std::vector<int> shape_from_K(const std::vector<int>& K) {
    std::vector<int> shape;
    for (int k : K) {
        if (k < 0) fail(ErrorKind::InvalidArgument, "K entries must be non-negative");
        shape.push_back(k + 1);
    }
    return shape;
}

cplx target_exponential(const Vec& omega, const DomainScaling& scaling, const Vec& x, double nu, double t) {
    double phase = nu * t;
    for (size_t i = 0; i < omega.size(); ++i) phase += omega[i] * (x[i] - scaling.lo[i]);
    return std::polar(1.0, phase);
}

} // namespace

const char* to_string(WeightMethod m) {
    switch (m) {
    case WeightMethod::ClosedForm: return "closed_form";
    case WeightMethod::LeastSquares: return "least_squares";
    case WeightMethod::InterpolateResample: return "interpolate_resample";
    }
    return "unknown";
}

WeightMethod weight_method_from_string(const std::string& s) {
    if (s == "closed_form") return WeightMethod::ClosedForm;
    if (s == "least_squares") return WeightMethod::LeastSquares;
    if (s == "interpolate_resample") return WeightMethod::InterpolateResample;
    fail(ErrorKind::ConfigError, "unknown weight method '" + s + "'");
}

Vec spatial_frequency(const std::vector<int>& shape, const std::vector<int>& k_offset, const DomainScaling& scaling,
                      size_t flat_index) {
    auto k = unflatten(shape, flat_index);
    Vec omega(k.size());
    for (size_t i = 0; i < k.size(); ++i)
        omega[i] = scaling.alpha[i] * (k[i] + (k_offset.empty() ? 0 : k_offset[i]));
    return omega;
}

DenseGrid lattice_grid(const Vec& origin, const std::vector<int>& counts, const Vec& spacing, double eps,
                       const Vec& times) {
    UniformGrid g{counts, spacing, origin};
    DenseGrid out;
    out.points = g.nodes();
    for (auto& p : out.points)
        for (double& v : p) v += eps;
    out.times = times;
    return out;
}

DenseGrid default_dense_grid(const FieldModel& model, const SensorNetwork& net) {
    const int d = net.dim();
    const size_t N = net.num_sensors();
    int m = static_cast<int>(std::ceil(std::pow(2.0 * static_cast<double>(N), 1.0 / d)));
    m = std::max(m, 2);
    Vec spacing(d);
    Vec origin(d);
    for (int i = 0; i < d; ++i) {
        spacing[i] = net.region.width(i) / m;
        origin[i] = net.region.lo[i] + 0.5 * spacing[i];
    }
    Vec times;
    if (model.is_static()) {
        times = {0.0};
    } else {
        size_t J = net.num_times();
        for (size_t j = 1; j <= J; ++j) times.push_back(net.T() * static_cast<double>(j) / static_cast<double>(J));
    }
    double eps = 1e-3 * *std::min_element(spacing.begin(), spacing.end());
    return lattice_grid(origin, std::vector<int>(d, m), spacing, eps, times);
}

WeightSet uniform_coeffs(const FieldModel& model, const SensorNetwork& net, const std::vector<int>& K, int r,
                         const TemporalFilter& filter, const DomainScaling& scaling, const std::vector<int>& k_offset) {
    model.validate();
    if (!net.grid) fail(ErrorKind::NotUniform, "closed-form weights need a uniform sensor grid");
    if (model.is_static()) fail(ErrorKind::Unsupported, "closed-form weights are not available for Poisson fields");
    const int d = model.dim;
    if (static_cast<int>(K.size()) != d || net.dim() != d) fail(ErrorKind::ShapeError, "K, model and network dimensions differ");

    WeightSet ws;
    ws.method = WeightMethod::ClosedForm;
    ws.shape = shape_from_K(K);
    ws.k_offset = resolve_offset(k_offset, d);
    ws.r = r;
    ws.T = net.T();
    const double nu = r / ws.T;
    double cell = net.dt();
    for (double dx : net.grid->spacing) cell *= dx;

    const auto N = static_cast<Eigen::Index>(net.num_sensors());
    const auto nt = static_cast<Eigen::Index>(net.num_times());
    const size_t total = shape_size(ws.shape);
    ws.values.reserve(total);
    ws.excluded.assign(total, false);
    for (size_t f = 0; f < total; ++f) {
        Vec omega = spatial_frequency(ws.shape, ws.k_offset, scaling, f);
        CVec s_x(d);
        for (int i = 0; i < d; ++i) s_x[i] = -I1 * omega[i];
        cplx G;
        try {
            G = laplace_effective(model, filter, s_x, -I1 * nu);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::OutsideROC) {
                ws.excluded[f] = true;
                ws.values.emplace_back(Eigen::MatrixXcd::Zero(N, nt));
                continue;
            }
            if (e.kind() == ErrorKind::PoleEvaluation)
                fail(ErrorKind::PoleAtFrequency, "measurement frequency sits on a pole of the wave transform");
            throw;
        }
        if (std::abs(G) == 0.0) fail(ErrorKind::PoleAtFrequency, "kernel transform vanishes at a measurement frequency");
        Eigen::MatrixXcd W(N, nt);
        for (Eigen::Index n = 0; n < N; ++n) {
            for (Eigen::Index l = 0; l < nt; ++l) {
                W(n, l) = cell * target_exponential(omega, scaling, net.positions[n], nu, net.times[l]) / G;
            }
        }
        ws.values.push_back(std::move(W));
    }
    return ws;
}

WeightSet ls_coeffs(const FieldModel& model, const SensorNetwork& net, const DenseGrid& grid, const std::vector<int>& K,
                    int r, const TemporalFilter& filter, const DomainScaling& scaling, const std::vector<int>& k_offset,
                    double condition_ceiling) {
    model.validate();
    const int d = model.dim;
    if (static_cast<int>(K.size()) != d || net.dim() != d) fail(ErrorKind::ShapeError, "K, model and network dimensions differ");
    const bool stat = model.is_static();
    const auto N = static_cast<Eigen::Index>(net.num_sensors());
    const auto nt = static_cast<Eigen::Index>(net.num_times());
    const Eigen::Index cols_per_sensor = stat ? 1 : nt;
    const auto I = static_cast<Eigen::Index>(grid.points.size());
    const auto J = static_cast<Eigen::Index>(stat ? 1 : grid.times.size());
    if (I == 0 || J == 0) fail(ErrorKind::ShapeError, "dense grid is empty");
    if (I * J < N * cols_per_sensor)
        fail(ErrorKind::ShapeError, "dense grid too small for a least-squares solution (I J < N (L+1))");

    WeightSet ws;
    ws.method = WeightMethod::LeastSquares;
    ws.shape = shape_from_K(K);
    ws.k_offset = resolve_offset(k_offset, d);
    ws.r = r;
    ws.T = net.T();
    const double nu = stat ? 0.0 : r / ws.T;

    Eigen::MatrixXd G(I * J, N * cols_per_sensor);
    Vec diff(d);
    for (Eigen::Index i = 0; i < I; ++i) {
        for (Eigen::Index j = 0; j < J; ++j) {
            double tj = stat ? 0.0 : grid.times[j];
            for (Eigen::Index n = 0; n < N; ++n) {
                for (int a = 0; a < d; ++a) diff[a] = net.positions[n][a] - grid.points[i][a];
                for (Eigen::Index l = 0; l < cols_per_sensor; ++l) {
                    double v = stat ? eval_green(model, diff, 0.0)
                                    : eval_green_effective(model, filter, diff, net.times[l] - tj);
                    G(i * J + j, n * cols_per_sensor + l) = v;
                }
            }
        }
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    double smax = s[0];
    double smin = s[s.size() - 1];
    ws.condition_number = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    ws.rank_deficient = !(*ws.condition_number <= condition_ceiling);
    Eigen::VectorXd inv(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) inv[i] = s[i] > 1e-12 * smax ? 1.0 / s[i] : 0.0;

    const size_t total = shape_size(ws.shape);
    Eigen::MatrixXcd P(I * J, static_cast<Eigen::Index>(total));
    for (size_t f = 0; f < total; ++f) {
        Vec omega = spatial_frequency(ws.shape, ws.k_offset, scaling, f);
        for (Eigen::Index i = 0; i < I; ++i)
            for (Eigen::Index j = 0; j < J; ++j)
                P(i * J + j, static_cast<Eigen::Index>(f)) =
                    target_exponential(omega, scaling, grid.points[i], nu, stat ? 0.0 : grid.times[j]);
    }
    Eigen::MatrixXcd UtP = svd.matrixU().transpose().cast<cplx>() * P;
    UtP = inv.cast<cplx>().asDiagonal() * UtP;
    Eigen::MatrixXcd Wall = svd.matrixV().cast<cplx>() * UtP;

    ws.excluded.assign(total, false);
    for (size_t f = 0; f < total; ++f) {
        Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(N, nt);
        for (Eigen::Index n = 0; n < N; ++n)
            for (Eigen::Index l = 0; l < cols_per_sensor; ++l)
                W(n, l) = Wall(n * cols_per_sensor + l, static_cast<Eigen::Index>(f));
        ws.values.push_back(std::move(W));
    }
    return ws;
}

Eigen::MatrixXd interpolation_matrix(const std::vector<Vec>& sensors, const std::vector<Vec>& targets) {
    const auto N = static_cast<Eigen::Index>(sensors.size());
    const auto M = static_cast<Eigen::Index>(targets.size());
    if (N == 0) fail(ErrorKind::ShapeError, "no sensors to interpolate from");
    const int d = static_cast<int>(sensors.front().size());
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(M, N);

    auto nearest = [&](const Vec& x) {
        Eigen::Index best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (Eigen::Index n = 0; n < N; ++n) {
            double s = 0.0;
            for (int a = 0; a < d; ++a) s += (sensors[n][a] - x[a]) * (sensors[n][a] - x[a]);
            if (s < bd) {
                bd = s;
                best = n;
            }
        }
        return best;
    };

    if (d == 1) {
        std::vector<Eigen::Index> order(N);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return sensors[a][0] < sensors[b][0]; });
        for (Eigen::Index m = 0; m < M; ++m) {
            double x = targets[m][0];
            if (x <= sensors[order.front()][0] || x >= sensors[order.back()][0]) {
                W(m, nearest(targets[m])) = 1.0;
                continue;
            }
            auto it = std::upper_bound(order.begin(), order.end(), x,
                                       [&](double v, Eigen::Index idx) { return v < sensors[idx][0]; });
            Eigen::Index hi = *it;
            Eigen::Index lo = *(it - 1);
            double x0 = sensors[lo][0];
            double x1 = sensors[hi][0];
            double lam = (x - x0) / (x1 - x0);
            W(m, lo) += 1.0 - lam;
            W(m, hi) += lam;
        }
        return W;
    }
    if (d > 3) fail(ErrorKind::InvalidArgument, "interpolation supports d <= 3");

    Eigen::MatrixXd pts(N, d);
    for (Eigen::Index n = 0; n < N; ++n)
        for (int a = 0; a < d; ++a) pts(n, a) = sensors[n][a];
    auto simplices = detail::delaunay(pts);
    Eigen::VectorXd lambda;
    for (Eigen::Index m = 0; m < M; ++m) {
        Eigen::VectorXd x(d);
        for (int a = 0; a < d; ++a) x[a] = targets[m][a];
        bool found = false;
        for (const auto& s : simplices) {
            if (detail::barycentric(pts, s, x, lambda)) {
                for (int j = 0; j <= d; ++j) W(m, s[j]) += std::max(0.0, lambda[j]);
                W.row(m) /= W.row(m).sum();
                found = true;
                break;
            }
        }
        if (!found) W(m, nearest(targets[m])) = 1.0;
    }
    return W;
}

Resampled interp_resample(const SampleMatrix& samples, const SensorNetwork& net, const UniformGrid& target) {
    if (net.dim() < 1 || net.dim() > 3) fail(ErrorKind::InvalidArgument, "interpolation supports d in {1, 2, 3}");
    if (target.dim() != net.dim()) fail(ErrorKind::ShapeError, "target grid dimension does not match the network");
    if (samples.values.rows() != static_cast<Eigen::Index>(net.num_sensors()))
        fail(ErrorKind::ShapeError, "sample rows do not match the sensor count");
    auto nodes = target.nodes();
    Eigen::MatrixXd W = interpolation_matrix(net.positions, nodes);
    Resampled out;
    out.samples.values = W * samples.values;
    out.samples.noise_sigma = samples.noise_sigma;
    out.net = SensorNetwork::uniform(target, net.region, static_cast<int>(net.num_times()) - 1, net.dt());
    return out;
}

double reproduction_error(const WeightSet& weights, const FieldModel& model, const TemporalFilter& filter,
                          const SensorNetwork& net, const DomainScaling& scaling, size_t k_flat, const DenseGrid& probe) {
    if (k_flat >= weights.num_k()) fail(ErrorKind::ShapeError, "k index outside the weight set");
    const Eigen::MatrixXcd& W = weights.values[k_flat];
    const bool stat = model.is_static();
    const double nu = stat ? 0.0 : weights.r / weights.T;
    Vec omega = spatial_frequency(weights.shape, weights.k_offset, scaling, k_flat);
    const int d = model.dim;
    Vec diff(d);
    double num = 0.0;
    double den = 0.0;
    Vec times = stat ? Vec{0.0} : probe.times;
    for (const auto& x : probe.points) {
        for (double t : times) {
            cplx recon = 0.0;
            bool ok = true;
            for (Eigen::Index n = 0; n < W.rows() && ok; ++n) {
                for (int a = 0; a < d; ++a) diff[a] = net.positions[n][a] - x[a];
                for (Eigen::Index l = 0; l < W.cols(); ++l) {
                    if (W(n, l) == cplx(0.0)) continue;
                    try {
                        double g = stat ? eval_green(model, diff, 0.0)
                                        : eval_green_effective(model, filter, diff, net.times[l] - t);
                        recon += W(n, l) * g;
                    } catch (const Error& e) {
                        if (e.kind() != ErrorKind::SingularPoint) throw;
                        ok = false;
                        break;
                    }
                }
            }
            if (!ok) continue;
            cplx target = target_exponential(omega, scaling, x, nu, t);
            num += std::norm(recon - target);
            den += std::norm(target);
        }
    }
    return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

nlohmann::json weights_to_json(const WeightSet& w) {
    nlohmann::json j;
    j["method"] = to_string(w.method);
    j["shape"] = w.shape;
    j["k_offset"] = w.k_offset;
    j["r"] = w.r;
    j["T_seconds"] = w.T;
    if (w.condition_number) j["condition_number"] = *w.condition_number;
    else j["condition_number"] = nullptr;
    j["rank_deficient"] = w.rank_deficient;
    nlohmann::json entries = nlohmann::json::array();
    for (size_t f = 0; f < w.num_k(); ++f) {
        nlohmann::json e;
        e["k"] = unflatten(w.shape, f);
        for (size_t i = 0; i < w.shape.size(); ++i) e["k"][i] = e["k"][i].get<int>() + w.k_offset[i];
        e["excluded"] = static_cast<bool>(w.excluded[f]);
        nlohmann::json rows = nlohmann::json::array();
        const auto& W = w.values[f];
        for (Eigen::Index n = 0; n < W.rows(); ++n) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index l = 0; l < W.cols(); ++l) row.push_back({W(n, l).real(), W(n, l).imag()});
            rows.push_back(std::move(row));
        }
        e["values"] = std::move(rows);
        entries.push_back(std::move(e));
    }
    j["entries"] = std::move(entries);
    return j;
}

} // namespace pdesrc
