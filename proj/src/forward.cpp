#include "pdesrc/forward.hpp"
#include "pdesrc/error.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <string>

namespace pdesrc {

bool Box::contains(const Vec& x, double tol) const {
    if (static_cast<int>(x.size()) != dim()) return false;
    for (int i = 0; i < dim(); ++i)
        if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    return true;
}

double Box::diameter() const {
    double s = 0.0;
    for (int i = 0; i < dim(); ++i) s += width(i) * width(i);
    return std::sqrt(s);
}

size_t shape_size(const std::vector<int>& shape) {
    size_t n = 1;
    for (int s : shape) n *= static_cast<size_t>(s);
    return n;
}

std::vector<int> unflatten(const std::vector<int>& shape, size_t flat_index) {
    std::vector<int> idx(shape.size());
    for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
        idx[i] = static_cast<int>(flat_index % shape[i]);
        flat_index /= shape[i];
    }
    return idx;
}

size_t UniformGrid::size() const { return shape_size(counts); }

std::vector<Vec> UniformGrid::nodes() const {
    std::vector<Vec> out;
    out.reserve(size());
    for (size_t f = 0; f < size(); ++f) {
        auto n = unflatten(counts, f);
        Vec x(dim());
        for (int i = 0; i < dim(); ++i) x[i] = origin[i] + n[i] * spacing[i];
        out.push_back(std::move(x));
    }
    return out;
}

namespace {

Vec make_times(int L, double dt) {
    if (L < 0) fail(ErrorKind::InvalidArgument, "number of time steps must be non-negative");
    if (!(dt > 0.0)) fail(ErrorKind::InvalidArgument, "sampling interval must be positive");
    Vec t(L + 1);
    for (int l = 0; l <= L; ++l) t[l] = l * dt;
    return t;
}

} // namespace

SensorNetwork SensorNetwork::uniform(const UniformGrid& grid, const Box& region, int L, double dt) {
    SensorNetwork net;
    net.positions = grid.nodes();
    net.times = make_times(L, dt);
    net.region = region;
    net.grid = grid;
    net.validate();
    return net;
}

SensorNetwork SensorNetwork::scattered(std::vector<Vec> positions, const Box& region, int L, double dt) {
    SensorNetwork net;
    net.positions = std::move(positions);
    net.times = make_times(L, dt);
    net.region = region;
    net.validate();
    return net;
}

void SensorNetwork::validate() const {
    if (positions.empty()) fail(ErrorKind::InvalidArgument, "sensor network has no sensors");
    if (times.empty() || times.front() != 0.0) fail(ErrorKind::InvalidArgument, "sampling times must start at 0");
    for (size_t l = 1; l < times.size(); ++l)
        if (!(times[l] > times[l - 1])) fail(ErrorKind::InvalidArgument, "sampling times must increase");
    for (const auto& x : positions)
        if (static_cast<int>(x.size()) != dim())
            fail(ErrorKind::ShapeError, "sensor position dimension does not match the region");
    if (grid) {
        if (grid->dim() != dim() || grid->size() != positions.size())
            fail(ErrorKind::ShapeError, "uniform grid descriptor does not match the sensor list");
        auto nodes = grid->nodes();
        for (size_t n = 0; n < nodes.size(); ++n)
            for (int i = 0; i < dim(); ++i)
                if (std::abs(nodes[n][i] - positions[n][i]) > 1e-12 * std::max(1.0, std::abs(nodes[n][i])))
                    fail(ErrorKind::NotUniform, "sensor positions are not the lexicographic grid nodes");
    }
}

DomainScaling DomainScaling::identity(int d, double T) {
    return {Vec(d, 0.0), Vec(d, 1.0), T, std::numbers::pi};
}

DomainScaling DomainScaling::from_region(const Box& region, double T, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) fail(ErrorKind::InvalidArgument, "headroom must be in (0, 1]");
    DomainScaling s;
    s.lo = region.lo;
    s.alpha.resize(region.dim());
    for (int i = 0; i < region.dim(); ++i) {
        if (!(region.width(i) > 0.0)) fail(ErrorKind::InvalidArgument, "region has zero width");
        s.alpha[i] = 2.0 * std::numbers::pi * rho / region.width(i);
    }
    s.T = T;
    s.center = std::numbers::pi * rho;
    return s;
}

Vec DomainScaling::to_scaled(const Vec& x) const {
    Vec out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = alpha[i] * (x[i] - lo[i]);
    return out;
}

Vec DomainScaling::from_scaled(const Vec& xs) const {
    Vec out(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) out[i] = lo[i] + xs[i] / alpha[i];
    return out;
}

size_t MeasurementTensor::flat(const std::vector<int>& local) const {
    size_t f = 0;
    for (size_t i = 0; i < shape.size(); ++i) f = f * shape[i] + static_cast<size_t>(local[i]);
    return f;
}

std::vector<int> MeasurementTensor::multi(size_t flat_index) const { return unflatten(shape, flat_index); }

std::vector<int> MeasurementTensor::actual(size_t flat_index) const {
    auto k = multi(flat_index);
    for (size_t i = 0; i < k.size(); ++i) k[i] += k_offset.empty() ? 0 : k_offset[i];
    return k;
}

SampleMatrix synthesize_samples(const FieldModel& model, const SourceSet& sources,
                                const SensorNetwork& net, const TemporalFilter& filter) {
    model.validate();
    filter.validate();
    if (model.dim != net.dim()) fail(ErrorKind::ShapeError, "model and network dimensions differ");
    if (model.kind == FieldKind::Wave && model.dim == 3 && !filter.active())
        fail(ErrorKind::SingularPoint, "3-D wave sampling requires a temporal filter");
    const size_t N = net.num_sensors();
    const size_t nt = net.num_times();
    SampleMatrix out;
    out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(nt));
    Vec diff(model.dim);
    for (size_t n = 0; n < N; ++n) {
        for (const auto& src : sources) {
            if (static_cast<int>(src.xi.size()) != model.dim)
                fail(ErrorKind::ShapeError, "source location dimension does not match the model");
            if (src.c == 0.0) continue;
            for (int i = 0; i < model.dim; ++i) diff[i] = net.positions[n][i] - src.xi[i];
            if (model.is_static()) {
                double g = src.c * eval_green(model, diff, 0.0);
                for (size_t l = 0; l < nt; ++l) out.values(n, l) += g;
            } else {
                for (size_t l = 0; l < nt; ++l)
                    out.values(n, l) += src.c * eval_green_effective(model, filter, diff, net.times[l] - src.tau);
            }
        }
    }
    return out;
}

SampleMatrix add_noise(const SampleMatrix& samples, double snr_db, std::uint64_t seed) {
    double power = samples.values.squaredNorm();
    if (power == 0.0) fail(ErrorKind::AllZeroSignal, "cannot calibrate noise on an all-zero signal");
    double count = static_cast<double>(samples.values.size());
    double sigma = std::sqrt(power / (count * std::pow(10.0, snr_db / 10.0)));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    SampleMatrix out = samples;
    for (Eigen::Index j = 0; j < out.values.cols(); ++j)
        for (Eigen::Index i = 0; i < out.values.rows(); ++i) out.values(i, j) += normal(rng);
    out.noise_sigma = std::hypot(samples.noise_sigma, sigma);
    return out;
}

MeasurementTensor oracle_measurements(const SourceSet& sources, const std::vector<int>& K, int r, double T,
                                      const DomainScaling& scaling, const std::vector<int>& k_offset) {
    MeasurementTensor q;
    const int d = static_cast<int>(K.size());
    if (scaling.dim() != d) fail(ErrorKind::ShapeError, "scaling dimension does not match K");
    q.shape.resize(d);
    for (int i = 0; i < d; ++i) {
        if (K[i] < 0) fail(ErrorKind::InvalidArgument, "K entries must be non-negative");
        q.shape[i] = K[i] + 1;
    }
    q.k_offset = k_offset.empty() ? std::vector<int>(d, 0) : k_offset;
    q.r = r;
    q.T = T;
    const size_t total = shape_size(q.shape);
    q.values = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(total));
    q.excluded.assign(total, false);
    for (const auto& src : sources) {
        Vec xs = scaling.to_scaled(src.xi);
        cplx b = src.c * std::polar(1.0, r * src.tau / T);
        for (size_t f = 0; f < total; ++f) {
            auto k = q.actual(f);
            double phase = 0.0;
            for (int i = 0; i < d; ++i) phase += k[i] * xs[i];
            q.values[static_cast<Eigen::Index>(f)] += b * std::polar(1.0, phase);
        }
    }
    return q;
}

void write_samples_csv(std::ostream& out, const SensorNetwork& net, const SampleMatrix& samples) {
    out << "n";
    for (int i = 1; i <= net.dim(); ++i) out << ",x_" << i;
    out << ",t_l,value\n";
    out << std::setprecision(17);
    for (size_t n = 0; n < net.num_sensors(); ++n) {
        for (size_t l = 0; l < net.num_times(); ++l) {
            out << n;
            for (double x : net.positions[n]) out << ',' << x;
            out << ',' << net.times[l] << ',' << samples.values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l))
                << '\n';
        }
    }
}

} // namespace pdesrc
