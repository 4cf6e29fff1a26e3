#include "pdesrc/error.hpp"
#include "pdesrc/weights.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace pdesrc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double pi = std::numbers::pi;
const cplx jay(0.0, 1.0);

ErrorKind kind_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an exception");
    return ErrorKind::InvalidArgument;
}

std::vector<Vec> random_points(std::mt19937_64& rng, int n, const Box& box) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec> out;
    for (int i = 0; i < n; ++i) {
        Vec x(box.dim());
        for (int a = 0; a < box.dim(); ++a) x[a] = box.lo[a] + u(rng) * box.width(a);
        out.push_back(x);
    }
    return out;
}

} // namespace

TEST_CASE("closed-form weights at a single node", "[weights]") {
    UniformGrid g{{2, 2}, {1.0, 1.0}, {0.0, 0.0}};
    auto net = SensorNetwork::uniform(g, Box{{0.0, 0.0}, {1.0, 1.0}}, 2, 1.0);
    auto id = DomainScaling::identity(2, net.T());
    auto w = uniform_coeffs(FieldModel::diffusion(2, 1.0), net, {1, 1}, 0, TemporalFilter::none(), id);
    REQUIRE(w.num_k() == 4);
    CHECK(w.excluded[0]);
    CHECK(w.values[0].isZero(0.0));
    // k = (1, 0) is flat index 2
    CHECK(std::abs(w.values[2](0, 0) - cplx(1.0)) < 1e-15);
    auto w2 = uniform_coeffs(FieldModel::diffusion(2, 2.5), net, {1, 1}, 0, TemporalFilter::none(), id);
    CHECK(std::abs(w2.values[2](0, 0) - cplx(2.5)) < 1e-15);
}

TEST_CASE("closed-form weights phase structure", "[weights][property]") {
    Box box{{-0.5, 0.0, 1.0}, {0.5, 0.4, 2.0}};
    UniformGrid g{{4, 3, 5}, {0.25, 0.2, 0.25}, {-0.5, 0.0, 1.0}};
    auto net = SensorNetwork::uniform(g, box, 6, 0.5);
    auto sc = DomainScaling::from_region(box, net.T());
    for (const auto& model : {FieldModel::diffusion(3, 0.1), FieldModel::wave(3, 1.5)}) {
        auto w = uniform_coeffs(model, net, {2, 1, 2}, 1, TemporalFilter::bspline(3), sc, {1, 0, 0});
        for (size_t f = 0; f < w.num_k(); ++f) {
            Vec omega = spatial_frequency(w.shape, w.k_offset, sc, f);
            const auto& W = w.values[f];
            for (Eigen::Index n = 0; n < W.rows(); ++n) {
                auto idx = unflatten(g.counts, static_cast<size_t>(n));
                for (Eigen::Index l = 0; l < W.cols(); ++l) {
                    double phase = (1.0 / net.T()) * 0.5 * l;
                    for (int a = 0; a < 3; ++a) phase += omega[a] * g.spacing[a] * idx[a];
                    cplx ratio = W(n, l) / W(0, 0);
                    CHECK(std::abs(ratio - std::polar(1.0, phase)) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("closed-form wave weights match composed transforms", "[weights]") {
    UniformGrid g{{3, 3, 3}, {0.1, 0.1, 0.1}, {0.0, 0.0, 0.0}};
    auto net = SensorNetwork::uniform(g, Box{{0, 0, 0}, {0.2, 0.2, 0.2}}, 20, 1.0);
    auto id = DomainScaling::identity(3, 20.0);
    auto model = FieldModel::wave(3, 1.0);
    auto w = uniform_coeffs(model, net, {1, 1, 1}, 1, TemporalFilter::bspline(3), id);
    cplx G = laplace(model, {-jay, -jay, -jay}, -jay / 20.0) * bspline_laplace(3, -jay / 20.0);
    cplx expected = 1e-3 / G;
    CHECK(std::abs(w.values.back()(0, 0) - expected) <= 1e-14 * std::abs(expected));
}

TEST_CASE("closed-form weight errors", "[weights]") {
    UniformGrid g{{3, 3}, {0.5, 0.5}, {0.0, 0.0}};
    Box box{{0, 0}, {1, 1}};
    auto net = SensorNetwork::uniform(g, box, 4, 1.0);
    auto id = DomainScaling::identity(2, 4.0);
    CHECK(kind_of([&] { uniform_coeffs(FieldModel::poisson2d(), net, {1, 1}, 0, TemporalFilter::none(), id); }) ==
          ErrorKind::Unsupported);
    auto scattered = SensorNetwork::scattered(net.positions, box, 4, 1.0);
    CHECK(kind_of([&] { uniform_coeffs(FieldModel::diffusion(2, 1.0), scattered, {1, 1}, 1, TemporalFilter::none(), id); }) ==
          ErrorKind::NotUniform);
    // |k| = r / (c T): k = (1, 0), r = 4, T = 4, c = 1
    CHECK(kind_of([&] { uniform_coeffs(FieldModel::wave(2, 1.0), net, {1, 0}, 4, TemporalFilter::none(), id); }) ==
          ErrorKind::PoleAtFrequency);
}

TEST_CASE("least-squares weights on a scalar system", "[weights]") {
    Box box{{0, 0, 0}, {1, 1, 1}};
    auto net = SensorNetwork::scattered({{0.0, 0.0, 0.0}}, box, 0, 1.0);
    DenseGrid grid{{{0.5, 0.0, 0.0}}, {0.0}};
    auto sc = DomainScaling::from_region(box, 1.0);
    auto w = ls_coeffs(FieldModel::poisson3d(), net, grid, {1, 0, 0}, 0, TemporalFilter::none(), sc);
    double g = -1.0 / (4.0 * pi * 0.5);
    for (size_t f = 0; f < w.num_k(); ++f) {
        Vec omega = spatial_frequency(w.shape, w.k_offset, sc, f);
        cplx psi = std::polar(1.0, omega[0] * 0.5);
        CHECK(std::abs(w.values[f](0, 0) - psi / g) < 1e-15);
    }
    CHECK_THAT(*w.condition_number, WithinAbs(1.0, 1e-15));
}

TEST_CASE("least-squares residual matches normal equations", "[weights][oracle]") {
    std::mt19937_64 rng(21);
    Box box{{0, 0, 0}, {0.3, 0.3, 0.3}};
    auto sensors = random_points(rng, 12, box);
    auto net = SensorNetwork::scattered(sensors, box, 0, 1.0);
    auto grid = lattice_grid({0.0, 0.0, 0.0}, {5, 5, 5}, {0.075, 0.075, 0.075}, 1e-4, {0.0});
    auto sc = DomainScaling::from_region(box, 1.0);
    auto w = ls_coeffs(FieldModel::poisson3d(), net, grid, {2, 2, 2}, 0, TemporalFilter::none(), sc);

    Eigen::MatrixXd G(grid.points.size(), sensors.size());
    for (size_t i = 0; i < grid.points.size(); ++i)
        for (size_t n = 0; n < sensors.size(); ++n) {
            double r2 = 0.0;
            for (int a = 0; a < 3; ++a) r2 += std::pow(sensors[n][a] - grid.points[i][a], 2);
            G(i, n) = -1.0 / (4.0 * pi * std::sqrt(r2));
        }
    Eigen::MatrixXd normal = G.transpose() * G;
    for (size_t f = 0; f < w.num_k(); ++f) {
        Vec omega = spatial_frequency(w.shape, w.k_offset, sc, f);
        Eigen::VectorXcd p(grid.points.size());
        for (size_t i = 0; i < grid.points.size(); ++i) {
            double ph = 0.0;
            for (int a = 0; a < 3; ++a) ph += omega[a] * grid.points[i][a];
            p[i] = std::polar(1.0, ph);
        }
        Eigen::VectorXcd w_ne = normal.cast<cplx>().ldlt().solve(G.transpose().cast<cplx>() * p);
        double res_ne = (G.cast<cplx>() * w_ne - p).norm() / p.norm();
        double res_ls = (G.cast<cplx>() * w.values[f].col(0) - p).norm() / p.norm();
        CHECK(std::abs(res_ls - res_ne) < 1e-8);
    }
}

TEST_CASE("least-squares Poisson conditioning on the 10x10x10 lattice", "[weights]") {
    std::mt19937_64 rng(2024);
    Box box{{0, 0, 0}, {0.27, 0.27, 0.27}};
    auto grid = lattice_grid({0.0, 0.0, 0.0}, {10, 10, 10}, {0.03, 0.03, 0.03}, 3e-5, {0.0});
    auto sc = DomainScaling::from_region(box, 1.0);
    for (int t = 0; t < 5; ++t) {
        auto net = SensorNetwork::scattered(random_points(rng, 27, box), box, 0, 1.0);
        auto w = ls_coeffs(FieldModel::poisson3d(), net, grid, {2, 2, 2}, 0, TemporalFilter::none(), sc);
        CHECK(*w.condition_number >= 10.0);
        CHECK(*w.condition_number <= 100.0);
        CHECK_FALSE(w.rank_deficient);
    }
}

TEST_CASE("least-squares square system reproduces on its own lattice", "[weights][property]") {
    Box box{{0, 0}, {1, 1}};
    UniformGrid g{{4, 4}, {1.0 / 3.0, 1.0 / 3.0}, {0.0, 0.0}};
    auto net = SensorNetwork::uniform(g, box, 0, 1.0);
    auto grid = lattice_grid(g.origin, g.counts, g.spacing, 1e-3 / 3.0, {0.0});
    auto sc = DomainScaling::from_region(box, 1.0);
    auto model = FieldModel::poisson2d();
    auto w = ls_coeffs(model, net, grid, {2, 2}, 0, TemporalFilter::none(), sc);
    for (size_t f = 0; f < w.num_k(); ++f) CHECK(reproduction_error(w, model, TemporalFilter::none(), net, sc, f, grid) < 1e-10);
}

TEST_CASE("reproduction error diagnostics", "[weights]") {
    Box box{{0, 0}, {1, 1}};
    UniformGrid g{{4, 4}, {1.0 / 3.0, 1.0 / 3.0}, {0.0, 0.0}};
    auto net = SensorNetwork::uniform(g, box, 0, 1.0);
    auto model = FieldModel::poisson2d();
    auto id = DomainScaling::identity(2, 1.0);
    auto grid = default_dense_grid(model, net);
    auto w = ls_coeffs(model, net, grid, {2, 4}, 0, TemporalFilter::none(), id);
    auto probe = lattice_grid({0.2, 0.2}, {7, 7}, {0.1, 0.1}, 1e-4, {0.0});
    for (int k2 : {2, 3, 4}) {
        size_t f = 2 * 5 + static_cast<size_t>(k2); // k = (2, k2)
        CHECK(reproduction_error(w, model, TemporalFilter::none(), net, id, f, probe) < 0.2);
    }
    WeightSet zero = w;
    for (auto& W : zero.values) W.setZero();
    CHECK_THAT(reproduction_error(zero, model, TemporalFilter::none(), net, id, 3, probe), WithinAbs(1.0, 1e-15));
}

TEST_CASE("closed-form reproduction improves as the grid is refined", "[weights][property]") {
    auto model = FieldModel::diffusion(1, 2.5e-4);
    auto h = TemporalFilter::bspline(3);
    Box box{{0.0}, {1.0}};
    auto probe = lattice_grid({0.3}, {9}, {0.05}, 1.234e-4, {1.0, 3.0, 5.0});
    double prev = 1e300;
    for (double dx : {0.04, 0.02, 0.01, 0.005}) {
        int n = static_cast<int>(std::lround(1.0 / dx)) + 1;
        auto net = SensorNetwork::uniform(UniformGrid{{n}, {dx}, {0.0}}, box, 20, 1.0);
        auto sc = DomainScaling::from_region(box, net.T());
        auto w = uniform_coeffs(model, net, {0}, 1, h, sc, {12});
        double e = reproduction_error(w, model, h, net, sc, 0, probe);
        CHECK(e < prev);
        prev = e;
    }
    CHECK(prev < 1e-2);
}

TEST_CASE("interpolate and resample", "[weights]") {
    SECTION("sensors on the target grid") {
        UniformGrid g{{3, 4}, {0.5, 1.0 / 3.0}, {0.0, 0.0}};
        Box box{{0, 0}, {1, 1}};
        auto nodes = g.nodes();
        std::mt19937_64 rng(1);
        std::shuffle(nodes.begin(), nodes.end(), rng);
        auto net = SensorNetwork::scattered(nodes, box, 2, 1.0);
        SampleMatrix s;
        s.values = Eigen::MatrixXd::Random(12, 3);
        auto out = interp_resample(s, net, g);
        for (size_t m = 0; m < 12; ++m) {
            auto it = std::find(nodes.begin(), nodes.end(), g.nodes()[m]);
            auto n = static_cast<Eigen::Index>(it - nodes.begin());
            CHECK((out.samples.values.row(static_cast<Eigen::Index>(m)) - s.values.row(n)).norm() < 1e-12);
        }
        CHECK(out.net.grid.has_value());
    }
    SECTION("1-D midpoint") {
        auto net = SensorNetwork::scattered({{1.0}, {0.0}}, Box{{0.0}, {1.0}}, 0, 1.0);
        SampleMatrix s;
        s.values = Eigen::MatrixXd{{2.0}, {0.0}};
        auto out = interp_resample(s, net, UniformGrid{{3}, {0.5}, {0.0}});
        CHECK_THAT(out.samples.values(1, 0), WithinAbs(1.0, 1e-15));
    }
    SECTION("smooth diffusion field from 41 scattered sensors") {
        std::mt19937_64 rng(41);
        // sensors cover a margin around the target grid so its edges are interpolated, not extended
        Box cover{{-0.15, -0.15}, {1.15, 1.15}};
        auto model = FieldModel::diffusion(2, 0.05);
        UniformGrid target{{30, 30}, {1.0 / 29.0, 1.0 / 29.0}, {0.0, 0.0}};
        auto field = [&](const Vec& x) { return eval_green(model, {x[0] - 0.45, x[1] - 0.55}, 20.0); };
        for (int trial = 0; trial < 10; ++trial) {
            auto pos = random_points(rng, 37, cover);
            for (const Vec& c : {Vec{-0.15, -0.15}, Vec{-0.15, 1.15}, Vec{1.15, -0.15}, Vec{1.15, 1.15}})
                pos.push_back(c);
            auto net = SensorNetwork::scattered(pos, cover, 0, 20.0);
            SampleMatrix s;
            s.values.resize(41, 1);
            for (int n = 0; n < 41; ++n) s.values(n, 0) = field(net.positions[n]);
            auto out = interp_resample(s, net, target);
            auto nodes = target.nodes();
            double fmax = 0.0;
            double err = 0.0;
            for (size_t m = 0; m < nodes.size(); ++m) {
                double truth = field(nodes[m]);
                fmax = std::max(fmax, truth);
                err = std::max(err, std::abs(out.samples.values(static_cast<Eigen::Index>(m), 0) - truth));
            }
            CHECK(err < 0.05 * fmax);
        }
    }
    SECTION("degenerate geometry") {
        auto net = SensorNetwork::scattered({{0.0, 0.0}, {0.5, 0.5}, {1.0, 1.0}}, Box::unit(2), 0, 1.0);
        SampleMatrix s;
        s.values = Eigen::MatrixXd::Ones(3, 1);
        CHECK(kind_of([&] { interp_resample(s, net, UniformGrid{{2, 2}, {1.0, 1.0}, {0.0, 0.0}}); }) ==
              ErrorKind::DegenerateGeometry);
    }
}

TEST_CASE("weight set JSON layout", "[weights]") {
    UniformGrid g{{2}, {0.5}, {0.0}};
    auto net = SensorNetwork::uniform(g, Box{{0.0}, {0.5}}, 1, 1.0);
    auto w = uniform_coeffs(FieldModel::diffusion(1, 1.0), net, {1}, 1, TemporalFilter::none(),
                            DomainScaling::identity(1, 1.0), {1});
    auto j = weights_to_json(w);
    CHECK(j["method"] == "closed_form");
    REQUIRE(j["entries"].size() == 2);
    CHECK(j["entries"][1]["k"][0] == 2);
    auto v = j["entries"][0]["values"][1][0];
    REQUIRE(v.is_array());
    CHECK(v.size() == 2);
    CHECK(v[0].get<double>() == w.values[0](1, 0).real());
    CHECK(v[1].get<double>() == w.values[0](1, 0).imag());
}
