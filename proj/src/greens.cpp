#include "pdesrc/greens.hpp"
#include "pdesrc/error.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace pdesrc {

namespace {

constexpr double pi = std::numbers::pi;
constexpr double quad_tol = 1e-10;

double norm2(const Vec& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

void check_dim(const FieldModel& model, const Vec& x) {
    if (static_cast<int>(x.size()) != model.dim)
        fail(ErrorKind::ShapeError, "point has " + std::to_string(x.size()) +
                                        " coordinates, model dimension is " + std::to_string(model.dim));
}

double diffusion_kernel(int d, double mu, double r2, double s) {
    if (s <= 0.0) return 0.0;
    if (r2 == 0.0) return std::pow(4.0 * pi * mu * s, -0.5 * d);
    return std::exp(-0.5 * d * std::log(4.0 * pi * mu * s) - r2 / (4.0 * mu * s));
}

// Integrates f(s) * h(t - s) over s in (lo, t], splitting at the B-spline knots so
// every piece is smooth apart from possible endpoint singularities of f.
template <class F>
double convolve_with_bspline(int order, double t, double lo, F&& f, double extra_split = -1.0) {
    static thread_local boost::math::quadrature::tanh_sinh<double> integrator(12);
    std::vector<double> cuts{lo};
    for (int i = order + 1; i >= 0; --i) {
        double s = t - i;
        if (s > lo && s < t) cuts.push_back(s);
    }
    if (extra_split > lo && extra_split < t) {
        // the kernel peaks at extra_split and then decays like a power of s; geometric panels keep each piece smooth
        for (double s = extra_split; s < t; s *= 8.0) cuts.push_back(s);
    }
    cuts.push_back(t);
    std::sort(cuts.begin(), cuts.end());
    const double merge = 1e-12 * std::max(1.0, std::abs(t));
    cuts.erase(std::unique(cuts.begin(), cuts.end(), [&](double a, double b) { return b - a <= merge; }), cuts.end());
    cuts.back() = t;

    double total = 0.0;
    double total_err = 0.0;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        double a = cuts[i];
        double b = cuts[i + 1];
        if (b - a <= 0.0) continue;
        double err = 0.0;
        double l1 = 0.0;
        // mapped onto [0, 1] so narrow panels near s = 0 keep meaningful error estimates
        const double w = b - a;
        auto integrand = [&](double u) {
            double s = a + w * u;
            return w * f(s) * eval_bspline(order, t - s);
        };
        double piece = integrator.integrate(integrand, 0.0, 1.0, 1e-13, &err, &l1);
        if (!std::isfinite(piece))
            fail(ErrorKind::QuadratureFailure, "non-finite value while convolving with the B-spline");
        total += piece;
        total_err += err;
    }
    if (total_err > quad_tol * std::max(1.0, std::abs(total)))
        fail(ErrorKind::QuadratureFailure,
             "filtered kernel quadrature error estimate " + std::to_string(total_err) + " above tolerance");
    return total;
}

// Filtered 2-D wave kernel. With s = r/c + v^2 the wavefront singularity cancels and
// the integrand becomes -h(t - s) / (pi sqrt(2 r/c + v^2)), smooth between spline knots.
double wave2_filtered(int order, double t, double arrival) {
    static thread_local boost::math::quadrature::tanh_sinh<double> integrator(12);
    double lo = std::max(arrival, t - (order + 1.0));
    std::vector<double> cuts{std::sqrt(lo - arrival)};
    for (int i = order + 1; i >= 0; --i) {
        double s = t - i;
        if (s > lo && s < t) cuts.push_back(std::sqrt(s - arrival));
    }
    cuts.push_back(std::sqrt(t - arrival));
    double total = 0.0;
    double total_err = 0.0;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        double a = cuts[i];
        double b = cuts[i + 1];
        if (b - a <= 0.0) continue;
        double err = 0.0;
        auto integrand = [&](double v) {
            double v2 = v * v;
            return -eval_bspline(order, t - arrival - v2) / (pi * std::sqrt(2.0 * arrival + v2));
        };
        total += integrator.integrate(integrand, a, b, 1e-13, &err);
        total_err += err;
    }
    if (!std::isfinite(total) || total_err > quad_tol * std::max(1.0, std::abs(total)))
        fail(ErrorKind::QuadratureFailure, "filtered wave kernel quadrature did not converge");
    return total;
}

} // namespace

const char* to_string(FieldKind kind) {
    switch (kind) {
    case FieldKind::Poisson2D: return "Poisson2D";
    case FieldKind::Poisson3D: return "Poisson3D";
    case FieldKind::Diffusion: return "Diffusion";
    case FieldKind::Wave: return "Wave";
    }
    return "Unknown";
}

void FieldModel::validate() const {
    switch (kind) {
    case FieldKind::Poisson2D:
        if (dim != 2) fail(ErrorKind::InvalidArgument, "Poisson2D requires dimension 2");
        break;
    case FieldKind::Poisson3D:
        if (dim != 3) fail(ErrorKind::InvalidArgument, "Poisson3D requires dimension 3");
        break;
    case FieldKind::Diffusion:
        if (dim < 1) fail(ErrorKind::InvalidArgument, "diffusion dimension must be positive");
        if (!(mu > 0.0)) fail(ErrorKind::InvalidArgument, "diffusivity must be positive");
        break;
    case FieldKind::Wave:
        if (dim != 2 && dim != 3) fail(ErrorKind::InvalidArgument, "wave dimension must be 2 or 3");
        if (!(c > 0.0)) fail(ErrorKind::InvalidArgument, "wave speed must be positive");
        break;
    }
}

void TemporalFilter::validate() const {
    if (kind == FilterKind::BSpline && (order < 0 || order > 7))
        fail(ErrorKind::InvalidArgument, "B-spline order must be in [0, 7]");
}

double eval_bspline(int order, double t) {
    if (order < 0) fail(ErrorKind::InvalidArgument, "negative B-spline order");
    if (t < 0.0 || t >= order + 1.0) return 0.0;
    if (order == 0) return 1.0;
    // Cox-de Boor recursion on the integer knots 0..order+1.
    double n = order;
    return (t * eval_bspline(order - 1, t) + (n + 1.0 - t) * eval_bspline(order - 1, t - 1.0)) / n;
}

cplx bspline_laplace(int order, cplx s_t) {
    if (order < 0) fail(ErrorKind::InvalidArgument, "negative B-spline order");
    cplx base;
    if (std::abs(s_t) < 1e-4) {
        // (1 - e^{-s})/s = 1 - s/2 + s^2/6 - s^3/24 + ...
        base = 1.0 - s_t / 2.0 + s_t * s_t / 6.0 - s_t * s_t * s_t / 24.0;
    } else {
        base = (1.0 - std::exp(-s_t)) / s_t;
    }
    cplx out = base;
    for (int i = 0; i < order; ++i) out *= base;
    return out;
}

double eval_green(const FieldModel& model, const Vec& x, double t) {
    check_dim(model, x);
    double r2 = norm2(x);
    double r = std::sqrt(r2);
    switch (model.kind) {
    case FieldKind::Poisson2D:
        if (r == 0.0) fail(ErrorKind::SingularPoint, "Poisson2D Green's function at the origin");
        return std::log(r) / (2.0 * pi);
    case FieldKind::Poisson3D:
        if (r == 0.0) fail(ErrorKind::SingularPoint, "Poisson3D Green's function at the origin");
        return -1.0 / (4.0 * pi * r);
    case FieldKind::Diffusion:
        return diffusion_kernel(model.dim, model.mu, r2, t);
    case FieldKind::Wave:
        if (model.dim == 3)
            fail(ErrorKind::SingularPoint, "3-D wave Green's function is a temporal delta; use a filter");
        {
            double ct = model.c * t;
            if (ct == r) fail(ErrorKind::SingularPoint, "2-D wave Green's function on the wavefront");
            if (ct < r) return 0.0;
            return -model.c / (2.0 * pi * std::sqrt(ct * ct - r2));
        }
    }
    return 0.0;
}

double eval_green_filtered(const FieldModel& model, const TemporalFilter& filter, const Vec& x, double t) {
    if (!filter.active()) return eval_green(model, x, t);
    filter.validate();
    check_dim(model, x);
    const int order = filter.order;
    double r2 = norm2(x);
    double r = std::sqrt(r2);
    switch (model.kind) {
    case FieldKind::Poisson2D:
    case FieldKind::Poisson3D:
        fail(ErrorKind::Unsupported, "temporal filtering applies to dynamic fields only");
    case FieldKind::Diffusion: {
        double lo = std::max(0.0, t - (order + 1.0));
        if (t <= 0.0) return 0.0;
        if (r == 0.0 && model.dim >= 2 && eval_bspline(order, t) != 0.0)
            fail(ErrorKind::SingularPoint, "filtered diffusion kernel diverges at the source location");
        const int d = model.dim;
        const double mu = model.mu;
        auto f = [&](double s) { return diffusion_kernel(d, mu, r2, s); };
        return convolve_with_bspline(order, t, lo, f, r2 / (2.0 * d * mu));
    }
    case FieldKind::Wave: {
        if (r == 0.0) fail(ErrorKind::SingularPoint, "filtered wave kernel at the source location");
        double arrival = r / model.c;
        if (model.dim == 3) return -eval_bspline(order, t - arrival) / (4.0 * pi * r);
        if (t <= arrival) return 0.0;
        return wave2_filtered(order, t, arrival);
    }
    }
    return 0.0;
}

double eval_green_effective(const FieldModel& model, const TemporalFilter& filter, const Vec& x, double t) {
    return filter.active() ? eval_green_filtered(model, filter, x, t) : eval_green(model, x, t);
}

cplx laplace(const FieldModel& model, const CVec& s_x, cplx s_t) {
    if (static_cast<int>(s_x.size()) != model.dim)
        fail(ErrorKind::ShapeError, "s_x length does not match the model dimension");
    cplx sum_sq = 0.0;
    double scale = std::abs(s_t) * std::abs(s_t);
    for (const cplx& s : s_x) {
        sum_sq += s * s;
        scale += std::norm(s);
    }
    switch (model.kind) {
    case FieldKind::Poisson2D:
    case FieldKind::Poisson3D:
        fail(ErrorKind::Unsupported, "no closed-form Laplace transform for Poisson fields");
    case FieldKind::Diffusion: {
        cplx den = s_t - model.mu * sum_sq;
        if (!(den.real() > 0.0)) fail(ErrorKind::OutsideROC, "diffusion transform outside its region of convergence");
        return 1.0 / den;
    }
    case FieldKind::Wave: {
        cplx den = sum_sq - (s_t / model.c) * (s_t / model.c);
        if (std::abs(den) <= 1e-13 * std::max(1.0, scale))
            fail(ErrorKind::PoleEvaluation, "wave transform evaluated on its pole");
        return 1.0 / den;
    }
    }
    return 0.0;
}

cplx laplace_effective(const FieldModel& model, const TemporalFilter& filter, const CVec& s_x, cplx s_t) {
    cplx g = laplace(model, s_x, s_t);
    return filter.active() ? g * bspline_laplace(filter.order, s_t) : g;
}

} // namespace pdesrc
