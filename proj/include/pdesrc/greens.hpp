#pragma once

#include <complex>
#include <vector>

namespace pdesrc {

using cplx = std::complex<double>;
using Vec = std::vector<double>;
using CVec = std::vector<cplx>;

enum class FieldKind { Poisson2D, Poisson3D, Diffusion, Wave };

struct FieldModel {
    FieldKind kind = FieldKind::Diffusion;
    int dim = 2;
    double mu = 1.0; // diffusivity
    double c = 1.0;  // wave speed

    static FieldModel poisson2d() { return {FieldKind::Poisson2D, 2, 0.0, 0.0}; }
    static FieldModel poisson3d() { return {FieldKind::Poisson3D, 3, 0.0, 0.0}; }
    static FieldModel diffusion(int d, double mu) { return {FieldKind::Diffusion, d, mu, 0.0}; }
    static FieldModel wave(int d, double c) { return {FieldKind::Wave, d, 0.0, c}; }

    bool is_static() const { return kind == FieldKind::Poisson2D || kind == FieldKind::Poisson3D; }
    void validate() const;
};

enum class FilterKind { None, BSpline };

struct TemporalFilter {
    FilterKind kind = FilterKind::None;
    int order = 3;

    static TemporalFilter none() { return {FilterKind::None, 0}; }
    static TemporalFilter bspline(int order) { return {FilterKind::BSpline, order}; }
    bool active() const { return kind == FilterKind::BSpline; }
    void validate() const;
};

const char* to_string(FieldKind kind);

double eval_bspline(int order, double t);
cplx bspline_laplace(int order, cplx s_t);

double eval_green(const FieldModel& model, const Vec& x, double t);
double eval_green_filtered(const FieldModel& model, const TemporalFilter& filter,
                           const Vec& x, double t);

// eval_green or eval_green_filtered depending on whether the filter is active.
double eval_green_effective(const FieldModel& model, const TemporalFilter& filter,
                            const Vec& x, double t);

cplx laplace(const FieldModel& model, const CVec& s_x, cplx s_t);

// Transform of the kernel actually sampled by the sensors, G(s_x, s_t) * H(s_t).
cplx laplace_effective(const FieldModel& model, const TemporalFilter& filter,
                       const CVec& s_x, cplx s_t);

} // namespace pdesrc
