#include "pdesrc/esprit.hpp"
#include "pdesrc/error.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace pdesrc {

namespace {

size_t flat_of(const std::vector<int>& shape, const std::vector<int>& idx) {
    size_t f = 0;
    for (size_t i = 0; i < shape.size(); ++i) f = f * shape[i] + static_cast<size_t>(idx[i]);
    return f;
}

void check_levels(const std::vector<int>& shape, const std::vector<int>& L) {
    if (L.size() != shape.size()) fail(ErrorKind::ShapeError, "level vector length does not match the tensor");
    for (size_t i = 0; i < shape.size(); ++i)
        if (L[i] < 1 || L[i] > shape[i])
            fail(ErrorKind::ShapeError, "level size L_" + std::to_string(i + 1) + " out of range");
}

std::vector<int> col_shape(const std::vector<int>& shape, const std::vector<int>& L) {
    std::vector<int> J(shape.size());
    for (size_t i = 0; i < shape.size(); ++i) J[i] = shape[i] - L[i] + 1;
    return J;
}

Eigen::MatrixXcd svd_u(const Eigen::MatrixXcd& H, Eigen::VectorXd& sv) {
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(H, Eigen::ComputeThinU);
    sv = svd.singularValues();
    return svd.matrixU();
}

double matrix_condition(const Eigen::MatrixXcd& A) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A);
    const auto& s = svd.singularValues();
    double smin = s[s.size() - 1];
    return smin > 0.0 ? s[0] / smin : std::numeric_limits<double>::infinity();
}

} // namespace

std::vector<int> default_levels(const std::vector<int>& shape) {
    std::vector<int> L(shape.size());
    for (size_t i = 0; i < shape.size(); ++i) L[i] = std::min(shape[i], shape[i] / 2 + 1);
    return L;
}

Eigen::MatrixXcd build_multilevel_hankel(const MeasurementTensor& Q, const std::vector<int>& L) {
    check_levels(Q.shape, L);
    auto J = col_shape(Q.shape, L);
    const size_t rows = shape_size(L);
    const size_t cols = shape_size(J);
    const size_t d = Q.shape.size();
    Eigen::MatrixXcd H(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::vector<int> k(d);
    for (size_t c = 0; c < cols; ++c) {
        auto j = unflatten(J, c);
        for (size_t r = 0; r < rows; ++r) {
            auto l = unflatten(L, r);
            for (size_t i = 0; i < d; ++i) k[i] = l[i] + j[i];
            H(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = Q.values[static_cast<Eigen::Index>(flat_of(Q.shape, k))];
        }
    }
    return H;
}

MeasurementTensor tensor_from_hankel(const Eigen::MatrixXcd& H, const MeasurementTensor& like, const std::vector<int>& L) {
    check_levels(like.shape, L);
    auto J = col_shape(like.shape, L);
    const size_t rows = shape_size(L);
    const size_t cols = shape_size(J);
    if (static_cast<size_t>(H.rows()) != rows || static_cast<size_t>(H.cols()) != cols)
        fail(ErrorKind::ShapeError, "matrix shape does not match the multilevel Hankel layout");
    MeasurementTensor out = like;
    out.values.setZero();
    std::vector<int> count(like.size(), 0);
    const size_t d = like.shape.size();
    std::vector<int> k(d);
    for (size_t c = 0; c < cols; ++c) {
        auto j = unflatten(J, c);
        for (size_t r = 0; r < rows; ++r) {
            auto l = unflatten(L, r);
            for (size_t i = 0; i < d; ++i) k[i] = l[i] + j[i];
            size_t f = flat_of(like.shape, k);
            out.values[static_cast<Eigen::Index>(f)] += H(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            ++count[f];
        }
    }
    for (size_t f = 0; f < like.size(); ++f)
        if (count[f] > 0) out.values[static_cast<Eigen::Index>(f)] /= static_cast<double>(count[f]);
    return out;
}

AmplitudeFit amplitude_ls(const MeasurementTensor& Q, const Eigen::MatrixXcd& frequencies) {
    const Eigen::Index M = frequencies.rows();
    const int d = Q.dim();
    if (frequencies.cols() != d) fail(ErrorKind::ShapeError, "frequency matrix has the wrong number of columns");
    std::vector<size_t> used;
    for (size_t f = 0; f < Q.size(); ++f)
        if (Q.excluded.empty() || !Q.excluded[f]) used.push_back(f);
    Eigen::MatrixXcd V(static_cast<Eigen::Index>(used.size()), M);
    Eigen::VectorXcd y(static_cast<Eigen::Index>(used.size()));
    for (size_t row = 0; row < used.size(); ++row) {
        auto k = Q.actual(used[row]);
        for (Eigen::Index m = 0; m < M; ++m) {
            cplx p = 1.0;
            for (int i = 0; i < d; ++i) p *= std::pow(frequencies(m, i), k[i]);
            V(static_cast<Eigen::Index>(row), m) = p;
        }
        y[static_cast<Eigen::Index>(row)] = Q.values[static_cast<Eigen::Index>(used[row])];
    }
    AmplitudeFit fit;
    fit.condition_number = matrix_condition(V);
    if (!std::isfinite(fit.condition_number) || fit.condition_number > 1e12)
        fail(ErrorKind::IllConditionedVandermonde,
             "Vandermonde system condition number " + std::to_string(fit.condition_number));
    fit.amplitudes = V.colPivHouseholderQr().solve(y);
    return fit;
}

HarmonicEstimate nd_esprit(const MeasurementTensor& Q, int M, std::vector<int> L, std::uint64_t seed,
                           const EspritOptions& opts) {
    const int d = Q.dim();
    if (L.empty()) L = default_levels(Q.shape);
    check_levels(Q.shape, L);
    auto J = col_shape(Q.shape, L);
    if (M < 1) fail(ErrorKind::OrderTooLarge, "model order must be at least 1");
    if (shape_size(L) < static_cast<size_t>(M) || shape_size(J) < static_cast<size_t>(M))
        fail(ErrorKind::OrderTooLarge, "Hankel matrix too small for " + std::to_string(M) + " components");
    for (int i = 0; i < d; ++i) {
        if (Q.shape[i] - 1 < 2 * M - 1)
            fail(ErrorKind::OrderTooLarge, "K_" + std::to_string(i + 1) + " must be at least 2M - 1");
        if (L[i] < 2) fail(ErrorKind::ShapeError, "every level size must be at least 2 for the shift equations");
    }

    HarmonicEstimate est;
    est.M = M;
    Eigen::MatrixXcd H = build_multilevel_hankel(Q, L);
    Eigen::MatrixXcd U = svd_u(H, est.singular_values).leftCols(M);

    std::vector<Eigen::MatrixXcd> F(d);
    for (int i = 0; i < d; ++i) {
        std::vector<int> Lu = L;
        Lu[i] -= 1;
        const size_t rows = shape_size(Lu);
        Eigen::MatrixXcd Uu(static_cast<Eigen::Index>(rows), M);
        Eigen::MatrixXcd Uo(static_cast<Eigen::Index>(rows), M);
        for (size_t r = 0; r < rows; ++r) {
            auto l = unflatten(Lu, r);
            Uu.row(static_cast<Eigen::Index>(r)) = U.row(static_cast<Eigen::Index>(flat_of(L, l)));
            l[i] += 1;
            Uo.row(static_cast<Eigen::Index>(r)) = U.row(static_cast<Eigen::Index>(flat_of(L, l)));
        }
        F[i] = Uu.completeOrthogonalDecomposition().solve(Uo);
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int attempt = 1; attempt <= opts.max_attempts; ++attempt) {
        Eigen::VectorXd beta(d);
        for (int i = 0; i < d; ++i) beta[i] = normal(rng);
        beta /= beta.norm();
        Eigen::MatrixXcd Kmat = Eigen::MatrixXcd::Zero(M, M);
        for (int i = 0; i < d; ++i) Kmat += beta[i] * F[i];
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Kmat);
        if (es.info() != Eigen::Success) continue;
        Eigen::MatrixXcd T = es.eigenvectors();
        double cond = matrix_condition(T);
        est.attempts = attempt;
        est.eigvec_condition = cond;
        if (!(cond <= opts.eigvec_condition_limit)) continue;
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(T);
        est.frequencies.resize(M, d);
        for (int i = 0; i < d; ++i) {
            Eigen::MatrixXcd Di = lu.solve(F[i] * T);
            for (int m = 0; m < M; ++m) est.frequencies(m, i) = Di(m, m);
        }
        est.in_band.assign(M, true);
        for (int m = 0; m < M; ++m)
            for (int i = 0; i < d; ++i) {
                double mod = std::abs(est.frequencies(m, i));
                if (mod < 1.0 - opts.sanity_band || mod > 1.0 + opts.sanity_band) est.in_band[m] = false;
            }
        AmplitudeFit fit = amplitude_ls(Q, est.frequencies);
        est.amplitudes = fit.amplitudes;
        est.vandermonde_condition = fit.condition_number;
        return est;
    }
    fail(ErrorKind::DefectiveEigensystem, "eigenvector matrix stayed ill-conditioned after " +
                                              std::to_string(opts.max_attempts) + " random combinations");
}

Eigen::MatrixXcd denoise_cadzow(const Eigen::MatrixXcd& H, int M, const std::vector<int>& shape,
                                const std::vector<int>& L, int max_iter, const Eigen::VectorXd* entry_scale) {
    check_levels(shape, L);
    auto J = col_shape(shape, L);
    if (static_cast<size_t>(H.rows()) != shape_size(L) || static_cast<size_t>(H.cols()) != shape_size(J))
        fail(ErrorKind::ShapeError, "matrix shape does not match the multilevel Hankel layout");
    if (entry_scale && static_cast<size_t>(entry_scale->size()) != shape_size(shape))
        fail(ErrorKind::ShapeError, "whitening scale has the wrong length");

    MeasurementTensor like;
    like.shape = shape;
    like.values = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(shape_size(shape)));
    like.excluded.assign(shape_size(shape), false);

    Eigen::MatrixXd scale;
    if (entry_scale) {
        MeasurementTensor s = like;
        s.values = entry_scale->cast<cplx>();
        scale = build_multilevel_hankel(s, L).real();
    }

    Eigen::MatrixXcd cur = H;
    const double ref = std::max(H.norm(), std::numeric_limits<double>::min());
    const Eigen::Index rank = std::min<Eigen::Index>(M, std::min(H.rows(), H.cols()));
    for (int it = 0; it < max_iter; ++it) {
        Eigen::MatrixXcd work = entry_scale ? Eigen::MatrixXcd(cur.cwiseQuotient(scale.cast<cplx>())) : cur;
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(work, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Eigen::MatrixXcd low = svd.matrixU().leftCols(rank) *
                               svd.singularValues().head(rank).cast<cplx>().asDiagonal() *
                               svd.matrixV().leftCols(rank).adjoint();
        if (entry_scale) low = low.cwiseProduct(scale.cast<cplx>());
        Eigen::MatrixXcd structured = build_multilevel_hankel(tensor_from_hankel(low, like, L), L);
        double gap = (structured - low).norm();
        cur = std::move(structured);
        if (gap < 1e-10 * ref) break;
    }
    return cur;
}

} // namespace pdesrc
