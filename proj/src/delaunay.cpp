#include "delaunay.hpp"
#include "pdesrc/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace pdesrc::detail {

namespace {

struct Cell {
    std::vector<int> v;
    Eigen::VectorXd center;
    double radius2 = 0.0;
    bool alive = true;
};

bool circumsphere(const Eigen::MatrixXd& pts, Cell& cell) {
    const int d = static_cast<int>(pts.cols());
    Eigen::MatrixXd A(d, d);
    Eigen::VectorXd b(d);
    Eigen::VectorXd p0 = pts.row(cell.v[0]).transpose();
    for (int i = 0; i < d; ++i) {
        Eigen::VectorXd pi = pts.row(cell.v[i + 1]).transpose();
        A.row(i) = 2.0 * (pi - p0).transpose();
        b[i] = pi.squaredNorm() - p0.squaredNorm();
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) return false;
    cell.center = lu.solve(b);
    cell.radius2 = (cell.center - p0).squaredNorm();
    return std::isfinite(cell.radius2);
}

} // namespace

std::vector<std::vector<int>> delaunay(const Eigen::MatrixXd& points) {
    const int n = static_cast<int>(points.rows());
    const int d = static_cast<int>(points.cols());
    if (d < 2 || d > 3) fail(ErrorKind::InvalidArgument, "triangulation supports d = 2 or 3");
    if (n < d + 1) fail(ErrorKind::DegenerateGeometry, "too few sensors to triangulate");

    Eigen::RowVectorXd lo = points.colwise().minCoeff();
    Eigen::RowVectorXd hi = points.colwise().maxCoeff();
    Eigen::RowVectorXd span = (hi - lo).cwiseMax(1e-300);
    Eigen::MatrixXd pts(n + d + 1, d);
    for (int i = 0; i < n; ++i) {
        pts.row(i) = (points.row(i) - lo).cwiseQuotient(span);
        // Deterministic sub-nanometre jitter breaks ties between co-spherical lattice points.
        for (int j = 0; j < d; ++j) pts(i, j) += 1e-10 * std::sin(12.9898 * (i + 1) + 78.233 * (j + 1));
    }

    Eigen::MatrixXd centered = pts.topRows(n).rowwise() - pts.topRows(n).colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    if (svd.singularValues()[d - 1] < 1e-8 * std::max(1.0, svd.singularValues()[0]))
        fail(ErrorKind::DegenerateGeometry, "sensors are collinear or coplanar");

    const double S = 100.0;
    pts.row(n) = Eigen::RowVectorXd::Constant(d, -S);
    for (int j = 0; j < d; ++j) {
        pts.row(n + 1 + j) = Eigen::RowVectorXd::Constant(d, -S);
        pts(n + 1 + j, j) += S * (d + 2);
    }

    std::vector<Cell> cells;
    Cell super;
    for (int j = 0; j <= d; ++j) super.v.push_back(n + j);
    circumsphere(pts, super);
    cells.push_back(super);

    for (int p = 0; p < n; ++p) {
        Eigen::VectorXd x = pts.row(p).transpose();
        std::map<std::vector<int>, int> facets;
        for (auto& c : cells) {
            if (!c.alive) continue;
            if ((c.center - x).squaredNorm() < c.radius2 * (1.0 + 1e-12)) {
                c.alive = false;
                for (int skip = 0; skip <= d; ++skip) {
                    std::vector<int> f;
                    for (int j = 0; j <= d; ++j)
                        if (j != skip) f.push_back(c.v[j]);
                    std::sort(f.begin(), f.end());
                    ++facets[f];
                }
            }
        }
        for (const auto& [f, count] : facets) {
            if (count != 1) continue;
            Cell nc;
            nc.v = f;
            nc.v.push_back(p);
            if (circumsphere(pts, nc)) cells.push_back(std::move(nc));
        }
        cells.erase(std::remove_if(cells.begin(), cells.end(), [](const Cell& c) { return !c.alive; }), cells.end());
    }

    std::vector<std::vector<int>> out;
    for (const auto& c : cells) {
        if (std::all_of(c.v.begin(), c.v.end(), [n](int v) { return v < n; })) out.push_back(c.v);
    }
    if (out.empty()) fail(ErrorKind::DegenerateGeometry, "triangulation produced no simplices");
    return out;
}

bool barycentric(const Eigen::MatrixXd& points, const std::vector<int>& simplex, const Eigen::VectorXd& x,
                 Eigen::VectorXd& lambda) {
    const int d = static_cast<int>(points.cols());
    Eigen::MatrixXd A(d, d);
    Eigen::VectorXd p0 = points.row(simplex[0]).transpose();
    for (int j = 0; j < d; ++j) A.col(j) = points.row(simplex[j + 1]).transpose() - p0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) return false;
    Eigen::VectorXd mu = lu.solve(x - p0);
    lambda.resize(d + 1);
    lambda[0] = 1.0 - mu.sum();
    lambda.tail(d) = mu;
    return lambda.minCoeff() >= -1e-10;
}

} // namespace pdesrc::detail
