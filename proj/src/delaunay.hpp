#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace pdesrc::detail {

// Simplices of a Delaunay triangulation of points in 2 or 3 dimensions (rows of `points`).
// Each simplex lists d+1 point indices.
std::vector<std::vector<int>> delaunay(const Eigen::MatrixXd& points);

// Barycentric coordinates of x in the simplex; empty optional result encoded as false.
bool barycentric(const Eigen::MatrixXd& points, const std::vector<int>& simplex, const Eigen::VectorXd& x,
                 Eigen::VectorXd& lambda);

} // namespace pdesrc::detail
