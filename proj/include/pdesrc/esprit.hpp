#pragma once

#include "pdesrc/forward.hpp"

#include <cstdint>

namespace pdesrc {

struct HarmonicEstimate {
    int M = 0;
    Eigen::VectorXcd amplitudes;  // c'_m, referred to actual index k = 0
    Eigen::MatrixXcd frequencies; // M x d, v_{i,m}
    std::vector<bool> in_band;    // |v_{i,m}| within the sanity band for every i
    Eigen::VectorXd singular_values;
    double eigvec_condition = 0.0;
    double vandermonde_condition = 0.0;
    int attempts = 0;
};

struct EspritOptions {
    double sanity_band = 0.2;
    double eigvec_condition_limit = 1e10;
    int max_attempts = 5;
};

std::vector<int> default_levels(const std::vector<int>& shape);

Eigen::MatrixXcd build_multilevel_hankel(const MeasurementTensor& Q, const std::vector<int>& L);

// Averages every constant-index orbit of a multilevel Hankel matrix back into a tensor.
MeasurementTensor tensor_from_hankel(const Eigen::MatrixXcd& H, const MeasurementTensor& like, const std::vector<int>& L);

HarmonicEstimate nd_esprit(const MeasurementTensor& Q, int M, std::vector<int> L = {}, std::uint64_t seed = 0,
                           const EspritOptions& opts = {});

struct AmplitudeFit {
    Eigen::VectorXcd amplitudes;
    double condition_number = 0.0;
};

AmplitudeFit amplitude_ls(const MeasurementTensor& Q, const Eigen::MatrixXcd& frequencies);

// Alternates rank-M truncation and multilevel-Hankel averaging. When `entry_scale` is given
// (one positive value per tensor entry), truncation is done on the entry-whitened matrix.
Eigen::MatrixXcd denoise_cadzow(const Eigen::MatrixXcd& H, int M, const std::vector<int>& shape,
                                const std::vector<int>& L, int max_iter = 10,
                                const Eigen::VectorXd* entry_scale = nullptr);

} // namespace pdesrc
