#pragma once

#include "flas/analysis/geometry.hpp"

#include <vector>

namespace flas::analysis {

struct PcaModel {
    std::vector<double> mean;                 // [d]
    Matrix components;                        // k x d, unit rows
    std::vector<double> explained_variance;   // eigenvalues, non-increasing
    std::vector<double> explained_ratio;      // eigenvalue / total variance
    std::size_t rank = 0;
};

// Eigendecomposition of the sample covariance of `points` (n x d). Each
// component's largest-magnitude loading is positive. Asking for more
// components than the numerical rank returns rank components and warns.
PcaModel pca_fit(const Matrix& points, std::size_t k);

// Centred projections onto the fitted components, n x k.
Matrix pca_project(const PcaModel& model, const Matrix& points);

}  // namespace flas::analysis
