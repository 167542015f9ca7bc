#include "flas/analysis/pca.hpp"

#include "flas/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <iostream>

namespace flas::analysis {

PcaModel pca_fit(const Matrix& points, std::size_t k) {
    const std::size_t n = points.rows, d = points.cols;
    if (k == 0) throw UsageError("pca_fit: k must be >= 1");
    if (n < k + 1) throw DataError("pca_fit: need at least k+1 points");
    Eigen::MatrixXd X(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) X(i, j) = points(i, j);
    }
    const Eigen::RowVectorXd mu = X.colwise().mean();
    X.rowwise() -= mu;
    const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("pca_fit: eigendecomposition failed");
    const Eigen::VectorXd evals = solver.eigenvalues();   // ascending
    const Eigen::MatrixXd evecs = solver.eigenvectors();

    double total = 0.0;
    for (Eigen::Index i = 0; i < evals.size(); ++i) total += std::max(0.0, evals(i));
    const double top = std::max(0.0, evals(evals.size() - 1));
    const double tol = top * 1e-12 * static_cast<double>(std::max(n, d));
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < evals.size(); ++i) rank += evals(i) > tol;

    PcaModel m;
    m.mean.assign(mu.data(), mu.data() + d);
    m.rank = rank;
    std::size_t keep = k;
    if (k > rank) {
        std::cerr << "warning: pca_fit asked for " << k << " components but rank is " << rank << "\n";
        keep = std::max<std::size_t>(rank, 1);
    }
    m.components = Matrix(keep, d);
    for (std::size_t c = 0; c < keep; ++c) {
        const Eigen::Index idx = static_cast<Eigen::Index>(d - 1 - c);
        Eigen::VectorXd v = evecs.col(idx);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        for (std::size_t j = 0; j < d; ++j) m.components(c, j) = v(static_cast<Eigen::Index>(j));
        const double ev = std::max(0.0, evals(idx));
        m.explained_variance.push_back(ev);
        m.explained_ratio.push_back(total > 0.0 ? ev / total : 0.0);
    }
    return m;
}

Matrix pca_project(const PcaModel& model, const Matrix& points) {
    const std::size_t d = model.mean.size();
    if (points.cols != d) throw DimensionError("pca_project: point width does not match the fit");
    Matrix out(points.rows, model.components.rows);
    for (std::size_t i = 0; i < points.rows; ++i) {
        for (std::size_t c = 0; c < model.components.rows; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += (points(i, j) - model.mean[j]) * model.components(c, j);
            out(i, c) = s;
        }
    }
    return out;
}

}  // namespace flas::analysis
