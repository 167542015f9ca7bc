#pragma once

#include "flas/analysis/trajectory.hpp"

#include <span>
#include <vector>

namespace flas::analysis {

// Row-major dense matrix used for analysis outputs.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

double cosine(std::span<const double> a, std::span<const double> b, bool* zero_norm = nullptr);

// Each state mean-pooled over the analysed rows, minus pooled h_0.
// Shape (N+1) x d with row 0 exactly zero.
Matrix pooled_displacement_path(const TrajectoryRecord& rec);

struct StepCosines {
    Matrix cosine;                   // N x N
    std::vector<double> mean_norm;   // mean ||v_k|| per step
    std::size_t samples = 0;         // (record, position) pairs
    std::size_t skipped_pairs = 0;   // zero-norm velocity pairs left out
};

// Cosine between the velocities of steps i and j at the same position,
// averaged over records and analysed positions. Records must share N and T.
StepCosines step_cosine_matrix(const std::vector<TrajectoryRecord>& records);

struct PerTokenCosines {
    Matrix cosine;  // P x P over analysed positions, index 0 = first analysed row
    double mean = 0.0;
    double stddev = 0.0;  // population std of off-diagonal entries
    std::size_t off_diagonal = 0;
    std::size_t skipped_pairs = 0;
};

// Pairwise cosines of total displacements h_N - h_0 between positions.
PerTokenCosines per_token_displacement_cosines(const TrajectoryRecord& rec);

}  // namespace flas::analysis
