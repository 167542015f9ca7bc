#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flas::analysis {

struct ScoreTriple {
    double C = 0.0;  // concept incorporation
    double I = 0.0;  // instruction following
    double F = 0.0;  // fluency
};

// 3 / (1/C + 1/I + 1/F); 0 when any score is 0.
double hmean(const ScoreTriple& s);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Percentile bootstrap CI of the mean, resampling values with replacement.
Interval bootstrap_ci(const std::vector<double>& values, std::size_t resamples = 10000, double level = 0.95,
                      std::uint64_t seed = 0);

struct PairedT {
    double t = 0.0;
    double p = 1.0;
    std::size_t df = 0;
    bool degenerate = false;  // differences have zero variance
};

// Two-sided paired t-test on a[i] - b[i].
PairedT paired_t(const std::vector<double>& a, const std::vector<double>& b);

struct VarianceDecomposition {
    double sigma_samp = 0.0;    // std over all samples
    double sigma_conc = 0.0;    // std of concept means
    double sigma_within = 0.0;  // mean of per-concept stds
    double residual = 0.0;      // sigma_samp^2 - (sigma_conc^2 + sigma_within^2)
};

// scores[c][p]: value of prompt p under concept c. Sample (n-1) stds.
VarianceDecomposition variance_decomposition(const std::vector<std::vector<double>>& scores);

double mean_of(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);

// Tab-separated table whose first line is "# " followed by the column names.
void write_table(const std::filesystem::path& path, const std::vector<std::string>& columns,
                 const std::vector<std::vector<std::string>>& rows);

}  // namespace flas::analysis
