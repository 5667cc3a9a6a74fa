#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spectrum/tensor.hpp"

namespace spectrum {

// All min(m,n) singular values of one weight matrix, descending.
struct SvdResult {
    std::vector<double> singular_values;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

// Noise-scale estimate and the Marchenko-Pastur-derived thresholds.
struct MpBounds {
    double sigma_estimate = 0.0;
    double beta = 1.0;          // min(m,n)/max(m,n)
    double epsilon = 0.0;       // sigma * (1 + sqrt(beta))
    double lambda_plus = 0.0;   // sigma^2 * (1 + sqrt(beta))^2
    double lambda_minus = 0.0;  // sigma^2 * (1 - sqrt(beta))^2
};

// Per-matrix partition of the singular spectrum at epsilon.
struct SnrResult {
    std::string tensor_name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double signal_sum = 0.0;          // sum of singular values > epsilon
    double noise_sum = 0.0;           // sum of singular values <= epsilon
    double raw_snr = 0.0;             // signal/noise; +inf when noise_sum == 0 and signal > 0
    double normalized_snr = 0.0;      // raw / sigma_1; +inf propagates; 0 when sigma_1 == 0
    double max_singular_value = 0.0;  // sigma_1
    MpBounds bounds;
    std::size_t signal_count = 0;
};

// Singular values of a dense real matrix, descending, all min(m,n) of them.
// Throws UsageError for empty matrices or non-finite entries.
SvdResult singular_values(const Eigen::MatrixXd& matrix);

// Robust noise-scale estimate: IQR of the singular values divided by
// 1.349 (the normal-consistency constant), quantiles by linear
// interpolation between order statistics.
double estimate_sigma(const SvdResult& svd);

// Marchenko-Pastur eigenvalue edges and the singular-value threshold,
// with the aspect ratio folded to beta = min(m,n)/max(m,n).
MpBounds mp_bounds(double sigma, std::size_t rows, std::size_t cols);

// Partitions the spectrum at bounds.epsilon (ties count as noise).
SnrResult snr(const std::string& matrix_name, const SvdResult& svd, const MpBounds& bounds);

// singular_values -> estimate_sigma -> mp_bounds -> snr on a 2-D record.
SnrResult analyze_matrix(const TensorRecord& record);

// Row-major float32 values -> column-major double matrix.
Eigen::MatrixXd record_to_matrix(const TensorRecord& record);

// Type-7 quantile (linear interpolation) of an unsorted sample; p in [0,1].
double quantile_linear(std::vector<double> values, double p);

} // namespace spectrum
