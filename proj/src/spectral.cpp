#include "spectrum/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "spectrum/errors.hpp"

namespace spectrum {

SvdResult singular_values(const Eigen::MatrixXd& matrix) {
    if (matrix.rows() < 1 || matrix.cols() < 1) {
        throw UsageError("singular_values: empty matrix");
    }
    if (!matrix.allFinite()) {
        throw UsageError("singular_values: non-finite entry");
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(matrix); // values only, no U/V
    SvdResult result;
    result.rows = static_cast<std::size_t>(matrix.rows());
    result.cols = static_cast<std::size_t>(matrix.cols());
    const auto& sv = svd.singularValues();
    result.singular_values.assign(sv.data(), sv.data() + sv.size());
    return result;
}

double quantile_linear(std::vector<double> values, double p) {
    if (values.empty()) throw UsageError("quantile_linear: empty sample");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n == 1) return values[0];
    const double h = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double estimate_sigma(const SvdResult& svd) {
    if (svd.singular_values.empty()) {
        throw UsageError("estimate_sigma: no singular values");
    }
    const double q75 = quantile_linear(svd.singular_values, 0.75);
    const double q25 = quantile_linear(svd.singular_values, 0.25);
    // 1.349 = IQR/sigma for a normal distribution
    return (q75 - q25) / 1.349;
}

MpBounds mp_bounds(double sigma, std::size_t rows, std::size_t cols) {
    if (rows < 1 || cols < 1) throw UsageError("mp_bounds: empty dimensions");
    if (!(sigma >= 0.0)) throw UsageError("mp_bounds: sigma must be non-negative");

    MpBounds b;
    b.sigma_estimate = sigma;
    b.beta = static_cast<double>(std::min(rows, cols)) / static_cast<double>(std::max(rows, cols));
    const double root = std::sqrt(b.beta);
    b.epsilon = sigma * (1.0 + root);
    b.lambda_plus = sigma * sigma * (1.0 + root) * (1.0 + root);
    b.lambda_minus = sigma * sigma * (1.0 - root) * (1.0 - root);
    return b;
}

SnrResult snr(const std::string& matrix_name, const SvdResult& svd, const MpBounds& bounds) {
    SnrResult r;
    r.tensor_name = matrix_name;
    r.rows = svd.rows;
    r.cols = svd.cols;
    r.bounds = bounds;
    r.max_singular_value = svd.singular_values.empty() ? 0.0 : svd.singular_values.front();

    for (double s : svd.singular_values) {
        if (s > bounds.epsilon) {
            r.signal_sum += s;
            ++r.signal_count;
        } else {
            r.noise_sum += s; // ties count as noise
        }
    }

    constexpr double inf = std::numeric_limits<double>::infinity();
    if (r.noise_sum == 0.0) {
        r.raw_snr = r.signal_sum > 0.0 ? inf : 0.0;
    } else {
        r.raw_snr = r.signal_sum / r.noise_sum;
    }
    if (r.max_singular_value == 0.0) {
        r.normalized_snr = 0.0;
    } else {
        r.normalized_snr = r.raw_snr / r.max_singular_value; // inf propagates
    }
    return r;
}

Eigen::MatrixXd record_to_matrix(const TensorRecord& record) {
    if (record.shape.size() != 2) {
        throw UsageError("tensor '" + record.name + "': not 2-D");
    }
    const std::size_t rows = record.shape[0];
    const std::size_t cols = record.shape[1];
    if (rows < 2 || cols < 2) {
        throw UsageError("tensor '" + record.name + "': dimension below 2");
    }
    using RowMajorF =
        Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    return Eigen::Map<const RowMajorF>(record.values.data(), static_cast<Eigen::Index>(rows),
                                       static_cast<Eigen::Index>(cols))
        .cast<double>();
}

SnrResult analyze_matrix(const TensorRecord& record) {
    const Eigen::MatrixXd matrix = record_to_matrix(record);
    const SvdResult svd = singular_values(matrix);
    const double sigma = estimate_sigma(svd);
    const MpBounds bounds = mp_bounds(sigma, svd.rows, svd.cols);
    return snr(record.name, svd, bounds);
}

} // namespace spectrum
