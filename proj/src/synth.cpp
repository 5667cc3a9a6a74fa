#include "spectrum/synth.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "spectrum/checkpoint.hpp"
#include "spectrum/errors.hpp"
#include "spectrum/rng.hpp"

namespace spectrum {

namespace {

// Stream tags for gen_spiked's sub-seeds; noise uses the seed directly
// so that a spike-free spec reduces exactly to gen_noise.
constexpr std::uint64_t kLeftBasisTag = 1;
constexpr std::uint64_t kRightBasisTag = 2;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

Eigen::MatrixXd orthonormal_columns(std::size_t dim, std::size_t k, std::uint64_t seed) {
    GaussianRng rng(seed);
    Eigen::MatrixXd g(dim, k);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.next();
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim),
                                                         static_cast<Eigen::Index>(k));
}

} // namespace

Eigen::MatrixXd gen_noise(std::size_t rows, std::size_t cols, double sigma, std::uint64_t seed) {
    if (rows < 1 || cols < 1) throw UsageError("gen_noise: empty dimensions");
    if (!(sigma > 0.0)) throw UsageError("gen_noise: sigma must be positive");

    GaussianRng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sigma * rng.next();
        }
    }
    return m;
}

Eigen::MatrixXd gen_spiked(const SpikedSpec& spec) {
    const std::size_t k = spec.spikes.size();
    if (k > std::min(spec.rows, spec.cols)) {
        throw UsageError("gen_spiked: more spikes than min(rows, cols)");
    }
    Eigen::MatrixXd m = gen_noise(spec.rows, spec.cols, spec.noise_sigma, spec.seed);
    if (k == 0) return m;

    const Eigen::MatrixXd u =
        orthonormal_columns(spec.rows, k, derive_seed(spec.seed, kLeftBasisTag));
    const Eigen::MatrixXd v =
        orthonormal_columns(spec.cols, k, derive_seed(spec.seed, kRightBasisTag));
    for (std::size_t i = 0; i < k; ++i) {
        m.noalias() += spec.spikes[i] * u.col(static_cast<Eigen::Index>(i)) *
                       v.col(static_cast<Eigen::Index>(i)).transpose();
    }
    return m;
}

std::vector<double> gram_eigen_oracle(const Eigen::MatrixXd& matrix) {
    if (!matrix.allFinite()) throw UsageError("gram_eigen_oracle: non-finite entry");

    Eigen::MatrixXd gram;
    if (matrix.cols() <= matrix.rows()) {
        gram = matrix.transpose() * matrix;
    } else {
        gram = matrix * matrix.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
    const auto& ev = solver.eigenvalues(); // ascending
    std::vector<double> out(static_cast<std::size_t>(ev.size()));
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        out[static_cast<std::size_t>(ev.size() - 1 - i)] = std::max(0.0, ev(i));
    }
    return out;
}

TensorRecord matrix_to_record(const std::string& name, const Eigen::MatrixXd& matrix) {
    TensorRecord record;
    record.name = name;
    record.dtype = Dtype::f32;
    record.shape = {static_cast<std::size_t>(matrix.rows()),
                    static_cast<std::size_t>(matrix.cols())};
    record.values.reserve(record.element_count());
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
        for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
            record.values.push_back(static_cast<float>(matrix(i, j)));
        }
    }
    return record;
}

void gen_mini_checkpoint(std::size_t layers, const std::vector<MiniGroupSpec>& groups,
                         const std::filesystem::path& path,
                         const MiniCheckpointOptions& options) {
    if (layers < 1) throw UsageError("gen_mini_checkpoint: need at least one layer");

    std::vector<TensorRecord> records;
    for (const auto& g : groups) {
        if (!g.layer_spikes.empty() && g.layer_spikes.size() != 1 &&
            g.layer_spikes.size() != layers) {
            throw UsageError("gen_mini_checkpoint: layer_spikes size mismatch for group '" +
                             g.module + "'");
        }
        const std::uint64_t group_seed = derive_seed(options.seed, fnv1a(g.module));
        for (std::size_t i = 0; i < layers; ++i) {
            SpikedSpec spec;
            spec.rows = g.rows;
            spec.cols = g.cols;
            spec.noise_sigma = g.noise_sigma;
            if (!g.layer_spikes.empty()) {
                spec.spikes = g.layer_spikes.size() == 1 ? g.layer_spikes[0] : g.layer_spikes[i];
            }
            spec.seed = g.shared_seed ? group_seed : derive_seed(group_seed, i + 1);
            const std::string name =
                "model.layers." + std::to_string(i) + "." + g.module + ".weight";
            records.push_back(matrix_to_record(name, gen_spiked(spec)));
        }
    }

    if (options.include_decoys) {
        auto ones_1d = [](const std::string& name, std::size_t n) {
            TensorRecord r;
            r.name = name;
            r.shape = {n};
            r.values.assign(n, 1.0f);
            return r;
        };
        for (std::size_t i = 0; i < layers; ++i) {
            records.push_back(
                ones_1d("model.layers." + std::to_string(i) + ".input_layernorm.weight", 16));
        }
        records.push_back(ones_1d("model.norm.weight", 16));
        records.push_back(matrix_to_record(
            "model.embed_tokens.weight", gen_noise(48, 16, 0.02, derive_seed(options.seed, 9001))));
        records.push_back(matrix_to_record(
            "lm_head.weight", gen_noise(48, 16, 0.02, derive_seed(options.seed, 9002))));
    }

    write_fixture(records, path);
}

} // namespace spectrum
