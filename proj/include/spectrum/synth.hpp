#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spectrum/tensor.hpp"

namespace spectrum {

// Low-rank signal plus iid Gaussian noise, deterministic per seed.
struct SpikedSpec {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double noise_sigma = 1.0;
    std::vector<double> spikes; // singular-value amplitudes of the planted signal
    std::uint64_t seed = 0;
};

// rows x cols matrix with iid N(0, sigma^2) entries, filled row-major.
Eigen::MatrixXd gen_noise(std::size_t rows, std::size_t cols, double sigma, std::uint64_t seed);

// sum_i a_i * u_i v_i^T + noise, with {u_i},{v_i} orthonormal from QR of
// seeded Gaussian draws. With no spikes this reduces exactly to
// gen_noise(rows, cols, noise_sigma, seed).
Eigen::MatrixXd gen_spiked(const SpikedSpec& spec);

// Eigenvalues of the smaller-side Gram matrix (W^T W or W W^T), sorted
// descending and clamped at zero: the independent check for
// singular_values (their squares).
std::vector<double> gram_eigen_oracle(const Eigen::MatrixXd& matrix);

// One module column of a synthetic transformer checkpoint.
struct MiniGroupSpec {
    std::string module; // e.g. "self_attn.q_proj"
    std::size_t rows = 0;
    std::size_t cols = 0;
    double noise_sigma = 1.0;
    // Spike amplitudes per layer; empty vector -> pure noise. Size must
    // be either `layers` or 1 (broadcast to every layer).
    std::vector<std::vector<double>> layer_spikes;
    // Reuse one noise/direction stream for every layer of the group
    // (layers then differ only in their planted spikes).
    bool shared_seed = false;
};

struct MiniCheckpointOptions {
    std::uint64_t seed = 0;
    bool include_decoys = true; // 1-D norms plus embed/head matrices
};

// Writes a container with transformer-style names
// "model.layers.{i}.{module}.weight" whose matrices follow the group
// specs, plus decoy tensors to exercise exclusion rules.
void gen_mini_checkpoint(std::size_t layers, const std::vector<MiniGroupSpec>& groups,
                         const std::filesystem::path& path,
                         const MiniCheckpointOptions& options = {});

// Flattens a matrix into a float32 TensorRecord (row-major).
TensorRecord matrix_to_record(const std::string& name, const Eigen::MatrixXd& matrix);

} // namespace spectrum
