/**
 * @file market_sim.hpp
 * @brief Synthetic single-factor returns and the Wishart risk matrix.
 *
 * Raw modified returns are x_{i mu} = b_i f_mu / sqrt(N) + y_{i mu}, with
 * y independent, zero mean and variance v_i. The stored return matrix holds
 * x_{i mu} / sqrt(N), so J = X X^T has entries (1/N) sum_mu x_{i mu} x_{j mu}.
 * The two 1/sqrt(N) factors are applied at different places: the first when
 * the factor term is generated, the second when the entry is stored.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "factorrisk/ensemble.hpp"

namespace factorrisk {

/// Residual noise law; every family has mean 0 and variance v_i per asset.
/// `none` forces y = 0 and exists for deterministic checks.
enum class NoiseFamily { gaussian, uniform, two_point, none };

std::string to_string(NoiseFamily family);
NoiseFamily noise_family_from_string(const std::string& name);

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// N x p matrix of scaled returns x_{i mu}/sqrt(N).
class ReturnMatrix {
public:
    explicit ReturnMatrix(RowMatrix entries);

    Eigen::Index N() const { return entries_.rows(); }
    Eigen::Index p() const { return entries_.cols(); }
    const RowMatrix& entries() const { return entries_; }

private:
    RowMatrix entries_;
};

/// Symmetric N x N risk matrix.
class RiskMatrix {
public:
    /// Rejects non-square, non-finite or asymmetric (beyond 1e-12 relative) input.
    explicit RiskMatrix(Eigen::MatrixXd entries);

    Eigen::Index N() const { return entries_.rows(); }
    const Eigen::MatrixXd& entries() const { return entries_; }

private:
    Eigen::MatrixXd entries_;
};

/// Noise is drawn asset by asset, period by period, from stream
/// (noise_seed, streams::noise).
ReturnMatrix generate_returns(const AssetEnsemble& ensemble, const FactorSeries& factors,
                              std::uint64_t noise_seed, NoiseFamily noise = NoiseFamily::gaussian);

/// J = X X^T, exactly symmetric.
RiskMatrix wishart(const ReturnMatrix& X);

/// E[J] = alpha diag(v) + (alpha F / N) b b^T for a fixed factor path.
RiskMatrix expected_wishart(const AssetEnsemble& ensemble, double F, double alpha);

// Binary dumps: 16-byte header (8-byte magic, uint32 N, uint32 p; little
// endian) followed by row-major float64 entries. For J the p field holds N.
inline constexpr char kReturnMagic[8] = {'F', 'R', 'S', 'K', '-', 'X', '0', '1'};
inline constexpr char kRiskMagic[8] = {'F', 'R', 'S', 'K', '-', 'J', '0', '1'};

void dump_binary(const ReturnMatrix& X, const std::filesystem::path& path);
void dump_binary(const RiskMatrix& J, const std::filesystem::path& path);
ReturnMatrix load_return_matrix(const std::filesystem::path& path);
RiskMatrix load_risk_matrix(const std::filesystem::path& path);

}  // namespace factorrisk
