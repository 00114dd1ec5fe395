#include "factorrisk/market_sim.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "factorrisk/errors.hpp"

namespace factorrisk {

static_assert(std::endian::native == std::endian::little,
              "binary dumps assume a little-endian host");

std::string to_string(NoiseFamily family)
{
    switch (family) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::uniform: return "uniform";
    case NoiseFamily::two_point: return "two_point";
    case NoiseFamily::none: return "none";
    }
    return "unknown";
}

NoiseFamily noise_family_from_string(const std::string& name)
{
    for (auto f : {NoiseFamily::gaussian, NoiseFamily::uniform, NoiseFamily::two_point,
                   NoiseFamily::none}) {
        if (to_string(f) == name) return f;
    }
    throw ConfigError("unknown noise family '" + name + "'");
}

ReturnMatrix::ReturnMatrix(RowMatrix entries) : entries_(std::move(entries))
{
    if (entries_.rows() < 1 || entries_.cols() < 1)
        throw ConfigError("return matrix must be nonempty");
    if (!entries_.allFinite()) throw ConfigError("return matrix entries must be finite");
}

RiskMatrix::RiskMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries))
{
    if (entries_.rows() != entries_.cols() || entries_.rows() < 1)
        throw ConfigError("risk matrix must be square and nonempty");
    if (!entries_.allFinite()) throw ConfigError("risk matrix entries must be finite");
    const double asym = (entries_ - entries_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(1.0, entries_.cwiseAbs().maxCoeff()))
        throw ConfigError("risk matrix must be symmetric");
}

ReturnMatrix generate_returns(const AssetEnsemble& ensemble, const FactorSeries& factors,
                              std::uint64_t noise_seed, NoiseFamily noise)
{
    const auto N = static_cast<Eigen::Index>(ensemble.size());
    const auto p = static_cast<Eigen::Index>(factors.size());
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(N));
    const auto v = ensemble.v();
    const auto b = ensemble.b();
    const auto f = factors.f();

    RngStream rng(noise_seed, streams::noise);
    RowMatrix X(N, p);
    for (Eigen::Index i = 0; i < N; ++i) {
        const double sd = std::sqrt(v[i]);
        const double half_width = std::sqrt(3.0 * v[i]);
        for (Eigen::Index mu = 0; mu < p; ++mu) {
            double y = 0.0;
            switch (noise) {
            case NoiseFamily::gaussian: y = sd * rng.standard_normal(); break;
            case NoiseFamily::uniform: y = rng.uniform(-half_width, half_width); break;
            case NoiseFamily::two_point: y = rng.bernoulli(0.5) ? sd : -sd; break;
            case NoiseFamily::none: break;
            }
            const double x = b[i] * f[mu] * inv_sqrt_n + y;
            X(i, mu) = x * inv_sqrt_n;
        }
    }
    return ReturnMatrix(std::move(X));
}

RiskMatrix wishart(const ReturnMatrix& X)
{
    const Eigen::Index N = X.N();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(N, N);
    J.selfadjointView<Eigen::Lower>().rankUpdate(X.entries());
    J.triangularView<Eigen::StrictlyUpper>() = J.transpose();
    return RiskMatrix(std::move(J));
}

RiskMatrix expected_wishart(const AssetEnsemble& ensemble, double F, double alpha)
{
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(F >= 0.0)) throw ConfigError("F must be nonnegative");
    const auto N = static_cast<Eigen::Index>(ensemble.size());
    const Eigen::Map<const Eigen::VectorXd> v(ensemble.v().data(), N);
    const Eigen::Map<const Eigen::VectorXd> b(ensemble.b().data(), N);
    Eigen::MatrixXd EJ = (alpha * F / static_cast<double>(N)) * (b * b.transpose());
    EJ.diagonal() += alpha * v;
    return RiskMatrix(std::move(EJ));
}

namespace {

void write_binary(const std::filesystem::path& path, const char (&magic)[8], std::uint32_t rows,
                  std::uint32_t cols, const double* data, std::size_t count)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
    out.write(magic, 8);
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

RowMatrix read_binary(const std::filesystem::path& path, const char (&magic)[8])
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    char got[8];
    std::uint32_t rows = 0, cols = 0;
    in.read(got, 8);
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (!in || std::memcmp(got, magic, 8) != 0)
        throw ConfigError("'" + path.string() + "' is not a matrix dump of the expected kind");
    RowMatrix M(rows, cols);
    in.read(reinterpret_cast<char*>(M.data()),
            static_cast<std::streamsize>(static_cast<std::size_t>(M.size()) * sizeof(double)));
    if (!in) throw ConfigError("'" + path.string() + "' is truncated");
    return M;
}

}  // namespace

void dump_binary(const ReturnMatrix& X, const std::filesystem::path& path)
{
    write_binary(path, kReturnMagic, static_cast<std::uint32_t>(X.N()),
                 static_cast<std::uint32_t>(X.p()), X.entries().data(),
                 static_cast<std::size_t>(X.entries().size()));
}

void dump_binary(const RiskMatrix& J, const std::filesystem::path& path)
{
    // Symmetric, so column-major storage equals row-major.
    write_binary(path, kRiskMagic, static_cast<std::uint32_t>(J.N()),
                 static_cast<std::uint32_t>(J.N()), J.entries().data(),
                 static_cast<std::size_t>(J.entries().size()));
}

ReturnMatrix load_return_matrix(const std::filesystem::path& path)
{
    return ReturnMatrix(read_binary(path, kReturnMagic));
}

RiskMatrix load_risk_matrix(const std::filesystem::path& path)
{
    RowMatrix M = read_binary(path, kRiskMagic);
    return RiskMatrix(Eigen::MatrixXd(M));
}

}  // namespace factorrisk
