#pragma once

#include <string>

#include "fspnet/physics/forward.hpp"

namespace fspnet::data {

struct PriorScale {
    Real lo = 0.0;
    Real hi = 1.0;
    bool log_scale = false;
};

/// Independent per-parameter uniform priors, on linear or log scale.
struct PriorBox {
    std::array<PriorScale, 5> p;  // kT, N, gamma, fsc, nH

    /// kT in [0.1,2.5] linear; N in [10,1e5] log; Gamma in [1.3,3.5] linear;
    /// f_sc in [1e-3,1] log; N_H in [0.01,10] log.
    static PriorBox standard();
    void validate() const;
};

/// [n,5] physical-unit draws.
RowMatrixX sample_prior(const PriorBox& box, int n, std::uint64_t seed);

/// Map physical values to [-1,1] network coordinates (log first where the
/// scale says so). Out-of-box inputs are clamped and counted.
Vector5 params_to_unit(const Vector5& p, const PriorBox& box,
                       long* clamp_counter = nullptr);
Vector5 unit_to_params(const Vector5& u, const PriorBox& box);
RowMatrixX params_to_unit(const RowMatrixX& p, const PriorBox& box,
                          long* clamp_counter = nullptr);
RowMatrixX unit_to_params(const RowMatrixX& u, const PriorBox& box);

struct Dataset {
    RowMatrixX counts;    // [n, n_bins]
    RowMatrixX sigmas;    // [n, n_bins]
    RowMatrixX params;    // [n, 5] physical units
    bool noisy = false;
    physics::ResponseModel response;  // descriptor travels with the data
    Real norm_mu = 0.0;               // mean of log10 counts (floored)
    Real norm_sigma = 1.0;            // std of log10 counts

    Eigen::Index rows() const { return counts.rows(); }
    int n_bins() const { return int(counts.cols()); }
    physics::Spectrum spectrum(Eigen::Index i) const;
};

struct GenerateOptions {
    bool noisy = false;
    Real exposure = 100.0;
    /// Real-archive proxy: Poisson noise plus per-row exposure jittered
    /// uniformly in [50, 500] s (the jitter enters the counts only).
    bool real_proxy = false;
    int workers = 1;
};

Dataset generate_dataset(const PriorBox& box, int n, int n_bins,
                         std::uint64_t seed, const GenerateOptions& opt = {});

/// Normalization constants (mean/std of floored log10 counts) over a set.
std::pair<Real, Real> log_count_stats(const RowMatrixX& counts);

inline constexpr Real kCountFloor = 0.1;

/// x = (log10(max(c, 0.1)) - mu)/sigma; the uncertainty is propagated with
/// the same floor.
void preprocess(const ArrayX& counts, const ArrayX& sigmas, Real mu, Real sigma,
                ArrayX& x_out, ArrayX& sx_out);
void unpreprocess(const ArrayX& x, const ArrayX& sx, Real mu, Real sigma,
                  ArrayX& counts_out, ArrayX& sigmas_out);

/// Seeded permutation split; validation gets round(n*(1-frac)) rows and both
/// halves carry the training half's normalization constants.
std::pair<Dataset, Dataset> split(const Dataset& ds, Real frac, std::uint64_t seed);

/// "FSPN" container (counts/sigmas as f32, params as f64). Bit-exact
/// round-trip after the first save's f32 quantization.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Header byte count for a file with the given anchor count.
std::size_t dataset_header_bytes(std::size_t n_anchors);

/// Parameter CSV with header row kT,N,gamma,fsc,nH.
void export_params_csv(const Dataset& ds, const std::string& path);

}  // namespace fspnet::data
