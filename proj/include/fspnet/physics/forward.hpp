#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fspnet/types.hpp"

namespace fspnet::physics {

/// Instrument band 0.3-10 keV, log-uniform bins, plus a log-uniform
/// extension to 100 keV so Compton up-scattering beyond the band is
/// representable before folding truncates back to the instrument bins.
struct EnergyGrid {
    int n_instrument = 0;
    int n_total = 0;
    ArrayX edges;    // n_total + 1, ascending
    ArrayX centers;  // geometric bin centers
    ArrayX widths;

    static EnergyGrid make(int n_instrument_bins);
};

inline constexpr Real kBandLo = 0.3;    // keV
inline constexpr Real kBandHi = 10.0;   // keV
inline constexpr Real kExtendHi = 100.0;

/// kT_disk [keV], N (amplitude), Gamma (photon index), f_sc in (0,1],
/// N_H in units of 1e22 cm^-2.
struct PhysParams {
    Real kT = 1.0;
    Real N = 1.0;
    Real gamma = 2.0;
    Real fsc = 0.1;
    Real nH = 0.1;

    Vector5 as_vector() const {
        Vector5 v;
        v << kT, N, gamma, fsc, nH;
        return v;
    }
    static PhysParams from_vector(const Vector5& v) {
        return PhysParams{v[0], v[1], v[2], v[3], v[4]};
    }
};

/// Gaussian energy redistribution + effective-area curve + exposure.
struct ResponseModel {
    MatrixX redist;  // [n_total, n_total], column j = blur of input bin j
    ArrayX area;     // cm^2 per input bin
    Real exposure = 100.0;

    // descriptor (serialized with datasets so files are self-describing)
    std::vector<std::pair<Real, Real>> area_anchors;
    Real sigma_coef = 0.05;

    static ResponseModel make(const EnergyGrid& grid, Real exposure = 100.0);
    static ResponseModel make(const EnergyGrid& grid,
                              std::vector<std::pair<Real, Real>> anchors,
                              Real sigma_coef, Real exposure);
};

struct Spectrum {
    ArrayX counts;  // per instrument bin
    ArrayX sigma;   // per-bin uncertainty, > 0
    Real exposure = 100.0;
    bool noisy = false;
};

/// Disk blackbody photon flux density [photons/s/cm^2/keV]; the amplitude is
/// normalized so F(1 keV; kT=1, N=1) = 1.
Real diskbb_flux(Real energy_kev, Real kT, Real N);
ArrayX diskbb_flux(const ArrayX& energies, Real kT, Real N);

/// Photon-conserving Compton up-scattering: a fraction f_sc of seed photons
/// is redistributed to higher energies with kernel ~ E^-Gamma (E >= E0),
/// renormalized per source bin on the truncated grid.
ArrayX simpl_comptonize(const EnergyGrid& grid, const ArrayX& seed_flux,
                        Real gamma, Real fsc);

/// Photoelectric transmission exp(-N_H * 0.23 * (E/keV)^(-8/3)).
ArrayX absorb(const ArrayX& energies, const ArrayX& flux, Real nH);
Real absorption_transmission(Real energy_kev, Real nH);

/// lambda_i = exposure * sum_j R_ij A_j flux_j dE_j over the extended grid,
/// reported on the instrument bins.
ArrayX apply_response(const ArrayX& source_flux, const EnergyGrid& grid,
                      const ResponseModel& response);

/// Full chain absorb(simpl(diskbb)) folded through the response. noisy=false
/// returns expected counts with sigma = max(sqrt(lambda), 1); noisy=true
/// draws Poisson counts.
Spectrum forward_model(const PhysParams& p, const EnergyGrid& grid,
                       const ResponseModel& response, bool noisy,
                       std::uint64_t seed);

}  // namespace fspnet::physics
