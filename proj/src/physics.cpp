#include "fspnet/physics/forward.hpp"

#include <cmath>

#include "fspnet/rng.hpp"

namespace fspnet::physics {

namespace {

/// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration.
void gauss_legendre(int n, VectorX& nodes, VectorX& weights) {
    nodes.resize(n);
    weights.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        Real x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        Real pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            Real p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const Real p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            const Real dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
}

struct QuadRule {
    VectorX nodes, weights;
};

const QuadRule& disk_rule() {
    static const QuadRule rule = [] {
        QuadRule r;
        gauss_legendre(64, r.nodes, r.weights);
        return r;
    }();
    return rule;
}

constexpr Real kDiskXMin = 0.05;       // lower cutoff of the T/T_in integral
constexpr Real kSigma1 = 0.23;         // absorption cross-section at 1 keV
constexpr Real kAbsorbSlope = -8.0 / 3.0;

/// Unnormalized disk integral: int_{xmin}^{1} x^{-8/3} E^2 / expm1(E/(kT x)) d(ln x).
Real disk_integral(Real energy, Real kT) {
    const QuadRule& rule = disk_rule();
    const Real ulo = std::log(kDiskXMin);
    const Real half = -0.5 * ulo;  // (0 - ulo)/2
    const Real mid = 0.5 * ulo;
    Real acc = 0.0;
    for (int i = 0; i < rule.nodes.size(); ++i) {
        const Real u = half * rule.nodes[i] + mid;
        const Real x = std::exp(u);
        const Real arg = energy / (kT * x);
        if (arg > 700.0) continue;
        acc += rule.weights[i] * std::pow(x, -8.0 / 3.0) * energy * energy /
               std::expm1(arg);
    }
    return acc * half;
}

Real disk_norm_constant() {
    static const Real c = 1.0 / disk_integral(1.0, 1.0);
    return c;
}

}  // namespace

EnergyGrid EnergyGrid::make(int n_instrument_bins) {
    FSPNET_REQUIRE(n_instrument_bins >= 2, "EnergyGrid: need at least 2 bins");
    EnergyGrid g;
    g.n_instrument = n_instrument_bins;
    // extension bin count scales with the in-band resolution (100 bins for
    // the full 240-bin instrument grid)
    const int n_ext = std::max(
        4, int(std::lround(Real(n_instrument_bins) * 100.0 / 240.0)));
    g.n_total = n_instrument_bins + n_ext;
    g.edges.resize(g.n_total + 1);
    const Real band_step = std::log(kBandHi / kBandLo) / n_instrument_bins;
    for (int i = 0; i <= n_instrument_bins; ++i)
        g.edges[i] = kBandLo * std::exp(band_step * i);
    g.edges[n_instrument_bins] = kBandHi;
    const Real ext_step = std::log(kExtendHi / kBandHi) / n_ext;
    for (int i = 1; i <= n_ext; ++i)
        g.edges[n_instrument_bins + i] = kBandHi * std::exp(ext_step * i);
    g.edges[g.n_total] = kExtendHi;
    g.centers.resize(g.n_total);
    g.widths.resize(g.n_total);
    for (int i = 0; i < g.n_total; ++i) {
        g.centers[i] = std::sqrt(g.edges[i] * g.edges[i + 1]);
        g.widths[i] = g.edges[i + 1] - g.edges[i];
    }
    return g;
}

ResponseModel ResponseModel::make(const EnergyGrid& grid, Real exposure) {
    return make(grid,
                {{0.3, 50.0}, {0.8, 1400.0}, {1.5, 1900.0}, {3.0, 1100.0},
                 {6.0, 600.0}, {10.0, 300.0}},
                0.05, exposure);
}

ResponseModel ResponseModel::make(const EnergyGrid& grid,
                                  std::vector<std::pair<Real, Real>> anchors,
                                  Real sigma_coef, Real exposure) {
    FSPNET_REQUIRE(anchors.size() >= 2, "ResponseModel: need >= 2 area anchors");
    FSPNET_REQUIRE(exposure > 0, "ResponseModel: exposure must be positive");
    ResponseModel r;
    r.area_anchors = std::move(anchors);
    r.sigma_coef = sigma_coef;
    r.exposure = exposure;

    const int n = grid.n_total;
    r.area.resize(n);
    for (int i = 0; i < n; ++i) {
        const Real le = std::log(grid.centers[i]);
        const auto& a = r.area_anchors;
        if (grid.centers[i] <= a.front().first) {
            r.area[i] = a.front().second;
        } else if (grid.centers[i] >= a.back().first) {
            r.area[i] = a.back().second;
        } else {
            for (std::size_t k = 0; k + 1 < a.size(); ++k) {
                if (grid.centers[i] <= a[k + 1].first) {
                    const Real l0 = std::log(a[k].first), l1 = std::log(a[k + 1].first);
                    const Real w = (le - l0) / (l1 - l0);
                    r.area[i] = (1.0 - w) * a[k].second + w * a[k + 1].second;
                    break;
                }
            }
        }
    }

    r.redist.resize(n, n);
    const Real inv_sqrt2 = 0.7071067811865475244;
    for (int j = 0; j < n; ++j) {
        const Real e0 = grid.centers[j];
        const Real sig = sigma_coef * std::sqrt(e0);
        for (int i = 0; i < n; ++i) {
            const Real hi = (grid.edges[i + 1] - e0) / sig * inv_sqrt2;
            const Real lo = (grid.edges[i] - e0) / sig * inv_sqrt2;
            r.redist(i, j) = 0.5 * (std::erf(hi) - std::erf(lo));
        }
    }
    return r;
}

Real diskbb_flux(Real energy_kev, Real kT, Real N) {
    FSPNET_REQUIRE(energy_kev > 0 && kT > 0, "diskbb_flux: E and kT must be > 0");
    return N * disk_norm_constant() * disk_integral(energy_kev, kT);
}

ArrayX diskbb_flux(const ArrayX& energies, Real kT, Real N) {
    FSPNET_REQUIRE(kT > 0, "diskbb_flux: kT must be > 0");
    ArrayX out(energies.size());
    const Real c = N * disk_norm_constant();
    for (Eigen::Index i = 0; i < energies.size(); ++i)
        out[i] = c * disk_integral(energies[i], kT);
    return out;
}

ArrayX simpl_comptonize(const EnergyGrid& grid, const ArrayX& seed_flux,
                        Real gamma, Real fsc) {
    FSPNET_REQUIRE(gamma > 1.0, "simpl_comptonize: Gamma must exceed 1");
    FSPNET_REQUIRE(fsc >= 0.0 && fsc <= 1.0, "simpl_comptonize: f_sc outside [0,1]");
    FSPNET_REQUIRE(seed_flux.size() == grid.n_total, "simpl_comptonize: grid size");
    if (fsc == 0.0) return seed_flux;

    const int n = grid.n_total;
    // p_i = edge_i^{1-Gamma}, c_j = center_j^{Gamma-1}; the per-bin kernel
    // integral is w_ij = c_j (p_i - p_{i+1}) for i > j, with the source-bin
    // remainder on the diagonal, renormalized so each column sums to 1
    ArrayX p(n + 1), c(n);
    for (int i = 0; i <= n; ++i) p[i] = std::pow(grid.edges[i], 1.0 - gamma);
    for (int j = 0; j < n; ++j) c[j] = std::pow(grid.centers[j], gamma - 1.0);

    ArrayX scat = ArrayX::Zero(n);
    Real prefix = 0.0;  // sum over j < i of q_j
    for (int i = 0; i < n; ++i) {
        const Real norm_i = 1.0 - c[i] * p[n];
        const Real diag_i = 1.0 - c[i] * p[i + 1];
        const Real photons_i = seed_flux[i] * grid.widths[i];
        scat[i] = (prefix * (p[i] - p[i + 1]) + photons_i * diag_i / norm_i) /
                  grid.widths[i];
        prefix += photons_i * c[i] / norm_i;
    }
    return (1.0 - fsc) * seed_flux + fsc * scat;
}

Real absorption_transmission(Real energy_kev, Real nH) {
    FSPNET_REQUIRE(nH >= 0.0, "absorb: N_H must be non-negative");
    return std::exp(-nH * kSigma1 * std::pow(energy_kev, kAbsorbSlope));
}

ArrayX absorb(const ArrayX& energies, const ArrayX& flux, Real nH) {
    FSPNET_REQUIRE(nH >= 0.0, "absorb: N_H must be non-negative");
    FSPNET_REQUIRE(energies.size() == flux.size(), "absorb: size mismatch");
    ArrayX out(flux.size());
    for (Eigen::Index i = 0; i < flux.size(); ++i)
        out[i] = flux[i] * std::exp(-nH * kSigma1 * std::pow(energies[i], kAbsorbSlope));
    return out;
}

ArrayX apply_response(const ArrayX& source_flux, const EnergyGrid& grid,
                      const ResponseModel& response) {
    FSPNET_REQUIRE(source_flux.size() == grid.n_total, "apply_response: grid size");
    FSPNET_REQUIRE((source_flux >= 0.0).all(), "apply_response: negative flux");
    VectorX weighted =
        (source_flux * response.area * grid.widths).matrix();
    VectorX folded = response.redist * weighted;
    return response.exposure * folded.head(grid.n_instrument).array();
}

Spectrum forward_model(const PhysParams& p, const EnergyGrid& grid,
                       const ResponseModel& response, bool noisy,
                       std::uint64_t seed) {
    auto staged = [](const char* stage, auto&& fn) {
        try {
            return fn();
        } catch (const ContractViolation& e) {
            throw ContractViolation(std::string("forward_model[") + stage + "]: " +
                                    e.what());
        }
    };
    ArrayX disk = staged("diskbb", [&] { return diskbb_flux(grid.centers, p.kT, p.N); });
    ArrayX compt = staged("simpl", [&] {
        return simpl_comptonize(grid, disk, p.gamma, p.fsc);
    });
    ArrayX absorbed = staged("absorb", [&] { return absorb(grid.centers, compt, p.nH); });
    ArrayX lambda = staged("response", [&] {
        return apply_response(absorbed, grid, response);
    });

    Spectrum s;
    s.exposure = response.exposure;
    s.noisy = noisy;
    if (!noisy) {
        s.counts = lambda;
        s.sigma = lambda.sqrt().max(1.0);
    } else {
        Rng rng(seed);
        s.counts.resize(lambda.size());
        for (Eigen::Index i = 0; i < lambda.size(); ++i)
            s.counts[i] = Real(rng.poisson(lambda[i]));
        s.sigma = s.counts.sqrt().max(1.0);
    }
    return s;
}

}  // namespace fspnet::physics
