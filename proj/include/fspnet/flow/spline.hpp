#pragma once

#include <utility>

#include "fspnet/types.hpp"

namespace fspnet::flow {

/// Fraction of the interval reserved per bin and floor on knot derivatives;
/// the raw-parameter offsets below keep zero raw input an exact identity.
inline constexpr Real kMinBinFraction = 1e-3;
inline constexpr Real kMinDerivative = 1e-3;

/// softplus^-1(1 - kMinDerivative): raw 0 maps to derivative exactly 1.
Real raw_derivative_offset();

/// One dimension's monotonic rational-quadratic spline on [-tail, tail] with
/// identity tails. Widths/heights are the normalized bin sizes (each summing
/// to 2*tail); boundary derivatives are fixed to 1.
struct SplineParams {
    VectorX widths;
    VectorX heights;
    VectorX derivs_interior;
    Real tail = 4.0;

    int bins() const { return int(widths.size()); }
    void validate() const;
};

struct SplineKnots {
    VectorX x, y, d;  // K+1 entries each
};

SplineKnots spline_knots(const SplineParams& p);

/// Returns (y, log|dy/dx|). Identity with zero log-det outside [-tail, tail].
std::pair<Real, Real> rq_spline_forward(Real x, const SplineParams& p);

/// Exact inverse via the monotone quadratic root; log-det is the negative of
/// the forward's at the recovered point.
std::pair<Real, Real> rq_spline_inverse(Real y, const SplineParams& p);

/// Map 3K-1 unconstrained outputs of a conditioner to valid spline
/// parameters: softmax for widths/heights (scaled to 2*tail with a minimum
/// bin fraction), offset softplus for the K-1 interior derivatives.
SplineParams spline_params_from_raw(const VectorX& raw, int bins, Real tail);

}  // namespace fspnet::flow
