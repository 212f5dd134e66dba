#include "fspnet/flow/spline.hpp"

#include <cmath>

namespace fspnet::flow {

Real raw_derivative_offset() {
    static const Real c = std::log(std::exp(1.0 - kMinDerivative) - 1.0);
    return c;
}

void SplineParams::validate() const {
    FSPNET_REQUIRE(widths.size() >= 2, "spline: needs K >= 2 bins");
    FSPNET_REQUIRE(heights.size() == widths.size(), "spline: heights size");
    FSPNET_REQUIRE(derivs_interior.size() == widths.size() - 1,
                   "spline: derivative count");
    FSPNET_REQUIRE(tail > 0, "spline: tail bound must be positive");
    FSPNET_REQUIRE((widths.array() > 0).all() && (heights.array() > 0).all(),
                   "spline: non-positive bin width/height");
    FSPNET_REQUIRE((derivs_interior.array() > 0).all(),
                   "spline: non-positive knot derivative");
    const Real span = 2.0 * tail;
    FSPNET_REQUIRE(std::abs(widths.sum() - span) < 1e-9 * span, "spline: widths sum");
    FSPNET_REQUIRE(std::abs(heights.sum() - span) < 1e-9 * span, "spline: heights sum");
}

SplineKnots spline_knots(const SplineParams& p) {
    const int k = p.bins();
    SplineKnots kn;
    kn.x.resize(k + 1);
    kn.y.resize(k + 1);
    kn.d.resize(k + 1);
    kn.x[0] = -p.tail;
    kn.y[0] = -p.tail;
    for (int i = 0; i < k; ++i) {
        kn.x[i + 1] = kn.x[i] + p.widths[i];
        kn.y[i + 1] = kn.y[i] + p.heights[i];
    }
    kn.x[k] = p.tail;  // pin the boundary knots against roundoff drift
    kn.y[k] = p.tail;
    kn.d[0] = 1.0;
    kn.d[k] = 1.0;
    for (int i = 0; i < k - 1; ++i) kn.d[i + 1] = p.derivs_interior[i];
    return kn;
}

namespace {

int find_bin(const VectorX& knots, Real v) {
    // knots are ascending; return i with knots[i] <= v < knots[i+1], clamped
    const int k = int(knots.size()) - 1;
    int lo = 0, hi = k;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        if (v >= knots[mid])
            lo = mid;
        else
            hi = mid;
    }
    return std::min(lo, k - 1);
}

}  // namespace

std::pair<Real, Real> rq_spline_forward(Real x, const SplineParams& p) {
    p.validate();
    if (x < -p.tail || x > p.tail) return {x, 0.0};
    const SplineKnots kn = spline_knots(p);
    const int i = find_bin(kn.x, x);
    const Real w = kn.x[i + 1] - kn.x[i];
    const Real h = kn.y[i + 1] - kn.y[i];
    const Real s = h / w;
    const Real d0 = kn.d[i], d1 = kn.d[i + 1];
    const Real xi = (x - kn.x[i]) / w;
    const Real omx = 1.0 - xi;
    const Real q = xi * omx;
    const Real denom = s + (d1 + d0 - 2.0 * s) * q;
    const Real y = kn.y[i] + h * (s * xi * xi + d0 * q) / denom;
    const Real deriv =
        s * s * (d1 * xi * xi + 2.0 * s * q + d0 * omx * omx) / (denom * denom);
    return {y, std::log(deriv)};
}

std::pair<Real, Real> rq_spline_inverse(Real y, const SplineParams& p) {
    p.validate();
    if (y < -p.tail || y > p.tail) return {y, 0.0};
    const SplineKnots kn = spline_knots(p);
    const int i = find_bin(kn.y, y);
    const Real w = kn.x[i + 1] - kn.x[i];
    const Real h = kn.y[i + 1] - kn.y[i];
    const Real s = h / w;
    const Real d0 = kn.d[i], d1 = kn.d[i + 1];
    const Real r = y - kn.y[i];
    const Real dsum = d1 + d0 - 2.0 * s;
    const Real a = h * (s - d0) + r * dsum;
    const Real b = h * d0 - r * dsum;
    const Real c = -s * r;
    const Real disc = std::max(b * b - 4.0 * a * c, 0.0);
    const Real xi = 2.0 * c / (-b - std::sqrt(disc));
    const Real x = kn.x[i] + xi * w;
    const Real omx = 1.0 - xi;
    const Real q = xi * omx;
    const Real denom = s + dsum * q;
    const Real deriv =
        s * s * (d1 * xi * xi + 2.0 * s * q + d0 * omx * omx) / (denom * denom);
    return {x, -std::log(deriv)};
}

SplineParams spline_params_from_raw(const VectorX& raw, int bins, Real tail) {
    FSPNET_REQUIRE(raw.size() == 3 * bins - 1, "spline raw: expected 3K-1 values");
    SplineParams p;
    p.tail = tail;
    const Real span = 2.0 * tail;
    auto softmax_block = [&](int offset) {
        VectorX v = raw.segment(offset, bins);
        const Real m = v.maxCoeff();
        VectorX e = (v.array() - m).exp();
        e /= e.sum();
        return VectorX(span * (kMinBinFraction + (1.0 - bins * kMinBinFraction) * e.array()));
    };
    p.widths = softmax_block(0);
    p.heights = softmax_block(bins);
    p.derivs_interior.resize(bins - 1);
    const Real c0 = raw_derivative_offset();
    for (int i = 0; i < bins - 1; ++i) {
        const Real x = raw[2 * bins + i] + c0;
        p.derivs_interior[i] =
            kMinDerivative + (std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))));
    }
    return p;
}

}  // namespace fspnet::flow
