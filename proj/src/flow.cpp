#include "fspnet/flow/flow.hpp"

#include <cmath>

namespace fspnet::flow {

using ad::Shape;
using ad::Tape;
using ad::Var;

namespace {

constexpr Real kLog2Pi = 1.8378770664093454836;

struct AdKnots {
    Var x, y, d;  // [b, K+1] each
};

/// Batched version of spline_params_from_raw on tape vars.
AdKnots knots_from_raw(Tape& tape, Var raw_block, int bins, Real tail) {
    using namespace ad;
    const Eigen::Index b = raw_block.shape().rows();
    const Real span = 2.0 * tail;
    auto knot_coords = [&](Var block) {
        Var frac = softmax_rows(block) * (1.0 - bins * kMinBinFraction) +
                   kMinBinFraction;
        Var sizes = frac * span;
        Var interior = cumsum_rows(slice_cols(sizes, 0, bins - 1)) - tail;
        Var lo = tape.constant(ArrayX::Constant(b, -tail), Shape(b, 1));
        Var hi = tape.constant(ArrayX::Constant(b, tail), Shape(b, 1));
        return concat_cols({lo, interior, hi});
    };
    AdKnots kn;
    kn.x = knot_coords(slice_cols(raw_block, 0, bins));
    kn.y = knot_coords(slice_cols(raw_block, bins, bins));
    Var draw = slice_cols(raw_block, 2 * bins, bins - 1);
    Var dint = softplus(draw + raw_derivative_offset()) + kMinDerivative;
    Var ones = tape.constant(ArrayX::Constant(b, 1.0), Shape(b, 1));
    kn.d = concat_cols({ones, dint, ones});
    return kn;
}

std::vector<Eigen::Index> bin_search(const ArrayX& coords, const ArrayX& knots_flat,
                                     Eigen::Index b, int bins) {
    std::vector<Eigen::Index> idx(b);
    const int kp1 = bins + 1;
    for (Eigen::Index i = 0; i < b; ++i) {
        const Real v = coords[i];
        const Real* row = knots_flat.data() + i * kp1;
        int lo = 0, hi = bins;
        while (hi - lo > 1) {
            const int mid = (lo + hi) / 2;
            if (v >= row[mid])
                lo = mid;
            else
                hi = mid;
        }
        idx[i] = std::min<Eigen::Index>(lo, bins - 1);
    }
    return idx;
}

struct SplineOut {
    Var value;    // [b,1]
    Var log_det;  // [b,1]
};

/// Differentiable forward spline on one coordinate column.
SplineOut spline_forward_ad(Tape& tape, Var xcol, const AdKnots& kn, int bins,
                            Real tail) {
    using namespace ad;
    const Eigen::Index b = xcol.shape().rows();
    ArrayX inside =
        ((xcol.value() >= -tail) && (xcol.value() <= tail)).cast<Real>();
    Var xc = clamp(xcol, -tail, tail);
    auto idx = bin_search(xc.value(), kn.x.value(), b, bins);
    auto idx1 = idx;
    for (auto& v : idx1) ++v;
    Var xk = gather_cols(kn.x, idx), xk1 = gather_cols(kn.x, idx1);
    Var yk = gather_cols(kn.y, idx), yk1 = gather_cols(kn.y, idx1);
    Var d0 = gather_cols(kn.d, idx), d1 = gather_cols(kn.d, idx1);
    Var w = xk1 - xk;
    Var h = yk1 - yk;
    Var s = h / w;
    Var xi = (xc - xk) / w;
    Var omx = 1.0 - xi;
    Var q = xi * omx;
    Var denom = s + (d1 + d0 - 2.0 * s) * q;
    Var y_in = yk + h * (s * square(xi) + d0 * q) / denom;
    Var deriv = square(s) * (d1 * square(xi) + 2.0 * s * q + d0 * square(omx)) /
                square(denom);
    Var zero = tape.constant(ArrayX::Zero(b), Shape(b, 1));
    SplineOut out;
    out.value = select(inside, y_in, xcol);
    out.log_det = select(inside, log_v(deriv), zero);
    return out;
}

/// Differentiable inverse spline on one coordinate column.
SplineOut spline_inverse_ad(Tape& tape, Var ycol, const AdKnots& kn, int bins,
                            Real tail) {
    using namespace ad;
    const Eigen::Index b = ycol.shape().rows();
    ArrayX inside =
        ((ycol.value() >= -tail) && (ycol.value() <= tail)).cast<Real>();
    Var yc = clamp(ycol, -tail, tail);
    auto idx = bin_search(yc.value(), kn.y.value(), b, bins);
    auto idx1 = idx;
    for (auto& v : idx1) ++v;
    Var xk = gather_cols(kn.x, idx), xk1 = gather_cols(kn.x, idx1);
    Var yk = gather_cols(kn.y, idx), yk1 = gather_cols(kn.y, idx1);
    Var d0 = gather_cols(kn.d, idx), d1 = gather_cols(kn.d, idx1);
    Var w = xk1 - xk;
    Var h = yk1 - yk;
    Var s = h / w;
    Var r = yc - yk;
    Var dsum = d1 + d0 - 2.0 * s;
    Var a = h * (s - d0) + r * dsum;
    Var bq = h * d0 - r * dsum;
    Var c = -1.0 * (s * r);
    Var disc = clamp(square(bq) - 4.0 * a * c, 0.0, 1e300);
    Var xi = clamp(2.0 * c / (-1.0 * bq - sqrt_v(disc)), 0.0, 1.0);
    Var x_in = xk + xi * w;
    Var omx = 1.0 - xi;
    Var q = xi * omx;
    Var denom = s + dsum * q;
    Var deriv = square(s) * (d1 * square(xi) + 2.0 * s * q + d0 * square(omx)) /
                square(denom);
    Var zero = tape.constant(ArrayX::Zero(b), Shape(b, 1));
    SplineOut out;
    out.value = select(inside, x_in, ycol);
    out.log_det = select(inside, -1.0 * log_v(deriv), zero);
    return out;
}

Var standard_normal_logpdf_rows(Tape& tape, Var z) {
    using namespace ad;
    const Real d = Real(z.shape().cols());
    return -0.5 * row_sum(square(z)) - 0.5 * d * kLog2Pi;
}

}  // namespace

FlowModel make_flow(ad::ParamStore& store, const FlowConfig& cfg,
                    std::uint64_t seed, const std::string& prefix) {
    FSPNET_REQUIRE(cfg.dim >= 1 && cfg.n_transforms >= 1 && cfg.bins >= 2,
                   "make_flow: bad config");
    FlowModel f;
    f.cfg = cfg;
    const int out_per_dim = 3 * cfg.bins - 1;
    std::vector<int> reversal(cfg.dim);
    for (int i = 0; i < cfg.dim; ++i) reversal[i] = cfg.dim - 1 - i;
    for (int t = 0; t < cfg.n_transforms; ++t) {
        f.conditioners.push_back(make_conditioner(
            store, prefix + ".t" + std::to_string(t), cfg.dim, cfg.context_dim,
            cfg.hidden, out_per_dim, seed));
        f.perms.push_back(reversal);
        std::vector<int> inv(cfg.dim);
        for (int i = 0; i < cfg.dim; ++i) inv[reversal[i]] = i;
        f.inv_perms.push_back(inv);
    }
    return f;
}

ad::Var flow_log_prob(ad::Tape& tape, ad::ParamStore& store, const FlowModel& flow,
                      ad::Var theta, ad::Var context) {
    using namespace ad;
    const int dim = flow.cfg.dim;
    const int bins = flow.cfg.bins;
    const Real tail = flow.cfg.tail;
    const int opd = 3 * bins - 1;
    FSPNET_REQUIRE(theta.shape().cols() == dim, "flow_log_prob: theta width");
    const Eigen::Index b = theta.shape().rows();

    Var ld_sum = tape.constant(ArrayX::Zero(b), Shape(b, 1));
    Var y = theta;
    for (int t = flow.cfg.n_transforms - 1; t >= 0; --t) {
        const MadeConditioner& made = flow.conditioners[t];
        // solve the autoregressive inversion one dimension at a time
        Var v = y;
        for (int i = 0; i < dim; ++i) {
            Var raw = conditioner_raw(tape, store, made, v, context);
            Var block = slice_cols(raw, i * opd, opd);
            AdKnots kn = knots_from_raw(tape, block, bins, tail);
            Var ycol = slice_cols(y, i, 1);
            SplineOut inv = spline_inverse_ad(tape, ycol, kn, bins, tail);
            if (!std::isfinite(inv.value.value().sum()))
                throw RuntimeFailure("flow_log_prob: non-finite value in transform " +
                                     std::to_string(t));
            ld_sum = ld_sum + inv.log_det;
            std::vector<Var> cols;
            if (i > 0) cols.push_back(slice_cols(v, 0, i));
            cols.push_back(inv.value);
            if (i + 1 < dim) cols.push_back(slice_cols(v, i + 1, dim - i - 1));
            v = cols.size() == 1 ? cols[0] : concat_cols(cols);
        }
        y = permute_cols(v, flow.inv_perms[t]);
    }
    return standard_normal_logpdf_rows(tape, y) + ld_sum;
}

FlowSampleAd flow_sample_ad(ad::Tape& tape, ad::ParamStore& store,
                            const FlowModel& flow, ad::Var context,
                            const RowMatrixX& noise) {
    using namespace ad;
    const int dim = flow.cfg.dim;
    const int bins = flow.cfg.bins;
    const Real tail = flow.cfg.tail;
    const int opd = 3 * bins - 1;
    const Eigen::Index b = context.shape().rows();
    FSPNET_REQUIRE(noise.rows() == b && noise.cols() == dim,
                   "flow_sample_ad: noise shape");

    Var u = tape.constant(Eigen::Map<const ArrayX>(noise.data(), noise.size()),
                          Shape(b, dim));
    Var base_lp = standard_normal_logpdf_rows(tape, u);
    Var ld_sum = tape.constant(ArrayX::Zero(b), Shape(b, 1));
    for (int t = 0; t < flow.cfg.n_transforms; ++t) {
        Var v = permute_cols(u, flow.perms[t]);
        Var raw = conditioner_raw(tape, store, flow.conditioners[t], v, context);
        std::vector<Var> cols(dim);
        for (int i = 0; i < dim; ++i) {
            Var block = slice_cols(raw, i * opd, opd);
            AdKnots kn = knots_from_raw(tape, block, bins, tail);
            SplineOut fwd = spline_forward_ad(tape, slice_cols(v, i, 1), kn, bins, tail);
            cols[i] = fwd.value;
            ld_sum = ld_sum + fwd.log_det;
        }
        u = concat_cols(cols);
    }
    FlowSampleAd out;
    out.draws = u;
    out.log_q = base_lp - ld_sum;
    return out;
}

PosteriorDraws flow_sample(const ad::ParamStore& store, const FlowModel& flow,
                           const VectorX& context, int n, std::uint64_t seed) {
    FSPNET_REQUIRE(n >= 1, "flow_sample: need n >= 1");
    const int dim = flow.cfg.dim;
    const int bins = flow.cfg.bins;
    const Real tail = flow.cfg.tail;
    const int opd = 3 * bins - 1;

    Rng rng(seed);
    RowMatrixX u(n, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) u(i, j) = rng.normal();

    VectorX log_q(n);
    for (int i = 0; i < n; ++i) log_q[i] = -0.5 * u.row(i).squaredNorm();
    log_q.array() -= 0.5 * dim * kLog2Pi;

    RowMatrixX ctx = context.transpose().replicate(n, 1);
    VectorX block(opd);
    for (int t = 0; t < flow.cfg.n_transforms; ++t) {
        RowMatrixX v(n, dim);
        for (int j = 0; j < dim; ++j) v.col(j) = u.col(flow.perms[t][j]);
        RowMatrixX raw = conditioner_raw_fast(store, flow.conditioners[t], v, ctx);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < dim; ++j) {
                block = raw.row(i).segment(j * opd, opd);
                SplineParams p = spline_params_from_raw(block, bins, tail);
                auto [y, ld] = rq_spline_forward(v(i, j), p);
                u(i, j) = y;
                log_q[i] -= ld;
            }
        }
    }
    PosteriorDraws out;
    out.draws = std::move(u);
    out.log_q = std::move(log_q);
    out.context = context;
    return out;
}

VectorX flow_log_prob_fast(const ad::ParamStore& store, const FlowModel& flow,
                           const RowMatrixX& theta, const RowMatrixX& context) {
    const int dim = flow.cfg.dim;
    const int bins = flow.cfg.bins;
    const Real tail = flow.cfg.tail;
    const int opd = 3 * bins - 1;
    const Eigen::Index n = theta.rows();
    FSPNET_REQUIRE(context.rows() == n, "flow_log_prob_fast: row mismatch");

    VectorX ld_sum = VectorX::Zero(n);
    RowMatrixX y = theta;
    VectorX block(opd);
    for (int t = flow.cfg.n_transforms - 1; t >= 0; --t) {
        RowMatrixX v = y;
        for (int i = 0; i < dim; ++i) {
            RowMatrixX raw =
                conditioner_raw_fast(store, flow.conditioners[t], v, context);
            for (Eigen::Index r = 0; r < n; ++r) {
                block = raw.row(r).segment(i * opd, opd);
                SplineParams p = spline_params_from_raw(block, bins, tail);
                auto [x, ld] = rq_spline_inverse(y(r, i), p);
                v(r, i) = x;
                ld_sum[r] += ld;
            }
        }
        RowMatrixX u(n, dim);
        for (int j = 0; j < dim; ++j) u.col(j) = v.col(flow.inv_perms[t][j]);
        y = u;
    }
    for (Eigen::Index r = 0; r < n; ++r)
        ld_sum[r] += -0.5 * y.row(r).squaredNorm() - 0.5 * dim * kLog2Pi;
    return ld_sum;
}

}  // namespace fspnet::flow
