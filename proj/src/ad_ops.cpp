#include "fspnet/ad/ops.hpp"

#include <cmath>

namespace fspnet::ad {

namespace {

bool wants_grad(const Var& v) { return v.tape->node(v.id).needs_grad; }

void check_same_shape(const Var& a, const Var& b, const char* op) {
    FSPNET_REQUIRE(a.tape == b.tape, std::string(op) + ": vars from different tapes");
    FSPNET_REQUIRE(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                               a.shape().str() + " vs " + b.shape().str());
}

using MapRM = Eigen::Map<RowMatrixX>;
using CMapRM = Eigen::Map<const RowMatrixX>;

CMapRM mat(const Var& v) {
    return CMapRM(v.value().data(), v.shape().rows(), v.shape().cols());
}
CMapRM mat(const ArrayX& a, Eigen::Index r, Eigen::Index c) {
    return CMapRM(a.data(), r, c);
}

ArrayX from_mat(const RowMatrixX& m) {
    return Eigen::Map<const ArrayX>(m.data(), m.size());
}

}  // namespace

// ---------- elementwise binary ----------

Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tape& t = *a.tape;
    bool ng = wants_grad(a) || wants_grad(b);
    Var out = t.make(a.value() + b.value(), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, b](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, g);
            tp.accumulate(b.id, g);
        };
    return out;
}

Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tape& t = *a.tape;
    bool ng = wants_grad(a) || wants_grad(b);
    Var out = t.make(a.value() - b.value(), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, b](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, g);
            tp.accumulate(b.id, ArrayX(-g));
        };
    return out;
}

Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tape& t = *a.tape;
    bool ng = wants_grad(a) || wants_grad(b);
    Var out = t.make(a.value() * b.value(), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, b](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, ArrayX(g * tp.node(b.id).val));
            tp.accumulate(b.id, ArrayX(g * tp.node(a.id).val));
        };
    return out;
}

Var div(Var a, Var b) {
    check_same_shape(a, b, "div");
    Tape& t = *a.tape;
    bool ng = wants_grad(a) || wants_grad(b);
    Var out = t.make(a.value() / b.value(), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, b, out](Tape& tp, const ArrayX& g) {
            const ArrayX& bv = tp.node(b.id).val;
            tp.accumulate(a.id, ArrayX(g / bv));
            tp.accumulate(b.id, ArrayX(-g * tp.node(out.id).val / bv));
        };
    return out;
}

Var add(Var a, Real c) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    Var out = t.make(a.value() + c, a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a](Tape& tp, const ArrayX& g) { tp.accumulate(a.id, g); };
    return out;
}

Var mul(Var a, Real c) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    Var out = t.make(a.value() * c, a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, c](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, ArrayX(g * c));
        };
    return out;
}

Var rdiv(Real c, Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    Var out = t.make(c / a.value(), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, out](Tape& tp, const ArrayX& g) {
            const ArrayX& av = tp.node(a.id).val;
            tp.accumulate(a.id, ArrayX(-g * tp.node(out.id).val / av));
        };
    return out;
}

// ---------- elementwise unary ----------

Var neg(Var a) { return mul(a, -1.0); }

Var exp_v(Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    Var out = t.make(a.value().exp(), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, out](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, ArrayX(g * tp.node(out.id).val));
        };
    return out;
}

Var log_v(Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    Var out = t.make(a.value().log(), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, ArrayX(g / tp.node(a.id).val));
        };
    return out;
}

Var sqrt_v(Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    Var out = t.make(a.value().sqrt(), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, out](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, ArrayX(g * 0.5 / tp.node(out.id).val));
        };
    return out;
}

Var square(Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    Var out = t.make(a.value().square(), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, ArrayX(g * 2.0 * tp.node(a.id).val));
        };
    return out;
}

Var tanh_v(Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    Var out = t.make(a.value().tanh(), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, out](Tape& tp, const ArrayX& g) {
            const ArrayX& y = tp.node(out.id).val;
            tp.accumulate(a.id, ArrayX(g * (1.0 - y.square())));
        };
    return out;
}

Var sigmoid(Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    ArrayX y = 1.0 / (1.0 + (-a.value()).exp());
    Var out = t.make(std::move(y), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, out](Tape& tp, const ArrayX& g) {
            const ArrayX& y = tp.node(out.id).val;
            tp.accumulate(a.id, ArrayX(g * y * (1.0 - y)));
        };
    return out;
}

Var softplus(Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    ArrayX y = a.value().unaryExpr([](Real x) {
        return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    });
    Var out = t.make(std::move(y), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a](Tape& tp, const ArrayX& g) {
            const ArrayX& x = tp.node(a.id).val;
            ArrayX s = 1.0 / (1.0 + (-x).exp());
            tp.accumulate(a.id, ArrayX(g * s));
        };
    return out;
}

namespace {
constexpr Real kInvSqrt2 = 0.7071067811865475244;
constexpr Real kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Var gelu(Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    ArrayX y = a.value().unaryExpr(
        [](Real x) { return x * 0.5 * (1.0 + std::erf(x * kInvSqrt2)); });
    Var out = t.make(std::move(y), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a](Tape& tp, const ArrayX& g) {
            const ArrayX& x = tp.node(a.id).val;
            ArrayX d = x.unaryExpr([](Real v) {
                const Real cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const Real pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                return cdf + v * pdf;
            });
            tp.accumulate(a.id, ArrayX(g * d));
        };
    return out;
}

// ---------- linear layers ----------

Var matmul_nt(Var x, Var w, std::shared_ptr<const ArrayX> mask) {
    Tape& t = *x.tape;
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    FSPNET_REQUIRE(xs.ndim == 2 && ws.ndim == 2 && xs.cols() == ws.cols(),
                   "matmul_nt: shapes not conformable " + xs.str() + " x " + ws.str());
    const Eigen::Index b = xs.rows(), n = ws.rows(), k = xs.cols();
    RowMatrixX wm;
    if (mask) {
        FSPNET_REQUIRE(mask->size() == w.value().size(), "matmul_nt: mask size");
        wm = mat(ArrayX(w.value() * (*mask)), n, k);
    } else {
        wm = mat(w);
    }
    RowMatrixX y(b, n);
    y.noalias() = mat(x) * wm.transpose();
    bool ng = wants_grad(x) || wants_grad(w);
    Var out = t.make(from_mat(y), Shape(b, n), ng);
    if (ng)
        t.node(out.id).back = [x, w, mask, b, n, k, wm](Tape& tp, const ArrayX& g) {
            CMapRM gm(g.data(), b, n);
            if (tp.node(x.id).needs_grad) {
                RowMatrixX gx(b, k);
                gx.noalias() = gm * wm;
                tp.accumulate(x.id, from_mat(gx));
            }
            if (tp.node(w.id).needs_grad) {
                RowMatrixX gw(n, k);
                gw.noalias() = gm.transpose() * mat(tp.node(x.id).val, b, k);
                ArrayX gwf = from_mat(gw);
                if (mask) gwf *= *mask;
                tp.accumulate(w.id, gwf);
            }
        };
    return out;
}

Var dense(Var x, Var w, Var b, std::shared_ptr<const ArrayX> mask) {
    Var y = matmul_nt(x, w, std::move(mask));
    Tape& t = *x.tape;
    const Eigen::Index rows = y.shape().rows(), n = y.shape().cols();
    FSPNET_REQUIRE(b.shape().size() == n, "dense: bias size mismatch");
    ArrayX val = y.value();
    CMapRM bm(b.value().data(), 1, n);
    MapRM vm(val.data(), rows, n);
    vm.rowwise() += bm.row(0);
    bool ng = wants_grad(y) || wants_grad(b);
    Var out = t.make(std::move(val), y.shape(), ng);
    if (ng)
        t.node(out.id).back = [y, b, rows, n](Tape& tp, const ArrayX& g) {
            tp.accumulate(y.id, g);
            if (tp.node(b.id).needs_grad) {
                CMapRM gm(g.data(), rows, n);
                RowMatrixX gb = gm.colwise().sum();
                tp.accumulate(b.id, from_mat(gb));
            }
        };
    return out;
}

Var conv1d(Var x, Var kernels, Var bias, int stride) {
    FSPNET_REQUIRE(stride >= 1, "conv1d: stride must be >= 1");
    Tape& t = *x.tape;
    const Shape& xs = x.shape();
    const Shape& ks = kernels.shape();
    FSPNET_REQUIRE(xs.ndim == 3 && ks.ndim == 3, "conv1d: rank mismatch");
    const Eigen::Index batch = xs.d[0], ci = xs.d[1], len = xs.d[2];
    const Eigen::Index co = ks.d[0], kci = ks.d[1], ksz = ks.d[2];
    FSPNET_REQUIRE(ci == kci, "conv1d: channel mismatch");
    FSPNET_REQUIRE(len >= ksz, "conv1d: input shorter than kernel");
    FSPNET_REQUIRE(bias.shape().size() == co, "conv1d: bias size");

    const Eigen::Index lo = (len + stride - 1) / stride;
    const Eigen::Index total_pad = std::max<Eigen::Index>((lo - 1) * stride + ksz - len, 0);
    const Eigen::Index pad_left = total_pad / 2;

    // im2col: patches[(i*lo + t), (c*ksz + kk)] = x(i, c, t*stride + kk - pad_left)
    auto patches = std::make_shared<RowMatrixX>(batch * lo, ci * ksz);
    patches->setZero();
    const ArrayX& xv = x.value();
    for (Eigen::Index i = 0; i < batch; ++i) {
        for (Eigen::Index c = 0; c < ci; ++c) {
            const Real* src = xv.data() + (i * ci + c) * len;
            for (Eigen::Index tt = 0; tt < lo; ++tt) {
                Real* dst = patches->data() + (i * lo + tt) * (ci * ksz) + c * ksz;
                const Eigen::Index base = tt * stride - pad_left;
                for (Eigen::Index kk = 0; kk < ksz; ++kk) {
                    const Eigen::Index u = base + kk;
                    if (u >= 0 && u < len) dst[kk] = src[u];
                }
            }
        }
    }

    CMapRM km(kernels.value().data(), co, ci * ksz);
    RowMatrixX y2(batch * lo, co);
    y2.noalias() = (*patches) * km.transpose();
    CMapRM bm(bias.value().data(), 1, co);
    y2.rowwise() += bm.row(0);

    // reorder [b*lo, co] -> [b, co, lo]
    ArrayX yv(batch * co * lo);
    for (Eigen::Index i = 0; i < batch; ++i)
        for (Eigen::Index oc = 0; oc < co; ++oc)
            for (Eigen::Index tt = 0; tt < lo; ++tt)
                yv[(i * co + oc) * lo + tt] = y2(i * lo + tt, oc);

    bool ng = wants_grad(x) || wants_grad(kernels) || wants_grad(bias);
    Var out = t.make(std::move(yv), Shape(batch, co, lo), ng);
    if (ng)
        t.node(out.id).back = [x, kernels, bias, patches, batch, ci, co, len, lo,
                               ksz, stride, pad_left](Tape& tp, const ArrayX& g) {
            RowMatrixX g2(batch * lo, co);
            for (Eigen::Index i = 0; i < batch; ++i)
                for (Eigen::Index oc = 0; oc < co; ++oc)
                    for (Eigen::Index tt = 0; tt < lo; ++tt)
                        g2(i * lo + tt, oc) = g[(i * co + oc) * lo + tt];

            if (tp.node(bias.id).needs_grad) {
                RowMatrixX gb = g2.colwise().sum();
                tp.accumulate(bias.id, from_mat(gb));
            }
            if (tp.node(kernels.id).needs_grad) {
                RowMatrixX gk(co, ci * ksz);
                gk.noalias() = g2.transpose() * (*patches);
                tp.accumulate(kernels.id, from_mat(gk));
            }
            if (tp.node(x.id).needs_grad) {
                CMapRM km(tp.node(kernels.id).val.data(), co, ci * ksz);
                RowMatrixX gp(batch * lo, ci * ksz);
                gp.noalias() = g2 * km;
                ArrayX gx = ArrayX::Zero(batch * ci * len);
                for (Eigen::Index i = 0; i < batch; ++i)
                    for (Eigen::Index c = 0; c < ci; ++c) {
                        Real* dst = gx.data() + (i * ci + c) * len;
                        for (Eigen::Index tt = 0; tt < lo; ++tt) {
                            const Real* src =
                                gp.data() + (i * lo + tt) * (ci * ksz) + c * ksz;
                            const Eigen::Index base = tt * stride - pad_left;
                            for (Eigen::Index kk = 0; kk < ksz; ++kk) {
                                const Eigen::Index u = base + kk;
                                if (u >= 0 && u < len) dst[u] += src[kk];
                            }
                        }
                    }
                tp.accumulate(x.id, gx);
            }
        };
    return out;
}

// ---------- shape ops ----------

Var reshape(Var a, const Shape& shape) {
    FSPNET_REQUIRE(shape.size() == a.shape().size(), "reshape: size mismatch");
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    Var out = t.make(a.value(), shape, ng);
    if (ng)
        t.node(out.id).back = [a](Tape& tp, const ArrayX& g) { tp.accumulate(a.id, g); };
    return out;
}

Var slice_cols(Var a, Eigen::Index j0, Eigen::Index n) {
    const Shape& s = a.shape();
    FSPNET_REQUIRE(s.ndim == 2 && j0 >= 0 && j0 + n <= s.cols(), "slice_cols: bounds");
    Tape& t = *a.tape;
    const Eigen::Index rows = s.rows(), cols = s.cols();
    RowMatrixX y = mat(a).middleCols(j0, n);
    bool ng = wants_grad(a);
    Var out = t.make(from_mat(y), Shape(rows, n), ng);
    if (ng)
        t.node(out.id).back = [a, j0, n, rows, cols](Tape& tp, const ArrayX& g) {
            ArrayX gx = ArrayX::Zero(rows * cols);
            MapRM gxm(gx.data(), rows, cols);
            gxm.middleCols(j0, n) = mat(g, rows, n);
            tp.accumulate(a.id, gx);
        };
    return out;
}

Var concat_cols(const std::vector<Var>& parts) {
    FSPNET_REQUIRE(!parts.empty(), "concat_cols: empty");
    Tape& t = *parts[0].tape;
    const Eigen::Index rows = parts[0].shape().rows();
    Eigen::Index total = 0;
    bool ng = false;
    for (const Var& p : parts) {
        FSPNET_REQUIRE(p.shape().ndim == 2 && p.shape().rows() == rows,
                       "concat_cols: row mismatch");
        total += p.shape().cols();
        ng = ng || wants_grad(p);
    }
    RowMatrixX y(rows, total);
    Eigen::Index off = 0;
    for (const Var& p : parts) {
        y.middleCols(off, p.shape().cols()) = mat(p);
        off += p.shape().cols();
    }
    Var out = t.make(from_mat(y), Shape(rows, total), ng);
    if (ng) {
        std::vector<Var> ps = parts;
        t.node(out.id).back = [ps, rows, total](Tape& tp, const ArrayX& g) {
            CMapRM gm(g.data(), rows, total);
            Eigen::Index off = 0;
            for (const Var& p : ps) {
                const Eigen::Index n = p.shape().cols();
                RowMatrixX gp = gm.middleCols(off, n);
                tp.accumulate(p.id, from_mat(gp));
                off += n;
            }
        };
    }
    return out;
}

Var slice_time(Var a, Eigen::Index t_idx) {
    const Shape& s = a.shape();
    FSPNET_REQUIRE(s.ndim == 3 && t_idx >= 0 && t_idx < s.d[1], "slice_time: bounds");
    Tape& t = *a.tape;
    const Eigen::Index b = s.d[0], T = s.d[1], f = s.d[2];
    ArrayX y(b * f);
    const ArrayX& av = a.value();
    for (Eigen::Index i = 0; i < b; ++i)
        y.segment(i * f, f) = av.segment((i * T + t_idx) * f, f);
    bool ng = wants_grad(a);
    Var out = t.make(std::move(y), Shape(b, f), ng);
    if (ng)
        t.node(out.id).back = [a, t_idx, b, T, f](Tape& tp, const ArrayX& g) {
            ArrayX gx = ArrayX::Zero(b * T * f);
            for (Eigen::Index i = 0; i < b; ++i)
                gx.segment((i * T + t_idx) * f, f) = g.segment(i * f, f);
            tp.accumulate(a.id, gx);
        };
    return out;
}

Var stack_time(const std::vector<Var>& steps) {
    FSPNET_REQUIRE(!steps.empty(), "stack_time: empty");
    Tape& t = *steps[0].tape;
    const Eigen::Index b = steps[0].shape().rows(), f = steps[0].shape().cols();
    const Eigen::Index T = Eigen::Index(steps.size());
    bool ng = false;
    ArrayX y(b * T * f);
    for (Eigen::Index tt = 0; tt < T; ++tt) {
        FSPNET_REQUIRE(steps[tt].shape() == Shape(b, f), "stack_time: shape mismatch");
        ng = ng || wants_grad(steps[tt]);
        const ArrayX& sv = steps[tt].value();
        for (Eigen::Index i = 0; i < b; ++i)
            y.segment((i * T + tt) * f, f) = sv.segment(i * f, f);
    }
    Var out = t.make(std::move(y), Shape(b, T, f), ng);
    if (ng) {
        std::vector<Var> ss = steps;
        t.node(out.id).back = [ss, b, T, f](Tape& tp, const ArrayX& g) {
            for (Eigen::Index tt = 0; tt < T; ++tt) {
                ArrayX gs(b * f);
                for (Eigen::Index i = 0; i < b; ++i)
                    gs.segment(i * f, f) = g.segment((i * T + tt) * f, f);
                tp.accumulate(ss[tt].id, gs);
            }
        };
    }
    return out;
}

Var permute_cols(Var a, const std::vector<int>& perm) {
    const Shape& s = a.shape();
    FSPNET_REQUIRE(s.ndim == 2 && Eigen::Index(perm.size()) == s.cols(),
                   "permute_cols: size");
    Tape& t = *a.tape;
    const Eigen::Index rows = s.rows(), cols = s.cols();
    RowMatrixX y(rows, cols);
    auto am = mat(a);
    for (Eigen::Index j = 0; j < cols; ++j) y.col(j) = am.col(perm[j]);
    bool ng = wants_grad(a);
    Var out = t.make(from_mat(y), s, ng);
    if (ng)
        t.node(out.id).back = [a, perm, rows, cols](Tape& tp, const ArrayX& g) {
            CMapRM gm(g.data(), rows, cols);
            RowMatrixX gx = RowMatrixX::Zero(rows, cols);
            for (Eigen::Index j = 0; j < cols; ++j) gx.col(perm[j]) += gm.col(j);
            tp.accumulate(a.id, from_mat(gx));
        };
    return out;
}

Var gather_cols(Var a, const std::vector<Eigen::Index>& idx) {
    const Shape& s = a.shape();
    FSPNET_REQUIRE(s.ndim == 2 && Eigen::Index(idx.size()) == s.rows(),
                   "gather_cols: index count");
    Tape& t = *a.tape;
    const Eigen::Index rows = s.rows(), cols = s.cols();
    ArrayX y(rows);
    const ArrayX& av = a.value();
    for (Eigen::Index i = 0; i < rows; ++i) {
        FSPNET_REQUIRE(idx[i] >= 0 && idx[i] < cols, "gather_cols: index range");
        y[i] = av[i * cols + idx[i]];
    }
    bool ng = wants_grad(a);
    Var out = t.make(std::move(y), Shape(rows, 1), ng);
    if (ng)
        t.node(out.id).back = [a, idx, rows, cols](Tape& tp, const ArrayX& g) {
            ArrayX gx = ArrayX::Zero(rows * cols);
            for (Eigen::Index i = 0; i < rows; ++i) gx[i * cols + idx[i]] = g[i];
            tp.accumulate(a.id, gx);
        };
    return out;
}

// ---------- selection ----------

Var select(const ArrayX& mask, Var a, Var b) {
    check_same_shape(a, b, "select");
    FSPNET_REQUIRE(mask.size() == a.value().size(), "select: mask size");
    Tape& t = *a.tape;
    bool ng = wants_grad(a) || wants_grad(b);
    ArrayX y = mask * a.value() + (1.0 - mask) * b.value();
    Var out = t.make(std::move(y), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, b, mask](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, ArrayX(g * mask));
            tp.accumulate(b.id, ArrayX(g * (1.0 - mask)));
        };
    return out;
}

Var clamp(Var a, Real lo, Real hi) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    ArrayX y = a.value().max(lo).min(hi);
    Var out = t.make(std::move(y), a.shape(), ng);
    if (ng)
        t.node(out.id).back = [a, lo, hi](Tape& tp, const ArrayX& g) {
            const ArrayX& x = tp.node(a.id).val;
            ArrayX pass = ((x >= lo) && (x <= hi)).cast<Real>();
            tp.accumulate(a.id, ArrayX(g * pass));
        };
    return out;
}

// ---------- reductions ----------

Var sum_all(Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    Var out = t.make(ArrayX::Constant(1, a.value().sum()), Shape(1), ng);
    if (ng)
        t.node(out.id).back = [a](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, ArrayX::Constant(tp.node(a.id).val.size(), g[0]));
        };
    return out;
}

Var mean_all(Var a) {
    Tape& t = *a.tape;
    bool ng = wants_grad(a);
    const Real n = Real(a.value().size());
    Var out = t.make(ArrayX::Constant(1, a.value().mean()), Shape(1), ng);
    if (ng)
        t.node(out.id).back = [a, n](Tape& tp, const ArrayX& g) {
            tp.accumulate(a.id, ArrayX::Constant(tp.node(a.id).val.size(), g[0] / n));
        };
    return out;
}

Var row_sum(Var a) {
    const Shape& s = a.shape();
    FSPNET_REQUIRE(s.ndim == 2, "row_sum: needs 2-d input");
    Tape& t = *a.tape;
    const Eigen::Index rows = s.rows(), cols = s.cols();
    RowMatrixX y = mat(a).rowwise().sum();
    bool ng = wants_grad(a);
    Var out = t.make(from_mat(y), Shape(rows, 1), ng);
    if (ng)
        t.node(out.id).back = [a, rows, cols](Tape& tp, const ArrayX& g) {
            RowMatrixX gx(rows, cols);
            CMapRM gm(g.data(), rows, 1);
            gx = gm.col(0).replicate(1, cols);
            tp.accumulate(a.id, from_mat(gx));
        };
    return out;
}

Var softmax_rows(Var a) {
    const Shape& s = a.shape();
    FSPNET_REQUIRE(s.ndim == 2, "softmax_rows: needs 2-d input");
    Tape& t = *a.tape;
    const Eigen::Index rows = s.rows(), cols = s.cols();
    RowMatrixX y(rows, cols);
    auto am = mat(a);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Real m = am.row(i).maxCoeff();
        y.row(i) = (am.row(i).array() - m).exp();
        y.row(i) /= y.row(i).sum();
    }
    bool ng = wants_grad(a);
    Var out = t.make(from_mat(y), s, ng);
    if (ng)
        t.node(out.id).back = [a, out, rows, cols](Tape& tp, const ArrayX& g) {
            CMapRM gm(g.data(), rows, cols);
            CMapRM sm(tp.node(out.id).val.data(), rows, cols);
            RowMatrixX gx(rows, cols);
            for (Eigen::Index i = 0; i < rows; ++i) {
                const Real dot = (gm.row(i).array() * sm.row(i).array()).sum();
                gx.row(i) = sm.row(i).array() * (gm.row(i).array() - dot);
            }
            tp.accumulate(a.id, from_mat(gx));
        };
    return out;
}

Var cumsum_rows(Var a) {
    const Shape& s = a.shape();
    FSPNET_REQUIRE(s.ndim == 2, "cumsum_rows: needs 2-d input");
    Tape& t = *a.tape;
    const Eigen::Index rows = s.rows(), cols = s.cols();
    RowMatrixX y = mat(a);
    for (Eigen::Index j = 1; j < cols; ++j) y.col(j) += y.col(j - 1);
    bool ng = wants_grad(a);
    Var out = t.make(from_mat(y), s, ng);
    if (ng)
        t.node(out.id).back = [a, rows, cols](Tape& tp, const ArrayX& g) {
            CMapRM gm(g.data(), rows, cols);
            RowMatrixX gx = gm;
            for (Eigen::Index j = cols - 2; j >= 0; --j) gx.col(j) += gx.col(j + 1);
            tp.accumulate(a.id, from_mat(gx));
        };
    return out;
}

}  // namespace fspnet::ad
