#pragma once

#include <memory>
#include <vector>

#include "fspnet/ad/tape.hpp"

namespace fspnet::ad {

// ---- elementwise binary (same shape) ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

// ---- scalar variants ----
Var add(Var a, Real c);
Var mul(Var a, Real c);
Var rdiv(Real c, Var a);  // c / a elementwise

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, Real c) { return add(a, c); }
inline Var operator+(Real c, Var a) { return add(a, c); }
inline Var operator-(Var a, Real c) { return add(a, -c); }
inline Var operator*(Var a, Real c) { return mul(a, c); }
inline Var operator*(Real c, Var a) { return mul(a, c); }
inline Var operator/(Var a, Real c) { return mul(a, 1.0 / c); }
inline Var operator/(Real c, Var a) { return rdiv(c, a); }

// ---- elementwise unary ----
Var neg(Var a);
inline Var operator-(Var a) { return neg(a); }
Var exp_v(Var a);
Var log_v(Var a);
Var sqrt_v(Var a);
Var square(Var a);
Var tanh_v(Var a);
Var sigmoid(Var a);
Var softplus(Var a);

/// Exact-erf GELU: x * Phi(x), Phi the standard normal CDF.
Var gelu(Var a);

// ---- linear layers ----
/// y = x W^T + b with x:[batch,in], W:[out,in], b:[out].
/// An optional 0/1 mask (same layout as W) is applied to W in the product
/// and to its gradient.
Var dense(Var x, Var w, Var b,
          std::shared_ptr<const ArrayX> mask = nullptr);
/// y = x W^T without bias.
Var matmul_nt(Var x, Var w, std::shared_ptr<const ArrayX> mask = nullptr);

/// 1-D cross-correlation with symmetric zero padding such that
/// len_out = ceil(len/stride). x:[batch,ch_in,len], k:[ch_out,ch_in,ksize],
/// b:[ch_out] -> [batch,ch_out,len_out].
Var conv1d(Var x, Var kernels, Var bias, int stride);

// ---- shape ops ----
Var reshape(Var a, const Shape& shape);
Var slice_cols(Var a, Eigen::Index j0, Eigen::Index n);
Var concat_cols(const std::vector<Var>& parts);
/// [batch,T,feat] -> [batch,feat] at step t.
Var slice_time(Var a, Eigen::Index t);
/// T tensors of [batch,feat] -> [batch,T,feat].
Var stack_time(const std::vector<Var>& steps);
/// y[:,j] = x[:,perm[j]].
Var permute_cols(Var a, const std::vector<int>& perm);
/// y[i,0] = x[i, idx[i]].
Var gather_cols(Var a, const std::vector<Eigen::Index>& idx);

// ---- selection ----
/// Elementwise mask ? a : b with a constant 0/1 mask.
Var select(const ArrayX& mask, Var a, Var b);
Var clamp(Var a, Real lo, Real hi);

// ---- reductions ----
Var sum_all(Var a);
Var mean_all(Var a);
/// [b,n] -> [b,1].
Var row_sum(Var a);
Var softmax_rows(Var a);
Var cumsum_rows(Var a);

inline Real scalar_value(Var v) {
    FSPNET_REQUIRE(v.shape().is_scalar(), "scalar_value: non-scalar var");
    return v.value()[0];
}

/// Flatten a column-major Eigen matrix into the tape's row-major layout.
inline ArrayX flatten_rowmajor(const MatrixX& m) {
    RowMatrixX rm = m;
    return Eigen::Map<const ArrayX>(rm.data(), rm.size());
}

}  // namespace fspnet::ad
