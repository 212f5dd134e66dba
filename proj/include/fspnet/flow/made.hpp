#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fspnet/ad/ops.hpp"
#include "fspnet/flow/spline.hpp"

namespace fspnet::flow {

/// Masked autoregressive conditioner. Output block i (the 3K-1 spline
/// parameters of dimension i) depends only on inputs 1..i-1 and the context.
/// Hidden units carry degrees 0..dim-1; degree-0 units see no inputs at all,
/// only the (unmasked) context projection, which is what lets dimension 1
/// condition on the context alone.
struct MadeConditioner {
    int dim = 0;
    int context_dim = 0;
    int hidden = 0;
    int out_per_dim = 0;  // 3K-1
    std::string w1, b1, wc, w2, b2, w3, b3;
    std::shared_ptr<const ArrayX> mask1, mask2, mask3;
};

MadeConditioner make_conditioner(ad::ParamStore& store, const std::string& prefix,
                                 int dim, int context_dim, int hidden,
                                 int out_per_dim, std::uint64_t seed);

/// Full differentiable pass: z [b,dim], ctx [b,context_dim] ->
/// raw [b, dim*out_per_dim].
ad::Var conditioner_raw(ad::Tape& tape, ad::ParamStore& store,
                        const MadeConditioner& made, ad::Var z, ad::Var ctx);

/// Values-only pass used by the inference sampler and the tests.
RowMatrixX conditioner_raw_fast(const ad::ParamStore& store,
                                const MadeConditioner& made, const RowMatrixX& z,
                                const RowMatrixX& ctx);

/// Spec-facing form: spline parameters for every dimension given one input
/// vector and one context vector.
std::vector<SplineParams> conditioner_forward(const ad::ParamStore& store,
                                              const MadeConditioner& made,
                                              const VectorX& z, const VectorX& ctx,
                                              Real tail);

}  // namespace fspnet::flow
