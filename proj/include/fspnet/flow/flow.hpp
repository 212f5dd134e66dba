#pragma once

#include "fspnet/flow/made.hpp"
#include "fspnet/rng.hpp"

namespace fspnet::flow {

struct FlowConfig {
    int dim = 5;
    int context_dim = 64;
    int n_transforms = 10;
    int bins = 8;
    int hidden = 128;
    Real tail = 4.0;
};

/// Conditional neural spline flow: a stack of autoregressive
/// rational-quadratic spline transforms, each preceded by a
/// dimension-reversal permutation. With zeroed final conditioner layers the
/// whole stack is the identity, so the initial density is standard normal.
struct FlowModel {
    FlowConfig cfg;
    std::vector<MadeConditioner> conditioners;
    std::vector<std::vector<int>> perms;      // applied before each spline
    std::vector<std::vector<int>> inv_perms;  // undo after inverting a layer
};

FlowModel make_flow(ad::ParamStore& store, const FlowConfig& cfg,
                    std::uint64_t seed, const std::string& prefix = "flow");

/// log q(theta | context) per row, differentiable in the conditioner weights
/// and the context. theta: [b,dim], context: [b,C] -> [b,1].
ad::Var flow_log_prob(ad::Tape& tape, ad::ParamStore& store, const FlowModel& flow,
                      ad::Var theta, ad::Var context);

struct FlowSampleAd {
    ad::Var draws;  // [b,dim]
    ad::Var log_q;  // [b,1]
};

/// Reparameterized draws: fixed base noise pushed through the transforms, so
/// gradients flow from the draws back into the weights and context.
FlowSampleAd flow_sample_ad(ad::Tape& tape, ad::ParamStore& store,
                            const FlowModel& flow, ad::Var context,
                            const RowMatrixX& noise);

/// Draws from one conditional posterior with per-draw log q.
struct PosteriorDraws {
    RowMatrixX draws;  // [n, dim]
    VectorX log_q;     // n
    VectorX context;   // the conditioning vector used
};

/// Tape-free sampler for inference and benchmarking; one context, n draws.
PosteriorDraws flow_sample(const ad::ParamStore& store, const FlowModel& flow,
                           const VectorX& context, int n, std::uint64_t seed);

/// Tape-free density evaluation (values only).
VectorX flow_log_prob_fast(const ad::ParamStore& store, const FlowModel& flow,
                           const RowMatrixX& theta, const RowMatrixX& context);

}  // namespace fspnet::flow
