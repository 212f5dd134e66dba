#pragma once

#include <string>

#include "fspnet/ad/ops.hpp"
#include "fspnet/rng.hpp"

namespace fspnet::ad {

/// Gaussian init with the given std; stream derived from the tensor name so
/// initialization is independent of creation order.
ArrayX normal_init(const Shape& shape, Real stddev, std::uint64_t seed,
                   const std::string& name);

enum class Init { he, scaled, zero };

struct DenseLayer {
    std::string w, b;
    Eigen::Index in = 0, out = 0;
};

DenseLayer make_dense(ParamStore& store, const std::string& name, Eigen::Index in,
                      Eigen::Index out, std::uint64_t seed, Init init = Init::he);

Var apply(const DenseLayer& layer, Tape& tape, ParamStore& store, Var x);

struct Conv1dLayer {
    std::string k, b;
    Eigen::Index ci = 0, co = 0, ksize = 0;
    int stride = 1;
};

Conv1dLayer make_conv1d(ParamStore& store, const std::string& name, Eigen::Index ci,
                        Eigen::Index co, Eigen::Index ksize, int stride,
                        std::uint64_t seed);

Var apply(const Conv1dLayer& layer, Tape& tape, ParamStore& store, Var x);

/// One GRU direction. Gating follows the original formulation:
///   z = sig(x Wz^T + h Uz^T + bz)
///   r = sig(x Wr^T + h Ur^T + br)
///   n = tanh(x Wn^T + (r.h) Un^T + bn)
///   h' = (1-z).n + z.h
struct GruDirection {
    std::string wz, wr, wn, uz, ur, un, bz, br, bn;
    Eigen::Index in = 0, hidden = 0;
};

struct BiGru {
    GruDirection fwd, bwd;
};

BiGru make_bigru(ParamStore& store, const std::string& name, Eigen::Index in,
                 Eigen::Index hidden, std::uint64_t seed);

/// seq: [batch, len, feat] -> [batch, len, 2*hidden]; forward half processes
/// t = 0..len-1, backward half len-1..0, concatenated per step.
Var bigru_forward(const BiGru& gru, Tape& tape, ParamStore& store, Var seq);

}  // namespace fspnet::ad
