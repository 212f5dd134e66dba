#include "fspnet/ad/layers.hpp"

namespace fspnet::ad {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace

ArrayX normal_init(const Shape& shape, Real stddev, std::uint64_t seed,
                   const std::string& name) {
    Rng rng(seed, fnv1a(name));
    ArrayX a(shape.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = stddev * rng.normal();
    return a;
}

DenseLayer make_dense(ParamStore& store, const std::string& name, Eigen::Index in,
                      Eigen::Index out, std::uint64_t seed, Init init) {
    DenseLayer l{name + ".weight", name + ".bias", in, out};
    Real stddev = 0.0;
    switch (init) {
        case Init::he: stddev = std::sqrt(2.0 / Real(in)); break;
        case Init::scaled: stddev = std::sqrt(1.0 / Real(in)); break;
        case Init::zero: stddev = 0.0; break;
    }
    ArrayX w = stddev > 0 ? normal_init(Shape(out, in), stddev, seed, l.w)
                          : ArrayX::Zero(out * in);
    store.add(l.w, Shape(out, in), std::move(w));
    store.add(l.b, Shape(out), ArrayX::Zero(out));
    return l;
}

Var apply(const DenseLayer& layer, Tape& tape, ParamStore& store, Var x) {
    Var w = tape.leaf(store.at(layer.w));
    Var b = tape.leaf(store.at(layer.b));
    return dense(x, w, b);
}

Conv1dLayer make_conv1d(ParamStore& store, const std::string& name, Eigen::Index ci,
                        Eigen::Index co, Eigen::Index ksize, int stride,
                        std::uint64_t seed) {
    Conv1dLayer l{name + ".weight", name + ".bias", ci, co, ksize, stride};
    const Real stddev = std::sqrt(2.0 / Real(ci * ksize));
    store.add(l.k, Shape(co, ci, ksize), normal_init(Shape(co, ci, ksize), stddev, seed, l.k));
    store.add(l.b, Shape(co), ArrayX::Zero(co));
    return l;
}

Var apply(const Conv1dLayer& layer, Tape& tape, ParamStore& store, Var x) {
    Var k = tape.leaf(store.at(layer.k));
    Var b = tape.leaf(store.at(layer.b));
    return conv1d(x, k, b, layer.stride);
}

namespace {

GruDirection make_gru_direction(ParamStore& store, const std::string& name,
                                Eigen::Index in, Eigen::Index hidden,
                                std::uint64_t seed) {
    GruDirection d;
    d.in = in;
    d.hidden = hidden;
    const Real sx = std::sqrt(1.0 / Real(in));
    const Real sh = std::sqrt(1.0 / Real(hidden));
    auto addw = [&](std::string& slot, const std::string& suffix, Eigen::Index r,
                    Eigen::Index c, Real stddev) {
        slot = name + suffix;
        store.add(slot, Shape(r, c), normal_init(Shape(r, c), stddev, seed, slot));
    };
    auto addb = [&](std::string& slot, const std::string& suffix) {
        slot = name + suffix;
        store.add(slot, Shape(hidden), ArrayX::Zero(hidden));
    };
    addw(d.wz, ".wz", hidden, in, sx);
    addw(d.wr, ".wr", hidden, in, sx);
    addw(d.wn, ".wn", hidden, in, sx);
    addw(d.uz, ".uz", hidden, hidden, sh);
    addw(d.ur, ".ur", hidden, hidden, sh);
    addw(d.un, ".un", hidden, hidden, sh);
    addb(d.bz, ".bz");
    addb(d.br, ".br");
    addb(d.bn, ".bn");
    return d;
}

std::vector<Var> gru_run(const GruDirection& d, Tape& tape, ParamStore& store,
                         Var seq, bool reverse) {
    const Eigen::Index batch = seq.shape().d[0];
    const Eigen::Index len = seq.shape().d[1];
    Var wz = tape.leaf(store.at(d.wz)), wr = tape.leaf(store.at(d.wr)),
        wn = tape.leaf(store.at(d.wn));
    Var uz = tape.leaf(store.at(d.uz)), ur = tape.leaf(store.at(d.ur)),
        un = tape.leaf(store.at(d.un));
    Var bz = tape.leaf(store.at(d.bz)), br = tape.leaf(store.at(d.br)),
        bn = tape.leaf(store.at(d.bn));

    Var h = tape.constant(ArrayX::Zero(batch * d.hidden), Shape(batch, d.hidden));
    std::vector<Var> outputs(len);
    for (Eigen::Index step = 0; step < len; ++step) {
        const Eigen::Index t = reverse ? len - 1 - step : step;
        Var x = slice_time(seq, t);
        Var z = sigmoid(dense(x, wz, bz) + matmul_nt(h, uz));
        Var r = sigmoid(dense(x, wr, br) + matmul_nt(h, ur));
        Var n = tanh_v(dense(x, wn, bn) + matmul_nt(r * h, un));
        h = (1.0 - z) * n + z * h;
        outputs[t] = h;
    }
    return outputs;
}

}  // namespace

BiGru make_bigru(ParamStore& store, const std::string& name, Eigen::Index in,
                 Eigen::Index hidden, std::uint64_t seed) {
    BiGru g;
    g.fwd = make_gru_direction(store, name + ".fwd", in, hidden, seed);
    g.bwd = make_gru_direction(store, name + ".bwd", in, hidden, seed);
    return g;
}

Var bigru_forward(const BiGru& gru, Tape& tape, ParamStore& store, Var seq) {
    FSPNET_REQUIRE(seq.shape().ndim == 3, "bigru_forward: expects [batch,len,feat]");
    FSPNET_REQUIRE(seq.shape().d[1] >= 1, "bigru_forward: empty sequence");
    std::vector<Var> f = gru_run(gru.fwd, tape, store, seq, false);
    std::vector<Var> b = gru_run(gru.bwd, tape, store, seq, true);
    const Eigen::Index len = seq.shape().d[1];
    std::vector<Var> joined(len);
    for (Eigen::Index t = 0; t < len; ++t) joined[t] = concat_cols({f[t], b[t]});
    return stack_time(joined);
}

}  // namespace fspnet::ad
