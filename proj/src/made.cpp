#include "fspnet/flow/made.hpp"

#include "fspnet/ad/layers.hpp"

namespace fspnet::flow {

namespace {

int hidden_degree(int unit, int dim) { return unit % dim; }

}  // namespace

MadeConditioner make_conditioner(ad::ParamStore& store, const std::string& prefix,
                                 int dim, int context_dim, int hidden,
                                 int out_per_dim, std::uint64_t seed) {
    FSPNET_REQUIRE(dim >= 1 && hidden >= dim, "made: hidden width below dim");
    MadeConditioner m;
    m.dim = dim;
    m.context_dim = context_dim;
    m.hidden = hidden;
    m.out_per_dim = out_per_dim;
    m.w1 = prefix + ".w1";
    m.b1 = prefix + ".b1";
    m.wc = prefix + ".wc";
    m.w2 = prefix + ".w2";
    m.b2 = prefix + ".b2";
    m.w3 = prefix + ".w3";
    m.b3 = prefix + ".b3";

    // input degree of z_i is i+1; hidden degrees cycle over 0..dim-1
    ArrayX m1 = ArrayX::Zero(hidden * dim);
    for (int h = 0; h < hidden; ++h)
        for (int i = 0; i < dim; ++i)
            if (hidden_degree(h, dim) >= i + 1) m1[h * dim + i] = 1.0;
    ArrayX m2 = ArrayX::Zero(hidden * hidden);
    for (int h2 = 0; h2 < hidden; ++h2)
        for (int h1 = 0; h1 < hidden; ++h1)
            if (hidden_degree(h2, dim) >= hidden_degree(h1, dim))
                m2[h2 * hidden + h1] = 1.0;
    const int out_total = dim * out_per_dim;
    ArrayX m3 = ArrayX::Zero(out_total * hidden);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < out_per_dim; ++j)
            for (int h = 0; h < hidden; ++h)
                if (i + 1 > hidden_degree(h, dim))
                    m3[(i * out_per_dim + j) * hidden + h] = 1.0;
    m.mask1 = std::make_shared<const ArrayX>(std::move(m1));
    m.mask2 = std::make_shared<const ArrayX>(std::move(m2));
    m.mask3 = std::make_shared<const ArrayX>(std::move(m3));

    const Real s_in = std::sqrt(2.0 / Real(dim));
    const Real s_ctx = std::sqrt(1.0 / Real(std::max(context_dim, 1)));
    const Real s_hid = std::sqrt(2.0 / Real(hidden));
    store.add(m.w1, ad::Shape(hidden, dim),
              ad::normal_init(ad::Shape(hidden, dim), s_in, seed, m.w1));
    store.add(m.b1, ad::Shape(hidden), ArrayX::Zero(hidden));
    store.add(m.wc, ad::Shape(hidden, context_dim),
              ad::normal_init(ad::Shape(hidden, context_dim), s_ctx, seed, m.wc));
    store.add(m.w2, ad::Shape(hidden, hidden),
              ad::normal_init(ad::Shape(hidden, hidden), s_hid, seed, m.w2));
    store.add(m.b2, ad::Shape(hidden), ArrayX::Zero(hidden));
    // zero final layer: the flow starts as the identity transform
    store.add(m.w3, ad::Shape(out_total, hidden), ArrayX::Zero(out_total * hidden));
    store.add(m.b3, ad::Shape(out_total), ArrayX::Zero(out_total));
    return m;
}

ad::Var conditioner_raw(ad::Tape& tape, ad::ParamStore& store,
                        const MadeConditioner& made, ad::Var z, ad::Var ctx) {
    using namespace ad;
    FSPNET_REQUIRE(z.shape().cols() == made.dim, "conditioner: z width");
    FSPNET_REQUIRE(ctx.shape().cols() == made.context_dim, "conditioner: ctx width");
    Var w1 = tape.leaf(store.at(made.w1));
    Var b1 = tape.leaf(store.at(made.b1));
    Var wc = tape.leaf(store.at(made.wc));
    Var h1 = gelu(dense(z, w1, b1, made.mask1) + matmul_nt(ctx, wc));
    Var w2 = tape.leaf(store.at(made.w2));
    Var b2 = tape.leaf(store.at(made.b2));
    Var h2 = gelu(dense(h1, w2, b2, made.mask2));
    Var w3 = tape.leaf(store.at(made.w3));
    Var b3 = tape.leaf(store.at(made.b3));
    return dense(h2, w3, b3, made.mask3);
}

RowMatrixX conditioner_raw_fast(const ad::ParamStore& store,
                                const MadeConditioner& made, const RowMatrixX& z,
                                const RowMatrixX& ctx) {
    auto masked = [&](const std::string& name, const ArrayX& mask, Eigen::Index r,
                      Eigen::Index c) {
        ArrayX wm = store.at(name).value * mask;
        return RowMatrixX(ConstMapRowMatrix(wm.data(), r, c));
    };
    auto plain = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
        const ArrayX& w = store.at(name).value;
        return ConstMapRowMatrix(w.data(), r, c);
    };
    auto bias_row = [&](const std::string& name) {
        const ArrayX& b = store.at(name).value;
        return ConstMapRowMatrix(b.data(), 1, b.size());
    };
    auto gelu_inplace = [](RowMatrixX& m) {
        m = m.unaryExpr([](Real x) {
            return x * 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
        });
    };

    const int H = made.hidden, D = made.dim, O = D * made.out_per_dim;
    RowMatrixX w1m = masked(made.w1, *made.mask1, H, D);
    RowMatrixX w2m = masked(made.w2, *made.mask2, H, H);
    RowMatrixX w3m = masked(made.w3, *made.mask3, O, H);

    RowMatrixX h1 = z * w1m.transpose();
    h1.noalias() += ctx * plain(made.wc, H, made.context_dim).transpose();
    h1.rowwise() += bias_row(made.b1).row(0);
    gelu_inplace(h1);
    RowMatrixX h2 = h1 * w2m.transpose();
    h2.rowwise() += bias_row(made.b2).row(0);
    gelu_inplace(h2);
    RowMatrixX raw = h2 * w3m.transpose();
    raw.rowwise() += bias_row(made.b3).row(0);
    return raw;
}

std::vector<SplineParams> conditioner_forward(const ad::ParamStore& store,
                                              const MadeConditioner& made,
                                              const VectorX& z, const VectorX& ctx,
                                              Real tail) {
    FSPNET_REQUIRE(z.size() == made.dim, "conditioner_forward: z size");
    FSPNET_REQUIRE(ctx.size() == made.context_dim, "conditioner_forward: ctx size");
    RowMatrixX zr = z.transpose();
    RowMatrixX cr = ctx.transpose();
    RowMatrixX raw = conditioner_raw_fast(store, made, zr, cr);
    const int bins = (made.out_per_dim + 1) / 3;
    std::vector<SplineParams> out;
    out.reserve(made.dim);
    for (int i = 0; i < made.dim; ++i) {
        VectorX block = raw.row(0).segment(i * made.out_per_dim, made.out_per_dim);
        out.push_back(spline_params_from_raw(block, bins, tail));
    }
    return out;
}

}  // namespace fspnet::flow
