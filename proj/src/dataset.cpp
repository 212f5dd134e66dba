#include "fspnet/data/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <numeric>
#include <thread>
#include <vector>

#include "fspnet/rng.hpp"

namespace fspnet::data {

namespace {

constexpr Real kLn10 = 2.302585092994045684;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_bytes(std::FILE* f, const void* p, std::size_t n, const std::string& path) {
    if (std::fwrite(p, 1, n, f) != n)
        throw FileFormatError(FileFormatError::Kind::io, "write failed: " + path);
}
void read_bytes(std::FILE* f, void* p, std::size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n)
        throw FileFormatError(FileFormatError::Kind::truncated,
                              "truncated file: " + path);
}
template <typename T>
void write_pod(std::FILE* f, T v, const std::string& path) {
    write_bytes(f, &v, sizeof(T), path);
}
template <typename T>
T read_pod(std::FILE* f, const std::string& path) {
    T v;
    read_bytes(f, &v, sizeof(T), path);
    return v;
}

constexpr char kMagic[4] = {'F', 'S', 'P', 'N'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

PriorBox PriorBox::standard() {
    PriorBox b;
    b.p[0] = {0.1, 2.5, false};   // kT_disk [keV]
    b.p[1] = {10.0, 1e5, true};   // N
    b.p[2] = {1.3, 3.5, false};   // Gamma
    b.p[3] = {1e-3, 1.0, true};   // f_sc
    b.p[4] = {0.01, 10.0, true};  // N_H [1e22 cm^-2]
    return b;
}

void PriorBox::validate() const {
    for (const auto& s : p) {
        FSPNET_REQUIRE(s.lo < s.hi, "PriorBox: min must be below max");
        FSPNET_REQUIRE(!s.log_scale || s.lo > 0, "PriorBox: log scale needs min > 0");
    }
}

RowMatrixX sample_prior(const PriorBox& box, int n, std::uint64_t seed) {
    FSPNET_REQUIRE(n >= 1, "sample_prior: n >= 1");
    box.validate();
    RowMatrixX out(n, 5);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 5; ++j) {
            const PriorScale& s = box.p[j];
            if (s.log_scale) {
                out(i, j) = std::exp(rng.uniform(std::log(s.lo), std::log(s.hi)));
            } else {
                out(i, j) = rng.uniform(s.lo, s.hi);
            }
        }
    }
    return out;
}

namespace {

Real to_unit_one(Real v, const PriorScale& s, long* clamps) {
    Real lo = s.lo, hi = s.hi, x = v;
    if (s.log_scale) {
        lo = std::log(s.lo);
        hi = std::log(s.hi);
        x = std::log(std::max(v, 1e-300));
    }
    Real u = 2.0 * (x - lo) / (hi - lo) - 1.0;
    if (u < -1.0 || u > 1.0) {
        if (clamps) ++(*clamps);
        u = std::min(std::max(u, -1.0), 1.0);
    }
    return u;
}

Real from_unit_one(Real u, const PriorScale& s) {
    Real lo = s.lo, hi = s.hi;
    if (s.log_scale) {
        lo = std::log(s.lo);
        hi = std::log(s.hi);
    }
    const Real x = lo + 0.5 * (u + 1.0) * (hi - lo);
    return s.log_scale ? std::exp(x) : x;
}

}  // namespace

Vector5 params_to_unit(const Vector5& p, const PriorBox& box, long* clamp_counter) {
    Vector5 u;
    for (int j = 0; j < 5; ++j) u[j] = to_unit_one(p[j], box.p[j], clamp_counter);
    return u;
}

Vector5 unit_to_params(const Vector5& u, const PriorBox& box) {
    Vector5 p;
    for (int j = 0; j < 5; ++j) p[j] = from_unit_one(u[j], box.p[j]);
    return p;
}

RowMatrixX params_to_unit(const RowMatrixX& p, const PriorBox& box,
                          long* clamp_counter) {
    RowMatrixX u(p.rows(), 5);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (int j = 0; j < 5; ++j)
            u(i, j) = to_unit_one(p(i, j), box.p[j], clamp_counter);
    return u;
}

RowMatrixX unit_to_params(const RowMatrixX& u, const PriorBox& box) {
    RowMatrixX p(u.rows(), 5);
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (int j = 0; j < 5; ++j) p(i, j) = from_unit_one(u(i, j), box.p[j]);
    return p;
}

physics::Spectrum Dataset::spectrum(Eigen::Index i) const {
    physics::Spectrum s;
    s.counts = counts.row(i).array();
    s.sigma = sigmas.row(i).array();
    s.exposure = response.exposure;
    s.noisy = noisy;
    return s;
}

std::pair<Real, Real> log_count_stats(const RowMatrixX& counts) {
    const Eigen::Index n = counts.size();
    Real mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        mean += std::log10(std::max(Real(counts.data()[i]), kCountFloor));
    mean /= Real(n);
    Real var = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Real d = std::log10(std::max(Real(counts.data()[i]), kCountFloor)) - mean;
        var += d * d;
    }
    var /= Real(n);
    const Real sd = std::sqrt(std::max(var, 1e-24));
    return {mean, sd};
}

Dataset generate_dataset(const PriorBox& box, int n, int n_bins,
                         std::uint64_t seed, const GenerateOptions& opt) {
    FSPNET_REQUIRE(n >= 1, "generate_dataset: n >= 1");
    const physics::EnergyGrid grid = physics::EnergyGrid::make(n_bins);
    Dataset ds;
    ds.noisy = opt.noisy || opt.real_proxy;
    ds.response = physics::ResponseModel::make(grid, opt.exposure);
    ds.params = sample_prior(box, n, mix_seed(seed, 0xA11CE));
    ds.counts.resize(n, n_bins);
    ds.sigmas.resize(n, n_bins);

    std::exception_ptr failure;
    auto worker = [&](int begin, int end) {
        try {
            // per-row responses only differ under exposure jitter
            for (int i = begin; i < end; ++i) {
                const std::uint64_t row_seed = mix_seed(seed, std::uint64_t(i));
                physics::PhysParams p = physics::PhysParams::from_vector(
                    Vector5(ds.params.row(i).transpose()));
                const physics::ResponseModel* resp = &ds.response;
                physics::ResponseModel jittered;
                if (opt.real_proxy) {
                    Rng er(row_seed, 0xE9);
                    jittered = ds.response;
                    jittered.exposure = er.uniform(50.0, 500.0);
                    resp = &jittered;
                }
                physics::Spectrum s;
                try {
                    s = physics::forward_model(p, grid, *resp, ds.noisy, row_seed);
                } catch (const std::exception& e) {
                    throw RuntimeFailure("generate_dataset: row " + std::to_string(i) +
                                         ": " + e.what());
                }
                ds.counts.row(i) = s.counts.matrix().transpose();
                ds.sigmas.row(i) = s.sigma.matrix().transpose();
            }
        } catch (...) {
            failure = std::current_exception();
        }
    };

    const int workers = std::max(1, opt.workers);
    if (workers == 1) {
        worker(0, n);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int b = w * chunk, e = std::min(n, b + chunk);
            if (b >= e) break;
            pool.emplace_back(worker, b, e);
        }
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::tie(ds.norm_mu, ds.norm_sigma) = log_count_stats(ds.counts);
    return ds;
}

void preprocess(const ArrayX& counts, const ArrayX& sigmas, Real mu, Real sigma,
                ArrayX& x_out, ArrayX& sx_out) {
    const Eigen::Index n = counts.size();
    x_out.resize(n);
    sx_out.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Real c = std::max(counts[i], kCountFloor);
        x_out[i] = (std::log10(c) - mu) / sigma;
        sx_out[i] = sigmas[i] / (c * kLn10 * sigma);
    }
}

void unpreprocess(const ArrayX& x, const ArrayX& sx, Real mu, Real sigma,
                  ArrayX& counts_out, ArrayX& sigmas_out) {
    const Eigen::Index n = x.size();
    counts_out.resize(n);
    sigmas_out.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Real c = std::pow(10.0, x[i] * sigma + mu);
        counts_out[i] = c;
        sigmas_out[i] = sx[i] * c * kLn10 * sigma;
    }
}

std::pair<Dataset, Dataset> split(const Dataset& ds, Real frac, std::uint64_t seed) {
    FSPNET_REQUIRE(frac > 0.0 && frac < 1.0, "split: frac in (0,1)");
    const Eigen::Index n = ds.rows();
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const Eigen::Index j = Eigen::Index(rng.next_u64() % std::uint64_t(i + 1));
        std::swap(idx[i], idx[j]);
    }
    const Eigen::Index n_val = Eigen::Index(std::llround(Real(n) * (1.0 - frac)));
    const Eigen::Index n_train = n - n_val;
    FSPNET_REQUIRE(n_train >= 1 && n_val >= 0, "split: degenerate sizes");

    auto take = [&](Eigen::Index begin, Eigen::Index count) {
        Dataset out;
        out.noisy = ds.noisy;
        out.response = ds.response;
        out.counts.resize(count, ds.counts.cols());
        out.sigmas.resize(count, ds.sigmas.cols());
        out.params.resize(count, 5);
        for (Eigen::Index k = 0; k < count; ++k) {
            out.counts.row(k) = ds.counts.row(idx[begin + k]);
            out.sigmas.row(k) = ds.sigmas.row(idx[begin + k]);
            out.params.row(k) = ds.params.row(idx[begin + k]);
        }
        return out;
    };
    Dataset train = take(0, n_train);
    Dataset val = take(n_train, n_val);
    std::tie(train.norm_mu, train.norm_sigma) = log_count_stats(train.counts);
    val.norm_mu = train.norm_mu;
    val.norm_sigma = train.norm_sigma;
    return {std::move(train), std::move(val)};
}

std::size_t dataset_header_bytes(std::size_t n_anchors) {
    // magic + version + n(u64) + n_bins(u32) + noisy(u8) + anchor count(u32)
    // + anchors (2 f64 each) + sigma_coef + exposure + mu + sigma
    return 4 + 4 + 8 + 4 + 1 + 4 + 16 * n_anchors + 8 + 8 + 8 + 8;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw FileFormatError(FileFormatError::Kind::io, "cannot open " + path);
    write_bytes(f.get(), kMagic, 4, path);
    write_pod<std::uint32_t>(f.get(), kVersion, path);
    write_pod<std::uint64_t>(f.get(), std::uint64_t(ds.rows()), path);
    write_pod<std::uint32_t>(f.get(), std::uint32_t(ds.n_bins()), path);
    write_pod<std::uint8_t>(f.get(), ds.noisy ? 1 : 0, path);
    write_pod<std::uint32_t>(f.get(), std::uint32_t(ds.response.area_anchors.size()),
                             path);
    for (const auto& [e, a] : ds.response.area_anchors) {
        write_pod<double>(f.get(), e, path);
        write_pod<double>(f.get(), a, path);
    }
    write_pod<double>(f.get(), ds.response.sigma_coef, path);
    write_pod<double>(f.get(), ds.response.exposure, path);
    write_pod<double>(f.get(), ds.norm_mu, path);
    write_pod<double>(f.get(), ds.norm_sigma, path);

    const Eigen::Index n = ds.rows() * ds.n_bins();
    std::vector<float> buf(std::size_t(n));
    for (Eigen::Index i = 0; i < n; ++i) buf[std::size_t(i)] = float(ds.counts.data()[i]);
    write_bytes(f.get(), buf.data(), sizeof(float) * buf.size(), path);
    for (Eigen::Index i = 0; i < n; ++i) buf[std::size_t(i)] = float(ds.sigmas.data()[i]);
    write_bytes(f.get(), buf.data(), sizeof(float) * buf.size(), path);
    write_bytes(f.get(), ds.params.data(), sizeof(double) * std::size_t(ds.params.size()),
                path);
}

Dataset load_dataset(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw FileFormatError(FileFormatError::Kind::io, "cannot open " + path);
    char magic[4];
    read_bytes(f.get(), magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FileFormatError(FileFormatError::Kind::bad_magic, "bad magic in " + path);
    const auto version = read_pod<std::uint32_t>(f.get(), path);
    if (version != kVersion)
        throw FileFormatError(FileFormatError::Kind::version_mismatch,
                              "unsupported dataset version in " + path);
    const auto n = read_pod<std::uint64_t>(f.get(), path);
    const auto n_bins = read_pod<std::uint32_t>(f.get(), path);
    const auto noisy = read_pod<std::uint8_t>(f.get(), path);
    const auto n_anchors = read_pod<std::uint32_t>(f.get(), path);
    std::vector<std::pair<Real, Real>> anchors(n_anchors);
    for (auto& [e, a] : anchors) {
        e = read_pod<double>(f.get(), path);
        a = read_pod<double>(f.get(), path);
    }
    const auto sigma_coef = read_pod<double>(f.get(), path);
    const auto exposure = read_pod<double>(f.get(), path);

    Dataset ds;
    ds.noisy = noisy != 0;
    ds.norm_mu = read_pod<double>(f.get(), path);
    ds.norm_sigma = read_pod<double>(f.get(), path);
    const physics::EnergyGrid grid = physics::EnergyGrid::make(int(n_bins));
    ds.response = physics::ResponseModel::make(grid, anchors, sigma_coef, exposure);

    const std::size_t cells = std::size_t(n) * n_bins;
    std::vector<float> buf(cells);
    ds.counts.resize(Eigen::Index(n), n_bins);
    read_bytes(f.get(), buf.data(), sizeof(float) * cells, path);
    for (std::size_t i = 0; i < cells; ++i) ds.counts.data()[i] = Real(buf[i]);
    ds.sigmas.resize(Eigen::Index(n), n_bins);
    read_bytes(f.get(), buf.data(), sizeof(float) * cells, path);
    for (std::size_t i = 0; i < cells; ++i) ds.sigmas.data()[i] = Real(buf[i]);
    ds.params.resize(Eigen::Index(n), 5);
    read_bytes(f.get(), ds.params.data(), sizeof(double) * std::size_t(n) * 5, path);

    // no trailing garbage
    char extra;
    if (std::fread(&extra, 1, 1, f.get()) == 1)
        throw FileFormatError(FileFormatError::Kind::truncated,
                              "trailing bytes in " + path);
    return ds;
}

void export_params_csv(const Dataset& ds, const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "w"));
    if (!f) throw FileFormatError(FileFormatError::Kind::io, "cannot open " + path);
    std::fputs("kT,N,gamma,fsc,nH\n", f.get());
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        std::fprintf(f.get(), "%.17g,%.17g,%.17g,%.17g,%.17g\n", ds.params(i, 0),
                     ds.params(i, 1), ds.params(i, 2), ds.params(i, 3),
                     ds.params(i, 4));
    }
}

}  // namespace fspnet::data
