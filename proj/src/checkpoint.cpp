#include "fspnet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace fspnet {

namespace {

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

constexpr char kMagic[4] = {'F', 'S', 'P', 'C'};

}  // namespace

void save_checkpoint(const ad::ParamStore& store, const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw FileFormatError(FileFormatError::Kind::io, "cannot open " + path);
    write_bytes(f.get(), kMagic, 4, path);
    write_pod<std::uint32_t>(f.get(), kCheckpointVersion, path);
    write_pod<std::uint32_t>(f.get(), std::uint32_t(store.size()), path);
    for (std::size_t i = 0; i < store.size(); ++i) {
        const std::string& name = store.name(i);
        const ad::Param& p = store.param(i);
        write_pod<std::uint32_t>(f.get(), std::uint32_t(name.size()), path);
        write_bytes(f.get(), name.data(), name.size(), path);
        write_pod<std::uint32_t>(f.get(), std::uint32_t(p.shape.ndim), path);
        for (int d = 0; d < p.shape.ndim; ++d)
            write_pod<std::uint64_t>(f.get(), std::uint64_t(p.shape.d[d]), path);
        write_bytes(f.get(), p.value.data(), sizeof(Real) * p.value.size(), path);
    }
}

namespace {

ad::ParamStore read_store(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw FileFormatError(FileFormatError::Kind::io, "cannot open " + path);
    char magic[4];
    read_bytes(f.get(), magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FileFormatError(FileFormatError::Kind::bad_magic,
                              "bad magic in " + path);
    const auto version = read_pod<std::uint32_t>(f.get(), path);
    if (version != kCheckpointVersion)
        throw FileFormatError(FileFormatError::Kind::version_mismatch,
                              "unsupported checkpoint version in " + path);
    const auto count = read_pod<std::uint32_t>(f.get(), path);
    ad::ParamStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(f.get(), path);
        std::string name(name_len, '\0');
        read_bytes(f.get(), name.data(), name_len, path);
        const auto rank = read_pod<std::uint32_t>(f.get(), path);
        if (rank < 1 || rank > 3)
            throw FileFormatError(FileFormatError::Kind::truncated,
                                  "bad rank in " + path);
        ad::Shape shape;
        shape.ndim = int(rank);
        for (std::uint32_t d = 0; d < rank; ++d)
            shape.d[d] = Eigen::Index(read_pod<std::uint64_t>(f.get(), path));
        ArrayX values(shape.size());
        read_bytes(f.get(), values.data(), sizeof(Real) * values.size(), path);
        store.add(name, shape, std::move(values));
    }
    return store;
}

}  // namespace

ad::ParamStore load_checkpoint(const std::string& path) { return read_store(path); }

void load_checkpoint_into(ad::ParamStore& store, const std::string& path) {
    ad::ParamStore loaded = read_store(path);
    for (std::size_t i = 0; i < store.size(); ++i) {
        const std::string& name = store.name(i);
        if (!loaded.contains(name))
            throw RuntimeFailure("checkpoint " + path + " missing entry " + name);
        const ad::Param& src = loaded.at(name);
        ad::Param& dst = store.param(i);
        FSPNET_REQUIRE(src.shape == dst.shape,
                       "checkpoint shape mismatch for " + name);
        dst.value = src.value;
    }
}

}  // namespace fspnet
