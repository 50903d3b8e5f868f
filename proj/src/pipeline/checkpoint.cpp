#include "symploc/pipeline/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace symploc::pipeline {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'Y', 'M', 'P', 'L', 'O', 'C', '\x01'};
constexpr std::uint64_t kMaxRank = 8;

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamStore& params) {
    out.write(kMagic, sizeof kMagic);
    put_u64(out, params.size());
    for (const auto& name : params.names()) {
        const ad::Tensor& t = params.get(name);
        put_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(out, t.rank());
        for (std::size_t d : t.shape()) put_u64(out, d);
        out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
}

ParamStore read_checkpoint(std::istream& in) {
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw std::runtime_error("checkpoint: bad magic");
    }
    ParamStore store;
    std::uint64_t count = get_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t len = get_u64(in);
        if (len == 0 || len > 4096) throw std::runtime_error("checkpoint: bad name length");
        std::string name(len, '\0');
        if (!in.read(name.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("checkpoint: truncated");
        std::uint64_t rank = get_u64(in);
        if (rank > kMaxRank) throw std::runtime_error("checkpoint: bad rank for " + name);
        ad::Shape shape(rank);
        for (auto& d : shape) d = get_u64(in);
        std::vector<double> data(ad::shape_size(shape));
        if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
            throw std::runtime_error("checkpoint: truncated payload for " + name);
        }
        store.add(name, ad::Tensor(shape, std::move(data)));
    }
    return store;
}

void save_checkpoint(const std::string& path, const ParamStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_checkpoint(out, params);
    if (!out) throw std::runtime_error("write failed: " + path);
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return read_checkpoint(in);
}

void assign_checkpoint(ParamStore& target, const ParamStore& loaded) {
    if (target.size() != loaded.size()) {
        throw std::runtime_error("checkpoint: expected " + std::to_string(target.size()) + " tensors, found " +
                                 std::to_string(loaded.size()));
    }
    for (const auto& name : loaded.names()) {
        if (!target.contains(name)) throw std::runtime_error("checkpoint: unexpected tensor " + name);
        target.set(name, loaded.get(name));
    }
}

}  // namespace symploc::pipeline
