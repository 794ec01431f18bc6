#include "fsa/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "fsa/errors.hpp"

namespace fsa {

static const char kMagic[8] = {'F', 'S', 'A', 'C', 'K', 'P', 'T', '\x01'};

template <typename T>
static void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
static T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("corrupt checkpoint: " + path);
    return v;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    std::string m = meta.dump();
    write_pod<uint64_t>(out, m.size());
    out.write(m.data(), static_cast<std::streamsize>(m.size()));
    write_pod<uint64_t>(out, tensors.size());
    for (const auto& [name, t] : tensors) {
        write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) write_pod<int64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!out) throw DataError("write failed for checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw DataError("corrupt checkpoint (bad magic): " + path);

    Checkpoint ck;
    uint64_t mlen = read_pod<uint64_t>(in, path);
    std::string m(mlen, '\0');
    in.read(m.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw DataError("corrupt checkpoint: " + path);
    try {
        ck.meta = nlohmann::json::parse(m);
    } catch (const nlohmann::json::exception&) {
        throw DataError("corrupt checkpoint (bad metadata): " + path);
    }

    uint64_t count = read_pod<uint64_t>(in, path);
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t nlen = read_pod<uint32_t>(in, path);
        if (nlen > 4096) throw DataError("corrupt checkpoint: " + path);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        uint32_t ndim = read_pod<uint32_t>(in, path);
        if (ndim > 8) throw DataError("corrupt checkpoint: " + path);
        std::vector<int> shape;
        int64_t size = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            int64_t dim = read_pod<int64_t>(in, path);
            if (dim <= 0 || dim > (1 << 28)) throw DataError("corrupt checkpoint: " + path);
            shape.push_back(static_cast<int>(dim));
            size *= dim;
        }
        ad::Tensor t = ad::Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(size * sizeof(double)));
        if (!in) throw DataError("corrupt checkpoint: " + path);
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    return ck;
}

const ad::Tensor& Checkpoint::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint missing tensor: " + name);
    return it->second;
}

}  // namespace fsa
