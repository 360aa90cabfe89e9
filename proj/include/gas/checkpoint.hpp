#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gas/tensor.hpp"

namespace gas {

// GASM checkpoint container:
//   magic "GASM", version u32 LE, tensor count u32 LE, then per tensor:
//   name length u16 + UTF-8 name, rank u8, dims (u32 each), dtype u8
//   (0 = f32), raw little-endian payload.
// Payloads are always f32 on disk; double tensors are narrowed on save.

namespace ckpt_detail {

inline void put_u16(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
    os.write((const char*)b, 2);
}
inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    os.write((const char*)b, 4);
}
inline uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read((char*)b, 2);
    return (uint16_t)(b[0] | (b[1] << 8));
}
inline uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read((char*)b, 4);
    return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}

}  // namespace ckpt_detail

template <typename S>
void save_checkpoint(const std::string& path, const ParamSet<S>& params) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        require(os.good(), detail::str("cannot open checkpoint for writing: ", path));
        os.write("GASM", 4);
        ckpt_detail::put_u32(os, 1u);  // version
        ckpt_detail::put_u32(os, (uint32_t)params.items.size());
        for (auto& it : params.items) {
            const std::string& name = it.first;
            const Tensor<S>& t = it.second;
            require(name.size() <= 0xffff, "checkpoint: tensor name too long");
            ckpt_detail::put_u16(os, (uint16_t)name.size());
            os.write(name.data(), (std::streamsize)name.size());
            os.put((char)t.rank());
            for (int d = 0; d < t.rank(); ++d) ckpt_detail::put_u32(os, (uint32_t)t.dim(d));
            os.put((char)0);  // dtype f32
            const S* src = t.data();
            std::vector<float> buf(t.numel());
            for (long i = 0; i < t.numel(); ++i) buf[i] = (float)src[i];
            os.write((const char*)buf.data(), (std::streamsize)(buf.size() * sizeof(float)));
        }
        require(os.good(), detail::str("write failed for checkpoint: ", path));
    }
    fs::rename(tmp, target);
}

// Loads into an existing ParamSet; every stored tensor must exist with a
// matching shape. Returns the number of tensors loaded.
template <typename S>
size_t load_checkpoint(const std::string& path, ParamSet<S>& params) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), detail::str("cannot open checkpoint: ", path));
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::string(magic, 4) == "GASM", detail::str("bad checkpoint magic in ", path));
    const uint32_t version = ckpt_detail::get_u32(is);
    require(version == 1, detail::str("unsupported checkpoint version ", version, " in ", path));
    const uint32_t count = ckpt_detail::get_u32(is);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = ckpt_detail::get_u16(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const int rank = is.get();
        Shape shape(rank);
        for (int d = 0; d < rank; ++d) shape[d] = (int)ckpt_detail::get_u32(is);
        const int dtype = is.get();
        require(dtype == 0, detail::str("unsupported dtype code ", dtype, " for tensor '", name, "'"));
        const long n = numel_of(shape);
        std::vector<float> buf(n);
        is.read((char*)buf.data(), (std::streamsize)(n * sizeof(float)));
        require(is.good(), detail::str("truncated checkpoint: ", path));
        Tensor<S>* dst = params.find(name);
        require(dst != nullptr, detail::str("checkpoint tensor '", name, "' has no destination parameter"));
        require(dst->shape() == shape, detail::str("checkpoint tensor '", name, "' shape ", shape_str(shape),
                                                   " does not match parameter shape ", shape_str(dst->shape())));
        S* out = dst->data();
        for (long k = 0; k < n; ++k) out[k] = (S)buf[k];
    }
    return count;
}

}  // namespace gas
