#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "gas/tensor.hpp"

namespace gas {

// Float image, row-major interleaved (h, w, c), values in [0,1] by convention.
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<float> px;

    Image() = default;
    Image(int h_, int w_, int c_, float fill = 0.f) : h(h_), w(w_), c(c_), px((size_t)h_ * w_ * c_, fill) {}

    float& at(int y, int x, int ch) { return px[((size_t)y * w + x) * c + ch]; }
    float at(int y, int x, int ch) const { return px[((size_t)y * w + x) * c + ch]; }
    long numel() const { return (long)px.size(); }
};

// channel-planar tensor [C,H,W] <-> interleaved image
template <typename S>
Tensor<S> image_to_tensor(const Image& im) {
    Tensor<S> t(Shape{im.c, im.h, im.w});
    S* p = t.data();
    for (int ch = 0; ch < im.c; ++ch)
        for (int y = 0; y < im.h; ++y)
            for (int x = 0; x < im.w; ++x) *p++ = (S)im.at(y, x, ch);
    return t;
}

template <typename S>
Image tensor_to_image(const Tensor<S>& t) {
    require(t.rank() == 3, "tensor_to_image: expected [C,H,W]");
    Image im(t.dim(1), t.dim(2), t.dim(0));
    const S* p = t.data();
    for (int ch = 0; ch < im.c; ++ch)
        for (int y = 0; y < im.h; ++y)
            for (int x = 0; x < im.w; ++x) im.at(y, x, ch) = (float)*p++;
    return im;
}

// ---------------------------------------------------------------------------
// Minimal PNG codec over zlib. Supports exactly what the pipeline emits:
// 8-bit gray / 8-bit RGB / 16-bit gray, filter types 0-4 on read, filter 0 on
// write. Fixed compression settings keep outputs byte-reproducible.
// ---------------------------------------------------------------------------

namespace png_detail {

inline void put_u32be(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back((uint8_t)(x >> 24));
    v.push_back((uint8_t)(x >> 16));
    v.push_back((uint8_t)(x >> 8));
    v.push_back((uint8_t)x);
}

inline void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32be(out, (uint32_t)data.size());
    const size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + type_at, (uInt)(4 + data.size()));
    put_u32be(out, crc);
}

inline std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& raw) {
    uLongf bound = compressBound((uLong)raw.size());
    std::vector<uint8_t> out(bound);
    require(compress2(out.data(), &bound, raw.data(), (uLong)raw.size(), 6) == Z_OK, "png: deflate failed");
    out.resize(bound);
    return out;
}

inline std::vector<uint8_t> zlib_inflate(const uint8_t* data, size_t len, size_t expected) {
    std::vector<uint8_t> out(expected);
    uLongf dst = (uLongf)expected;
    require(uncompress(out.data(), &dst, data, (uLong)len) == Z_OK && dst == expected, "png: inflate failed");
    return out;
}

inline int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace png_detail

// raw: 8-bit samples (bit_depth 8) or big-endian 16-bit pairs (bit_depth 16)
inline void write_png(const std::string& path, const std::vector<uint8_t>& raw, int w, int h, int channels,
                      int bit_depth) {
    require(bit_depth == 8 || bit_depth == 16, "png: bit depth must be 8 or 16");
    require(channels == 1 || channels == 3, "png: channels must be 1 or 3");
    const size_t row_bytes = (size_t)w * channels * (bit_depth / 8);
    require(raw.size() == row_bytes * h, "png: raw buffer size mismatch");

    std::vector<uint8_t> filtered;
    filtered.reserve((row_bytes + 1) * h);
    for (int y = 0; y < h; ++y) {
        filtered.push_back(0);  // filter type 0
        filtered.insert(filtered.end(), raw.begin() + y * row_bytes, raw.begin() + (y + 1) * row_bytes);
    }

    std::vector<uint8_t> out;
    const uint8_t sig[8] = {137, 'P', 'N', 'G', 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);

    std::vector<uint8_t> ihdr;
    png_detail::put_u32be(ihdr, (uint32_t)w);
    png_detail::put_u32be(ihdr, (uint32_t)h);
    ihdr.push_back((uint8_t)bit_depth);
    ihdr.push_back(channels == 3 ? 2 : 0);  // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    png_detail::put_chunk(out, "IHDR", ihdr);
    png_detail::put_chunk(out, "IDAT", png_detail::zlib_deflate(filtered));
    png_detail::put_chunk(out, "IEND", {});

    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        require(os.good(), detail::str("cannot write png: ", path));
        os.write((const char*)out.data(), (std::streamsize)out.size());
    }
    fs::rename(tmp, target);
}

struct PngData {
    int w = 0, h = 0, channels = 0, bit_depth = 0;
    std::vector<uint8_t> raw;  // unfiltered samples, 16-bit stays big-endian
};

inline PngData read_png(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), detail::str("cannot open png: ", path));
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    require(bytes.size() > 8 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G',
            detail::str("not a png file: ", path));

    PngData png;
    std::vector<uint8_t> idat;
    size_t at = 8;
    auto u32 = [&](size_t p) {
        return ((uint32_t)bytes[p] << 24) | ((uint32_t)bytes[p + 1] << 16) | ((uint32_t)bytes[p + 2] << 8) |
               bytes[p + 3];
    };
    while (at + 8 <= bytes.size()) {
        const uint32_t len = u32(at);
        const std::string type((const char*)&bytes[at + 4], 4);
        const size_t data_at = at + 8;
        require(data_at + len <= bytes.size(), detail::str("truncated png: ", path));
        if (type == "IHDR") {
            png.w = (int)u32(data_at);
            png.h = (int)u32(data_at + 4);
            png.bit_depth = bytes[data_at + 8];
            const int color_type = bytes[data_at + 9];
            require(color_type == 0 || color_type == 2, detail::str("unsupported png color type ", color_type));
            require(bytes[data_at + 12] == 0, "interlaced png not supported");
            png.channels = color_type == 2 ? 3 : 1;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), bytes.begin() + data_at, bytes.begin() + data_at + len);
        } else if (type == "IEND") {
            break;
        }
        at = data_at + len + 4;  // skip crc
    }
    require(png.w > 0 && png.h > 0 && !idat.empty(), detail::str("malformed png: ", path));

    const int bpp = png.channels * (png.bit_depth / 8);
    const size_t row_bytes = (size_t)png.w * bpp;
    std::vector<uint8_t> filtered = png_detail::zlib_inflate(idat.data(), idat.size(), (row_bytes + 1) * png.h);

    png.raw.resize(row_bytes * png.h);
    std::vector<uint8_t> prev(row_bytes, 0);
    for (int y = 0; y < png.h; ++y) {
        const uint8_t filter = filtered[(row_bytes + 1) * y];
        const uint8_t* src = &filtered[(row_bytes + 1) * y + 1];
        uint8_t* dst = &png.raw[row_bytes * y];
        for (size_t i = 0; i < row_bytes; ++i) {
            const int a = i >= (size_t)bpp ? dst[i - bpp] : 0;
            const int b = prev[i];
            const int c = i >= (size_t)bpp ? prev[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += png_detail::paeth(a, b, c); break;
                default: fail(detail::str("bad png filter type ", (int)filter));
            }
            dst[i] = (uint8_t)v;
        }
        std::memcpy(prev.data(), dst, row_bytes);
    }
    return png;
}

// float image [0,1] -> 8-bit png
inline void write_png8(const std::string& path, const Image& im) {
    std::vector<uint8_t> raw((size_t)im.h * im.w * im.c);
    for (size_t i = 0; i < raw.size(); ++i) {
        const float v = im.px[i];
        raw[i] = (uint8_t)std::lround(std::min(1.f, std::max(0.f, v)) * 255.f);
    }
    write_png(path, raw, im.w, im.h, im.c, 8);
}

inline Image read_png8(const std::string& path) {
    PngData png = read_png(path);
    require(png.bit_depth == 8, detail::str("expected 8-bit png: ", path));
    Image im(png.h, png.w, png.channels);
    for (size_t i = 0; i < png.raw.size(); ++i) im.px[i] = png.raw[i] / 255.f;
    return im;
}

// depth in meters -> 16-bit png with millimeter quantization
inline void write_png_depth16(const std::string& path, const std::vector<float>& depth_m, int w, int h) {
    require((long)depth_m.size() == (long)w * h, "depth16: size mismatch");
    std::vector<uint8_t> raw((size_t)w * h * 2);
    for (long i = 0; i < (long)depth_m.size(); ++i) {
        const long mm = std::lround(std::max(0.f, depth_m[i]) * 1000.f);
        const uint16_t q = (uint16_t)std::min(mm, 65535L);
        raw[i * 2] = (uint8_t)(q >> 8);  // big-endian per png spec
        raw[i * 2 + 1] = (uint8_t)(q & 0xff);
    }
    write_png(path, raw, w, h, 1, 16);
}

inline std::vector<float> read_png_depth16(const std::string& path, int* w_out = nullptr, int* h_out = nullptr) {
    PngData png = read_png(path);
    require(png.bit_depth == 16 && png.channels == 1, detail::str("expected 16-bit gray png: ", path));
    std::vector<float> depth((size_t)png.w * png.h);
    for (size_t i = 0; i < depth.size(); ++i) {
        const uint16_t q = (uint16_t)((png.raw[i * 2] << 8) | png.raw[i * 2 + 1]);
        depth[i] = q / 1000.f;
    }
    if (w_out) *w_out = png.w;
    if (h_out) *h_out = png.h;
    return depth;
}

}  // namespace gas
