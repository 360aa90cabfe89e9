#pragma once

#include "gas/image.hpp"
#include "gas/ops.hpp"
#include "gas/rng.hpp"

namespace gas {

// Deterministic latent codec standing in for a pretrained VAE: space-to-depth
// (factor 4) followed by a fixed orthogonal channel mixing, then a learned
// linear projection to the latent width. The mixing stage is an exact inverse
// pair; the projection decodes through its pseudo-inverse, so the full round
// trip only preserves the projected subspace.
template <typename S>
struct LatentCodec {
    static constexpr int kFactor = 4;
    static constexpr int kBlock = kFactor * kFactor * 3;  // 48
    int latent_channels = 16;

    Tensor<S> ortho;   // [48,48] fixed, orthogonal, not learned
    ParamSet<S> params;  // "codec.proj" [48, latent_channels]

    void init(int latent_channels_) {
        latent_channels = latent_channels_;
        require(latent_channels >= 1 && latent_channels <= kBlock, "codec: latent channels out of range");
        ortho = make_orthogonal_mix();
        params = ParamSet<S>{};
        params.add("codec.proj", make_dct_projection(latent_channels));
    }

    Tensor<S> proj() const { return const_cast<ParamSet<S>&>(params).find("codec.proj") != nullptr
                                        ? *const_cast<ParamSet<S>&>(params).find("codec.proj")
                                        : Tensor<S>(); }

    // ---- fixed mixing stage -------------------------------------------------

    // [3,H,W] image tensor -> [hw, 48] block matrix (constants or tape values)
    static Tensor<S> space_to_depth(const Tensor<S>& img) {
        require(img.rank() == 3 && img.dim(0) == 3, "codec: expected [3,H,W]");
        const int H = img.dim(1), W = img.dim(2);
        require(H % kFactor == 0 && W % kFactor == 0,
                detail::str("codec: image ", H, "x", W, " not divisible by ", kFactor));
        const int h = H / kFactor, w = W / kFactor;
        Tensor<S> out(Shape{h * w, kBlock});
        const S* p = img.data();
        S* o = out.data();
        for (int by = 0; by < h; ++by)
            for (int bx = 0; bx < w; ++bx)
                for (int c = 0; c < 3; ++c)
                    for (int dy = 0; dy < kFactor; ++dy)
                        for (int dx = 0; dx < kFactor; ++dx)
                            o[((long)by * w + bx) * kBlock + (c * 16 + dy * kFactor + dx)] =
                                p[((long)c * H + by * kFactor + dy) * W + bx * kFactor + dx];
        return out;
    }

    static Tensor<S> depth_to_space(const Tensor<S>& blocks, int H, int W) {
        const int h = H / kFactor, w = W / kFactor;
        require(blocks.rank() == 2 && blocks.dim(0) == h * w && blocks.dim(1) == kBlock,
                "codec: bad block matrix shape");
        Tensor<S> out(Shape{3, H, W});
        const S* p = blocks.data();
        S* o = out.data();
        for (int by = 0; by < h; ++by)
            for (int bx = 0; bx < w; ++bx)
                for (int c = 0; c < 3; ++c)
                    for (int dy = 0; dy < kFactor; ++dy)
                        for (int dx = 0; dx < kFactor; ++dx)
                            o[((long)c * H + by * kFactor + dy) * W + bx * kFactor + dx] =
                                p[((long)by * w + bx) * kBlock + (c * 16 + dy * kFactor + dx)];
        return out;
    }

    // mixed = blocks * ortho^T   (rows are block vectors)
    Tensor<S> mix(const Tensor<S>& img) const {
        return matmul(space_to_depth(img), permute(ortho, {1, 0}));
    }
    Tensor<S> unmix(const Tensor<S>& mixed, int H, int W) const {
        return depth_to_space(matmul(mixed, ortho), H, W);
    }

    // ---- learned projection stage -------------------------------------------

    // [3,H,W] -> [C1, H/4, W/4]; differentiable w.r.t. the projection
    Tensor<S> encode(const Tensor<S>& img) const {
        const int h = img.dim(1) / kFactor, w = img.dim(2) / kFactor;
        Tensor<S> latent = matmul(mix(img), *const_cast<ParamSet<S>&>(params).find("codec.proj"));
        return permute(reshape(latent, {h, w, latent_channels}), {2, 0, 1});
    }

    Tensor<S> encode_image(const Image& im) const { return encode(image_to_tensor<S>(im)); }

    // [C1,h,w] -> [3,H,W] through the projection's pseudo-inverse (inference)
    Tensor<S> decode(const Tensor<S>& latent) const {
        require(latent.rank() == 3 && latent.dim(0) == latent_channels, "codec: bad latent shape");
        const int h = latent.dim(1), w = latent.dim(2);
        Tensor<S> rows = reshape(permute(latent, {1, 2, 0}), {h * w, latent_channels});
        Tensor<S> mixed = matmul(rows, pseudo_inverse());
        return unmix(mixed, h * kFactor, w * kFactor);
    }

    Image decode_image(const Tensor<S>& latent) const {
        Image im = tensor_to_image(decode(latent));
        for (auto& v : im.px) v = std::clamp(v, 0.f, 1.f);
        return im;
    }

    // (W^T W)^-1 W^T as [C1, 48]
    Tensor<S> pseudo_inverse() const {
        const Tensor<S> w = *const_cast<ParamSet<S>&>(params).find("codec.proj");
        const int c = latent_channels;
        // gram = W^T W in double for stability
        std::vector<double> gram((size_t)c * c, 0.0);
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j) {
                double acc = 0;
                for (int k = 0; k < kBlock; ++k) acc += (double)w.data()[k * c + i] * w.data()[k * c + j];
                gram[(size_t)i * c + j] = acc;
            }
        // Gauss-Jordan inverse
        std::vector<double> inv((size_t)c * c, 0.0);
        for (int i = 0; i < c; ++i) inv[(size_t)i * c + i] = 1.0;
        for (int col = 0; col < c; ++col) {
            int piv = col;
            for (int r = col + 1; r < c; ++r)
                if (std::abs(gram[(size_t)r * c + col]) > std::abs(gram[(size_t)piv * c + col])) piv = r;
            require(std::abs(gram[(size_t)piv * c + col]) > 1e-12, "codec: projection became singular");
            for (int k = 0; k < c; ++k) {
                std::swap(gram[(size_t)piv * c + k], gram[(size_t)col * c + k]);
                std::swap(inv[(size_t)piv * c + k], inv[(size_t)col * c + k]);
            }
            const double d = gram[(size_t)col * c + col];
            for (int k = 0; k < c; ++k) {
                gram[(size_t)col * c + k] /= d;
                inv[(size_t)col * c + k] /= d;
            }
            for (int r = 0; r < c; ++r) {
                if (r == col) continue;
                const double f = gram[(size_t)r * c + col];
                if (f == 0) continue;
                for (int k = 0; k < c; ++k) {
                    gram[(size_t)r * c + k] -= f * gram[(size_t)col * c + k];
                    inv[(size_t)r * c + k] -= f * inv[(size_t)col * c + k];
                }
            }
        }
        Tensor<S> pinv(Shape{c, kBlock});
        for (int i = 0; i < c; ++i)
            for (int k = 0; k < kBlock; ++k) {
                double acc = 0;
                for (int j = 0; j < c; ++j) acc += inv[(size_t)i * c + j] * (double)w.data()[k * c + j];
                pinv.data()[(long)i * kBlock + k] = (S)acc;
            }
        return pinv;
    }

private:
    // seeded random rotation via Gram-Schmidt; identical on every run
    static Tensor<S> make_orthogonal_mix() {
        Rng rng(0x6173C0DEULL);
        std::vector<double> m((size_t)kBlock * kBlock);
        for (auto& v : m) v = rng.normal();
        for (int i = 0; i < kBlock; ++i) {
            for (int j = 0; j < i; ++j) {
                double dot = 0;
                for (int k = 0; k < kBlock; ++k) dot += m[(size_t)i * kBlock + k] * m[(size_t)j * kBlock + k];
                for (int k = 0; k < kBlock; ++k) m[(size_t)i * kBlock + k] -= dot * m[(size_t)j * kBlock + k];
            }
            double norm = 0;
            for (int k = 0; k < kBlock; ++k) norm += m[(size_t)i * kBlock + k] * m[(size_t)i * kBlock + k];
            norm = std::sqrt(norm);
            for (int k = 0; k < kBlock; ++k) m[(size_t)i * kBlock + k] /= norm;
        }
        Tensor<S> t(Shape{kBlock, kBlock});
        for (size_t i = 0; i < m.size(); ++i) t.data()[i] = (S)m[i];
        return t;
    }

    // Projection initialized at O * D, D holding low-frequency 2D-DCT basis
    // vectors per channel, so encode starts as a smooth-content-preserving
    // transform; training then adapts it.
    Tensor<S> make_dct_projection(int out_channels) const {
        auto dct1 = [](int u, int y) {
            const double a = u == 0 ? std::sqrt(1.0 / kFactor) : std::sqrt(2.0 / kFactor);
            return a * std::cos((2 * y + 1) * u * M_PI / (2.0 * kFactor));
        };
        // zigzag over (u,v) frequencies, channels interleaved
        std::vector<std::array<int, 2>> zig;
        for (int s = 0; s <= 2 * (kFactor - 1); ++s)
            for (int u = 0; u <= s; ++u) {
                const int v = s - u;
                if (u < kFactor && v < kFactor) zig.push_back({u, v});
            }
        Tensor<S> d(Shape{kBlock, out_channels});
        int col = 0;
        for (size_t zi = 0; zi < zig.size() && col < out_channels; ++zi)
            for (int c = 0; c < 3 && col < out_channels; ++c) {
                const int u = zig[zi][0], v = zig[zi][1];
                for (int dy = 0; dy < kFactor; ++dy)
                    for (int dx = 0; dx < kFactor; ++dx)
                        d.data()[(long)(c * 16 + dy * kFactor + dx) * out_channels + col] =
                            (S)(dct1(u, dy) * dct1(v, dx));
                ++col;
            }
        // proj = ortho * d so that mix followed by proj equals the DCT pick
        Tensor<S> w(Shape{kBlock, out_channels});
        const Tensor<S> o = make_orthogonal_mix();
        for (int i = 0; i < kBlock; ++i)
            for (int j = 0; j < out_channels; ++j) {
                double acc = 0;
                for (int k = 0; k < kBlock; ++k)
                    acc += (double)o.data()[(long)i * kBlock + k] * d.data()[(long)k * out_channels + j];
                w.data()[(long)i * out_channels + j] = (S)acc;
            }
        return w;
    }
};

}  // namespace gas
