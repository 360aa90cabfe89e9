#pragma once

#include "gas/adam.hpp"
#include "gas/checkpoint.hpp"
#include "gas/codec.hpp"
#include "gas/image.hpp"
#include "gas/ops.hpp"
#include "gas/rng.hpp"
#include "gas/serio.hpp"

namespace gas {

// Variance-preserving continuous-time schedule: alpha^2 + sigma^2 = 1,
// alpha(0) = 1, alpha monotone decreasing on [0,1].
struct NoiseSchedule {
    static double alpha(double t) { return std::cos(t * M_PI / 2.0); }
    static double sigma(double t) { return std::sin(t * M_PI / 2.0); }
};

// Z_t = alpha_t Z + sigma_t eps
template <typename S>
Tensor<S> add_noise(const Tensor<S>& z, const Tensor<S>& eps, double t) {
    require(t >= 0.0 && t <= 1.0, detail::str("add_noise: t=", t, " outside [0,1]"));
    return add(scale(z, (S)NoiseSchedule::alpha(t)), scale(eps, (S)NoiseSchedule::sigma(t)));
}

enum class Mode { View = 0, Pose = 1 };

inline const char* mode_name(Mode m) { return m == Mode::View ? "view" : "pose"; }
inline Mode mode_from_name(const std::string& s) {
    if (s == "view") return Mode::View;
    if (s == "pose") return Mode::Pose;
    fail(detail::str("unknown mode '", s, "'"));
}

// one-hot switcher vector -> embedding index; rejects anything not one-hot
inline int switcher_index(const std::array<double, 2>& s) {
    if (s[0] == 1.0 && s[1] == 0.0) return 0;
    if (s[0] == 0.0 && s[1] == 1.0) return 1;
    fail(detail::str("switcher must be one-hot, got (", s[0], ",", s[1], ")"));
}
inline std::array<double, 2> switcher_of(Mode m) {
    return m == Mode::View ? std::array<double, 2>{1, 0} : std::array<double, 2>{0, 1};
}

struct DiffusionConfig {
    int frames = 8;            // training clip length T
    int image_size = 32;
    int latent_channels = 16;  // C1
    int base_channels = 48;
    int embed_dim = 64;        // h_clip width
    int time_embed = 128;
    int norm_groups = 4;
    double lr = 1e-3;
    double codec_lr = 1e-4;
    double p_drop = 0.1;
    int batch_size = 2;
    long steps = 10000;
    double view_pose_ratio = 1.0;  // VIEW:POSE batch mix
    long checkpoint_every = 1000;
    // ablation switches (--drop appearance|geometry|switcher)
    bool use_appearance = true;
    bool use_geometry = true;
    bool use_switcher = true;

    int latent_hw() const { return image_size / LatentCodec<float>::kFactor; }
};

// ---------------------------------------------------------------------------
// parameter-holding building blocks
// ---------------------------------------------------------------------------

namespace nn {

template <typename S>
Tensor<S> he_uniform(Shape shape, long fan_in, Rng& rng) {
    Tensor<S> t(shape);
    const double bound = std::sqrt(6.0 / (double)fan_in);
    for (long i = 0; i < t.numel(); ++i) t.data()[i] = (S)rng.uniform(-bound, bound);
    return t;
}

template <typename S>
struct Dense {
    Tensor<S> w, b;
    void init(ParamSet<S>& ps, const std::string& name, int in, int out, Rng& rng) {
        w = ps.add(name + ".w", he_uniform<S>({in, out}, in, rng));
        b = ps.add(name + ".b", Tensor<S>({out}));
    }
    Tensor<S> operator()(const Tensor<S>& x) const { return linear(x, w, b); }
};

template <typename S>
struct Conv {
    Tensor<S> w, b;
    int stride = 1, pad = 1;
    void init(ParamSet<S>& ps, const std::string& name, int cin, int cout, int k, int stride_, int pad_,
              Rng& rng) {
        stride = stride_;
        pad = pad_;
        w = ps.add(name + ".w", he_uniform<S>({cout, cin, k, k}, (long)cin * k * k, rng));
        b = ps.add(name + ".b", Tensor<S>({cout}));
    }
    Tensor<S> operator()(const Tensor<S>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename S>
struct Norm {
    Tensor<S> g, b;
    int groups = 4;
    void init(ParamSet<S>& ps, const std::string& name, int channels, int groups_) {
        groups = groups_;
        g = ps.add(name + ".g", Tensor<S>({channels}, S(1)));
        b = ps.add(name + ".b", Tensor<S>({channels}));
    }
    Tensor<S> operator()(const Tensor<S>& x) const { return group_norm(x, g, b, groups); }
};

// GN -> silu -> conv, time/switcher embedding added per channel, GN -> silu ->
// conv, residual (1x1 conv when the width changes)
template <typename S>
struct ResBlock {
    Norm<S> n1, n2;
    Conv<S> c1, c2, skip;
    Dense<S> emb;
    bool rewidth = false;

    void init(ParamSet<S>& ps, const std::string& name, int cin, int cout, int emb_dim, int groups, Rng& rng) {
        n1.init(ps, name + ".n1", cin, groups);
        c1.init(ps, name + ".c1", cin, cout, 3, 1, 1, rng);
        emb.init(ps, name + ".emb", emb_dim, cout, rng);
        n2.init(ps, name + ".n2", cout, groups);
        c2.init(ps, name + ".c2", cout, cout, 3, 1, 1, rng);
        rewidth = cin != cout;
        if (rewidth) skip.init(ps, name + ".skip", cin, cout, 1, 1, 0, rng);
    }

    Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& emb_vec) const {
        Tensor<S> h = c1(silu(n1(x)));
        Tensor<S> bias = reshape(emb(reshape(emb_vec, {1, emb_vec.dim(0)})), {h.dim(1)});
        h = add_channel_bias(h, bias);
        h = c2(silu(n2(h)));
        return add(h, rewidth ? skip(x) : x);
    }
};

// single-head attention over chosen token layout
template <typename S>
struct AttentionHead {
    Norm<S> norm;
    Dense<S> q, k, v, o;
    void init(ParamSet<S>& ps, const std::string& name, int channels, int ctx_dim, int groups, Rng& rng) {
        norm.init(ps, name + ".norm", channels, groups);
        q.init(ps, name + ".q", channels, channels, rng);
        k.init(ps, name + ".k", ctx_dim, channels, rng);
        v.init(ps, name + ".v", ctx_dim, channels, rng);
        o.init(ps, name + ".o", channels, channels, rng);
    }
};

// attention across frames for each spatial location; tokens carry a periodic
// frame-position embedding so the orbit/time axis is ordered
template <typename S>
struct TemporalAttention {
    AttentionHead<S> head;
    void init(ParamSet<S>& ps, const std::string& name, int channels, int groups, Rng& rng) {
        head.init(ps, name, channels, channels, groups, rng);
    }
    Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& phase_emb) const {
        const int T = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
        const int hw = h * w;
        Tensor<S> n = head.norm(x);
        Tensor<S> tokens = permute(reshape(n, {T, C, hw}), {2, 0, 1});      // [hw,T,C]
        tokens = add_broadcast0(tokens, phase_emb);                          // + [T,C]
        Tensor<S> flat = reshape(tokens, {hw * T, C});
        Tensor<S> qq = reshape(head.q(flat), {hw, T, C});
        Tensor<S> kk = reshape(head.k(flat), {hw, T, C});
        Tensor<S> vv = reshape(head.v(flat), {hw, T, C});
        Tensor<S> att = scaled_dot_product_attention(qq, kk, vv);            // [hw,T,C]
        Tensor<S> out = head.o(reshape(att, {hw * T, C}));
        Tensor<S> y = reshape(permute(reshape(out, {hw, T, C}), {1, 2, 0}), {T, C, h, w});
        return add(x, y);
    }
};

// self-attention over spatial tokens within each frame
template <typename S>
struct SpatialAttention {
    AttentionHead<S> head;
    void init(ParamSet<S>& ps, const std::string& name, int channels, int groups, Rng& rng) {
        head.init(ps, name, channels, channels, groups, rng);
    }
    Tensor<S> forward(const Tensor<S>& x) const {
        const int T = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
        const int hw = h * w;
        Tensor<S> n = head.norm(x);
        Tensor<S> tokens = permute(reshape(n, {T, C, hw}), {0, 2, 1});  // [T,hw,C]
        Tensor<S> flat = reshape(tokens, {T * hw, C});
        Tensor<S> qq = reshape(head.q(flat), {T, hw, C});
        Tensor<S> kk = reshape(head.k(flat), {T, hw, C});
        Tensor<S> vv = reshape(head.v(flat), {T, hw, C});
        Tensor<S> att = scaled_dot_product_attention(qq, kk, vv);
        Tensor<S> out = head.o(reshape(att, {T * hw, C}));
        Tensor<S> y = reshape(permute(reshape(out, {T, hw, C}), {0, 2, 1}), {T, C, h, w});
        return add(x, y);
    }
};

// cross-attention from spatial tokens to the (repeated) reference embedding
template <typename S>
struct CrossAttention {
    AttentionHead<S> head;
    void init(ParamSet<S>& ps, const std::string& name, int channels, int ctx_dim, int groups, Rng& rng) {
        head.init(ps, name, channels, ctx_dim, groups, rng);
    }
    Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& ctx_tokens /*[T,1,d]*/) const {
        const int T = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
        const int hw = h * w, d = ctx_tokens.dim(2);
        Tensor<S> n = head.norm(x);
        Tensor<S> tokens = permute(reshape(n, {T, C, hw}), {0, 2, 1});
        Tensor<S> qq = reshape(head.q(reshape(tokens, {T * hw, C})), {T, hw, C});
        Tensor<S> ctx_flat = reshape(ctx_tokens, {T, d});
        Tensor<S> kk = reshape(head.k(ctx_flat), {T, 1, C});
        Tensor<S> vv = reshape(head.v(ctx_flat), {T, 1, C});
        Tensor<S> att = scaled_dot_product_attention(qq, kk, vv);
        Tensor<S> out = head.o(reshape(att, {T * hw, C}));
        Tensor<S> y = reshape(permute(reshape(out, {T, hw, C}), {0, 2, 1}), {T, C, h, w});
        return add(x, y);
    }
};

}  // namespace nn

// periodic frame-position features: sin/cos of 2 pi m u, wrap-continuous so
// an orbit's frame 0 and frame T join smoothly
template <typename S>
Tensor<S> phase_embedding(const std::vector<S>& phases, int dim) {
    require(dim % 2 == 0, "phase_embedding: dim must be even");
    const int half = dim / 2;
    Tensor<S> out(Shape{(int)phases.size(), dim});
    for (size_t i = 0; i < phases.size(); ++i)
        for (int m = 0; m < half; ++m) {
            const double a = 2.0 * M_PI * (m + 1) * (double)phases[i];
            out.data()[i * dim + m] = (S)std::sin(a);
            out.data()[i * dim + half + m] = (S)std::cos(a);
        }
    return out;
}

// everything the UNet consumes for one sample, with encoders already applied
template <typename S>
struct PreparedConditions {
    Tensor<S> ref_latent;          // [C1,h,w]; zeros when dropped
    Tensor<S> h_clip;              // [d]; zeros when dropped
    Tensor<S> c_nerf, c_smpl;      // [T,C1,h,w] when enabled
    Mode mode = Mode::View;
    std::vector<S> phases;         // per frame in [0,1)
    int frames = 0;
};

template <typename S>
struct DiffusionModel {
    DiffusionConfig cfg;
    LatentCodec<S> codec;
    ParamSet<S> params;  // UNet + cue encoders + reference embedder

    nn::Conv<S> geo1, geo2, geo3;          // epsilon_geo
    nn::Conv<S> appr1, appr2;              // epsilon_appr
    nn::Conv<S> clip1, clip2, clip3;       // reference embedder
    nn::Dense<S> time1, time2, switch_proj;
    nn::Conv<S> conv_in, conv_out;
    nn::Norm<S> norm_out;
    nn::ResBlock<S> rb0a, rb0b, rb1a, rb1b, mid1, mid2, up1, up2;
    nn::TemporalAttention<S> ta0a, ta0b, ta1a, ta1b, ta_mid, ta_up1, ta_up2;
    nn::SpatialAttention<S> sattn;
    nn::CrossAttention<S> xattn;

    void init(const DiffusionConfig& cfg_, Rng& rng) {
        cfg = cfg_;
        codec.init(cfg.latent_channels);
        params = ParamSet<S>{};
        const int C1 = cfg.latent_channels, C0 = cfg.base_channels, E = cfg.time_embed, G = cfg.norm_groups;

        if (cfg.use_geometry) {
            geo1.init(params, "geo.c1", 3, C0 / 2, 3, 2, 1, rng);
            geo2.init(params, "geo.c2", C0 / 2, C0, 3, 2, 1, rng);
            geo3.init(params, "geo.c3", C0, C1, 3, 1, 1, rng);
        }
        if (cfg.use_appearance) {
            appr1.init(params, "appr.c1", C1, C0, 3, 1, 1, rng);
            appr2.init(params, "appr.c2", C0, C1, 3, 1, 1, rng);
        }
        clip1.init(params, "clip.c1", 3, 16, 3, 2, 1, rng);
        clip2.init(params, "clip.c2", 16, 32, 3, 2, 1, rng);
        clip3.init(params, "clip.c3", 32, cfg.embed_dim, 3, 2, 1, rng);
        time1.init(params, "time.l1", E, E, rng);
        time2.init(params, "time.l2", E, E, rng);
        if (cfg.use_switcher) switch_proj.init(params, "switcher.proj", E, E, rng);

        conv_in.init(params, "unet.in", 2 * C1, C1, 3, 1, 1, rng);
        rb0a.init(params, "unet.rb0a", C1, C0, E, G, rng);
        ta0a.init(params, "unet.ta0a", C0, G, rng);
        rb0b.init(params, "unet.rb0b", C0, C0, E, G, rng);
        ta0b.init(params, "unet.ta0b", C0, G, rng);
        rb1a.init(params, "unet.rb1a", C0, 2 * C0, E, G, rng);
        ta1a.init(params, "unet.ta1a", 2 * C0, G, rng);
        rb1b.init(params, "unet.rb1b", 2 * C0, 2 * C0, E, G, rng);
        ta1b.init(params, "unet.ta1b", 2 * C0, G, rng);
        mid1.init(params, "unet.mid1", 2 * C0, 2 * C0, E, G, rng);
        sattn.init(params, "unet.sattn", 2 * C0, G, rng);
        xattn.init(params, "unet.xattn", 2 * C0, cfg.embed_dim, G, rng);
        ta_mid.init(params, "unet.tamid", 2 * C0, G, rng);
        mid2.init(params, "unet.mid2", 2 * C0, 2 * C0, E, G, rng);
        up1.init(params, "unet.up1", 3 * C0, C0, E, G, rng);
        ta_up1.init(params, "unet.taup1", C0, G, rng);
        up2.init(params, "unet.up2", C0, C0, E, G, rng);
        ta_up2.init(params, "unet.taup2", C0, G, rng);
        norm_out.init(params, "unet.out.norm", C0, G);
        conv_out.init(params, "unet.out", C0, C1, 3, 1, 1, rng);
    }

    long total_params() const { return params.total_params() + codec.params.total_params(); }

    // ---- condition encoders --------------------------------------------------

    // [T,3,H,W] constant stack of frames
    static Tensor<S> stack_frames(const std::vector<Image>& frames) {
        require(!frames.empty(), "stack_frames: no frames");
        const int T = (int)frames.size(), H = frames[0].h, W = frames[0].w;
        Tensor<S> out(Shape{T, 3, H, W});
        S* p = out.data();
        for (int i = 0; i < T; ++i) {
            require(frames[i].h == H && frames[i].w == W && frames[i].c == 3, "stack_frames: inconsistent frames");
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) *p++ = (S)frames[i].at(y, x, c);
        }
        return out;
    }

    // epsilon_geo: strided conv stack straight from normal maps
    Tensor<S> encode_geometry(const std::vector<Image>& frames) const {
        Tensor<S> x = stack_frames(frames);
        return geo3(silu(geo2(silu(geo1(x)))));
    }

    // epsilon_appr: codec latents of the renderings, then two conv layers
    Tensor<S> encode_appearance(const std::vector<Image>& frames) const {
        std::vector<Tensor<S>> latents;
        latents.reserve(frames.size());
        for (auto& f : frames) {
            Tensor<S> l = codec.encode_image(f);
            latents.push_back(reshape(l, {1, l.dim(0), l.dim(1), l.dim(2)}));
        }
        Tensor<S> x = concat(latents, 0);
        return appr2(silu(appr1(x)));
    }

    // CLIP stand-in: conv stack + global average pool -> [d]
    Tensor<S> embed_reference(const Image& ref) const {
        Tensor<S> x = stack_frames({ref});
        x = silu(clip1(x));
        x = silu(clip2(x));
        x = clip3(x);
        const int d = x.dim(1);
        const long hw = (long)x.dim(2) * x.dim(3);
        Tensor<S> pool_w({(int)hw, 1}, (S)(1.0 / hw));
        return reshape(matmul(reshape(x, {d, (int)hw}), pool_w), {d});
    }

    // repeated h_clip tokens for cross-attention: [T,1,d], all copies identical
    Tensor<S> repeat_embedding(const Tensor<S>& h_clip, int frames) const {
        Tensor<S> one = reshape(h_clip, {1, 1, h_clip.dim(0)});
        std::vector<Tensor<S>> copies(frames, one);
        return concat(copies, 0);
    }

    // sinusoidal time embedding through the MLP, plus the switcher embedding
    Tensor<S> conditioned_time_embedding(double t, Mode mode) const {
        const int E = cfg.time_embed;
        Tensor<S> te = sinusoidal_embedding<S>({(S)(t * 1000.0)}, E);
        Tensor<S> emb = time2(silu(time1(te)));  // [1,E]
        if (cfg.use_switcher) {
            const int idx = switcher_index(switcher_of(mode));
            Tensor<S> se = switch_proj(sinusoidal_embedding<S>({(S)idx}, E));
            emb = add(emb, se);
        }
        return reshape(emb, {E});
    }

    // ---- condition preparation -------------------------------------------

    PreparedConditions<S> prepare(const Image& ref_image, const std::vector<Image>& appearance,
                                  const std::vector<Image>& geometry, Mode mode, const std::vector<S>& phases,
                                  bool drop) const {
        const int T = (int)phases.size();
        PreparedConditions<S> pc;
        pc.mode = mode;
        pc.phases = phases;
        pc.frames = T;
        const int hw = cfg.latent_hw();
        if (drop) {
            // CFG unconditional branch: reference embedding and reference
            // latent are zeroed together; dense cues are retained
            pc.ref_latent = Tensor<S>(Shape{cfg.latent_channels, hw, hw});
            pc.h_clip = Tensor<S>(Shape{cfg.embed_dim});
        } else {
            pc.ref_latent = codec.encode_image(ref_image);
            pc.h_clip = embed_reference(ref_image);
        }
        if (cfg.use_appearance) {
            require((int)appearance.size() == T, "prepare: appearance frame count mismatch");
            pc.c_nerf = encode_appearance(appearance);
        }
        if (cfg.use_geometry) {
            require((int)geometry.size() == T, "prepare: geometry frame count mismatch");
            pc.c_smpl = encode_geometry(geometry);
        }
        return pc;
    }

    // ---- the UNet ----------------------------------------------------------

    Tensor<S> unet_eps(const Tensor<S>& z_t, double t, const PreparedConditions<S>& pc) const {
        const int T = z_t.dim(0), C1 = cfg.latent_channels, C0 = cfg.base_channels;
        require(z_t.rank() == 4 && z_t.dim(1) == C1, detail::str("unet: bad latent shape ", shape_str(z_t.shape())));
        require((int)pc.phases.size() == T, "unet: phases must match frame count");

        Tensor<S> emb = conditioned_time_embedding(t, pc.mode);
        Tensor<S> phase0 = phase_embedding(pc.phases, C0);
        Tensor<S> phase1 = phase_embedding(pc.phases, 2 * C0);

        // reference latent repeated across frames, channel-concatenated
        Tensor<S> ref4 = reshape(pc.ref_latent, {1, C1, z_t.dim(2), z_t.dim(3)});
        std::vector<Tensor<S>> reps(T, ref4);
        Tensor<S> x = concat<S>({z_t, concat(reps, 0)}, 1);
        x = conv_in(x);  // C_vae path
        if (cfg.use_appearance) x = add(x, pc.c_nerf);
        if (cfg.use_geometry) x = add(x, pc.c_smpl);

        Tensor<S> h0 = ta0a.forward(rb0a.forward(x, emb), phase0);
        h0 = ta0b.forward(rb0b.forward(h0, emb), phase0);
        Tensor<S> h1 = avg_downsample(h0);
        h1 = ta1a.forward(rb1a.forward(h1, emb), phase1);
        h1 = ta1b.forward(rb1b.forward(h1, emb), phase1);

        Tensor<S> m = mid1.forward(h1, emb);
        m = sattn.forward(m);
        m = xattn.forward(m, repeat_embedding(pc.h_clip, T));
        m = ta_mid.forward(m, phase1);
        m = mid2.forward(m, emb);

        Tensor<S> u = concat<S>({nearest_upsample(m), h0}, 1);
        u = ta_up1.forward(up1.forward(u, emb), phase0);
        u = ta_up2.forward(up2.forward(u, emb), phase0);
        return conv_out(silu(norm_out(u)));
    }

    // target latent video [T,C1,h,w] from ground-truth frames (tracks the
    // codec projection during training)
    Tensor<S> encode_video(const std::vector<Image>& frames) const {
        std::vector<Tensor<S>> latents;
        latents.reserve(frames.size());
        for (auto& f : frames) {
            Tensor<S> l = codec.encode_image(f);
            latents.push_back(reshape(l, {1, l.dim(0), l.dim(1), l.dim(2)}));
        }
        return concat(latents, 0);
    }
};

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

template <typename S>
struct DiffusionTrainSample {
    std::vector<Image> gt_frames;  // T target frames (the denoising target)
    Image ref_image;
    std::vector<Image> appearance, geometry;
    Mode mode = Mode::View;
    std::vector<S> phases;
};

template <typename S>
struct DiffusionTrainer {
    DiffusionModel<S> model;
    Adam<S> opt_main;   // UNet + cue encoders + reference embedder
    Adam<S> opt_codec;  // codec projection at its own (smaller) rate
    Tape<S> tape;
    long step_count = 0;

    void init(const DiffusionConfig& cfg, Rng& rng) {
        model.init(cfg, rng);
        opt_main.lr = (S)cfg.lr;
        opt_main.init(model.params.tensors());
        opt_codec.lr = (S)cfg.codec_lr;
        opt_codec.init(model.codec.params.tensors());
    }

    // one Adam step on a batch; returns the scalar loss (mean over samples)
    double step(const std::vector<DiffusionTrainSample<S>>& batch, Rng& rng) {
        require(!batch.empty(), "diffusion step: empty batch");
        double loss_value = 0;
        {
            TapeScope<S> scope(tape);
            Tensor<S> total = Tensor<S>::scalar_of(0);
            for (auto& sample : batch) {
                const bool drop = rng.uniform() < model.cfg.p_drop;
                const double t = rng.uniform();
                const auto pc = model.prepare(sample.ref_image, sample.appearance, sample.geometry, sample.mode,
                                              sample.phases, drop);
                Tensor<S> z = model.encode_video(sample.gt_frames);
                Tensor<S> eps(z.shape());
                for (long i = 0; i < eps.numel(); ++i) eps.data()[i] = (S)rng.normal();
                Tensor<S> z_t = add_noise(z, eps, t);
                Tensor<S> pred = model.unet_eps(z_t, t, pc);
                total = add(total, mse(eps, pred));
            }
            Tensor<S> loss = scale(total, (S)(1.0 / batch.size()));
            loss_value = (double)loss.item();
            opt_main.zero_grad();
            opt_codec.zero_grad();
            tape.backward(loss);
        }
        opt_main.step();
        opt_codec.step();
        ++step_count;
        return loss_value;
    }
};

// ---------------------------------------------------------------------------
// checkpointing (GASM + json sidecar)
// ---------------------------------------------------------------------------

template <typename S>
void save_diffusion_checkpoint(const std::string& path, const DiffusionModel<S>& model, long steps,
                               const std::string& variant) {
    ParamSet<S> all;
    all.append(model.params, "");
    all.append(model.codec.params, "");
    save_checkpoint(path, all);
    Json meta;
    meta["config"] = {{"frames", model.cfg.frames},
                      {"image_size", model.cfg.image_size},
                      {"latent_channels", model.cfg.latent_channels},
                      {"base_channels", model.cfg.base_channels},
                      {"embed_dim", model.cfg.embed_dim},
                      {"time_embed", model.cfg.time_embed},
                      {"norm_groups", model.cfg.norm_groups},
                      {"use_appearance", model.cfg.use_appearance},
                      {"use_geometry", model.cfg.use_geometry},
                      {"use_switcher", model.cfg.use_switcher}};
    meta["steps"] = steps;
    meta["trained"] = steps > 0;
    meta["variant"] = variant;
    meta["mode_vocabulary"] = {{"VIEW", 0}, {"POSE", 1}};
    meta["total_params"] = model.total_params();
    write_json_file(path + ".json", meta);
}

template <typename S>
long load_diffusion_checkpoint(const std::string& path, DiffusionModel<S>& model) {
    const Json meta = read_json_file(path + ".json");
    const Json& jc = meta.at("config");
    DiffusionConfig cfg = model.cfg;
    cfg.frames = jc.at("frames").get<int>();
    cfg.image_size = jc.at("image_size").get<int>();
    cfg.latent_channels = jc.at("latent_channels").get<int>();
    cfg.base_channels = jc.at("base_channels").get<int>();
    cfg.embed_dim = jc.at("embed_dim").get<int>();
    cfg.time_embed = jc.at("time_embed").get<int>();
    cfg.norm_groups = jc.at("norm_groups").get<int>();
    cfg.use_appearance = jc.at("use_appearance").get<bool>();
    cfg.use_geometry = jc.at("use_geometry").get<bool>();
    cfg.use_switcher = jc.at("use_switcher").get<bool>();
    Rng rng(1);  // structure only; values come from the file
    model.init(cfg, rng);
    ParamSet<S> all;
    all.append(model.params, "");
    all.append(model.codec.params, "");
    load_checkpoint(path, all);
    return meta.at("steps").get<long>();
}

}  // namespace gas
