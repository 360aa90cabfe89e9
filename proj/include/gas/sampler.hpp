#pragma once

#include "gas/diffusion.hpp"

namespace gas {

enum class CfgMode { Triangular, Fixed };

struct SamplerConfig {
    int steps = 25;
    CfgMode cfg_mode = CfgMode::Triangular;
    double max_scale = 2.0;
    int window = 20;   // T_w
    int overlap = 6;
    double t_max = 0.995;  // start of the descending t grid

    void validate() const {
        require(steps >= 1, "sampler: steps must be >= 1");
        require(overlap >= 0 && overlap < window, "sampler: overlap must be < window");
        require(max_scale >= 1.0, "sampler: max scale must be >= 1");
        require(t_max > 0 && t_max <= 1.0, "sampler: t_max must be in (0,1]");
    }
};

// Per-frame guidance scale. VIEW rides a triangle over the orbit index: 1 at
// the front (i=0), max at the back (i=T/2), back down to 1. POSE is constant.
inline double cfg_weight(CfgMode mode, double w_max, int frame, int total) {
    if (mode == CfgMode::Fixed) return w_max;
    const double half = total / 2.0;
    return 1.0 + (w_max - 1.0) * (1.0 - std::abs(frame - half) / half);
}

// Deterministic DDIM-style (eta = 0) reverse pass over a descending t grid.
// weights has one guidance scale per frame; frames with w == 1 skip the
// unconditional mix entirely, so w_max = 1 reproduces the pure conditional
// path bit-exactly.
template <typename S>
Tensor<S> ddim_sample(const DiffusionModel<S>& model, const PreparedConditions<S>& cond,
                      const PreparedConditions<S>& uncond, const std::vector<double>& weights,
                      const SamplerConfig& scfg, Rng& noise, const Tensor<S>* init_latent = nullptr) {
    scfg.validate();
    const int T = cond.frames;
    require((int)weights.size() == T, "ddim: one guidance weight per frame");
    const int C1 = model.cfg.latent_channels, hw = model.cfg.latent_hw();

    Tensor<S> x(Shape{T, C1, hw, hw});
    if (init_latent) {
        require(init_latent->shape() == x.shape(), "ddim: bad init latent shape");
        x = Tensor<S>::from(x.shape(), init_latent->values());
    } else {
        for (long i = 0; i < x.numel(); ++i) x.data()[i] = (S)noise.normal();
    }

    bool any_guided = false;
    for (double w : weights) any_guided |= (w != 1.0);

    const long frame_stride = (long)C1 * hw * hw;
    for (int k = 0; k < scfg.steps; ++k) {
        const double t = scfg.t_max * (1.0 - (double)k / scfg.steps);
        const double s = scfg.t_max * (1.0 - (double)(k + 1) / scfg.steps);
        const Tensor<S> eps_c = model.unet_eps(x, t, cond);
        Tensor<S> eps_hat = eps_c;
        if (any_guided) {
            const Tensor<S> eps_u = model.unet_eps(x, t, uncond);
            eps_hat = Tensor<S>(x.shape());
            for (int f = 0; f < T; ++f) {
                const double w = weights[f];
                S* dst = eps_hat.data() + f * frame_stride;
                const S* pc = eps_c.data() + f * frame_stride;
                if (w == 1.0) {
                    std::copy(pc, pc + frame_stride, dst);
                } else {
                    const S* pu = eps_u.data() + f * frame_stride;
                    for (long i = 0; i < frame_stride; ++i) dst[i] = pu[i] + (S)w * (pc[i] - pu[i]);
                }
            }
        }
        const double at = NoiseSchedule::alpha(t), st = NoiseSchedule::sigma(t);
        const double as = NoiseSchedule::alpha(s), ss = NoiseSchedule::sigma(s);
        Tensor<S> next(x.shape());
        const S* px = x.data();
        const S* pe = eps_hat.data();
        S* pn = next.data();
        for (long i = 0; i < x.numel(); ++i) {
            const double z0 = ((double)px[i] - st * pe[i]) / at;
            pn[i] = (S)(as * z0 + ss * pe[i]);
        }
        x = next;
    }
    return x;  // final grid point is t = 0, i.e. the denoised latent
}

// ---------------------------------------------------------------------------
// whole-trajectory inference
// ---------------------------------------------------------------------------

// conditions for an arbitrary-length trajectory, sliced per window
template <typename S>
struct TrajectoryConditions {
    Image ref_image;
    std::vector<Image> appearance, geometry;  // one per frame
    Mode mode = Mode::View;
    std::vector<S> phases;                    // one per frame

    int frames() const { return (int)appearance.size(); }
};

template <typename S>
PreparedConditions<S> prepare_window(const DiffusionModel<S>& model, const TrajectoryConditions<S>& tc,
                                     int start, int len, bool drop) {
    std::vector<Image> appr(tc.appearance.begin() + start, tc.appearance.begin() + start + len);
    std::vector<Image> geo(tc.geometry.begin() + start, tc.geometry.begin() + start + len);
    std::vector<S> phases(tc.phases.begin() + start, tc.phases.begin() + start + len);
    return model.prepare(tc.ref_image, appr, geo, tc.mode, phases, drop);
}

// single-window sampling of a whole trajectory (trajectory length == window)
template <typename S>
Tensor<S> sample_trajectory(const DiffusionModel<S>& model, const TrajectoryConditions<S>& tc,
                            const SamplerConfig& scfg, uint64_t seed) {
    const int T = tc.frames();
    std::vector<double> weights(T);
    for (int i = 0; i < T; ++i) weights[i] = cfg_weight(scfg.cfg_mode, scfg.max_scale, i, T);
    const auto cond = prepare_window(model, tc, 0, T, false);
    const auto uncond = prepare_window(model, tc, 0, T, true);
    Rng noise(seed);
    return ddim_sample(model, cond, uncond, weights, scfg, noise);
}

// Window start indices: advance by W - overlap, clamping the last window to
// end exactly at the trajectory end.
inline std::vector<int> window_starts(int length, int window, int overlap) {
    require(overlap >= 0 && overlap < window, "sliding windows: overlap must be < window");
    require(length > window, "sliding windows: trajectory must be longer than one window");
    std::vector<int> starts{0};
    while (starts.back() + window < length)
        starts.push_back(std::min(starts.back() + (window - overlap), length - window));
    return starts;
}

// Long trajectories run as overlapping windows: each new window re-noises the
// previous window's trailing latents to the grid start for its leading
// frames, and after sampling the overlapped frames are cross-faded with a
// linear 0 -> 1 ramp. Output length always equals the trajectory length.
template <typename S>
Tensor<S> sliding_window_sample(const DiffusionModel<S>& model, const TrajectoryConditions<S>& tc,
                                const SamplerConfig& scfg, uint64_t seed) {
    scfg.validate();
    const int L = tc.frames();
    const int W = scfg.window;
    const int C1 = model.cfg.latent_channels, hw = model.cfg.latent_hw();
    const long frame_stride = (long)C1 * hw * hw;

    if (L <= W) {
        TrajectoryConditions<S> whole = tc;
        return sample_trajectory(model, whole, scfg, seed);
    }

    Tensor<S> out(Shape{L, C1, hw, hw});
    std::vector<char> have(L, 0);
    Rng noise(seed);
    const double t0 = scfg.t_max;

    const std::vector<int> starts = window_starts(L, W, scfg.overlap);
    int prev_end = 0;
    for (const int start : starts) {
        const int ov = std::max(0, prev_end - start);  // frames shared with what's already generated
        // window guidance weights over window-relative indices
        std::vector<double> weights(W);
        for (int i = 0; i < W; ++i) weights[i] = cfg_weight(scfg.cfg_mode, scfg.max_scale, i, W);
        const auto cond = prepare_window(model, tc, start, W, false);
        const auto uncond = prepare_window(model, tc, start, W, true);

        // init latent: fresh noise, with overlapped frames re-noised from the
        // previous window's result at the grid start
        Tensor<S> init(Shape{W, C1, hw, hw});
        for (long i = 0; i < init.numel(); ++i) init.data()[i] = (S)noise.normal();
        for (int j = 0; j < ov; ++j) {
            S* dst = init.data() + (long)j * frame_stride;
            const S* prev = out.data() + (long)(start + j) * frame_stride;
            for (long i = 0; i < frame_stride; ++i)
                dst[i] = (S)(NoiseSchedule::alpha(t0) * prev[i] + NoiseSchedule::sigma(t0) * dst[i]);
        }
        Tensor<S> z = ddim_sample(model, cond, uncond, weights, scfg, noise, &init);

        for (int j = 0; j < W; ++j) {
            const int f = start + j;
            S* dst = out.data() + (long)f * frame_stride;
            const S* src = z.data() + (long)j * frame_stride;
            if (j < ov && have[f]) {
                // weight ramps 0 -> 1 across the overlap
                const double lam = ov >= 2 ? (double)j / (ov - 1) : 1.0;
                for (long i = 0; i < frame_stride; ++i) dst[i] = (S)((1.0 - lam) * dst[i] + lam * src[i]);
            } else {
                std::copy(src, src + frame_stride, dst);
            }
            have[f] = 1;
        }
        prev_end = start + W;
    }
    return out;
}

// decode a latent video to frames
template <typename S>
std::vector<Image> decode_video(const DiffusionModel<S>& model, const Tensor<S>& latents) {
    require(latents.rank() == 4, "decode_video: expected [T,C1,h,w]");
    std::vector<Image> frames;
    const int T = latents.dim(0);
    for (int f = 0; f < T; ++f) {
        Tensor<S> one = slice(latents, 0, f, 1);
        frames.push_back(model.codec.decode_image(reshape(one, {latents.dim(1), latents.dim(2), latents.dim(3)})));
    }
    return frames;
}

}  // namespace gas
