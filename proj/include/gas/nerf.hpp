#pragma once

#include "gas/adam.hpp"
#include "gas/body.hpp"
#include "gas/camera.hpp"
#include "gas/checkpoint.hpp"
#include "gas/image.hpp"
#include "gas/ops.hpp"
#include "gas/rng.hpp"
#include "gas/synth.hpp"

namespace gas {

// Single-reference generalizable radiance field. A target-space sample is
// canonicalized by inverse LBS, re-skinned into the reference frame, and
// looks up pixel-aligned reference features there; a template feature
// (nearest-vertex distance + blend weights) and a fusion MLP produce the
// fused conditioning p, and the main MLP maps [x_c, p, dir encoding] to
// (sigma, rgb).

struct RadianceFieldConfig {
    int feature_channels = 16;
    int fusion_hidden = 64;
    int fused_width = 32;
    int hidden = 128;        // 3 hidden layers of this width
    int dir_bands = 4;       // L_d
    int samples_per_ray = 48;
    double near_far_dilation = 0.10;
    double lambda_ssim = 0.1;
    double lambda_mask = 0.1;
    double lambda_lpips = 0.0;  // perceptual term needs a pretrained net; must stay 0
    double lr = 1e-3;
    int iterations = 5000;
    int rays_per_batch = 512;  // as a patch_h x patch_w patch
    int patch_h = 16;
    int patch_w = 32;
    int checkpoint_every = 1000;

    int template_feature_width() const { return 1 + kBodyParts; }
    int fusion_input_width() const { return feature_channels + template_feature_width(); }
    int dir_encoding_width() const { return 3 * 2 * dir_bands; }
    int mlp_input_width() const { return 3 + fused_width + dir_encoding_width(); }
};

template <typename S>
struct RadianceField {
    RadianceFieldConfig cfg;
    ParamSet<S> params;

    void init(Rng& rng) {
        auto w_init = [&](Shape shape, int fan_in) {
            Tensor<S> t(shape);
            const double bound = std::sqrt(6.0 / fan_in);
            for (long i = 0; i < t.numel(); ++i) t.data()[i] = (S)rng.uniform(-bound, bound);
            return t;
        };
        const int fc = cfg.feature_channels;
        params.add("enc.w1", w_init({fc, 3, 3, 3}, 27));
        params.add("enc.b1", Tensor<S>({fc}));
        params.add("enc.w2", w_init({fc, fc, 3, 3}, 9 * fc));
        params.add("enc.b2", Tensor<S>({fc}));
        params.add("fuse.w1", w_init({cfg.fusion_input_width(), cfg.fusion_hidden}, cfg.fusion_input_width()));
        params.add("fuse.b1", Tensor<S>({cfg.fusion_hidden}));
        params.add("fuse.w2", w_init({cfg.fusion_hidden, cfg.fused_width}, cfg.fusion_hidden));
        params.add("fuse.b2", Tensor<S>({cfg.fused_width}));
        const int in = cfg.mlp_input_width(), h = cfg.hidden;
        params.add("mlp.w1", w_init({in, h}, in));
        params.add("mlp.b1", Tensor<S>({h}));
        params.add("mlp.w2", w_init({h, h}, h));
        params.add("mlp.b2", Tensor<S>({h}));
        params.add("mlp.w3", w_init({h, h}, h));
        params.add("mlp.b3", Tensor<S>({h}));
        params.add("mlp.w4", w_init({h, 4}, h));
        Tensor<S> out_bias({4});
        out_bias.data()[0] = (S)-1.0;  // softplus(-1) starts the field mostly transparent
        params.add("mlp.b4", out_bias);
    }

    Tensor<S> param(const std::string& name) const {
        auto* p = const_cast<ParamSet<S>&>(params).find(name);
        require(p != nullptr, detail::str("radiance field: missing parameter ", name));
        return *p;
    }

    // reference image -> [fc, H, W] feature map at input resolution
    Tensor<S> encode_reference(const Image& ref) const {
        Tensor<S> x = image_to_tensor<S>(ref);
        x = reshape(x, {1, 3, ref.h, ref.w});
        x = silu(conv2d(x, param("enc.w1"), param("enc.b1"), 1, 1));
        x = conv2d(x, param("enc.w2"), param("enc.b2"), 1, 1);
        return reshape(x, {cfg.feature_channels, ref.h, ref.w});
    }
};

// (sin(2^k pi d), cos(2^k pi d)) for k < bands
template <typename S>
inline void dir_encoding(const Vec3& d, int bands, S* out) {
    int at = 0;
    for (int k = 0; k < bands; ++k) {
        const double f = M_PI * (double)(1 << k);
        const double v[3] = {d.x, d.y, d.z};
        for (int c = 0; c < 3; ++c) out[at++] = (S)std::sin(f * v[c]);
        for (int c = 0; c < 3; ++c) out[at++] = (S)std::cos(f * v[c]);
    }
}

struct RayBatch {
    std::vector<Vec3> origins, dirs;     // unit directions
    std::vector<double> near, far;       // from the dilated posed-mesh box
    std::vector<char> hit;               // ray intersects the box
    int count = 0;

    void validate() const {
        for (int r = 0; r < count; ++r) {
            require(std::abs(dirs[r].norm() - 1.0) < 1e-5, "ray batch: directions must be unit length");
            if (hit[r]) require(near[r] < far[r], "ray batch: near must be < far");
        }
    }
};

// Dilated bounds of the posed body. The outer box gives the spec near/far
// envelope; the per-part boxes refine it so rays crossing only empty corners
// of the whole-body box are culled and samples concentrate on the body.
struct BodyBounds {
    Aabb whole;
    std::vector<Aabb> parts;

    static BodyBounds of(const BodyTemplate& tmpl, const SkinnedBody& sb, double dilation) {
        BodyBounds b;
        b.whole = mesh_aabb(sb.posed_verts).dilated(dilation);
        b.parts.assign(kBodyParts, Aabb{});
        for (int v = 0; v < (int)sb.posed_verts.size(); ++v)
            b.parts[tmpl.part_of_vertex[v]].expand(sb.posed_verts[v]);
        for (auto& p : b.parts) p = p.dilated(dilation);
        return b;
    }
};

inline RayBatch rays_for_pixels(const Camera& cam, const std::vector<std::pair<int, int>>& pixels,
                                const BodyBounds& bounds) {
    RayBatch rb;
    rb.count = (int)pixels.size();
    rb.origins.resize(rb.count);
    rb.dirs.resize(rb.count);
    rb.near.resize(rb.count);
    rb.far.resize(rb.count);
    rb.hit.resize(rb.count);
    for (int i = 0; i < rb.count; ++i) {
        cam.pixel_ray(pixels[i].first, pixels[i].second, rb.origins[i], rb.dirs[i]);
        rb.near[i] = 1.0;
        rb.far[i] = 1.0;
        rb.hit[i] = 0;
        double t0, t1;
        if (!bounds.whole.intersect(rb.origins[i], rb.dirs[i], t0, t1) || t1 <= 1e-6) continue;
        double near = 1e30, far = -1e30;
        for (auto& part : bounds.parts) {
            double p0, p1;
            if (part.intersect(rb.origins[i], rb.dirs[i], p0, p1) && p1 > 1e-6) {
                near = std::min(near, std::max(1e-6, p0));
                far = std::max(far, p1);
            }
        }
        if (far > near) {
            rb.near[i] = std::max(near, std::max(1e-6, t0));
            rb.far[i] = std::min(far, t1);
            rb.hit[i] = 1;
        }
    }
    return rb;
}

// Stratified samples; delta is the per-sample bin width so intervals always
// cover [near, far] exactly. jitter = nullptr puts samples at bin midpoints.
struct RaySamples {
    int rays = 0, per_ray = 0;
    std::vector<double> t;  // [R,K] distances along the ray
};

inline RaySamples sample_ray_points(const RayBatch& rb, int per_ray, Rng* jitter) {
    require(per_ray >= 2, "sample_ray_points: need at least 2 samples per ray");
    RaySamples out;
    out.rays = rb.count;
    out.per_ray = per_ray;
    out.t.resize((size_t)rb.count * per_ray);
    for (int r = 0; r < rb.count; ++r) {
        const double bin = (rb.far[r] - rb.near[r]) / per_ray;
        for (int i = 0; i < per_ray; ++i) {
            const double u = jitter ? jitter->uniform() : 0.5;
            out.t[(size_t)r * per_ray + i] = rb.near[r] + bin * (i + u);
        }
    }
    return out;
}

// Per-sample constants of the field evaluation (everything except the
// learned parameters): canonical position, template feature, reference gather
// coordinates, direction encoding. Rays that miss the dilated body box render
// to zero with no field evaluation, so only hit rays are materialized here.
template <typename S>
struct SampleGeometry {
    int rays = 0, per_ray = 0;         // compacted ray count
    int total_rays = 0;
    std::vector<int> hit_rays;         // indices of the compacted rays in the batch
    Tensor<S> mlp_geo;                 // [N, 3 + tmpl_w] canonical pos + template feature (constant)
    std::vector<S> gather_x, gather_y; // reference feature map coords
    Tensor<S> dir_enc;                 // [N, dir_width] (constant)
    std::vector<S> delta, tmid;        // quadrature constants
};

template <typename S>
SampleGeometry<S> gather_sample_geometry(const RadianceFieldConfig& cfg, const BodyTemplate& tmpl,
                                         const SkinnedBody& sb_target, const SkinnedBody& sb_reference,
                                         const Camera& ref_cam, const RayBatch& rb, const RaySamples& ts) {
    const int K = ts.per_ray;
    const int tw = cfg.template_feature_width();
    SampleGeometry<S> g;
    g.total_rays = rb.count;
    g.per_ray = K;
    for (int r = 0; r < rb.count; ++r)
        if (rb.hit[r]) g.hit_rays.push_back(r);
    g.rays = (int)g.hit_rays.size();
    const long N = (long)g.rays * K;
    g.mlp_geo = Tensor<S>({(int)N, 3 + tw});
    g.dir_enc = Tensor<S>({(int)N, cfg.dir_encoding_width()});
    g.gather_x.resize(N);
    g.gather_y.resize(N);
    g.delta.resize(N);
    g.tmid.resize(N);

    S* geo = g.mlp_geo.data();
    S* de = g.dir_enc.data();
#pragma omp parallel for schedule(static)
    for (long n = 0; n < N; ++n) {
        const int r = g.hit_rays[(int)(n / K)];
        const double t = ts.t[(size_t)r * K + n % K];
        g.delta[n] = (S)((rb.far[r] - rb.near[r]) / K);
        g.tmid[n] = (S)t;

        const Vec3 x = rb.origins[r] + rb.dirs[r] * t;
        const Vec3 x_c = inverse_lbs(x, tmpl, sb_target);

        // canonical-space neighbors: template feature + forward-skin weights
        const Knn4 nn = nearest4(sb_reference.shaped_verts, x_c);
        S* row = geo + n * (3 + tw);
        row[0] = (S)x_c.x;
        row[1] = (S)x_c.y;
        row[2] = (S)x_c.z;
        row[3] = (S)nn.dist[0];  // distance to the nearest template vertex
        const auto& wrow = tmpl.weights[nn.idx[0]];
        for (int j = 0; j < (int)wrow.size(); ++j) row[4 + j] = (S)wrow[j];

        // into the observation (reference) frame and onto the feature map
        const Transform tf = blend_joint_transforms(sb_reference.joint_tf, blended_weight_row(tmpl, nn));
        const Vec3 x_obs = tf.apply(x_c);
        double u, v, depth;
        if (ref_cam.project(x_obs, u, v, depth)) {
            g.gather_x[n] = (S)(u - 0.5);  // texel centers at integers
            g.gather_y[n] = (S)(v - 0.5);
        } else {
            g.gather_x[n] = (S)-1e6;  // far outside -> zero feature
            g.gather_y[n] = (S)-1e6;
        }
        dir_encoding(rb.dirs[r], cfg.dir_bands, de + n * cfg.dir_encoding_width());
    }
    return g;
}

// sigma [R,K] (softplus) and color [R,K,3] (sigmoid) from Eq.-style F(x, p, dir)
template <typename S>
std::pair<Tensor<S>, Tensor<S>> eval_field(const RadianceField<S>& field, const Tensor<S>& ref_features,
                                           const SampleGeometry<S>& g) {
    const auto& cfg = field.cfg;
    const long N = (long)g.rays * g.per_ray;

    Tensor<S> pix = bilinear_gather(ref_features, g.gather_x, g.gather_y);  // [N, fc]
    Tensor<S> tmpl_feat = slice(g.mlp_geo, 1, 3, cfg.template_feature_width());
    Tensor<S> fuse_in = concat<S>({pix, tmpl_feat}, 1);
    Tensor<S> p = linear(silu(linear(fuse_in, field.param("fuse.w1"), field.param("fuse.b1"))),
                         field.param("fuse.w2"), field.param("fuse.b2"));  // [N, fused]

    Tensor<S> xc = slice(g.mlp_geo, 1, 0, 3);
    Tensor<S> h = concat<S>({xc, p, g.dir_enc}, 1);
    h = silu(linear(h, field.param("mlp.w1"), field.param("mlp.b1")));
    h = silu(linear(h, field.param("mlp.w2"), field.param("mlp.b2")));
    h = silu(linear(h, field.param("mlp.w3"), field.param("mlp.b3")));
    h = linear(h, field.param("mlp.w4"), field.param("mlp.b4"));  // [N,4]

    Tensor<S> sigma = reshape(softplus(slice(h, 1, 0, 1)), {g.rays, g.per_ray});
    Tensor<S> color = reshape(sigmoid(slice(h, 1, 1, 3)), {g.rays, g.per_ray, 3});
    return {sigma, color};
}

template <typename S>
RenderedRays<S> render_ray_batch(const RadianceField<S>& field, const Tensor<S>& ref_features,
                                 const SampleGeometry<S>& g) {
    if (g.rays == 0) {
        // nothing hit the body box: transparent black
        return {Tensor<S>(Shape{g.total_rays, 3}), Tensor<S>(Shape{g.total_rays}), Tensor<S>(Shape{g.total_rays})};
    }
    auto [sigma, color] = eval_field(field, ref_features, g);
    RenderedRays<S> rr = volume_render(sigma, color, g.delta, g.tmid);
    if (g.rays == g.total_rays) return rr;
    // expand back to the full batch; missed rays stay zero
    RenderedRays<S> full;
    full.rgb = scatter_rows(rr.rgb, g.hit_rays, g.total_rays);
    full.alpha = reshape(scatter_rows(reshape(rr.alpha, {g.rays, 1}), g.hit_rays, g.total_rays), {g.total_rays});
    full.depth = reshape(scatter_rows(reshape(rr.depth, {g.rays, 1}), g.hit_rays, g.total_rays), {g.total_rays});
    return full;
}

// ---------------------------------------------------------------------------
// stage-1 loss: L2 + lambda_ssim (1 - SSIM) + lambda_mask L2(alpha, mask);
// the perceptual term is out of scope and its weight is pinned to zero.
// ---------------------------------------------------------------------------

// differentiable SSIM over a [3,h,w] prediction against a constant target
template <typename S>
Tensor<S> ssim_tape(const Tensor<S>& pred, const Tensor<S>& target) {
    require(pred.rank() == 3 && pred.shape() == target.shape(), "ssim_tape: expected matching [c,h,w]");
    const int c = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    require(h >= 11 && w >= 11, detail::str("ssim_tape: window is 11x11 but image is ", h, "x", w));

    Tensor<S> kx({1, 1, 1, 11}), ky({1, 1, 11, 1});
    {
        double k[11], sum = 0;
        for (int i = 0; i < 11; ++i) {
            const double d = i - 5;
            k[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
            sum += k[i];
        }
        for (int i = 0; i < 11; ++i) {
            kx.data()[i] = (S)(k[i] / sum);
            ky.data()[i] = (S)(k[i] / sum);
        }
    }
    auto blur = [&](const Tensor<S>& im) {  // [c,1,h,w] valid-mode gaussian
        return conv2d(conv2d(im, kx, Tensor<S>({1})), ky, Tensor<S>({1}));
    };
    Tensor<S> a = reshape(pred, {c, 1, h, w});
    Tensor<S> b = reshape(target, {c, 1, h, w});
    Tensor<S> mu_a = blur(a), mu_b = blur(b);
    Tensor<S> var_a = sub(blur(mul(a, a)), mul(mu_a, mu_a));
    Tensor<S> var_b = sub(blur(mul(b, b)), mul(mu_b, mu_b));
    Tensor<S> cov = sub(blur(mul(a, b)), mul(mu_a, mu_b));

    const S c1 = (S)1e-4, c2 = (S)9e-4;
    Tensor<S> num = mul(add_scalar(scale(mul(mu_a, mu_b), (S)2), c1), add_scalar(scale(cov, (S)2), c2));
    Tensor<S> den = mul(add_scalar(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), c1), add_scalar(add(var_a, var_b), c2));
    return mean_all(divide(num, den));
}

template <typename S>
Tensor<S> stage1_loss(const RadianceFieldConfig& cfg, const RenderedRays<S>& pred, const Tensor<S>& gt_rgb,
                      const Tensor<S>& gt_mask, int patch_h, int patch_w) {
    require(cfg.lambda_lpips == 0.0, "stage1_loss: the perceptual term requires a pretrained network (lambda_lpips must be 0)");
    require(pred.rgb.shape() == gt_rgb.shape(),
            detail::str("stage1_loss: prediction ", shape_str(pred.rgb.shape()), " vs target ", shape_str(gt_rgb.shape())));
    require(pred.alpha.shape() == gt_mask.shape(), "stage1_loss: alpha/mask shape mismatch");

    Tensor<S> loss = mse(pred.rgb, gt_rgb);
    if (cfg.lambda_ssim > 0 && patch_h >= 11 && patch_w >= 11) {
        Tensor<S> pred_img = permute(reshape(pred.rgb, {patch_h, patch_w, 3}), {2, 0, 1});
        Tensor<S> gt_img = permute(reshape(gt_rgb, {patch_h, patch_w, 3}), {2, 0, 1});
        Tensor<S> ssim_term = sub(Tensor<S>::scalar_of(1), ssim_tape(pred_img, gt_img));
        loss = add(loss, scale(ssim_term, (S)cfg.lambda_ssim));
    }
    loss = add(loss, scale(mse(pred.alpha, gt_mask), (S)cfg.lambda_mask));
    return loss;
}

// ---------------------------------------------------------------------------
// full-frame rendering (inference path, chunked)
// ---------------------------------------------------------------------------

struct NerfFrame {
    Image rgb, alpha;
    std::vector<float> depth;
};

template <typename S>
NerfFrame render_frame(const RadianceField<S>& field, const BodyTemplate& tmpl, const Image& ref_image,
                       const Camera& ref_cam, const Pose& ref_pose, const Camera& target_cam,
                       const Pose& target_pose, double beta, int chunk = 4096) {
    const SkinnedBody sb_ref = skin_body(tmpl, ref_pose, beta);
    const SkinnedBody sb_tar = skin_body(tmpl, target_pose, beta);
    const BodyBounds box = BodyBounds::of(tmpl, sb_tar, field.cfg.near_far_dilation);
    const Tensor<S> fmap = field.encode_reference(ref_image);

    const int h = target_cam.height, w = target_cam.width;
    NerfFrame out;
    out.rgb = Image(h, w, 3);
    out.alpha = Image(h, w, 1);
    out.depth.assign((size_t)h * w, 0.f);

    std::vector<std::pair<int, int>> pixels;
    pixels.reserve(chunk);
    int done = 0;
    while (done < h * w) {
        pixels.clear();
        const int end = std::min(h * w, done + chunk);
        for (int i = done; i < end; ++i) pixels.push_back({i / w, i % w});
        const RayBatch rb = rays_for_pixels(target_cam, pixels, box);
        const RaySamples ts = sample_ray_points(rb, field.cfg.samples_per_ray, nullptr);
        const auto geo = gather_sample_geometry<S>(field.cfg, tmpl, sb_tar, sb_ref, ref_cam, rb, ts);
        const RenderedRays<S> rr = render_ray_batch(field, fmap, geo);
        for (int i = done; i < end; ++i) {
            const int k = i - done;
            out.rgb.px[(size_t)i * 3 + 0] = (float)rr.rgb.data()[k * 3 + 0];
            out.rgb.px[(size_t)i * 3 + 1] = (float)rr.rgb.data()[k * 3 + 1];
            out.rgb.px[(size_t)i * 3 + 2] = (float)rr.rgb.data()[k * 3 + 2];
            out.alpha.px[i] = (float)rr.alpha.data()[k];
            out.depth[i] = (float)rr.depth.data()[k];
        }
        done = end;
    }
    return out;
}

// ---------------------------------------------------------------------------
// stage-1 training
// ---------------------------------------------------------------------------

struct FieldTrainView {
    // indices into a dataset: subject, trajectory, frame
    int subject = 0;
    int frame = 0;
};

template <typename S>
struct FieldTrainer {
    RadianceField<S> field;
    Adam<S> opt;
    Tape<S> tape;
    long iteration = 0;

    void init(const RadianceFieldConfig& cfg, Rng& rng) {
        field.cfg = cfg;
        field.init(rng);
        opt.lr = (S)cfg.lr;
        opt.init(field.params.tensors());
    }

    // One optimizer step on a random patch of a (reference, target) view pair.
    // Returns the scalar loss.
    double step(const BodyTemplate& tmpl, const Image& ref_image, const Camera& ref_cam, const Pose& ref_pose,
                const Image& tar_image, const Image& tar_mask, const Camera& tar_cam, const Pose& tar_pose,
                double beta, Rng& rng) {
        const auto& cfg = field.cfg;
        const SkinnedBody sb_ref = skin_body(tmpl, ref_pose, beta);
        const SkinnedBody sb_tar = skin_body(tmpl, tar_pose, beta);
        const BodyBounds box = BodyBounds::of(tmpl, sb_tar, cfg.near_far_dilation);

        // patch placement: mostly overlapping the subject so the photometric
        // and SSIM terms see structure, sometimes anywhere for clean alpha
        const int ph = std::min(cfg.patch_h, tar_cam.height), pw = std::min(cfg.patch_w, tar_cam.width);
        int oy, ox;
        double u0 = 1e9, u1 = -1e9, v0 = 1e9, v1 = -1e9;
        for (auto& v : sb_tar.posed_verts) {
            double u, vv, d;
            if (tar_cam.project(v, u, vv, d)) {
                u0 = std::min(u0, u); u1 = std::max(u1, u);
                v0 = std::min(v0, vv); v1 = std::max(v1, vv);
            }
        }
        if (rng.uniform() < 0.8 && u1 > u0) {
            const int cx = (int)rng.uniform(u0, u1), cy = (int)rng.uniform(v0, v1);
            oy = std::clamp(cy - ph / 2, 0, tar_cam.height - ph);
            ox = std::clamp(cx - pw / 2, 0, tar_cam.width - pw);
        } else {
            oy = (int)rng.below(tar_cam.height - ph + 1);
            ox = (int)rng.below(tar_cam.width - pw + 1);
        }

        std::vector<std::pair<int, int>> pixels;
        pixels.reserve((size_t)ph * pw);
        Tensor<S> gt_rgb({ph * pw, 3}), gt_mask({ph * pw});
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x) {
                pixels.push_back({oy + y, ox + x});
                const int n = y * pw + x;
                for (int c = 0; c < 3; ++c) gt_rgb.data()[n * 3 + c] = (S)tar_image.at(oy + y, ox + x, c);
                gt_mask.data()[n] = (S)tar_mask.at(oy + y, ox + x, 0);
            }

        const RayBatch rb = rays_for_pixels(tar_cam, pixels, box);
        const RaySamples ts = sample_ray_points(rb, cfg.samples_per_ray, &rng);
        const auto geo = gather_sample_geometry<S>(cfg, tmpl, sb_tar, sb_ref, ref_cam, rb, ts);

        double loss_value;
        {
            TapeScope<S> scope(tape);
            const Tensor<S> fmap = field.encode_reference(ref_image);
            const RenderedRays<S> rr = render_ray_batch(field, fmap, geo);
            Tensor<S> loss = stage1_loss(cfg, rr, gt_rgb, gt_mask, ph, pw);
            loss_value = (double)loss.item();
            opt.zero_grad();
            tape.backward(loss);
        }
        opt.step();
        ++iteration;
        return loss_value;
    }
};

}  // namespace gas
