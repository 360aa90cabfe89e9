#pragma once

#include <functional>
#include <iostream>

#include "gas/diffusion.hpp"
#include "gas/nerf.hpp"
#include "gas/ops.hpp"

// Central finite-difference verification of every differentiable op, the
// stage-1 loss path, and the full denoising objective on a micro model. All
// checks run in 64-bit and demand relative error < 1e-3.

namespace gas {

struct GradCheckReport {
    int passed = 0, failed = 0;

    void note(const std::string& name, double rel, std::ostream& os, double tol = 1e-3) {
        const bool ok = rel < tol;
        os << (ok ? "[pass] " : "[FAIL] ") << name << "  rel_err " << rel << "\n";
        (ok ? passed : failed)++;
    }
    bool ok() const { return failed == 0; }
};

namespace gradcheck_detail {

inline Tensor<double> rand_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
    Tensor<double> t(shape);
    for (long i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

// fixed-weight contraction so layout errors cannot cancel
struct Contraction {
    Rng rng;
    std::map<std::string, Tensor<double>> frozen;
    explicit Contraction(uint64_t seed) : rng(seed) {}
    Tensor<double> operator()(const Tensor<double>& out, const std::string& tag) {
        auto it = frozen.find(tag);
        if (it == frozen.end()) {
            Tensor<double> w(out.shape());
            for (long i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform(-1, 1);
            it = frozen.emplace(tag, w).first;
        }
        return sum_all(mul(out, it->second));
    }
};

inline double fd_check(std::vector<Tensor<double>> leaves, const std::function<Tensor<double>()>& forward,
                       double h = 1e-4) {
    for (auto& l : leaves) {
        l.set_requires_grad(true);
        l.zero_grad();
    }
    Tape<double> tape;
    {
        TapeScope<double> scope(tape);
        tape.backward(forward());
    }
    double worst = 0;
    for (auto& l : leaves) {
        const std::vector<double> analytic = l.grad();
        for (long i = 0; i < l.numel(); ++i) {
            const double keep = l.data()[i];
            l.data()[i] = keep + h;
            const double up = forward().item();
            l.data()[i] = keep - h;
            const double down = forward().item();
            l.data()[i] = keep;
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(analytic[i] - fd) /
                                        std::max(1.0, std::max(std::abs(analytic[i]), std::abs(fd))));
        }
    }
    return worst;
}

}  // namespace gradcheck_detail

inline void gradcheck_ops(GradCheckReport& rep, std::ostream& os, int seeds = 5) {
    using namespace gradcheck_detail;
    for (uint64_t seed = 1; seed <= (uint64_t)seeds; ++seed) {
        Rng rng(seed * 1009);
        Contraction ws(seed + 7000);
        const std::string sfx = detail::str(" (seed ", seed, ")");

        Shape shape{(int)(1 + rng.below(3)), (int)(2 + rng.below(4))};
        auto a = rand_tensor(shape, rng);
        auto b = rand_tensor(shape, rng, 0.5, 2.0);
        rep.note("add" + sfx, fd_check({a, b}, [&] { return ws(add(a, b), "add"); }), os);
        rep.note("sub" + sfx, fd_check({a, b}, [&] { return ws(sub(a, b), "sub"); }), os);
        rep.note("mul" + sfx, fd_check({a, b}, [&] { return ws(mul(a, b), "mul"); }), os);
        rep.note("div" + sfx, fd_check({a, b}, [&] { return ws(divide(a, b), "div"); }), os);
        rep.note("scale" + sfx, fd_check({a}, [&] { return ws(scale(a, 1.3), "scale"); }), os);
        rep.note("add_scalar" + sfx, fd_check({a}, [&] { return ws(add_scalar(a, 0.4), "addsc"); }), os);
        rep.note("silu" + sfx, fd_check({a}, [&] { return ws(silu(a), "silu"); }), os);
        rep.note("sigmoid" + sfx, fd_check({a}, [&] { return ws(sigmoid(a), "sig"); }), os);
        rep.note("softplus" + sfx, fd_check({a}, [&] { return ws(softplus(a), "sp"); }), os);
        rep.note("softmax" + sfx, fd_check({a}, [&] { return ws(softmax(a), "sm"); }), os);
        rep.note("mean" + sfx, fd_check({a}, [&] { return mean_all(a); }), os);
        rep.note("mse" + sfx, fd_check({a, b}, [&] { return mse(a, b); }), os);

        const int d0 = 2 + (int)rng.below(2), d1 = 2 + (int)rng.below(3), d2 = 2 + (int)rng.below(3);
        auto c3 = rand_tensor({d0, d1, d2}, rng);
        auto c3b = rand_tensor({d0, d1, d2}, rng);
        rep.note("reshape" + sfx, fd_check({c3}, [&] { return ws(reshape(c3, {d0 * d1, d2}), "rs"); }), os);
        rep.note("concat" + sfx, fd_check({c3, c3b}, [&] { return ws(concat<double>({c3, c3b}, 1), "cat"); }), os);
        rep.note("slice" + sfx, fd_check({c3}, [&] { return ws(slice(c3, 1, 1, d1 - 1), "sl"); }), os);
        rep.note("permute" + sfx, fd_check({c3}, [&] { return ws(permute(c3, {2, 0, 1}), "pm"); }), os);
        rep.note("scatter_rows" + sfx, fd_check({a}, [&] {
                     std::vector<int> rows(shape[0]);
                     for (int i = 0; i < shape[0]; ++i) rows[i] = 2 * i;
                     return ws(scatter_rows(reshape(a, {shape[0], shape[1]}), rows, 2 * shape[0] + 1), "sc");
                 }), os);

        const int m = 2 + (int)rng.below(3), k = 2 + (int)rng.below(3), n = 2 + (int)rng.below(3);
        auto A = rand_tensor({m, k}, rng);
        auto B = rand_tensor({k, n}, rng);
        auto bias = rand_tensor({n}, rng);
        rep.note("matmul" + sfx, fd_check({A, B}, [&] { return ws(matmul(A, B), "mm"); }), os);
        rep.note("linear" + sfx, fd_check({A, B, bias}, [&] { return ws(linear(A, B, bias), "lin"); }), os);
        auto q = rand_tensor({2, m, k}, rng);
        auto kk = rand_tensor({2, n, k}, rng);
        auto v = rand_tensor({2, n, k + 1}, rng);
        rep.note("attention" + sfx,
                 fd_check({q, kk, v}, [&] { return ws(scaled_dot_product_attention(q, kk, v), "attn"); }), os);

        const int H = 4 + 2 * (int)rng.below(2), W = 4;
        auto x = rand_tensor({2, 3, H, W}, rng);
        auto w = rand_tensor({2, 3, 3, 3}, rng);
        auto cb = rand_tensor({2}, rng);
        rep.note("conv2d" + sfx, fd_check({x, w, cb}, [&] { return ws(conv2d(x, w, cb, 1, 1), "conv"); }), os);
        rep.note("conv2d_s2" + sfx, fd_check({x, w, cb}, [&] { return ws(conv2d(x, w, cb, 2, 1), "convs2"); }), os);
        auto x4 = rand_tensor({2, 4, H, W}, rng);
        auto gamma = rand_tensor({4}, rng, 0.5, 1.5);
        auto beta = rand_tensor({4}, rng);
        rep.note("group_norm" + sfx,
                 fd_check({x4, gamma, beta}, [&] { return ws(group_norm(x4, gamma, beta, 2), "gn"); }), os);
        rep.note("add_channel_bias" + sfx,
                 fd_check({x4, beta}, [&] { return ws(add_channel_bias(x4, beta), "acb"); }), os);
        rep.note("nearest_upsample" + sfx, fd_check({x}, [&] { return ws(nearest_upsample(x), "nu"); }), os);
        rep.note("avg_downsample" + sfx, fd_check({x}, [&] { return ws(avg_downsample(x), "ad"); }), os);
        auto bcy = rand_tensor({d1, d2}, rng);
        rep.note("add_broadcast0" + sfx, fd_check({c3, bcy}, [&] { return ws(add_broadcast0(c3, bcy), "bc"); }), os);

        auto fmap = rand_tensor({3, H, W}, rng);
        std::vector<double> xs, ys;
        for (int i = 0; i < 5; ++i) {
            xs.push_back(rng.uniform(-1.0, W));
            ys.push_back(rng.uniform(-1.0, H));
        }
        rep.note("bilinear_gather" + sfx, fd_check({fmap}, [&] { return ws(bilinear_gather(fmap, xs, ys), "bg"); }),
                 os);

        const int R = 2, K = 4;
        auto sig = rand_tensor({R, K}, rng, 0.0, 3.0);
        auto col = rand_tensor({R, K, 3}, rng, 0.0, 1.0);
        std::vector<double> delta((long)R * K), tmid((long)R * K);
        for (auto& dd : delta) dd = rng.uniform(0.05, 0.3);
        for (auto& tt : tmid) tt = rng.uniform(0.0, 2.0);
        rep.note("volume_render" + sfx, fd_check({sig, col}, [&] {
                     auto r = volume_render(sig, col, delta, tmid);
                     auto s1 = ws(r.rgb, "vr_rgb");
                     auto s2 = ws(reshape(r.alpha, {R, 1}), "vr_a");
                     auto s3 = ws(reshape(r.depth, {R, 1}), "vr_d");
                     return add(add(s1, s2), s3);
                 }), os);
    }
}

inline void gradcheck_stage1(GradCheckReport& rep, std::ostream& os) {
    using namespace gradcheck_detail;
    const auto tmpl = make_capsule_person();
    Rng rng(2024);
    const Pose pose = Pose::rest(tmpl.num_joints());
    const auto sb = skin_body(tmpl, pose, 0.0);
    const Camera cam = camera_at_azimuth(0.2, 10, 2.4, 16);

    RadianceFieldConfig cfg;
    cfg.samples_per_ray = 8;
    RadianceField<double> field;
    field.cfg = cfg;
    field.init(rng);
    Image ref(16, 16, 3);
    for (auto& v : ref.px) v = (float)rng.uniform(0, 1);

    std::vector<std::pair<int, int>> pixels = {{7, 7}, {7, 8}, {8, 7}, {8, 8}};
    const BodyBounds box = BodyBounds::of(tmpl, sb, cfg.near_far_dilation);
    const RayBatch rb = rays_for_pixels(cam, pixels, box);
    const auto ts = sample_ray_points(rb, cfg.samples_per_ray, nullptr);
    const auto geo = gather_sample_geometry<double>(cfg, tmpl, sb, sb, cam, rb, ts);
    Tensor<double> gt_rgb({4, 3}), gt_mask({4});
    for (long i = 0; i < 12; ++i) gt_rgb.data()[i] = rng.uniform(0, 1);
    for (long i = 0; i < 4; ++i) gt_mask.data()[i] = 1.0;

    auto forward = [&] {
        const auto fmap = field.encode_reference(ref);
        return stage1_loss(cfg, render_ray_batch(field, fmap, geo), gt_rgb, gt_mask, 2, 2);
    };

    Tape<double> tape;
    field.params.zero_grad();
    {
        TapeScope<double> scope(tape);
        tape.backward(forward());
    }
    Rng pick(77);
    for (auto& item : field.params.items) {
        Tensor<double>& p = item.second;
        double worst = 0;
        for (int probe = 0; probe < 3; ++probe) {
            const long i = pick.below((uint32_t)p.numel());
            const double keep = p.data()[i];
            const double h = 1e-4;
            p.data()[i] = keep + h;
            const double up = forward().item();
            p.data()[i] = keep - h;
            const double down = forward().item();
            p.data()[i] = keep;
            const double fd = (up - down) / (2 * h);
            const double an = p.has_grad() ? p.grad()[i] : 0.0;
            worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::max(std::abs(an), std::abs(fd))));
        }
        rep.note("stage1-loss d/d " + item.first, worst, os);
    }
}

inline void gradcheck_diffusion(GradCheckReport& rep, std::ostream& os) {
    DiffusionConfig cfg;
    cfg.frames = 2;
    cfg.image_size = 32;
    cfg.latent_channels = 4;
    cfg.base_channels = 8;
    cfg.embed_dim = 8;
    cfg.time_embed = 16;

    DiffusionModel<double> model;
    Rng rng(4242);
    model.init(cfg, rng);
    Rng data(4747);
    auto rand_img = [&](int size) {
        Image im(size, size, 3);
        for (auto& v : im.px) v = (float)data.uniform(0, 1);
        return im;
    };
    std::vector<Image> gt{rand_img(32), rand_img(32)}, appr{rand_img(32), rand_img(32)},
        geo{rand_img(32), rand_img(32)};
    Image ref = rand_img(32);
    std::vector<double> phases{0.0, 0.5};
    Tensor<double> eps({2, cfg.latent_channels, 8, 8});
    for (long i = 0; i < eps.numel(); ++i) eps.data()[i] = data.normal();
    const double t = 0.37;

    auto forward = [&] {
        auto pc = model.prepare(ref, appr, geo, Mode::View, phases, false);
        auto z_t = add_noise(model.encode_video(gt), eps, t);
        return mse(eps, model.unet_eps(z_t, t, pc));
    };
    Tape<double> tape;
    model.params.zero_grad();
    model.codec.params.zero_grad();
    {
        TapeScope<double> scope(tape);
        tape.backward(forward());
    }
    auto all = model.params.items;
    all.push_back(model.codec.params.items[0]);
    Rng pick(99);
    int checked = 0;
    double worst = 0;
    while (checked < 20) {
        auto& item = all[pick.below((uint32_t)all.size())];
        Tensor<double>& p = item.second;
        const long i = pick.below((uint32_t)p.numel());
        const double keep = p.data()[i];
        const double h = 1e-4;
        p.data()[i] = keep + h;
        const double up = forward().item();
        p.data()[i] = keep - h;
        const double down = forward().item();
        p.data()[i] = keep;
        const double fd = (up - down) / (2 * h);
        const double an = p.has_grad() ? p.grad()[i] : 0.0;
        const double rel = std::abs(an - fd) / std::max(1.0, std::max(std::abs(an), std::abs(fd)));
        worst = std::max(worst, rel);
        rep.note(detail::str("eq3-micro d/d ", item.first, "[", i, "]"), rel, os);
        ++checked;
    }
    (void)worst;
}

inline bool run_grad_check(std::ostream& os) {
    GradCheckReport rep;
    gradcheck_ops(rep, os);
    gradcheck_stage1(rep, os);
    gradcheck_diffusion(rep, os);
    os << "grad-check: " << rep.passed << " passed, " << rep.failed << " failed\n";
    return rep.ok();
}

}  // namespace gas
