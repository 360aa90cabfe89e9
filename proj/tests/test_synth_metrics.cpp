#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gas/metrics.hpp>
#include <gas/rng.hpp>
#include <gas/synth.hpp>

#include <filesystem>

using gas::Image;
using gas::Vec3;
namespace fs = std::filesystem;

namespace {

Image random_image(int h, int w, int c, gas::Rng& rng) {
    Image im(h, w, c);
    for (auto& v : im.px) v = (float)rng.uniform(0, 1);
    return im;
}

std::string temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("gas_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

// brute-force tree fingerprint: path + file bytes
uint64_t tree_fingerprint(const std::string& root) {
    std::vector<std::string> paths;
    for (auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) paths.push_back(fs::relative(e.path(), root).string());
    std::sort(paths.begin(), paths.end());
    uint64_t h = 1469598103934665603ULL;
    for (auto& rel : paths) {
        h = gas::fnv1a(rel.data(), rel.size(), h);
        std::ifstream is(root + "/" + rel, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        h = gas::fnv1a(bytes.data(), bytes.size(), h);
    }
    return h;
}

}  // namespace

TEST_CASE("png round trips are bit-exact") {
    gas::Rng rng(5);
    Image im = random_image(13, 9, 3, rng);
    // quantize first so the round trip is exact
    for (auto& v : im.px) v = std::round(v * 255.f) / 255.f;
    const std::string p = temp_dir("png") + "/im.png";
    gas::write_png8(p, im);
    const Image back = gas::read_png8(p);
    REQUIRE(back.px.size() == im.px.size());
    for (size_t i = 0; i < im.px.size(); ++i) CHECK(back.px[i] == doctest::Approx(im.px[i]).epsilon(1e-6));

    // 16-bit depth in millimeters
    std::vector<float> depth(64);
    for (auto& d : depth) d = (float)rng.uniform(0, 5);
    const std::string pd = temp_dir("png16") + "/d.png";
    gas::write_png_depth16(pd, depth, 8, 8);
    int w = 0, h = 0;
    const auto back_d = gas::read_png_depth16(pd, &w, &h);
    CHECK(w == 8);
    CHECK(h == 8);
    for (size_t i = 0; i < depth.size(); ++i) CHECK(std::abs(back_d[i] - depth[i]) <= 0.0005f + 1e-6f);
}

TEST_CASE("psnr: pinned and oracle values") {
    gas::Rng rng(11);
    Image a = random_image(8, 8, 3, rng);
    CHECK(std::isinf(gas::psnr(a, a)));

    Image b = a;
    for (auto& v : b.px) v += 0.1f;
    CHECK(gas::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));

    // brute-force MSE oracle
    Image c = random_image(8, 8, 3, rng);
    double acc = 0;
    for (size_t i = 0; i < a.px.size(); ++i) acc += ((double)a.px[i] - c.px[i]) * ((double)a.px[i] - c.px[i]);
    const double mse = acc / a.px.size();
    CHECK(gas::psnr(a, c) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));

    Image d(4, 4, 3);
    CHECK_THROWS_AS((void)gas::psnr(a, d), std::runtime_error);
}

TEST_CASE("ssim: pinned and closed-form constant-image oracle") {
    gas::Rng rng(13);
    Image a = random_image(16, 16, 3, rng);
    CHECK(gas::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

    Image zero(16, 16, 1, 0.f), one(16, 16, 1, 1.f);
    // mu_a=0, mu_b=1, all variances 0: ssim = C1*C2 / ((1+C1)*C2) = C1/(1+C1)
    const double c1 = 0.01 * 0.01;
    CHECK(gas::ssim(zero, one) == doctest::Approx(c1 / (1 + c1)).epsilon(1e-9));

    Image b = random_image(16, 16, 3, rng);
    CHECK(gas::ssim(a, b) == doctest::Approx(gas::ssim(b, a)).epsilon(1e-9));

    Image tiny(8, 8, 1);
    CHECK_THROWS_AS((void)gas::ssim(tiny, tiny), std::runtime_error);
}

TEST_CASE("masked psnr equals unmasked when differences are inside the mask") {
    gas::Rng rng(17);
    Image a = random_image(12, 12, 3, rng);
    Image b = a;
    Image mask(12, 12, 1, 0.f);
    for (int y = 3; y < 7; ++y)
        for (int x = 2; x < 9; ++x) {
            mask.at(y, x, 0) = 1.f;
            for (int c = 0; c < 3; ++c) b.at(y, x, c) = (float)rng.uniform(0, 1);
        }
    CHECK(gas::masked_psnr(a, b, mask) == doctest::Approx(gas::psnr(a, b)).epsilon(1e-12));
}

TEST_CASE("flicker: pinned values and brute-force oracle") {
    Image f0(6, 6, 1, 0.f), f1(6, 6, 1, 1.f), full(6, 6, 1, 1.f);
    CHECK(gas::flicker({f0, f0, f0}, {full, full, full}) == doctest::Approx(0.0));
    CHECK(gas::flicker({f0, f1, f0, f1}, {full, full, full, full}) == doctest::Approx(1.0));
    CHECK_THROWS_AS((void)gas::flicker({f0}, {full}), std::runtime_error);

    gas::Rng rng(23);
    std::vector<Image> frames, masks;
    for (int i = 0; i < 4; ++i) {
        frames.push_back(random_image(5, 7, 3, rng));
        Image m(5, 7, 1);
        for (auto& v : m.px) v = rng.uniform(0, 1) > 0.4 ? 1.f : 0.f;
        masks.push_back(m);
    }
    // naive double-loop oracle
    std::vector<char> uni(5 * 7, 0);
    for (auto& m : masks)
        for (int i = 0; i < 5 * 7; ++i)
            if (m.px[i] > 0.5f) uni[i] = 1;
    double acc = 0;
    long cnt = 0;
    for (int i = 0; i < 5 * 7; ++i) cnt += uni[i];
    for (int f = 0; f < 3; ++f)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 7; ++x)
                if (uni[y * 7 + x])
                    for (int c = 0; c < 3; ++c)
                        acc += std::abs((double)frames[f + 1].at(y, x, c) - frames[f].at(y, x, c));
    CHECK(gas::flicker(frames, masks) == doctest::Approx(acc / (3.0 * cnt * 3)).epsilon(1e-9));
}

TEST_CASE("metric means are permutation invariant") {
    gas::Rng rng(29);
    std::vector<Image> pred, gt;
    for (int i = 0; i < 5; ++i) {
        pred.push_back(random_image(12, 12, 3, rng));
        gt.push_back(random_image(12, 12, 3, rng));
    }
    auto mean_psnr = [&](const std::vector<int>& order) {
        double s = 0;
        for (int i : order) s += gas::psnr(pred[i], gt[i]);
        return s / order.size();
    };
    CHECK(mean_psnr({0, 1, 2, 3, 4}) == doctest::Approx(mean_psnr({3, 0, 4, 2, 1})).epsilon(1e-12));
}

TEST_CASE("subjects: deterministic, distinct, beta range") {
    const auto a = gas::make_subject(5);
    const auto b = gas::make_subject(5);
    const auto c = gas::make_subject(6);
    CHECK(a.base_color[0].x == b.base_color[0].x);
    CHECK(a.beta == b.beta);
    double diff = 0;
    for (int p = 0; p < gas::kBodyParts; ++p) diff += (a.base_color[p] - c.base_color[p]).norm();
    CHECK(diff > 1e-3);
    for (uint64_t s = 0; s < 50; ++s) {
        const auto subj = gas::make_subject(s);
        CHECK(subj.beta >= -1.0);
        CHECK(subj.beta <= 1.0);
        for (auto& col : subj.base_color) {
            CHECK(col.x >= 0.0);
            CHECK(col.x <= 1.0);
        }
    }
}

TEST_CASE("orbit cameras: spacing and equidistance") {
    const auto cams20 = gas::orbit_cameras(20, 10.0, 2.4, 32);
    REQUIRE(cams20.size() == 20);
    const Vec3 center = gas::body_center();
    for (int k = 0; k < 20; ++k) {
        const Vec3 p0 = cams20[k].position() - center;
        const Vec3 p1 = cams20[(k + 1) % 20].position() - center;
        const double cos_angle = p0.dot(p1) / (p0.norm() * p1.norm());
        // adjacent azimuth spacing of 18 deg at fixed elevation
        const double elev = 10.0 * M_PI / 180.0;
        const double expect = std::cos(elev) * std::cos(elev) * std::cos(2 * M_PI / 20) + std::sin(elev) * std::sin(elev);
        CHECK(cos_angle == doctest::Approx(expect).epsilon(1e-9));
        CHECK(p0.norm() == doctest::Approx(2.4).epsilon(1e-6));
    }

    const auto cams4 = gas::orbit_cameras(4, 0.0, 2.4, 32);
    const double az[4] = {0, 90, 180, 270};
    for (int k = 0; k < 4; ++k) {
        const Vec3 p = cams4[k].position() - center;
        CHECK(std::atan2(p.x, p.z) * 180.0 / M_PI == doctest::Approx(az[k] > 180 ? az[k] - 360 : az[k]).epsilon(1e-6));
    }
}

TEST_CASE("pose sequences: continuity, periodicity, rest-adjacent, errors") {
    for (auto kind : {gas::MotionKind::ArmWave, gas::MotionKind::WalkCycle, gas::MotionKind::Squat}) {
        const auto seq = gas::pose_sequence(kind, 20);
        REQUIRE((int)seq.size() == 20);
        for (int i = 0; i + 1 < 20; ++i)
            for (int j = 0; j < 10; ++j)
                CHECK((seq[i + 1].axis_angle[j] - seq[i].axis_angle[j]).norm() < 0.2);
    }
    // T=1 gives a rest-adjacent pose
    const auto single = gas::pose_sequence(gas::MotionKind::Squat, 1);
    for (auto& aa : single[0].axis_angle) CHECK(aa.norm() < 0.15);

    // walk_cycle with period T wraps: pose at T equals pose at 0
    const auto wrapped = gas::pose_sequence(gas::MotionKind::WalkCycle, 21, 10, 20);
    for (int j = 0; j < 10; ++j)
        CHECK((wrapped[20].axis_angle[j] - wrapped[0].axis_angle[j]).norm() < 1e-6);

    CHECK_THROWS_AS(gas::motion_kind_from_string("moonwalk"), std::runtime_error);
}

TEST_CASE("ground truth: mask matches coverage, deterministic, front/back differ") {
    const auto tmpl = gas::make_capsule_person();
    const auto subj = gas::make_subject(3);
    const auto cams = gas::orbit_cameras(20, 10.0, 2.4, 32);
    const gas::Pose rest = gas::Pose::rest(tmpl.num_joints());

    const auto f0 = gas::render_ground_truth_frame(subj, tmpl, rest, cams[0]);
    const auto f0_again = gas::render_ground_truth_frame(subj, tmpl, rest, cams[0]);
    CHECK(f0.rgb.px == f0_again.rgb.px);  // bit-identical
    CHECK(f0.mask.px == f0_again.mask.px);

    // mask equals rasterizer coverage bit-exactly
    const auto sb = gas::skin_body(tmpl, rest, subj.beta);
    const auto maps = gas::render_geometry_maps(sb.posed_verts, tmpl.faces, cams[0]);
    CHECK(f0.mask.px == maps.mask.px);

    // front (view 0) vs back (view 10) must differ inside the union of masks
    const auto f10 = gas::render_ground_truth_frame(subj, tmpl, rest, cams[10]);
    double diff = 0;
    for (size_t i = 0; i < f0.rgb.px.size(); ++i) diff += std::abs(f0.rgb.px[i] - f10.rgb.px[i]);
    CHECK(diff / f0.rgb.px.size() > 0.005);
}

TEST_CASE("dataset build: stride, manifest round trip, determinism, files exist") {
    gas::DataGenConfig cfg;
    cfg.kind = gas::DatasetKind::MonocularVideo;
    cfg.subjects = 2;
    cfg.image_size = 16;
    cfg.video_raw_frames = 80;
    cfg.frame_stride = 4;

    const std::string root_a = temp_dir("ds_a");
    const auto manifest = gas::build_dataset(cfg, root_a);
    REQUIRE(manifest.subjects.size() == 2);
    const auto& traj = manifest.subjects[0].trajectories[0];
    CHECK(traj.frames == 20);
    // source frames 0..79 -> training frames {0,4,...,76}
    for (int i = 0; i < 20; ++i) CHECK(traj.source_indices[i] == 4 * i);

    // manifest round trip
    const auto loaded = gas::load_manifest(root_a);
    CHECK(loaded.to_json() == manifest.to_json());

    // every referenced image exists and decodes to the declared size
    for (auto& s : loaded.subjects)
        for (auto& t : s.trajectories) {
            const auto lt = gas::load_trajectory(root_a, s.id, t.name);
            CHECK((int)lt.frames.size() == t.frames);
            for (auto& f : lt.frames) {
                CHECK(f.h == 16);
                CHECK(f.w == 16);
            }
        }

    // byte-identical regeneration
    const std::string root_b = temp_dir("ds_b");
    gas::build_dataset(cfg, root_b);
    CHECK(tree_fingerprint(root_a) == tree_fingerprint(root_b));

    fs::remove_all(root_a);
    fs::remove_all(root_b);
}

TEST_CASE("view clips: direction flip keeps the start frame, pose clips are consecutive") {
    const auto fwd = gas::view_clip_indices(20, 20, 0, true);
    CHECK(fwd[0] == 0);
    CHECK(fwd[1] == 1);
    const auto rev = gas::view_clip_indices(20, 20, 0, false);
    CHECK(rev[0] == 0);
    CHECK(rev[1] == 19);
    CHECK(rev[2] == 18);
    const auto sub = gas::view_clip_indices(20, 8, 5, true);
    CHECK((int)sub.size() == 8);
    CHECK(sub[0] == 5);
    for (int v : sub) {
        CHECK(v >= 0);
        CHECK(v < 20);
    }
    const auto pc = gas::pose_clip_indices(20, 8, 7);
    for (int j = 0; j < 8; ++j) CHECK(pc[j] == 7 + j);
    CHECK_THROWS_AS(gas::pose_clip_indices(20, 8, 15), std::runtime_error);
}
