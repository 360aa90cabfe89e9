#pragma once

#include <cstdlib>
#include <set>

#include "gas/diffusion.hpp"
#include "gas/nerf.hpp"
#include "gas/sampler.hpp"
#include "gas/serio.hpp"
#include "gas/synth.hpp"

namespace gas {

// Run configuration: JSON with sections {data, radiance_field, diffusion,
// sampler, eval} plus the global seed. Unknown keys are rejected. Every field
// is optional and falls back to the defaults below. The GAS_SEED environment
// variable overrides the seed.
struct RunConfig {
    uint64_t seed = 1234;

    struct Data {
        int image_size = 32;
        int scan_train_subjects = 48;
        int scan_test_subjects = 8;
        int video_train_subjects = 16;
        int video_test_subjects = 4;
        int video_raw_frames = 80;
        int frame_stride = 4;
        int orbit_views = 20;
        double orbit_elevation_deg = 10.0;
        double orbit_radius = 2.4;
        int cache_view_refs = 4;
        int cache_pose_refs = 2;
    } data;

    RadianceFieldConfig radiance_field;
    DiffusionConfig diffusion;
    SamplerConfig sampler;

    struct Eval {
        int view_references = 4;
        int pose_continuation = 24;
    } eval;
};

namespace config_detail {

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    require(j.is_object(), detail::str("config section '", where, "' must be an object"));
    for (auto it = j.begin(); it != j.end(); ++it)
        require(allowed.count(it.key()) > 0, detail::str("unknown config key '", where, ".", it.key(), "'"));
}

template <typename T>
void get_if(const Json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace config_detail

inline RunConfig parse_run_config(const Json& j) {
    using config_detail::check_keys;
    using config_detail::get_if;
    RunConfig cfg;
    check_keys(j, {"seed", "data", "radiance_field", "diffusion", "sampler", "eval"}, "<root>");
    get_if(j, "seed", cfg.seed);

    if (j.contains("data")) {
        const Json& d = j.at("data");
        check_keys(d,
                   {"image_size", "scan_train_subjects", "scan_test_subjects", "video_train_subjects",
                    "video_test_subjects", "video_raw_frames", "frame_stride", "orbit_views",
                    "orbit_elevation_deg", "orbit_radius", "cache_view_refs", "cache_pose_refs"},
                   "data");
        get_if(d, "image_size", cfg.data.image_size);
        get_if(d, "scan_train_subjects", cfg.data.scan_train_subjects);
        get_if(d, "scan_test_subjects", cfg.data.scan_test_subjects);
        get_if(d, "video_train_subjects", cfg.data.video_train_subjects);
        get_if(d, "video_test_subjects", cfg.data.video_test_subjects);
        get_if(d, "video_raw_frames", cfg.data.video_raw_frames);
        get_if(d, "frame_stride", cfg.data.frame_stride);
        get_if(d, "orbit_views", cfg.data.orbit_views);
        get_if(d, "orbit_elevation_deg", cfg.data.orbit_elevation_deg);
        get_if(d, "orbit_radius", cfg.data.orbit_radius);
        get_if(d, "cache_view_refs", cfg.data.cache_view_refs);
        get_if(d, "cache_pose_refs", cfg.data.cache_pose_refs);
    }
    if (j.contains("radiance_field")) {
        const Json& f = j.at("radiance_field");
        check_keys(f,
                   {"feature_channels", "fusion_hidden", "fused_width", "hidden", "dir_bands", "samples_per_ray",
                    "near_far_dilation", "lambda_ssim", "lambda_mask", "lambda_lpips", "lr", "iterations",
                    "rays_per_batch", "patch_h", "patch_w", "checkpoint_every"},
                   "radiance_field");
        get_if(f, "feature_channels", cfg.radiance_field.feature_channels);
        get_if(f, "fusion_hidden", cfg.radiance_field.fusion_hidden);
        get_if(f, "fused_width", cfg.radiance_field.fused_width);
        get_if(f, "hidden", cfg.radiance_field.hidden);
        get_if(f, "dir_bands", cfg.radiance_field.dir_bands);
        get_if(f, "samples_per_ray", cfg.radiance_field.samples_per_ray);
        get_if(f, "near_far_dilation", cfg.radiance_field.near_far_dilation);
        get_if(f, "lambda_ssim", cfg.radiance_field.lambda_ssim);
        get_if(f, "lambda_mask", cfg.radiance_field.lambda_mask);
        get_if(f, "lambda_lpips", cfg.radiance_field.lambda_lpips);
        get_if(f, "lr", cfg.radiance_field.lr);
        get_if(f, "iterations", cfg.radiance_field.iterations);
        get_if(f, "rays_per_batch", cfg.radiance_field.rays_per_batch);
        get_if(f, "patch_h", cfg.radiance_field.patch_h);
        get_if(f, "patch_w", cfg.radiance_field.patch_w);
        get_if(f, "checkpoint_every", cfg.radiance_field.checkpoint_every);
        require(cfg.radiance_field.patch_h * cfg.radiance_field.patch_w == cfg.radiance_field.rays_per_batch,
                "config: radiance_field.rays_per_batch must equal patch_h * patch_w");
    }
    if (j.contains("diffusion")) {
        const Json& d = j.at("diffusion");
        check_keys(d,
                   {"frames", "image_size", "latent_channels", "base_channels", "embed_dim", "time_embed",
                    "norm_groups", "lr", "codec_lr", "p_drop", "batch_size", "steps", "view_pose_ratio",
                    "checkpoint_every"},
                   "diffusion");
        get_if(d, "frames", cfg.diffusion.frames);
        get_if(d, "image_size", cfg.diffusion.image_size);
        get_if(d, "latent_channels", cfg.diffusion.latent_channels);
        get_if(d, "base_channels", cfg.diffusion.base_channels);
        get_if(d, "embed_dim", cfg.diffusion.embed_dim);
        get_if(d, "time_embed", cfg.diffusion.time_embed);
        get_if(d, "norm_groups", cfg.diffusion.norm_groups);
        get_if(d, "lr", cfg.diffusion.lr);
        get_if(d, "codec_lr", cfg.diffusion.codec_lr);
        get_if(d, "p_drop", cfg.diffusion.p_drop);
        get_if(d, "batch_size", cfg.diffusion.batch_size);
        long steps = cfg.diffusion.steps;
        get_if(d, "steps", steps);
        cfg.diffusion.steps = steps;
        get_if(d, "view_pose_ratio", cfg.diffusion.view_pose_ratio);
        long ce = cfg.diffusion.checkpoint_every;
        get_if(d, "checkpoint_every", ce);
        cfg.diffusion.checkpoint_every = ce;
    }
    if (j.contains("sampler")) {
        const Json& s = j.at("sampler");
        check_keys(s, {"steps", "max_scale", "window", "overlap", "t_max"}, "sampler");
        get_if(s, "steps", cfg.sampler.steps);
        get_if(s, "max_scale", cfg.sampler.max_scale);
        get_if(s, "window", cfg.sampler.window);
        get_if(s, "overlap", cfg.sampler.overlap);
        get_if(s, "t_max", cfg.sampler.t_max);
        cfg.sampler.validate();
    }
    if (j.contains("eval")) {
        const Json& e = j.at("eval");
        check_keys(e, {"view_references", "pose_continuation"}, "eval");
        get_if(e, "view_references", cfg.eval.view_references);
        get_if(e, "pose_continuation", cfg.eval.pose_continuation);
    }

    // keep the two image-size knobs coherent
    require(cfg.diffusion.image_size == cfg.data.image_size,
            "config: diffusion.image_size must match data.image_size");
    if (const char* env = std::getenv("GAS_SEED")) cfg.seed = (uint64_t)std::strtoull(env, nullptr, 10);
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg;
        if (const char* env = std::getenv("GAS_SEED")) cfg.seed = (uint64_t)std::strtoull(env, nullptr, 10);
        return cfg;
    }
    return parse_run_config(read_json_file(path));
}

inline Json run_config_to_json(const RunConfig& c) {
    Json j;
    j["seed"] = c.seed;
    j["data"] = {{"image_size", c.data.image_size},
                 {"scan_train_subjects", c.data.scan_train_subjects},
                 {"scan_test_subjects", c.data.scan_test_subjects},
                 {"video_train_subjects", c.data.video_train_subjects},
                 {"video_test_subjects", c.data.video_test_subjects},
                 {"video_raw_frames", c.data.video_raw_frames},
                 {"frame_stride", c.data.frame_stride},
                 {"orbit_views", c.data.orbit_views},
                 {"orbit_elevation_deg", c.data.orbit_elevation_deg},
                 {"orbit_radius", c.data.orbit_radius},
                 {"cache_view_refs", c.data.cache_view_refs},
                 {"cache_pose_refs", c.data.cache_pose_refs}};
    j["radiance_field"] = {{"feature_channels", c.radiance_field.feature_channels},
                           {"fusion_hidden", c.radiance_field.fusion_hidden},
                           {"fused_width", c.radiance_field.fused_width},
                           {"hidden", c.radiance_field.hidden},
                           {"dir_bands", c.radiance_field.dir_bands},
                           {"samples_per_ray", c.radiance_field.samples_per_ray},
                           {"near_far_dilation", c.radiance_field.near_far_dilation},
                           {"lambda_ssim", c.radiance_field.lambda_ssim},
                           {"lambda_mask", c.radiance_field.lambda_mask},
                           {"lambda_lpips", c.radiance_field.lambda_lpips},
                           {"lr", c.radiance_field.lr},
                           {"iterations", c.radiance_field.iterations},
                           {"rays_per_batch", c.radiance_field.rays_per_batch},
                           {"patch_h", c.radiance_field.patch_h},
                           {"patch_w", c.radiance_field.patch_w},
                           {"checkpoint_every", c.radiance_field.checkpoint_every}};
    j["diffusion"] = {{"frames", c.diffusion.frames},
                      {"image_size", c.diffusion.image_size},
                      {"latent_channels", c.diffusion.latent_channels},
                      {"base_channels", c.diffusion.base_channels},
                      {"embed_dim", c.diffusion.embed_dim},
                      {"time_embed", c.diffusion.time_embed},
                      {"norm_groups", c.diffusion.norm_groups},
                      {"lr", c.diffusion.lr},
                      {"codec_lr", c.diffusion.codec_lr},
                      {"p_drop", c.diffusion.p_drop},
                      {"batch_size", c.diffusion.batch_size},
                      {"steps", c.diffusion.steps},
                      {"view_pose_ratio", c.diffusion.view_pose_ratio},
                      {"checkpoint_every", c.diffusion.checkpoint_every}};
    j["sampler"] = {{"steps", c.sampler.steps},
                    {"max_scale", c.sampler.max_scale},
                    {"window", c.sampler.window},
                    {"overlap", c.sampler.overlap},
                    {"t_max", c.sampler.t_max}};
    j["eval"] = {{"view_references", c.eval.view_references}, {"pose_continuation", c.eval.pose_continuation}};
    return j;
}

}  // namespace gas
