// gas: avatar synthesis pipeline driver.
//
// Subcommands cover the whole flow: data generation, stage-1 field training,
// offline cue caching, stage-2 diffusion training (with ablation variants),
// inference in both modes, evaluation, and the finite-difference gate.

#include <CLI11.hpp>

#include <gas/config.hpp>
#include <gas/gradcheck.hpp>
#include <gas/pipeline.hpp>

#include <iostream>

namespace {

using gas::RunConfig;
using F = float;

uint64_t effective_seed(const RunConfig& cfg, int64_t seed_flag) {
    return seed_flag >= 0 ? (uint64_t)seed_flag : cfg.seed;
}

// dataset roots: gen-data writes <out>/scan and <out>/video
std::string resolve_dataset_root(const std::string& dir, const char* kind) {
    namespace fs = std::filesystem;
    if (fs::exists(dir + "/manifest.json")) return dir;
    const std::string nested = dir + "/" + kind;
    if (fs::exists(nested + "/manifest.json")) return nested;
    gas::fail(gas::detail::str("no dataset manifest under ", dir, " (looked for manifest.json and ", kind,
                               "/manifest.json)"));
}

gas::DataGenConfig scan_gen_config(const RunConfig& cfg) {
    gas::DataGenConfig g;
    g.kind = gas::DatasetKind::ScanOrbit;
    g.subjects = cfg.data.scan_train_subjects + cfg.data.scan_test_subjects;
    g.first_seed = cfg.seed * 100000ULL;
    g.image_size = cfg.data.image_size;
    g.orbit_views = cfg.data.orbit_views;
    g.orbit_elevation_deg = cfg.data.orbit_elevation_deg;
    g.orbit_radius = cfg.data.orbit_radius;
    return g;
}

gas::DataGenConfig video_gen_config(const RunConfig& cfg) {
    gas::DataGenConfig g;
    g.kind = gas::DatasetKind::MonocularVideo;
    g.subjects = cfg.data.video_train_subjects + cfg.data.video_test_subjects;
    g.first_seed = cfg.seed * 100000ULL + 50000ULL;
    g.image_size = cfg.data.image_size;
    g.orbit_elevation_deg = cfg.data.orbit_elevation_deg;
    g.orbit_radius = cfg.data.orbit_radius;
    g.video_raw_frames = cfg.data.video_raw_frames;
    g.frame_stride = cfg.data.frame_stride;
    return g;
}

void write_frames(const std::string& out_dir, const std::vector<gas::Image>& frames, const char* mode,
                  uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    gas::Json index;
    index["mode"] = mode;
    index["seed"] = seed;
    gas::Json names = gas::Json::array();
    char name[64];
    for (size_t i = 0; i < frames.size(); ++i) {
        std::snprintf(name, sizeof name, "frame_%04zu.png", i);
        gas::write_png8(out_dir + "/" + name, frames[i]);
        names.push_back(name);
    }
    index["frames"] = names;
    gas::write_json_file(out_dir + "/index.json", index);
}

void apply_drop(gas::DiffusionConfig& cfg, const std::string& drop) {
    if (drop == "none") return;
    if (drop == "appearance")
        cfg.use_appearance = false;
    else if (drop == "geometry")
        cfg.use_geometry = false;
    else if (drop == "switcher")
        cfg.use_switcher = false;
    else
        gas::fail(gas::detail::str("unknown --drop '", drop, "' (expected appearance|geometry|switcher)"));
}

int run_train_diffusion(const RunConfig& cfg, const std::string& data_dir, const std::string& cache_dir,
                        const std::string& out, const std::string& drop, uint64_t seed) {
    gas::DiffusionConfig dc = cfg.diffusion;
    apply_drop(dc, drop);
    const gas::LoadedDataset scan = gas::load_dataset(resolve_dataset_root(data_dir, "scan"),
                                                      cfg.data.scan_test_subjects);
    gas::LoadedDataset video;
    const gas::LoadedDataset* video_ptr = nullptr;
    try {
        video = gas::load_dataset(resolve_dataset_root(data_dir, "video"), cfg.data.video_test_subjects);
        video_ptr = &video;
    } catch (const std::exception&) {
        // scan-only training is allowed; the switcher then sees one mode
    }
    const auto data = gas::load_stage2_data<F>(&scan, video_ptr, cache_dir, dc.frames);
    const std::string variant = drop == "none" ? "full" : "drop-" + drop;
    gas::train_diffusion(data, dc, seed, out, variant, &std::cout);
    std::cout << "saved diffusion checkpoint to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gas: single-image avatar synthesis (radiance-field cues + video diffusion)"};
    app.require_subcommand(1);

    std::string config_path, data_dir, cache_dir, out_path, field_path, diffusion_path;
    std::string ref_path, pose_path, poses_path, camera_path, protocol, drop = "none";
    double beta = 0.0;
    int64_t seed_flag = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration json (defaults apply when omitted)");
        cmd->add_option("--seed", seed_flag, "override the config seed")->capture_default_str();
    };

    auto* gen = app.add_subcommand("gen-data", "generate the procedural scan + video datasets");
    add_common(gen);
    gen->add_option("--out", out_path, "output directory")->required();

    auto* tf = app.add_subcommand("train-field", "stage 1: train the radiance field on the scan dataset");
    add_common(tf);
    tf->add_option("--data", data_dir, "dataset root (gen-data output)")->required();
    tf->add_option("--out", out_path, "checkpoint path to write")->required();

    auto* rc = app.add_subcommand("render-cues", "render and cache appearance/geometry cues offline");
    add_common(rc);
    rc->add_option("--field", field_path, "trained radiance-field checkpoint")->required();
    rc->add_option("--data", data_dir, "dataset root")->required();
    rc->add_option("--cache", cache_dir, "cue cache directory")->required();

    auto* td = app.add_subcommand("train-diffusion", "stage 2: train the video diffusion model from cached cues");
    add_common(td);
    td->add_option("--cache", cache_dir, "cue cache directory")->required();
    td->add_option("--data", data_dir, "dataset root")->required();
    td->add_option("--out", out_path, "checkpoint path to write")->required();
    td->add_option("--drop", drop, "ablation: appearance|geometry|switcher")->capture_default_str();

    auto* iv = app.add_subcommand("infer-view", "synthesize a full camera orbit from one image (triangular CFG)");
    add_common(iv);
    iv->add_option("--field", field_path, "radiance-field checkpoint")->required();
    iv->add_option("--diffusion", diffusion_path, "diffusion checkpoint")->required();
    iv->add_option("--ref", ref_path, "reference image png")->required();
    iv->add_option("--pose", pose_path, "subject pose json")->required();
    iv->add_option("--camera", camera_path, "reference camera json")->required();
    iv->add_option("--out", out_path, "output directory")->required();
    iv->add_option("--beta", beta, "subject shape parameter")->capture_default_str();

    auto* ip = app.add_subcommand("infer-pose", "animate a pose sequence from one image (fixed CFG, sliding windows)");
    add_common(ip);
    ip->add_option("--field", field_path, "radiance-field checkpoint")->required();
    ip->add_option("--diffusion", diffusion_path, "diffusion checkpoint")->required();
    ip->add_option("--ref", ref_path, "reference image png")->required();
    ip->add_option("--poses", poses_path, "pose sequence json (array)")->required();
    ip->add_option("--camera", camera_path, "fixed camera json (default: front orbit camera)");
    ip->add_option("--out", out_path, "output directory")->required();
    ip->add_option("--beta", beta, "subject shape parameter")->capture_default_str();

    auto* ev = app.add_subcommand("eval", "run the view or pose evaluation protocol");
    add_common(ev);
    ev->add_option("--protocol", protocol, "view|pose")->required();
    ev->add_option("--data", data_dir, "dataset root")->required();
    ev->add_option("--field", field_path, "radiance-field checkpoint")->required();
    ev->add_option("--diffusion", diffusion_path, "diffusion checkpoint")->required();
    ev->add_option("--out", out_path, "report json path")->required();

    auto* gc = app.add_subcommand("grad-check", "finite-difference verification of all gradients");
    add_common(gc);

    auto* ab = app.add_subcommand("ablate", "retrain a variant with one conditioning input removed");
    add_common(ab);
    ab->add_option("--cache", cache_dir, "cue cache directory")->required();
    ab->add_option("--data", data_dir, "dataset root")->required();
    ab->add_option("--drop", drop, "appearance|geometry|switcher")->required();
    ab->add_option("--out", out_path, "checkpoint path to write")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig cfg = gas::load_run_config(config_path);
        const uint64_t seed = effective_seed(cfg, seed_flag);

        if (gen->parsed()) {
            RunConfig seeded = cfg;
            seeded.seed = seed;
            gas::build_dataset(scan_gen_config(seeded), out_path + "/scan");
            gas::build_dataset(video_gen_config(seeded), out_path + "/video");
            std::cout << "dataset written to " << out_path << "\n";
            return 0;
        }

        if (tf->parsed()) {
            const auto ds = gas::load_dataset(resolve_dataset_root(data_dir, "scan"), cfg.data.scan_test_subjects);
            gas::train_field<F>(ds, cfg.radiance_field, seed, out_path, &std::cout);
            std::cout << "saved field checkpoint to " << out_path << "\n";
            return 0;
        }

        if (rc->parsed()) {
            gas::RadianceField<F> field;
            field.cfg = cfg.radiance_field;
            gas::load_field_checkpoint(field_path, field);
            const std::string field_hash = gas::hash_of_file(field_path);
            gas::CueCacheOptions opt{cfg.data.cache_view_refs, cfg.data.cache_pose_refs};
            auto cache_one = [&](const char* kind, int test_subjects) {
                try {
                    gas::LoadedDataset ds = gas::load_dataset(resolve_dataset_root(data_dir, kind), test_subjects);
                    // cache covers the training split; evaluation renders fresh
                    ds.manifest.subjects.resize(ds.train_subjects);
                    ds.trajectories.resize(ds.train_subjects);
                    gas::render_cue_cache(field, field_hash, ds, cache_dir, opt, &std::cout);
                } catch (const std::exception& e) {
                    std::cout << "skipping " << kind << " dataset: " << e.what() << "\n";
                }
            };
            cache_one("scan", cfg.data.scan_test_subjects);
            cache_one("video", cfg.data.video_test_subjects);
            std::cout << "cue cache ready under " << cache_dir << "\n";
            return 0;
        }

        if (td->parsed()) return run_train_diffusion(cfg, data_dir, cache_dir, out_path, drop, seed);
        if (ab->parsed()) {
            gas::require(drop != "none", "ablate requires --drop appearance|geometry|switcher");
            return run_train_diffusion(cfg, data_dir, cache_dir, out_path, drop, seed);
        }

        if (iv->parsed() || ip->parsed()) {
            gas::RadianceField<F> field;
            field.cfg = cfg.radiance_field;
            gas::load_field_checkpoint(field_path, field);
            gas::DiffusionModel<F> model;
            model.cfg = cfg.diffusion;
            const long steps = gas::load_diffusion_checkpoint(diffusion_path, model);
            if (steps <= 0)
                std::cerr << "warning: diffusion checkpoint " << diffusion_path << " is marked untrained\n";

            const gas::Image ref = gas::read_png8(ref_path);
            gas::require(ref.h == cfg.data.image_size && ref.w == cfg.data.image_size,
                         gas::detail::str("reference image must be ", cfg.data.image_size, "x",
                                          cfg.data.image_size, ", got ", ref.h, "x", ref.w));
            const gas::BodyTemplate tmpl = gas::make_capsule_person();

            if (iv->parsed()) {
                const gas::Pose pose = gas::pose_from_json(gas::read_json_file(pose_path));
                const gas::Camera ref_cam = gas::camera_from_json(gas::read_json_file(camera_path));
                gas::Trajectory traj;
                traj.mode = gas::Mode::View;
                traj.beta = beta;
                traj.cameras = gas::orbit_cameras(cfg.data.orbit_views, cfg.data.orbit_elevation_deg,
                                                  cfg.data.orbit_radius, cfg.data.image_size);
                traj.poses.assign(traj.cameras.size(), pose);
                const auto tc = gas::build_conditions<F>(field, tmpl, ref, ref_cam, pose, traj);
                const auto frames = gas::infer_view_sequence(model, tc, cfg.sampler, seed);
                write_frames(out_path, frames, "view", seed);
            } else {
                std::vector<gas::Pose> poses;
                for (auto& jp : gas::read_json_file(poses_path)) poses.push_back(gas::pose_from_json(jp));
                gas::require(!poses.empty(), "pose sequence is empty");
                const gas::Camera cam =
                    camera_path.empty()
                        ? gas::camera_at_azimuth(0.0, cfg.data.orbit_elevation_deg, cfg.data.orbit_radius,
                                                 cfg.data.image_size)
                        : gas::camera_from_json(gas::read_json_file(camera_path));
                gas::Trajectory traj;
                traj.mode = gas::Mode::Pose;
                traj.beta = beta;
                traj.poses = poses;
                traj.cameras.assign(poses.size(), cam);
                const auto tc = gas::build_conditions<F>(field, tmpl, ref, cam, poses[0], traj);
                const auto frames = gas::infer_pose_sequence(model, tc, cfg.sampler, seed);
                write_frames(out_path, frames, "pose", seed);
            }
            std::cout << "wrote frames to " << out_path << "\n";
            return 0;
        }

        if (ev->parsed()) {
            gas::require(protocol == "view" || protocol == "pose",
                         gas::detail::str("unknown --protocol '", protocol, "' (expected view|pose)"));
            gas::RadianceField<F> field;
            field.cfg = cfg.radiance_field;
            gas::load_field_checkpoint(field_path, field);
            gas::DiffusionModel<F> model;
            model.cfg = cfg.diffusion;
            gas::load_diffusion_checkpoint(diffusion_path, model);
            gas::EvalOptions opt;
            opt.view_references = cfg.eval.view_references;
            opt.pose_continuation = cfg.eval.pose_continuation;
            opt.seed = seed;
            gas::ProtocolResult<F> res;
            if (protocol == "view") {
                const auto ds = gas::load_dataset(resolve_dataset_root(data_dir, "scan"), cfg.data.scan_test_subjects);
                gas::SamplerConfig scfg = cfg.sampler;
                scfg.cfg_mode = gas::CfgMode::Triangular;
                res = gas::evaluate_view_protocol(field, model, ds, scfg, opt, &std::cout);
            } else {
                const auto ds = gas::load_dataset(resolve_dataset_root(data_dir, "video"), cfg.data.video_test_subjects);
                gas::SamplerConfig scfg = cfg.sampler;
                scfg.cfg_mode = gas::CfgMode::Fixed;
                res = gas::evaluate_pose_protocol(field, model, ds, scfg, opt, &std::cout);
            }
            gas::Json out;
            out["model"] = res.model.to_json();
            out["passthrough_baseline"] = res.passthrough.to_json();
            gas::write_json_file(out_path, out);
            const std::string csv = out_path.size() > 5 && out_path.substr(out_path.size() - 5) == ".json"
                                        ? out_path.substr(0, out_path.size() - 5) + ".csv"
                                        : out_path + ".csv";
            res.model.write_csv(csv);
            std::cout << "report: mean masked psnr " << res.model.mean_masked_psnr << " (baseline "
                      << res.passthrough.mean_masked_psnr << "), flicker " << res.model.mean_flicker
                      << " (baseline " << res.passthrough.mean_flicker << ")\n";
            std::cout << "wrote " << out_path << " and " << csv << "\n";
            return 0;
        }

        if (gc->parsed()) {
            const bool ok = gas::run_grad_check(std::cout);
            return ok ? 0 : 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
