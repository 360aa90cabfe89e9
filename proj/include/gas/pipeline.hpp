#pragma once

#include <iostream>
#include <map>

#include "gas/cues.hpp"
#include "gas/diffusion.hpp"
#include "gas/metrics.hpp"
#include "gas/nerf.hpp"
#include "gas/sampler.hpp"
#include "gas/synth.hpp"

namespace gas {

// ---------------------------------------------------------------------------
// field checkpointing
// ---------------------------------------------------------------------------

template <typename S>
void save_field_checkpoint(const std::string& path, const RadianceField<S>& field, long iterations) {
    save_checkpoint(path, field.params);
    Json meta;
    meta["config"] = {{"feature_channels", field.cfg.feature_channels},
                      {"fusion_hidden", field.cfg.fusion_hidden},
                      {"fused_width", field.cfg.fused_width},
                      {"hidden", field.cfg.hidden},
                      {"dir_bands", field.cfg.dir_bands},
                      {"samples_per_ray", field.cfg.samples_per_ray},
                      {"near_far_dilation", field.cfg.near_far_dilation}};
    meta["iterations"] = iterations;
    meta["trained"] = iterations > 0;
    write_json_file(path + ".json", meta);
}

template <typename S>
long load_field_checkpoint(const std::string& path, RadianceField<S>& field) {
    const Json meta = read_json_file(path + ".json");
    const Json& jc = meta.at("config");
    field.cfg.feature_channels = jc.at("feature_channels").get<int>();
    field.cfg.fusion_hidden = jc.at("fusion_hidden").get<int>();
    field.cfg.fused_width = jc.at("fused_width").get<int>();
    field.cfg.hidden = jc.at("hidden").get<int>();
    field.cfg.dir_bands = jc.at("dir_bands").get<int>();
    field.cfg.samples_per_ray = jc.at("samples_per_ray").get<int>();
    field.cfg.near_far_dilation = jc.at("near_far_dilation").get<double>();
    Rng rng(1);
    field.params = ParamSet<S>{};
    field.init(rng);
    load_checkpoint(path, field.params);
    return meta.at("iterations").get<long>();
}

// ---------------------------------------------------------------------------
// stage 1: generalizable field training over a scan dataset
// ---------------------------------------------------------------------------

struct LoadedDataset {
    DatasetManifest manifest;
    std::string root;
    std::vector<LoadedTrajectory> trajectories;  // first trajectory per subject
    int train_subjects = 0;                      // leading subjects train, rest are test

    const LoadedTrajectory& traj_of(int subject) const { return trajectories[subject]; }
};

inline LoadedDataset load_dataset(const std::string& root, int test_subjects_hint = 0) {
    LoadedDataset ds;
    ds.root = root;
    ds.manifest = load_manifest(root);
    require(!ds.manifest.subjects.empty(), detail::str("dataset is empty: ", root));
    for (auto& s : ds.manifest.subjects) {
        require(!s.trajectories.empty(), detail::str("subject ", s.id, " has no trajectories"));
        ds.trajectories.push_back(load_trajectory(root, s.id, s.trajectories[0].name));
    }
    ds.train_subjects = (int)ds.manifest.subjects.size() - test_subjects_hint;
    require(ds.train_subjects >= 1, "dataset: no training subjects left after the test split");
    return ds;
}

// Stage-1 loop: per iteration sample (subject, reference view, target view)
// uniformly from the training split and take one optimizer step.
template <typename S>
RadianceField<S> train_field(const LoadedDataset& ds, const RadianceFieldConfig& cfg, uint64_t seed,
                             const std::string& ckpt_out, std::ostream* log,
                             const std::function<bool(long, const RadianceField<S>&)>& stop_check = nullptr) {
    const BodyTemplate tmpl = make_capsule_person();
    Rng rng(seed);
    FieldTrainer<S> trainer;
    trainer.init(cfg, rng);

    for (long it = 1; it <= cfg.iterations; ++it) {
        const int si = (int)rng.below((uint32_t)ds.train_subjects);
        const auto& lt = ds.traj_of(si);
        const int n = (int)lt.frames.size();
        const int ref = (int)rng.below((uint32_t)n);
        const int tar = (int)rng.below((uint32_t)n);
        const double beta = ds.manifest.subjects[si].beta;
        const double loss = trainer.step(tmpl, lt.frames[ref], lt.cameras[ref], lt.poses[ref], lt.frames[tar],
                                         lt.masks[tar], lt.cameras[tar], lt.poses[tar], beta, rng);
        require(std::isfinite(loss), "stage-1 training diverged to a non-finite loss");
        if (log && it % 250 == 0) *log << "[train-field] iter " << it << " loss " << loss << "\n" << std::flush;
        if (!ckpt_out.empty() && cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0)
            save_field_checkpoint(ckpt_out, trainer.field, it);
        if (stop_check && it % 250 == 0 && stop_check(it, trainer.field)) {
            if (log) *log << "[train-field] stop condition met at iter " << it << "\n";
            if (!ckpt_out.empty()) save_field_checkpoint(ckpt_out, trainer.field, it);
            return trainer.field;
        }
    }
    if (!ckpt_out.empty()) save_field_checkpoint(ckpt_out, trainer.field, cfg.iterations);
    return trainer.field;
}

// ---------------------------------------------------------------------------
// offline cue cache over a dataset
// ---------------------------------------------------------------------------

struct CueCacheOptions {
    int view_refs = 4;  // orthogonal reference views for orbit subjects
    int pose_refs = 2;  // reference frames for video subjects
};

inline Trajectory trajectory_of(const LoadedTrajectory& lt, Mode mode, double beta) {
    Trajectory traj;
    traj.mode = mode;
    traj.cameras = lt.cameras;
    traj.poses = lt.poses;
    traj.beta = beta;
    traj.validate();
    return traj;
}

inline std::vector<int> reference_indices(int frames, int count) {
    std::vector<int> refs;
    for (int k = 0; k < count; ++k) refs.push_back((int)((long)k * frames / count));
    return refs;
}

// cache/index.json rows describing every stored cue set
struct CueIndexEntry {
    std::string subject;
    std::string traj_name;
    Mode mode = Mode::View;
    int ref_index = 0;
    std::string hash;
};

template <typename S>
std::vector<CueIndexEntry> render_cue_cache(const RadianceField<S>& field, const std::string& field_hash,
                                            const LoadedDataset& ds, const std::string& cache_root,
                                            const CueCacheOptions& opt, std::ostream* log) {
    const BodyTemplate tmpl = make_capsule_person();
    std::vector<CueIndexEntry> index;
    for (size_t si = 0; si < ds.manifest.subjects.size(); ++si) {
        const auto& subj = ds.manifest.subjects[si];
        const auto& lt = ds.traj_of((int)si);
        const auto& td = subj.trajectories[0];
        const Mode mode = mode_from_name(td.mode);
        const Trajectory traj = trajectory_of(lt, mode, subj.beta);
        const auto refs = reference_indices(traj.frames(), mode == Mode::View ? opt.view_refs : opt.pose_refs);
        for (int ref : refs) {
            const std::string ref_tag = detail::str("frame:", ref);
            const std::string key = cue_cache_key(subj.id, traj, ref_tag, field_hash);
            if (!cache_has(cache_root, subj.id, key)) {
                const CueSet cs = render_cues(field, tmpl, lt.frames[ref], lt.cameras[ref], lt.poses[ref], traj,
                                              subj.id, key);
                Json extra;
                extra["reference"] = ref_tag;
                extra["field_hash"] = field_hash;
                cache_store(cache_root, cs, traj, extra);
            }
            index.push_back({subj.id, td.name, mode, ref, key});
            if (log) *log << "[render-cues] " << subj.id << " ref " << ref << " -> " << key << "\n" << std::flush;
        }
    }
    // append to any existing index (scan + video datasets share one cache)
    Json jindex = Json::array();
    const std::string index_path = cache_root + "/index.json";
    if (std::filesystem::exists(index_path)) jindex = read_json_file(index_path);
    for (auto& e : index) {
        Json row;
        row["subject"] = e.subject;
        row["trajectory"] = e.traj_name;
        row["mode"] = mode_name(e.mode);
        row["reference"] = e.ref_index;
        row["hash"] = e.hash;
        bool dup = false;
        for (auto& old : jindex) dup |= old.at("hash").get<std::string>() == e.hash &&
                                        old.at("subject").get<std::string>() == e.subject;
        if (!dup) jindex.push_back(row);
    }
    write_json_file(index_path, jindex);
    return index;
}

// ---------------------------------------------------------------------------
// stage 2: diffusion training from the cue cache
// ---------------------------------------------------------------------------

template <typename S>
struct Stage2Entry {
    std::string subject;
    Mode mode = Mode::View;
    int ref_index = 0;
    CueSet cues;
    int dataset_subject = -1;  // index into the owning dataset
};

template <typename S>
struct Stage2Data {
    std::vector<Stage2Entry<S>> view_entries, pose_entries;
    const LoadedDataset* scan = nullptr;
    const LoadedDataset* video = nullptr;
    int clip_frames = 8;

    bool has_view() const { return !view_entries.empty(); }
    bool has_pose() const { return !pose_entries.empty(); }

    DiffusionTrainSample<S> make_view_sample(const Stage2Entry<S>& e, int start, bool clockwise) const {
        const auto& lt = scan->traj_of(e.dataset_subject);
        const int n = (int)lt.frames.size();
        const auto idx = view_clip_indices(n, clip_frames, start, clockwise);
        DiffusionTrainSample<S> s;
        s.mode = Mode::View;
        s.ref_image = lt.frames[e.ref_index];
        for (int i : idx) {
            s.gt_frames.push_back(lt.frames[i]);
            s.appearance.push_back(e.cues.appearance[i]);
            s.geometry.push_back(e.cues.geometry[i]);
            s.phases.push_back((S)i / (S)n);  // orbit position, wrap-aware
        }
        return s;
    }

    DiffusionTrainSample<S> make_pose_sample(const Stage2Entry<S>& e, int start) const {
        const auto& lt = video->traj_of(e.dataset_subject);
        const auto idx = pose_clip_indices((int)lt.frames.size(), clip_frames, start);
        DiffusionTrainSample<S> s;
        s.mode = Mode::Pose;
        s.ref_image = lt.frames[e.ref_index];
        for (size_t j = 0; j < idx.size(); ++j) {
            s.gt_frames.push_back(lt.frames[idx[j]]);
            s.appearance.push_back(e.cues.appearance[idx[j]]);
            s.geometry.push_back(e.cues.geometry[idx[j]]);
            s.phases.push_back((S)j / (S)clip_frames);  // window-relative position
        }
        return s;
    }

    DiffusionTrainSample<S> sample(Rng& rng, double view_pose_ratio) const {
        const bool pick_view =
            has_view() && (!has_pose() || rng.uniform() < view_pose_ratio / (1.0 + view_pose_ratio));
        if (pick_view) {
            const auto& e = view_entries[rng.below((uint32_t)view_entries.size())];
            const int n = (int)scan->traj_of(e.dataset_subject).frames.size();
            return make_view_sample(e, (int)rng.below((uint32_t)n), rng.below(2) == 0);
        }
        require(has_pose(), "stage-2 sampling: no data");
        const auto& e = pose_entries[rng.below((uint32_t)pose_entries.size())];
        const int n = (int)video->traj_of(e.dataset_subject).frames.size();
        return make_pose_sample(e, (int)rng.below((uint32_t)(n - clip_frames + 1)));
    }
};

// Loads cached cue sets for the training split of both datasets. Entries are
// matched by the cache index; a missing or empty cache is an error naming it.
template <typename S>
Stage2Data<S> load_stage2_data(const LoadedDataset* scan, const LoadedDataset* video,
                               const std::string& cache_root, int clip_frames) {
    Stage2Data<S> out;
    out.scan = scan;
    out.video = video;
    out.clip_frames = clip_frames;
    const std::string index_path = cache_root + "/index.json";
    require(std::filesystem::exists(index_path), detail::str("cue cache is empty or missing: ", cache_root));
    const Json jindex = read_json_file(index_path);
    require(!jindex.empty(), detail::str("cue cache index has no entries: ", cache_root));

    auto subject_pos = [](const LoadedDataset& ds, const std::string& id) {
        for (size_t i = 0; i < ds.manifest.subjects.size(); ++i)
            if (ds.manifest.subjects[i].id == id) return (int)i;
        return -1;
    };
    for (auto& row : jindex) {
        Stage2Entry<S> e;
        e.subject = row.at("subject").get<std::string>();
        e.mode = mode_from_name(row.at("mode").get<std::string>());
        e.ref_index = row.at("reference").get<int>();
        const std::string hash = row.at("hash").get<std::string>();
        if (e.mode == Mode::View) {
            if (!scan) continue;
            e.dataset_subject = subject_pos(*scan, e.subject);
            if (e.dataset_subject < 0 || e.dataset_subject >= scan->train_subjects) continue;
            e.cues = cache_load(cache_root, e.subject, hash);
            out.view_entries.push_back(std::move(e));
        } else {
            if (!video) continue;
            e.dataset_subject = subject_pos(*video, e.subject);
            if (e.dataset_subject < 0 || e.dataset_subject >= video->train_subjects) continue;
            e.cues = cache_load(cache_root, e.subject, hash);
            out.pose_entries.push_back(std::move(e));
        }
    }
    require(out.has_view() || out.has_pose(), detail::str("cue cache holds no training entries: ", cache_root));
    return out;
}

template <typename S>
DiffusionModel<S> train_diffusion(const Stage2Data<S>& data, const DiffusionConfig& cfg, uint64_t seed,
                                  const std::string& ckpt_out, const std::string& variant, std::ostream* log,
                                  std::vector<double>* loss_log = nullptr) {
    Rng rng(seed);
    DiffusionTrainer<S> trainer;
    trainer.init(cfg, rng);
    if (log)
        *log << "[train-diffusion] params " << trainer.model.total_params() << " variant " << variant << "\n";

    for (long step = 1; step <= cfg.steps; ++step) {
        std::vector<DiffusionTrainSample<S>> batch;
        for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(data.sample(rng, cfg.view_pose_ratio));
        const double loss = trainer.step(batch, rng);
        require(std::isfinite(loss), "stage-2 training diverged to a non-finite loss");
        if (loss_log) loss_log->push_back(loss);
        if (log && step % 100 == 0) *log << "[train-diffusion] step " << step << " loss " << loss << "\n" << std::flush;
        if (!ckpt_out.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
            save_diffusion_checkpoint(ckpt_out, trainer.model, step, variant);
    }
    if (!ckpt_out.empty()) save_diffusion_checkpoint(ckpt_out, trainer.model, cfg.steps, variant);
    return trainer.model;
}

// ---------------------------------------------------------------------------
// inference
// ---------------------------------------------------------------------------

// Cues + conditions for a trajectory driven by one reference image.
template <typename S>
TrajectoryConditions<S> build_conditions(const RadianceField<S>& field, const BodyTemplate& tmpl,
                                         const Image& ref_image, const Camera& ref_cam, const Pose& ref_pose,
                                         const Trajectory& traj) {
    const CueSet cs = render_cues(field, tmpl, ref_image, ref_cam, ref_pose, traj, "inference", "none");
    TrajectoryConditions<S> tc;
    tc.ref_image = ref_image;
    tc.appearance = cs.appearance;
    tc.geometry = cs.geometry;
    tc.mode = traj.mode;
    const int n = traj.frames();
    for (int i = 0; i < n; ++i) tc.phases.push_back((S)i / (S)n);
    return tc;
}

template <typename S>
TrajectoryConditions<S> conditions_from_cues(const Image& ref_image, const CueSet& cs, Mode mode,
                                             const std::vector<S>& phases) {
    TrajectoryConditions<S> tc;
    tc.ref_image = ref_image;
    tc.appearance = cs.appearance;
    tc.geometry = cs.geometry;
    tc.mode = mode;
    tc.phases = phases;
    return tc;
}

// POSE windows use window-relative phases; patch them per window start.
// (VIEW orbits keep absolute orbit phases.)
template <typename S>
std::vector<S> orbit_phases(int frames) {
    std::vector<S> p(frames);
    for (int i = 0; i < frames; ++i) p[i] = (S)i / (S)frames;
    return p;
}

template <typename S>
std::vector<Image> infer_view_sequence(const DiffusionModel<S>& model, const TrajectoryConditions<S>& tc,
                                       SamplerConfig scfg, uint64_t seed) {
    scfg.cfg_mode = CfgMode::Triangular;
    const Tensor<S> z = sample_trajectory(model, tc, scfg, seed);
    return decode_video(model, z);
}

template <typename S>
std::vector<Image> infer_pose_sequence(const DiffusionModel<S>& model, const TrajectoryConditions<S>& tc,
                                       SamplerConfig scfg, uint64_t seed) {
    scfg.cfg_mode = CfgMode::Fixed;
    const Tensor<S> z = sliding_window_sample(model, tc, scfg, seed);
    return decode_video(model, z);
}

// ---------------------------------------------------------------------------
// evaluation protocols
// ---------------------------------------------------------------------------

struct EvalOptions {
    int view_references = 4;    // orthogonal input views
    int pose_continuation = 24; // frames generated after the reference
    uint64_t seed = 1234;
};

template <typename S>
struct ProtocolResult {
    EvalReport model;        // the diffusion output
    EvalReport passthrough;  // appearance-cue passthrough baseline
};

// VIEW: for each test subject and each orthogonal reference, synthesize the
// full orbit and score every frame against ground truth.
template <typename S>
ProtocolResult<S> evaluate_view_protocol(const RadianceField<S>& field, const DiffusionModel<S>& model,
                                         const LoadedDataset& scan, SamplerConfig scfg, const EvalOptions& opt,
                                         std::ostream* log) {
    const BodyTemplate tmpl = make_capsule_person();
    ProtocolResult<S> out;
    out.model.protocol = detail::str("view: ", opt.view_references, " orthogonal references, full orbit");
    out.passthrough.protocol = "view: appearance-cue passthrough baseline";
    require(scan.manifest.kind == DatasetKind::ScanOrbit, "view protocol needs a SCAN_ORBIT dataset");

    for (size_t si = scan.train_subjects; si < scan.manifest.subjects.size(); ++si) {
        const auto& subj = scan.manifest.subjects[si];
        const auto& lt = scan.traj_of((int)si);
        const int n = (int)lt.frames.size();
        const auto refs = reference_indices(n, opt.view_references);
        for (int ref : refs) {
            const Trajectory traj = trajectory_of(lt, Mode::View, subj.beta);
            const auto tc = build_conditions<S>(field, tmpl, lt.frames[ref], lt.cameras[ref], lt.poses[ref], traj);
            const auto frames = infer_view_sequence(model, tc, scfg, opt.seed + si * 131 + ref);
            std::vector<Image> gen_masks;
            for (int i = 0; i < n; ++i) {
                FrameScore fs;
                fs.subject = subj.id;
                fs.reference = ref;
                fs.frame = i;
                fs.psnr = psnr(frames[i], lt.frames[i]);
                fs.ssim = ssim(frames[i], lt.frames[i]);
                fs.masked_psnr = masked_psnr(frames[i], lt.frames[i], lt.masks[i]);
                fs.masked_ssim = masked_ssim(frames[i], lt.frames[i], lt.masks[i]);
                out.model.per_frame.push_back(fs);

                FrameScore bs = fs;
                bs.psnr = psnr(tc.appearance[i], lt.frames[i]);
                bs.ssim = ssim(tc.appearance[i], lt.frames[i]);
                bs.masked_psnr = masked_psnr(tc.appearance[i], lt.frames[i], lt.masks[i]);
                bs.masked_ssim = masked_ssim(tc.appearance[i], lt.frames[i], lt.masks[i]);
                out.passthrough.per_frame.push_back(bs);
            }
            out.model.per_sequence_flicker.push_back(flicker(frames, lt.masks));
            out.passthrough.per_sequence_flicker.push_back(flicker(tc.appearance, lt.masks));
            if (log) *log << "[eval-view] " << subj.id << " ref " << ref << " done\n" << std::flush;
        }
    }
    out.model.finalize();
    out.passthrough.finalize();
    return out;
}

// POSE: a (seeded) random reference frame, then a strided continuation
// generated through sliding windows and compared to procedural ground truth.
template <typename S>
ProtocolResult<S> evaluate_pose_protocol(const RadianceField<S>& field, const DiffusionModel<S>& model,
                                         const LoadedDataset& video, SamplerConfig scfg, const EvalOptions& opt,
                                         std::ostream* log) {
    const BodyTemplate tmpl = make_capsule_person();
    ProtocolResult<S> out;
    out.model.protocol = detail::str("pose: random reference frame + ", opt.pose_continuation,
                                     "-frame continuation via sliding windows");
    out.passthrough.protocol = "pose: appearance-cue passthrough baseline";
    require(video.manifest.kind != DatasetKind::ScanOrbit, "pose protocol needs a video dataset");

    Rng rng(opt.seed * 77 + 5);
    for (size_t si = video.train_subjects; si < video.manifest.subjects.size(); ++si) {
        const auto& subj = video.manifest.subjects[si];
        const auto& lt = video.traj_of((int)si);
        const int stride = video.manifest.frame_stride;

        // regenerate the subject's motion (same seed and period as the data
        // generator) long enough to continue past the reference frame
        Rng motion_rng(subj.seed * 131 + 7);
        const MotionKind kind = (MotionKind)motion_rng.below(3);
        const int period = stride * (int)lt.frames.size();
        const int ref_frame = (int)rng.below((uint32_t)lt.frames.size());
        const int raw_needed = std::max(period, (ref_frame + opt.pose_continuation + 1) * stride + 1);
        const auto raw = pose_sequence(kind, raw_needed, tmpl.num_joints(), period);

        Trajectory traj;
        traj.mode = Mode::Pose;
        traj.beta = subj.beta;
        const ProceduralSubject ps = make_subject(subj.seed);
        std::vector<Image> gt_frames, gt_masks;
        for (int k = 1; k <= opt.pose_continuation; ++k) {
            const Pose& pose = raw[(size_t)(ref_frame + k) * stride];
            traj.cameras.push_back(lt.cameras[0]);
            traj.poses.push_back(pose);
            const auto gt = render_ground_truth_frame(ps, tmpl, pose, lt.cameras[0]);
            gt_frames.push_back(gt.rgb);
            gt_masks.push_back(gt.mask);
        }
        traj.validate();
        auto tc = build_conditions<S>(field, tmpl, lt.frames[ref_frame], lt.cameras[ref_frame],
                                      lt.poses[ref_frame], traj);
        const auto frames = infer_pose_sequence(model, tc, scfg, opt.seed + si * 313);
        for (int i = 0; i < opt.pose_continuation; ++i) {
            FrameScore fs;
            fs.subject = subj.id;
            fs.reference = ref_frame;
            fs.frame = i;
            fs.psnr = psnr(frames[i], gt_frames[i]);
            fs.ssim = ssim(frames[i], gt_frames[i]);
            fs.masked_psnr = masked_psnr(frames[i], gt_frames[i], gt_masks[i]);
            fs.masked_ssim = masked_ssim(frames[i], gt_frames[i], gt_masks[i]);
            out.model.per_frame.push_back(fs);
            FrameScore bs = fs;
            bs.psnr = psnr(tc.appearance[i], gt_frames[i]);
            bs.ssim = ssim(tc.appearance[i], gt_frames[i]);
            bs.masked_psnr = masked_psnr(tc.appearance[i], gt_frames[i], gt_masks[i]);
            bs.masked_ssim = masked_ssim(tc.appearance[i], gt_frames[i], gt_masks[i]);
            out.passthrough.per_frame.push_back(bs);
        }
        out.model.per_sequence_flicker.push_back(flicker(frames, gt_masks));
        out.passthrough.per_sequence_flicker.push_back(flicker(tc.appearance, gt_masks));
        if (log) *log << "[eval-pose] " << subj.id << " done\n" << std::flush;
    }
    out.model.finalize();
    out.passthrough.finalize();
    return out;
}

}  // namespace gas
