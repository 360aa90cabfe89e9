#pragma once

#include <filesystem>

#include "gas/body.hpp"
#include "gas/camera.hpp"
#include "gas/image.hpp"
#include "gas/raster.hpp"
#include "gas/rng.hpp"
#include "gas/serio.hpp"

namespace gas {

// ---------------------------------------------------------------------------
// Procedural subjects. Per-part striped textures keep the front and the back
// distinguishable, so view-consistency metrics measure something real.
// ---------------------------------------------------------------------------

constexpr int kBodyParts = 10;

struct ProceduralSubject {
    uint64_t seed = 0;
    std::array<Vec3, kBodyParts> base_color{};
    std::array<double, kBodyParts> stripe_freq{};
    std::array<double, kBodyParts> stripe_phase{};
    double beta = 0;
};

inline ProceduralSubject make_subject(uint64_t seed) {
    ProceduralSubject s;
    s.seed = seed;
    Rng rng(seed * 2654435761ULL + 17);
    for (int p = 0; p < kBodyParts; ++p) {
        s.base_color[p] = {rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95)};
        s.stripe_freq[p] = rng.uniform(6.0, 14.0);
        s.stripe_phase[p] = rng.uniform(0.0, 2.0 * M_PI);
    }
    s.beta = rng.uniform(-1.0, 1.0);
    return s;
}

// Albedo at a canonical-space position: striped part color, darker on the back
// half (canonical z < 0) so front and back views never look alike.
inline Vec3 subject_albedo(const ProceduralSubject& s, int part, const Vec3& canonical) {
    const double t = canonical.x + 1.7 * canonical.y;
    const double band = std::sin(s.stripe_freq[part] * t + s.stripe_phase[part]) > 0 ? 1.0 : 0.55;
    const double front_back = canonical.z > 0 ? 1.0 : 0.62;
    return s.base_color[part] * (band * front_back);
}

struct GroundTruthFrame {
    Image rgb;   // shaded render, black background
    Image mask;  // coverage
};

// Flat shading (face normals) with a fixed directional light.
inline GroundTruthFrame render_ground_truth_frame(const ProceduralSubject& subj, const BodyTemplate& tmpl,
                                                  const Pose& pose, const Camera& cam) {
    const SkinnedBody sb = skin_body(tmpl, pose, subj.beta);
    const FrameBuffer fb = rasterize_mesh(sb.posed_verts, tmpl.faces, cam);
    const Vec3 light = Vec3{0.35, 0.75, 0.55}.normalized();

    GroundTruthFrame out;
    out.rgb = Image(fb.h, fb.w, 3);
    out.mask = Image(fb.h, fb.w, 1);
    for (int y = 0; y < fb.h; ++y)
        for (int x = 0; x < fb.w; ++x) {
            const size_t at = (size_t)y * fb.w + x;
            if (fb.face[at] < 0) continue;
            out.mask.at(y, x, 0) = 1.f;
            const auto& f = tmpl.faces[fb.face[at]];
            const double b0 = fb.b0[at], b1 = fb.b1[at], b2 = 1.0 - b0 - b1;
            const Vec3 canonical = tmpl.verts[f[0]] * b0 + tmpl.verts[f[1]] * b1 + tmpl.verts[f[2]] * b2;
            const Vec3 n_face = (sb.posed_verts[f[1]] - sb.posed_verts[f[0]])
                                    .cross(sb.posed_verts[f[2]] - sb.posed_verts[f[0]])
                                    .normalized();
            const double lit = 0.35 + 0.65 * std::max(0.0, n_face.dot(light));
            const Vec3 rgb = subject_albedo(subj, tmpl.part_of_vertex[f[0]], canonical) * lit;
            out.rgb.at(y, x, 0) = (float)std::clamp(rgb.x, 0.0, 1.0);
            out.rgb.at(y, x, 1) = (float)std::clamp(rgb.y, 0.0, 1.0);
            out.rgb.at(y, x, 2) = (float)std::clamp(rgb.z, 0.0, 1.0);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Camera rigs and pose sequences
// ---------------------------------------------------------------------------

inline Vec3 body_center() { return {0, 0.9, 0}; }

// Camera on the orbit sphere looking at the body center; azimuth 0 faces the
// subject's front (+z), azimuth grows clockwise when seen from above.
inline Camera camera_at_azimuth(double azimuth_rad, double elevation_deg, double radius, int image_size) {
    const double elev = elevation_deg * M_PI / 180.0;
    const Vec3 center = body_center();
    const Vec3 eye = center + Vec3{std::sin(azimuth_rad) * std::cos(elev) * radius, std::sin(elev) * radius,
                                   std::cos(azimuth_rad) * std::cos(elev) * radius};
    const double f = 1.10 * image_size;
    return Camera::look_at(eye, center, {0, 1, 0}, f, f, image_size, image_size);
}

// Evenly spaced azimuths at fixed elevation and radius; frame 0 faces front.
inline std::vector<Camera> orbit_cameras(int count, double elevation_deg, double radius, int image_size) {
    require(count >= 1, "orbit_cameras: count must be >= 1");
    std::vector<Camera> cams;
    cams.reserve(count);
    for (int k = 0; k < count; ++k)
        cams.push_back(camera_at_azimuth(2.0 * M_PI * k / count, elevation_deg, radius, image_size));
    return cams;
}

enum class MotionKind { ArmWave, WalkCycle, Squat };

inline MotionKind motion_kind_from_string(const std::string& s) {
    if (s == "arm_wave") return MotionKind::ArmWave;
    if (s == "walk_cycle") return MotionKind::WalkCycle;
    if (s == "squat") return MotionKind::Squat;
    fail(detail::str("unknown motion kind '", s, "'"));
}

// Smooth sinusoidal joint curves with period T; amplitudes are capped so the
// per-frame delta stays below 0.2 rad.
inline std::vector<Pose> pose_sequence(MotionKind kind, int frames, int joints = kBodyParts, int period = 0) {
    require(frames >= 1, "pose_sequence: frames must be >= 1");
    if (period <= 0) period = frames;
    require(period <= frames || frames == 1, "pose_sequence: period must be <= frames");
    const double cap = period > 1 ? 0.19 * period / (2.0 * M_PI) : 0.05;
    auto amp = [&](double desired) { return std::min(desired, cap); };

    std::vector<Pose> out;
    out.reserve(frames);
    for (int i = 0; i < frames; ++i) {
        const double ph = 2.0 * M_PI * i / period;
        Pose p = Pose::rest(joints);
        switch (kind) {
            case MotionKind::ArmWave: {
                const double a = amp(0.9);
                p.axis_angle[2] = {0, 0, a * std::sin(ph)};        // left shoulder
                p.axis_angle[3] = {0, 0, -a * std::sin(ph)};       // right shoulder
                p.axis_angle[4] = {0, 0, 0.5 * a * std::cos(ph)};  // elbows
                p.axis_angle[5] = {0, 0, -0.5 * a * std::cos(ph)};
                break;
            }
            case MotionKind::WalkCycle: {
                const double a = amp(0.65);
                p.axis_angle[6] = {a * std::sin(ph), 0, 0};   // hips swing in opposition
                p.axis_angle[7] = {-a * std::sin(ph), 0, 0};
                p.axis_angle[8] = {0.8 * a * (1 + std::sin(ph + M_PI / 2)) * 0.5, 0, 0};  // knees flex
                p.axis_angle[9] = {0.8 * a * (1 - std::sin(ph + M_PI / 2)) * 0.5, 0, 0};
                p.axis_angle[2] = {-0.6 * a * std::sin(ph), 0, 0};  // arms counter-swing
                p.axis_angle[3] = {0.6 * a * std::sin(ph), 0, 0};
                break;
            }
            case MotionKind::Squat: {
                const double a = amp(0.55);
                const double bend = a * (1 - std::cos(ph)) * 0.5;
                p.axis_angle[6] = {-bend, 0, 0};
                p.axis_angle[7] = {-bend, 0, 0};
                p.axis_angle[8] = {2 * bend, 0, 0};
                p.axis_angle[9] = {2 * bend, 0, 0};
                p.root_translation = {0, -0.25 * bend, 0};
                break;
            }
        }
        p.validate();
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// On-disk dataset
// ---------------------------------------------------------------------------

enum class DatasetKind { ScanOrbit, MultiviewVideo, MonocularVideo };

inline std::string dataset_kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::ScanOrbit: return "SCAN_ORBIT";
        case DatasetKind::MultiviewVideo: return "MULTIVIEW_VIDEO";
        case DatasetKind::MonocularVideo: return "MONOCULAR_VIDEO";
    }
    return "?";
}

inline DatasetKind dataset_kind_from_name(const std::string& s) {
    if (s == "SCAN_ORBIT") return DatasetKind::ScanOrbit;
    if (s == "MULTIVIEW_VIDEO") return DatasetKind::MultiviewVideo;
    if (s == "MONOCULAR_VIDEO") return DatasetKind::MonocularVideo;
    fail(detail::str("unknown dataset kind '", s, "'"));
}

struct TrajectoryDesc {
    std::string name;
    std::string mode;  // "view" | "pose"
    int frames = 0;
    std::vector<int> source_indices;  // raw frame indices behind a strided video
};

struct SubjectDesc {
    std::string id;
    uint64_t seed = 0;
    double beta = 0;
    std::vector<TrajectoryDesc> trajectories;
};

struct DatasetManifest {
    DatasetKind kind = DatasetKind::ScanOrbit;
    int image_size = 32;
    int frame_stride = 1;
    std::vector<SubjectDesc> subjects;

    Json to_json() const {
        Json j;
        j["kind"] = dataset_kind_name(kind);
        j["image_size"] = image_size;
        j["frame_stride"] = frame_stride;
        Json subs = Json::array();
        for (auto& s : subjects) {
            Json js;
            js["id"] = s.id;
            js["seed"] = s.seed;
            js["beta"] = s.beta;
            Json trajs = Json::array();
            for (auto& t : s.trajectories) {
                Json jt;
                jt["name"] = t.name;
                jt["mode"] = t.mode;
                jt["frames"] = t.frames;
                jt["source_indices"] = t.source_indices;
                trajs.push_back(jt);
            }
            js["trajectories"] = trajs;
            subs.push_back(js);
        }
        j["subjects"] = subs;
        return j;
    }

    static DatasetManifest from_json(const Json& j) {
        DatasetManifest m;
        m.kind = dataset_kind_from_name(j.at("kind").get<std::string>());
        m.image_size = j.at("image_size").get<int>();
        m.frame_stride = j.at("frame_stride").get<int>();
        for (auto& js : j.at("subjects")) {
            SubjectDesc s;
            s.id = js.at("id").get<std::string>();
            s.seed = js.at("seed").get<uint64_t>();
            s.beta = js.at("beta").get<double>();
            for (auto& jt : js.at("trajectories")) {
                TrajectoryDesc t;
                t.name = jt.at("name").get<std::string>();
                t.mode = jt.at("mode").get<std::string>();
                t.frames = jt.at("frames").get<int>();
                t.source_indices = jt.at("source_indices").get<std::vector<int>>();
                s.trajectories.push_back(t);
            }
            m.subjects.push_back(s);
        }
        return m;
    }
};

struct DataGenConfig {
    DatasetKind kind = DatasetKind::ScanOrbit;
    int subjects = 48;
    uint64_t first_seed = 0;   // subject i uses first_seed + i
    int image_size = 32;
    int orbit_views = 20;
    double orbit_elevation_deg = 10.0;
    double orbit_radius = 2.4;
    int video_raw_frames = 80;
    int frame_stride = 4;
    int multiview_cameras = 4;
};

// A mild per-subject rest pose so orbit scans are not all in a T-pose.
inline Pose subject_scan_pose(uint64_t seed, int joints) {
    Rng rng(seed * 97 + 3);
    Pose p = Pose::rest(joints);
    for (auto& aa : p.axis_angle) {
        Vec3 axis{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if (axis.norm() < 1e-6) axis = {0, 0, 1};
        aa = axis.normalized() * rng.uniform(-0.35, 0.35);
    }
    return p;
}

namespace synth_detail {

inline void write_trajectory(const std::string& dir, const ProceduralSubject& subj, const BodyTemplate& tmpl,
                             const std::vector<Camera>& cams, const std::vector<Pose>& poses) {
    require(cams.size() == poses.size(), "trajectory: camera/pose count mismatch");
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    Json jcams = Json::array(), jposes = Json::array();
    char name[64];
    for (size_t i = 0; i < cams.size(); ++i) {
        const GroundTruthFrame f = render_ground_truth_frame(subj, tmpl, poses[i], cams[i]);
        std::snprintf(name, sizeof name, "frame_%04zu.png", i);
        write_png8(dir + "/" + name, f.rgb);
        std::snprintf(name, sizeof name, "mask_%04zu.png", i);
        write_png8(dir + "/" + name, f.mask);
        jcams.push_back(camera_to_json(cams[i]));
        jposes.push_back(pose_to_json(poses[i]));
    }
    write_json_file(dir + "/cams.json", jcams);
    write_json_file(dir + "/poses.json", jposes);
}

}  // namespace synth_detail

// Generates the dataset tree under root: manifest.json plus
// <subject>/<traj>/{frame,mask}_%04d.png, cams.json, poses.json
inline DatasetManifest build_dataset(const DataGenConfig& cfg, const std::string& root) {
    const BodyTemplate tmpl = make_capsule_person();
    DatasetManifest manifest;
    manifest.kind = cfg.kind;
    manifest.image_size = cfg.image_size;
    manifest.frame_stride = cfg.kind == DatasetKind::MonocularVideo ? cfg.frame_stride : 1;

    const char* prefix = cfg.kind == DatasetKind::ScanOrbit        ? "scan"
                         : cfg.kind == DatasetKind::MultiviewVideo ? "mv"
                                                                   : "vid";
    for (int si = 0; si < cfg.subjects; ++si) {
        const uint64_t seed = cfg.first_seed + si;
        const ProceduralSubject subj = make_subject(seed);
        SubjectDesc desc;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "%s_%04d", prefix, si);
        desc.id = idbuf;
        desc.seed = seed;
        desc.beta = subj.beta;

        if (cfg.kind == DatasetKind::ScanOrbit) {
            const auto cams = orbit_cameras(cfg.orbit_views, cfg.orbit_elevation_deg, cfg.orbit_radius, cfg.image_size);
            const Pose pose = subject_scan_pose(seed, tmpl.num_joints());
            std::vector<Pose> poses(cams.size(), pose);
            synth_detail::write_trajectory(root + "/" + desc.id + "/orbit", subj, tmpl, cams, poses);
            TrajectoryDesc t{"orbit", "view", (int)cams.size(), {}};
            for (int i = 0; i < (int)cams.size(); ++i) t.source_indices.push_back(i);
            desc.trajectories.push_back(t);
        } else {
            // pose-animation kinds: raw sinusoidal motion sampled every
            // frame_stride frames (one image every N consecutive frames)
            Rng rng(seed * 131 + 7);
            const MotionKind kind = (MotionKind)(rng.below(3));
            const auto raw_poses = pose_sequence(kind, cfg.video_raw_frames, tmpl.num_joints());
            std::vector<Pose> strided;
            std::vector<int> source_indices;
            for (int i = 0; i < cfg.video_raw_frames; i += cfg.frame_stride) {
                strided.push_back(raw_poses[i]);
                source_indices.push_back(i);
            }
            const int n_cams = cfg.kind == DatasetKind::MultiviewVideo ? cfg.multiview_cameras : 1;
            for (int c = 0; c < n_cams; ++c) {
                const double az = cfg.kind == DatasetKind::MultiviewVideo
                                      ? 2.0 * M_PI * c / n_cams
                                      : rng.uniform(0.0, 2.0 * M_PI);
                const Camera cam = camera_at_azimuth(az, cfg.orbit_elevation_deg, cfg.orbit_radius, cfg.image_size);
                std::vector<Camera> cams(strided.size(), cam);
                char tname[32];
                std::snprintf(tname, sizeof tname, "motion_%02d", c);
                synth_detail::write_trajectory(root + "/" + desc.id + "/" + tname, subj, tmpl, cams, strided);
                TrajectoryDesc t{tname, "pose", (int)strided.size(), source_indices};
                desc.trajectories.push_back(t);
            }
        }
        manifest.subjects.push_back(desc);
    }
    write_json_file(root + "/manifest.json", manifest.to_json());
    return manifest;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

struct LoadedTrajectory {
    std::vector<Image> frames;
    std::vector<Image> masks;
    std::vector<Camera> cameras;
    std::vector<Pose> poses;
};

inline LoadedTrajectory load_trajectory(const std::string& root, const std::string& subject,
                                        const std::string& traj) {
    const std::string dir = root + "/" + subject + "/" + traj;
    LoadedTrajectory out;
    const Json jcams = read_json_file(dir + "/cams.json");
    const Json jposes = read_json_file(dir + "/poses.json");
    require(jcams.size() == jposes.size(), detail::str("trajectory ", dir, ": cams/poses size mismatch"));
    char name[64];
    for (size_t i = 0; i < jcams.size(); ++i) {
        out.cameras.push_back(camera_from_json(jcams[i]));
        out.poses.push_back(pose_from_json(jposes[i]));
        std::snprintf(name, sizeof name, "/frame_%04zu.png", i);
        out.frames.push_back(read_png8(dir + name));
        std::snprintf(name, sizeof name, "/mask_%04zu.png", i);
        out.masks.push_back(read_png8(dir + name));
    }
    return out;
}

inline DatasetManifest load_manifest(const std::string& root) {
    return DatasetManifest::from_json(read_json_file(root + "/manifest.json"));
}

// Training-clip index sets (supplement-style sampling): a view clip walks the
// orbit clockwise or counterclockwise from a random start; a pose clip is a
// consecutive window. Indices refer to frames of the stored trajectory.
inline std::vector<int> view_clip_indices(int orbit_frames, int clip_len, int start, bool clockwise) {
    std::vector<int> idx(clip_len);
    for (int j = 0; j < clip_len; ++j) {
        const int step = (int)((long)j * orbit_frames / clip_len);
        idx[j] = ((start + (clockwise ? step : -step)) % orbit_frames + orbit_frames) % orbit_frames;
    }
    return idx;
}

inline std::vector<int> pose_clip_indices(int total_frames, int clip_len, int start) {
    require(start + clip_len <= total_frames, "pose clip out of range");
    std::vector<int> idx(clip_len);
    for (int j = 0; j < clip_len; ++j) idx[j] = start + j;
    return idx;
}

}  // namespace gas
