#pragma once

#include "gas/diffusion.hpp"
#include "gas/nerf.hpp"
#include "gas/raster.hpp"
#include "gas/serio.hpp"
#include "gas/synth.hpp"

namespace gas {

// A camera/pose trajectory in one of the two generation modes. VIEW orbits a
// fixed pose; POSE animates in front of a fixed camera.
struct Trajectory {
    Mode mode = Mode::View;
    std::vector<Camera> cameras;
    std::vector<Pose> poses;
    double beta = 0;

    int frames() const { return (int)cameras.size(); }

    void validate() const {
        require(!cameras.empty() && cameras.size() == poses.size(), "trajectory: needs matched cameras and poses");
        auto same_pose = [](const Pose& a, const Pose& b) {
            if (a.axis_angle.size() != b.axis_angle.size()) return false;
            for (size_t j = 0; j < a.axis_angle.size(); ++j) {
                if (a.axis_angle[j].x != b.axis_angle[j].x || a.axis_angle[j].y != b.axis_angle[j].y ||
                    a.axis_angle[j].z != b.axis_angle[j].z)
                    return false;
            }
            return a.root_translation.x == b.root_translation.x && a.root_translation.y == b.root_translation.y &&
                   a.root_translation.z == b.root_translation.z;
        };
        auto same_cam = [](const Camera& a, const Camera& b) {
            return a.rotation.m == b.rotation.m && a.translation.x == b.translation.x &&
                   a.translation.y == b.translation.y && a.translation.z == b.translation.z && a.fx == b.fx &&
                   a.fy == b.fy && a.cx == b.cx && a.cy == b.cy;
        };
        if (mode == Mode::View) {
            for (size_t i = 1; i < poses.size(); ++i)
                require(same_pose(poses[0], poses[i]), "VIEW trajectory: all poses must be identical");
        } else {
            for (size_t i = 1; i < cameras.size(); ++i)
                require(same_cam(cameras[0], cameras[i]), "POSE trajectory: all cameras must be identical");
        }
    }

    Json to_json() const {
        Json j;
        j["mode"] = mode_name(mode);
        j["beta"] = beta;
        Json cams = Json::array(), ps = Json::array();
        for (auto& c : cameras) cams.push_back(camera_to_json(c));
        for (auto& p : poses) ps.push_back(pose_to_json(p));
        j["cameras"] = cams;
        j["poses"] = ps;
        return j;
    }

    static Trajectory from_json(const Json& j) {
        Trajectory t;
        t.mode = mode_from_name(j.at("mode").get<std::string>());
        t.beta = j.at("beta").get<double>();
        for (auto& c : j.at("cameras")) t.cameras.push_back(camera_from_json(c));
        for (auto& p : j.at("poses")) t.poses.push_back(pose_from_json(p));
        t.validate();
        return t;
    }
};

// Paired appearance (radiance-field renderings) and geometry (template normal
// maps) streams for one trajectory.
struct CueSet {
    Mode mode = Mode::View;
    std::string subject;
    std::string trajectory_hash;
    std::vector<Image> appearance;  // I_nerf
    std::vector<Image> geometry;    // M

    void validate() const {
        require(appearance.size() == geometry.size() && !appearance.empty(),
                "cue set: appearance/geometry streams must pair up");
        for (size_t i = 1; i < appearance.size(); ++i)
            require(appearance[i].h == appearance[0].h && appearance[i].w == appearance[0].w,
                    "cue set: inconsistent frame sizes");
    }
};

// content address: subject + full trajectory + reference tag + field weights
inline std::string cue_cache_key(const std::string& subject, const Trajectory& traj, const std::string& ref_tag,
                                 const std::string& field_hash) {
    Json j;
    j["subject"] = subject;
    j["trajectory"] = traj.to_json();
    j["reference"] = ref_tag;
    j["field"] = field_hash;
    return hash_of_string(j.dump());
}

template <typename S>
CueSet render_cues(const RadianceField<S>& field, const BodyTemplate& tmpl, const Image& ref_image,
                   const Camera& ref_cam, const Pose& ref_pose, const Trajectory& traj,
                   const std::string& subject, const std::string& trajectory_hash) {
    traj.validate();
    CueSet cs;
    cs.mode = traj.mode;
    cs.subject = subject;
    cs.trajectory_hash = trajectory_hash;
    cs.appearance.resize(traj.frames());
    cs.geometry.resize(traj.frames());
    for (int i = 0; i < traj.frames(); ++i) {
        const NerfFrame nf =
            render_frame(field, tmpl, ref_image, ref_cam, ref_pose, traj.cameras[i], traj.poses[i], traj.beta);
        cs.appearance[i] = nf.rgb;
        const SkinnedBody sb = skin_body(tmpl, traj.poses[i], traj.beta);
        cs.geometry[i] = render_geometry_maps(sb.posed_verts, tmpl.faces, traj.cameras[i]).normal;
    }
    cs.validate();
    return cs;
}

// ---------------------------------------------------------------------------
// offline cue cache: cache/<subject>/<hash>/{appr_%04d.png, geo_%04d.png,
// meta.json}; writes go to a temp directory renamed into place
// ---------------------------------------------------------------------------

inline std::string cue_dir(const std::string& root, const std::string& subject, const std::string& hash) {
    return root + "/" + subject + "/" + hash;
}

inline void cache_store(const std::string& root, const CueSet& cs, const Trajectory& traj, const Json& extra_meta) {
    cs.validate();
    namespace fs = std::filesystem;
    const std::string final_dir = cue_dir(root, cs.subject, cs.trajectory_hash);
    const std::string tmp_dir = final_dir + ".tmp";
    fs::remove_all(tmp_dir);
    fs::create_directories(tmp_dir);

    Json files = Json::object();
    char name[64];
    for (size_t i = 0; i < cs.appearance.size(); ++i) {
        std::snprintf(name, sizeof name, "appr_%04zu.png", i);
        write_png8(tmp_dir + "/" + name, cs.appearance[i]);
        files[name] = hash_of_file(tmp_dir + "/" + name);
        std::snprintf(name, sizeof name, "geo_%04zu.png", i);
        write_png8(tmp_dir + "/" + name, cs.geometry[i]);
        files[name] = hash_of_file(tmp_dir + "/" + name);
    }
    Json meta;
    meta["subject"] = cs.subject;
    meta["mode"] = mode_name(cs.mode);
    meta["trajectory"] = traj.to_json();
    meta["trajectory_hash"] = cs.trajectory_hash;
    meta["frames"] = (int)cs.appearance.size();
    meta["file_hashes"] = files;
    meta["extra"] = extra_meta;
    write_json_file(tmp_dir + "/meta.json", meta);

    fs::remove_all(final_dir);
    fs::rename(tmp_dir, final_dir);
}

inline bool cache_has(const std::string& root, const std::string& subject, const std::string& hash) {
    return std::filesystem::exists(cue_dir(root, subject, hash) + "/meta.json");
}

inline CueSet cache_load(const std::string& root, const std::string& subject, const std::string& hash) {
    const std::string dir = cue_dir(root, subject, hash);
    const Json meta = read_json_file(dir + "/meta.json");
    CueSet cs;
    cs.subject = meta.at("subject").get<std::string>();
    cs.mode = mode_from_name(meta.at("mode").get<std::string>());
    cs.trajectory_hash = meta.at("trajectory_hash").get<std::string>();
    const int frames = meta.at("frames").get<int>();
    const Json& hashes = meta.at("file_hashes");
    char name[64];
    for (int i = 0; i < frames; ++i) {
        std::snprintf(name, sizeof name, "appr_%04d.png", i);
        require(hash_of_file(dir + "/" + name) == hashes.at(name).get<std::string>(),
                detail::str("cue cache corruption: ", dir, "/", name));
        cs.appearance.push_back(read_png8(dir + "/" + name));
        std::snprintf(name, sizeof name, "geo_%04d.png", i);
        require(hash_of_file(dir + "/" + name) == hashes.at(name).get<std::string>(),
                detail::str("cue cache corruption: ", dir, "/", name));
        cs.geometry.push_back(read_png8(dir + "/" + name));
    }
    cs.validate();
    return cs;
}

}  // namespace gas
