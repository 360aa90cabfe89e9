#pragma once

#include <json.hpp>

#include <fstream>

#include "gas/body.hpp"
#include "gas/camera.hpp"

namespace gas {

using Json = nlohmann::json;

inline Json camera_to_json(const Camera& cam) {
    Json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["rotation"] = std::vector<double>(cam.rotation.m.begin(), cam.rotation.m.end());
    j["translation"] = std::vector<double>{cam.translation.x, cam.translation.y, cam.translation.z};
    j["height"] = cam.height;
    j["width"] = cam.width;
    return j;
}

inline Camera camera_from_json(const Json& j) {
    Camera cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    const auto rot = j.at("rotation").get<std::vector<double>>();
    require(rot.size() == 9, "camera json: rotation must have 9 entries");
    std::copy(rot.begin(), rot.end(), cam.rotation.m.begin());
    const auto tr = j.at("translation").get<std::vector<double>>();
    require(tr.size() == 3, "camera json: translation must have 3 entries");
    cam.translation = {tr[0], tr[1], tr[2]};
    cam.height = j.at("height").get<int>();
    cam.width = j.at("width").get<int>();
    cam.validate();
    return cam;
}

inline Json pose_to_json(const Pose& pose) {
    Json j;
    Json aa = Json::array();
    for (auto& v : pose.axis_angle) aa.push_back(std::vector<double>{v.x, v.y, v.z});
    j["axis_angle"] = aa;
    j["root_translation"] =
        std::vector<double>{pose.root_translation.x, pose.root_translation.y, pose.root_translation.z};
    return j;
}

inline Pose pose_from_json(const Json& j) {
    Pose pose;
    for (auto& v : j.at("axis_angle")) {
        const auto a = v.get<std::vector<double>>();
        require(a.size() == 3, "pose json: axis_angle entries must have 3 components");
        pose.axis_angle.push_back({a[0], a[1], a[2]});
    }
    const auto tr = j.at("root_translation").get<std::vector<double>>();
    require(tr.size() == 3, "pose json: root_translation must have 3 entries");
    pose.root_translation = {tr[0], tr[1], tr[2]};
    pose.validate();
    return pose;
}

inline void write_json_file(const std::string& path, const Json& j) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream os(tmp);
        require(os.good(), detail::str("cannot write json: ", path));
        os << j.dump(2) << "\n";
    }
    fs::rename(tmp, target);
}

inline Json read_json_file(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), detail::str("cannot open json: ", path));
    return Json::parse(is);
}

// FNV-1a 64-bit; content addressing for cache keys and checkpoint identity.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 1469598103934665603ULL) {
    const uint8_t* p = (const uint8_t*)data;
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return std::string(buf);
}

inline std::string hash_of_string(const std::string& s) { return hash_hex(fnv1a(s.data(), s.size())); }

inline std::string hash_of_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), detail::str("cannot hash missing file: ", path));
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return hash_hex(fnv1a(bytes.data(), bytes.size()));
}

}  // namespace gas
