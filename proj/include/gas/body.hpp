#pragma once

#include <array>

#include "gas/geometry.hpp"

namespace gas {

// Per-joint axis-angle pose plus a global root translation (meters).
struct Pose {
    std::vector<Vec3> axis_angle;  // J entries, radians
    Vec3 root_translation{0, 0, 0};

    static Pose rest(int joints) { return Pose{std::vector<Vec3>(joints), {0, 0, 0}}; }

    void validate() const {
        for (auto& aa : axis_angle) {
            require(std::isfinite(aa.x) && std::isfinite(aa.y) && std::isfinite(aa.z), "pose: non-finite axis-angle");
            require(aa.norm() < 2.0 * 3.14159265358979323846, "pose: |axis-angle| must be < 2*pi");
        }
        require(std::isfinite(root_translation.x) && std::isfinite(root_translation.y) &&
                    std::isfinite(root_translation.z),
                "pose: non-finite root translation");
    }
};

// Simplified SMPL-like skinned template. Canonical space is the rest pose,
// character facing +z, y up, feet near y=0.
struct BodyTemplate {
    std::vector<Vec3> verts;                  // V canonical vertices
    std::vector<std::array<int, 3>> faces;    // F triangles
    std::vector<Vec3> joints;                 // J rest joint positions
    std::vector<int> parent;                  // parent joint index, -1 for root 0
    std::vector<std::vector<double>> weights; // V rows of J blend weights, each summing to 1
    std::vector<Vec3> shape_dir;              // V displacement per unit beta
    std::vector<Vec3> joint_shape_dir;        // J displacement per unit beta
    std::vector<int> part_of_vertex;          // V body-part ids (for texturing)

    int num_vertices() const { return (int)verts.size(); }
    int num_joints() const { return (int)joints.size(); }

    void validate() const {
        require(parent.size() == joints.size() && joint_shape_dir.size() == joints.size(), "template: joint arrays mismatch");
        require(weights.size() == verts.size() && shape_dir.size() == verts.size(), "template: vertex arrays mismatch");
        require(parent[0] == -1, "template: joint 0 must be the root");
        for (size_t j = 1; j < parent.size(); ++j)
            require(parent[j] >= 0 && parent[j] < (int)j, "template: parents must form a tree rooted at 0");
        for (auto& f : faces)
            for (int k = 0; k < 3; ++k) require(f[k] >= 0 && f[k] < (int)verts.size(), "template: face index out of range");
        for (auto& row : weights) {
            double sum = 0;
            for (double w : row) {
                require(w >= 0, "template: negative blend weight");
                sum += w;
            }
            require(std::abs(sum - 1.0) < 1e-6, "template: blend-weight row does not sum to 1");
        }
    }

    Vec3 shaped_vertex(int v, double beta) const { return verts[v] + shape_dir[v] * beta; }
    Vec3 shaped_joint(int j, double beta) const { return joints[j] + joint_shape_dir[j] * beta; }
};

// Rest-relative joint transforms: G_j maps a canonical point bound to joint j
// to its posed position; identity pose gives G_j = I. Joint rest positions are
// offset by the shape displacement before posing.
inline std::vector<Transform> forward_kinematics(const BodyTemplate& tmpl, const Pose& pose, double beta) {
    const int J = tmpl.num_joints();
    require((int)pose.axis_angle.size() == J, detail::str("pose has ", pose.axis_angle.size(), " joints, template has ", J));
    std::vector<Vec3> rest(J);
    for (int j = 0; j < J; ++j) rest[j] = tmpl.shaped_joint(j, beta);

    // placement A_j maps the joint-local origin to the posed joint position
    std::vector<Transform> placed(J);
    {
        Transform root;
        root.r = Mat3::from_axis_angle(pose.axis_angle[0]);
        root.o = rest[0] + pose.root_translation;
        placed[0] = root;
    }
    for (int j = 1; j < J; ++j) {
        Transform local;
        local.r = Mat3::from_axis_angle(pose.axis_angle[j]);
        local.o = rest[j] - rest[tmpl.parent[j]];
        placed[j] = placed[tmpl.parent[j]].compose(local);
    }
    std::vector<Transform> rel(J);
    for (int j = 0; j < J; ++j) {
        Transform unrest;  // x -> x - rest_j
        unrest.o = rest[j] * -1.0;
        rel[j] = placed[j].compose(unrest);
    }
    return rel;
}

// Pose state shared by skinning queries: joint transforms, posed vertices and
// each vertex's blended matrix.
struct SkinnedBody {
    double beta = 0;
    std::vector<Transform> joint_tf;    // G_j
    std::vector<Vec3> shaped_verts;     // canonical + beta displacement
    std::vector<Vec3> posed_verts;
    std::vector<Transform> vert_tf;     // per-vertex blended skinning matrix
};

inline Transform blend_joint_transforms(const std::vector<Transform>& joint_tf, const std::vector<double>& row) {
    Transform out;
    out.r.m.fill(0);
    out.o = {0, 0, 0};
    for (size_t j = 0; j < row.size(); ++j) {
        if (row[j] == 0) continue;
        for (int k = 0; k < 9; ++k) out.r.m[k] += row[j] * joint_tf[j].r.m[k];
        out.o += joint_tf[j].o * row[j];
    }
    return out;
}

inline SkinnedBody skin_body(const BodyTemplate& tmpl, const Pose& pose, double beta) {
    SkinnedBody sb;
    sb.beta = beta;
    sb.joint_tf = forward_kinematics(tmpl, pose, beta);
    const int V = tmpl.num_vertices();
    sb.shaped_verts.resize(V);
    sb.posed_verts.resize(V);
    sb.vert_tf.resize(V);
    for (int v = 0; v < V; ++v) {
        sb.shaped_verts[v] = tmpl.shaped_vertex(v, beta);
        sb.vert_tf[v] = blend_joint_transforms(sb.joint_tf, tmpl.weights[v]);
        sb.posed_verts[v] = sb.vert_tf[v].apply(sb.shaped_verts[v]);
    }
    return sb;
}

// v_posed = sum_j w_vj G_j v_canonical
inline std::vector<Vec3> lbs_forward(const BodyTemplate& tmpl, const Pose& pose, double beta) {
    return skin_body(tmpl, pose, beta).posed_verts;
}

struct Knn4 {
    std::array<int, 4> idx{-1, -1, -1, -1};
    std::array<double, 4> dist{1e30, 1e30, 1e30, 1e30};
};

inline Knn4 nearest4(const std::vector<Vec3>& pts, const Vec3& x) {
    Knn4 nn;
    // track squared distances; one sqrt per winner at the end
    for (int i = 0; i < (int)pts.size(); ++i) {
        const double dx = pts[i].x - x.x, dy = pts[i].y - x.y, dz = pts[i].z - x.z;
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (d2 < nn.dist[3]) {
            int k = 3;
            while (k > 0 && nn.dist[k - 1] > d2) {
                nn.dist[k] = nn.dist[k - 1];
                nn.idx[k] = nn.idx[k - 1];
                --k;
            }
            nn.dist[k] = d2;
            nn.idx[k] = i;
        }
    }
    for (int k = 0; k < 4; ++k)
        if (nn.idx[k] >= 0) nn.dist[k] = std::sqrt(nn.dist[k]);
    return nn;
}

// Inverse-distance blend of the K=4 nearest vertices' weight rows.
inline std::vector<double> blended_weight_row(const BodyTemplate& tmpl, const Knn4& nn) {
    const double eps = 1e-8;
    std::vector<double> row(tmpl.num_joints(), 0.0);
    double total = 0;
    for (int k = 0; k < 4; ++k) {
        if (nn.idx[k] < 0) continue;
        const double a = 1.0 / (nn.dist[k] + eps);
        total += a;
        const auto& wrow = tmpl.weights[nn.idx[k]];
        for (size_t j = 0; j < row.size(); ++j) row[j] += a * wrow[j];
    }
    for (auto& w : row) w /= total;
    return row;
}

// Target-space point -> canonical point. K=4 nearest posed vertices vote on a
// blended skinning matrix which is then inverted. A point exactly on a posed
// vertex maps to that vertex's canonical position.
inline Vec3 inverse_lbs(const Vec3& x, const BodyTemplate& tmpl, const SkinnedBody& sb) {
    const Knn4 nn = nearest4(sb.posed_verts, x);
    const Transform tf = blend_joint_transforms(sb.joint_tf, blended_weight_row(tmpl, nn));
    return tf.inverse().apply(x);
}

// Canonical point -> posed space, with weights taken from the canonical-space
// nearest vertices (the forward direction of the same scheme).
inline Vec3 forward_skin_point(const Vec3& x_c, const BodyTemplate& tmpl, const SkinnedBody& sb) {
    const Knn4 nn = nearest4(sb.shaped_verts, x_c);
    const Transform tf = blend_joint_transforms(sb.joint_tf, blended_weight_row(tmpl, nn));
    return tf.apply(x_c);
}

// ---------------------------------------------------------------------------
// Procedural capsule-person template: 10 parts, 10 joints, ~580 vertices.
// ---------------------------------------------------------------------------

namespace body_detail {

inline void orthonormal_basis(const Vec3& u, Vec3& e1, Vec3& e2) {
    const Vec3 probe = std::abs(u.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
    e1 = u.cross(probe).normalized();
    e2 = u.cross(e1);
}

struct PartSpec {
    const char* name;
    Vec3 a, b;      // capsule axis
    double radius;
    int joint;      // joint this part is bound to
};

}  // namespace body_detail

inline BodyTemplate make_capsule_person() {
    using body_detail::PartSpec;
    // joints: 0 pelvis(root), 1 neck, 2/3 L/R shoulder, 4/5 L/R elbow,
    //         6/7 L/R hip, 8/9 L/R knee. T-pose, arms along +-x.
    const std::vector<Vec3> joints = {
        {0, 0.90, 0},  {0, 1.42, 0},
        {-0.21, 1.33, 0}, {0.21, 1.33, 0},
        {-0.47, 1.33, 0}, {0.47, 1.33, 0},
        {-0.10, 0.88, 0},  {0.10, 0.88, 0},
        {-0.10, 0.50, 0},  {0.10, 0.50, 0},
    };
    const std::vector<int> parent = {-1, 0, 0, 0, 2, 3, 0, 0, 6, 7};

    const std::vector<PartSpec> parts = {
        {"torso",       {0, 0.92, 0},     {0, 1.36, 0},     0.130, 0},
        {"head",        {0, 1.47, 0},     {0, 1.60, 0},     0.090, 1},
        {"l_upper_arm", {-0.23, 1.33, 0}, {-0.45, 1.33, 0}, 0.045, 2},
        {"r_upper_arm", {0.23, 1.33, 0},  {0.45, 1.33, 0},  0.045, 3},
        {"l_lower_arm", {-0.49, 1.33, 0}, {-0.72, 1.33, 0}, 0.040, 4},
        {"r_lower_arm", {0.49, 1.33, 0},  {0.72, 1.33, 0},  0.040, 5},
        {"l_upper_leg", {-0.10, 0.86, 0}, {-0.10, 0.52, 0}, 0.065, 6},
        {"r_upper_leg", {0.10, 0.86, 0},  {0.10, 0.52, 0},  0.065, 7},
        {"l_lower_leg", {-0.10, 0.48, 0}, {-0.10, 0.12, 0}, 0.055, 8},
        {"r_lower_leg", {0.10, 0.48, 0},  {0.10, 0.12, 0},  0.055, 9},
    };

    BodyTemplate t;
    t.joints = joints;
    t.parent = parent;
    t.joint_shape_dir.resize(joints.size());
    for (size_t j = 0; j < joints.size(); ++j) t.joint_shape_dir[j] = {0, 0.08 * joints[j].y, 0};

    const int n_seg = 8, n_body_rings = 3, n_cap_rings = 2;
    for (int p = 0; p < (int)parts.size(); ++p) {
        const PartSpec& ps = parts[p];
        const Vec3 axis = ps.b - ps.a;
        const Vec3 u = axis.normalized();
        Vec3 e1, e2;
        body_detail::orthonormal_basis(u, e1, e2);
        const int base = (int)t.verts.size();

        auto push_ring = [&](const Vec3& center, double radius) {
            for (int s = 0; s < n_seg; ++s) {
                const double ang = 2.0 * M_PI * s / n_seg;
                t.verts.push_back(center + e1 * (radius * std::cos(ang)) + e2 * (radius * std::sin(ang)));
            }
        };
        // cap rings at end a (from apex outward), body rings, cap rings at end b
        for (int i = n_cap_rings; i >= 1; --i) {
            const double phi = 0.5 * M_PI * i / (n_cap_rings + 1);
            push_ring(ps.a - u * (ps.radius * std::sin(phi)), ps.radius * std::cos(phi));
        }
        for (int i = 0; i < n_body_rings; ++i)
            push_ring(ps.a + axis * ((double)i / (n_body_rings - 1)), ps.radius);
        for (int i = 1; i <= n_cap_rings; ++i) {
            const double phi = 0.5 * M_PI * i / (n_cap_rings + 1);
            push_ring(ps.b + u * (ps.radius * std::sin(phi)), ps.radius * std::cos(phi));
        }
        const int apex_a = (int)t.verts.size();
        t.verts.push_back(ps.a - u * ps.radius);
        const int apex_b = (int)t.verts.size();
        t.verts.push_back(ps.b + u * ps.radius);

        const int n_rings = 2 * n_cap_rings + n_body_rings;
        for (int r = 0; r + 1 < n_rings; ++r)
            for (int s = 0; s < n_seg; ++s) {
                const int s1 = (s + 1) % n_seg;
                const int a0 = base + r * n_seg + s, a1 = base + r * n_seg + s1;
                const int b0 = base + (r + 1) * n_seg + s, b1 = base + (r + 1) * n_seg + s1;
                t.faces.push_back({a0, b0, a1});
                t.faces.push_back({a1, b0, b1});
            }
        for (int s = 0; s < n_seg; ++s) {
            const int s1 = (s + 1) % n_seg;
            t.faces.push_back({apex_a, base + s, base + s1});
            t.faces.push_back({apex_b, base + (n_rings - 1) * n_seg + s1, base + (n_rings - 1) * n_seg + s});
        }

        // weights: bound to the part's joint, blended toward the parent joint
        // near the proximal end so the surface bends instead of tearing
        const int total_new = (int)t.verts.size() - base;
        for (int k = 0; k < total_new; ++k) {
            const Vec3 v = t.verts[base + k];
            std::vector<double> row(joints.size(), 0.0);
            const int j = ps.joint;
            const int pj = parent[j];
            double w_parent = 0.0;
            if (pj >= 0) {
                const double blend_radius = 2.5 * ps.radius;
                const double d = (v - joints[j]).norm();
                w_parent = 0.5 * std::max(0.0, 1.0 - d / blend_radius);
            }
            row[j] = 1.0 - w_parent;
            if (pj >= 0) row[pj] = w_parent;
            t.weights.push_back(row);
            t.part_of_vertex.push_back(p);

            // shape: radial thickness around the part axis + global height blend
            const double seg_len = axis.norm();
            const double along = std::clamp((v - ps.a).dot(u) / seg_len, 0.0, 1.0);
            const Vec3 on_axis = ps.a + axis * along;
            t.shape_dir.push_back((v - on_axis) * 0.30 + Vec3{0, 0.08 * v.y, 0});
        }
    }
    t.validate();
    return t;
}

inline Aabb mesh_aabb(const std::vector<Vec3>& verts) {
    Aabb box;
    for (auto& v : verts) box.expand(v);
    return box;
}

}  // namespace gas
