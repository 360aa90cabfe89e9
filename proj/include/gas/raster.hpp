#pragma once

#include <array>

#include "gas/camera.hpp"
#include "gas/geometry.hpp"
#include "gas/image.hpp"

namespace gas {

// Z-buffer triangle rasterizer: top-left fill rule, perspective-correct
// barycentrics and depth, no anti-aliasing. Faces with any vertex behind the
// camera are skipped (subjects sit well inside the frustum here).
struct FrameBuffer {
    int h = 0, w = 0;
    std::vector<float> depth;   // camera-space view-axis distance; 0 = background
    std::vector<int32_t> face;  // -1 = background
    std::vector<float> b0, b1;  // perspective-correct barycentrics of face verts 0,1

    bool covered(int y, int x) const { return face[(size_t)y * w + x] >= 0; }
};

namespace raster_detail {

inline double orient2d(double ax, double ay, double bx, double by, double cx, double cy) {
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

// y grows downward; with positive-area winding a top edge is horizontal going
// left, a left edge goes down.
inline bool top_left(double ax, double ay, double bx, double by) {
    if (ay == by) return bx < ax;
    return by > ay;
}

}  // namespace raster_detail

inline FrameBuffer rasterize_mesh(const std::vector<Vec3>& world_verts,
                                  const std::vector<std::array<int, 3>>& faces, const Camera& cam) {
    cam.validate();
    FrameBuffer fb;
    fb.h = cam.height;
    fb.w = cam.width;
    fb.depth.assign((size_t)fb.h * fb.w, 0.f);
    fb.face.assign((size_t)fb.h * fb.w, -1);
    fb.b0.assign((size_t)fb.h * fb.w, 0.f);
    fb.b1.assign((size_t)fb.h * fb.w, 0.f);
    std::vector<float> zbuf((size_t)fb.h * fb.w, 1e30f);

    const int V = (int)world_verts.size();
    std::vector<double> us(V), vs(V), zs(V);
    std::vector<char> ok(V);
    for (int i = 0; i < V; ++i) {
        double u, v, d;
        ok[i] = cam.project(world_verts[i], u, v, d) ? 1 : 0;
        us[i] = u; vs[i] = v; zs[i] = d;
    }

    using raster_detail::orient2d;
    using raster_detail::top_left;
    for (int f = 0; f < (int)faces.size(); ++f) {
        int i0 = faces[f][0], i1 = faces[f][1], i2 = faces[f][2];
        if (!ok[i0] || !ok[i1] || !ok[i2]) continue;
        bool swapped = false;
        double area = orient2d(us[i0], vs[i0], us[i1], vs[i1], us[i2], vs[i2]);
        if (area == 0) continue;
        if (area < 0) {
            std::swap(i1, i2);
            area = -area;
            swapped = true;
        }
        const double x0 = us[i0], y0 = vs[i0], x1 = us[i1], y1 = vs[i1], x2 = us[i2], y2 = vs[i2];
        const int min_x = std::max(0, (int)std::floor(std::min({x0, x1, x2}) - 0.5));
        const int max_x = std::min(fb.w - 1, (int)std::ceil(std::max({x0, x1, x2}) - 0.5));
        const int min_y = std::max(0, (int)std::floor(std::min({y0, y1, y2}) - 0.5));
        const int max_y = std::min(fb.h - 1, (int)std::ceil(std::max({y0, y1, y2}) - 0.5));
        if (min_x > max_x || min_y > max_y) continue;

        const bool tl0 = top_left(x1, y1, x2, y2);
        const bool tl1 = top_left(x2, y2, x0, y0);
        const bool tl2 = top_left(x0, y0, x1, y1);
        const double inv_z0 = 1.0 / zs[i0], inv_z1 = 1.0 / zs[i1], inv_z2 = 1.0 / zs[i2];

        for (int py = min_y; py <= max_y; ++py)
            for (int px = min_x; px <= max_x; ++px) {
                const double sx = px + 0.5, sy = py + 0.5;
                const double w0 = orient2d(x1, y1, x2, y2, sx, sy);
                const double w1 = orient2d(x2, y2, x0, y0, sx, sy);
                const double w2 = orient2d(x0, y0, x1, y1, sx, sy);
                const bool in0 = w0 > 0 || (w0 == 0 && tl0);
                const bool in1 = w1 > 0 || (w1 == 0 && tl1);
                const bool in2 = w2 > 0 || (w2 == 0 && tl2);
                if (!(in0 && in1 && in2)) continue;
                const double l0 = w0 / area, l1 = w1 / area, l2 = w2 / area;
                const double denom = l0 * inv_z0 + l1 * inv_z1 + l2 * inv_z2;
                const double z = 1.0 / denom;
                const size_t at = (size_t)py * fb.w + px;
                if (z >= zbuf[at]) continue;
                zbuf[at] = (float)z;
                fb.depth[at] = (float)z;
                fb.face[at] = f;
                // perspective-correct barycentrics in original vertex order
                double pb0 = l0 * inv_z0 * z, pb1 = l1 * inv_z1 * z;
                if (swapped) {
                    // i1/i2 were swapped; recover weights for faces[f][1]
                    const double pb2 = 1.0 - pb0 - pb1;
                    fb.b0[at] = (float)pb0;
                    fb.b1[at] = (float)pb2;
                } else {
                    fb.b0[at] = (float)pb0;
                    fb.b1[at] = (float)pb1;
                }
            }
    }
    return fb;
}

// Area-weighted vertex normals of a world-space mesh.
inline std::vector<Vec3> vertex_normals(const std::vector<Vec3>& verts,
                                        const std::vector<std::array<int, 3>>& faces) {
    std::vector<Vec3> normals(verts.size());
    for (auto& f : faces) {
        const Vec3 n = (verts[f[1]] - verts[f[0]]).cross(verts[f[2]] - verts[f[0]]);
        normals[f[0]] += n;
        normals[f[1]] += n;
        normals[f[2]] += n;
    }
    for (auto& n : normals) n = n.normalized();
    return normals;
}

struct RasterImages {
    Image normal;             // (n+1)/2 encoded camera-space normals, background 0
    Image mask;               // single channel, 1 where covered
    std::vector<float> depth; // meters, background 0
};

inline RasterImages render_geometry_maps(const std::vector<Vec3>& world_verts,
                                         const std::vector<std::array<int, 3>>& faces, const Camera& cam) {
    const FrameBuffer fb = rasterize_mesh(world_verts, faces, cam);
    const std::vector<Vec3> vnorm = vertex_normals(world_verts, faces);
    RasterImages out;
    out.normal = Image(fb.h, fb.w, 3);
    out.mask = Image(fb.h, fb.w, 1);
    out.depth = fb.depth;
    for (int y = 0; y < fb.h; ++y)
        for (int x = 0; x < fb.w; ++x) {
            const size_t at = (size_t)y * fb.w + x;
            if (fb.face[at] < 0) continue;
            out.mask.at(y, x, 0) = 1.f;
            const auto& f = faces[fb.face[at]];
            const double b0 = fb.b0[at], b1 = fb.b1[at], b2 = 1.0 - b0 - b1;
            const Vec3 n_world = (vnorm[f[0]] * b0 + vnorm[f[1]] * b1 + vnorm[f[2]] * b2).normalized();
            const Vec3 n_cam = cam.rotation * n_world;
            out.normal.at(y, x, 0) = (float)((n_cam.x + 1.0) * 0.5);
            out.normal.at(y, x, 1) = (float)((n_cam.y + 1.0) * 0.5);
            out.normal.at(y, x, 2) = (float)((n_cam.z + 1.0) * 0.5);
        }
    return out;
}

// Shaded render; the shader receives (face index, b0, b1, b2) and returns rgb.
template <typename Shader>
Image render_shaded(const std::vector<Vec3>& world_verts, const std::vector<std::array<int, 3>>& faces,
                    const Camera& cam, Shader&& shader) {
    const FrameBuffer fb = rasterize_mesh(world_verts, faces, cam);
    Image out(fb.h, fb.w, 3);
    for (int y = 0; y < fb.h; ++y)
        for (int x = 0; x < fb.w; ++x) {
            const size_t at = (size_t)y * fb.w + x;
            if (fb.face[at] < 0) continue;
            const double b0 = fb.b0[at], b1 = fb.b1[at];
            const Vec3 rgb = shader(fb.face[at], b0, b1, 1.0 - b0 - b1);
            out.at(y, x, 0) = (float)std::clamp(rgb.x, 0.0, 1.0);
            out.at(y, x, 1) = (float)std::clamp(rgb.y, 0.0, 1.0);
            out.at(y, x, 2) = (float)std::clamp(rgb.z, 0.0, 1.0);
        }
    return out;
}

}  // namespace gas
