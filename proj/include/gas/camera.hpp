#pragma once

#include "gas/geometry.hpp"

namespace gas {

// Pinhole camera. Camera space: x right, y up, looking along -z; image rows
// grow downward. depth = distance along the view axis (positive in front).
struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Mat3 rotation;   // world-to-camera
    Vec3 translation;
    int height = 0, width = 0;

    void validate() const {
        require(fx > 0 && fy > 0, "camera: fx and fy must be positive");
        require(height > 0 && width > 0, "camera: image size must be positive");
        Mat3 rtr = rotation.transposed() * rotation;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                require(std::abs(rtr.at(i, j) - (i == j ? 1.0 : 0.0)) < 1e-5,
                        "camera: rotation is not orthonormal");
    }

    Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
    Vec3 position() const { return (rotation.transposed() * translation) * -1.0; }

    // Projects to continuous pixel coordinates (u = column, v = row), pixel
    // centers at half-integers. Returns false behind the camera.
    bool project(const Vec3& world, double& u, double& v, double& depth) const {
        const Vec3 c = to_camera(world);
        depth = -c.z;
        if (depth <= 1e-9) return false;
        u = cx + fx * (c.x / depth);
        v = cy - fy * (c.y / depth);
        return true;
    }

    // Unit-direction ray through the center of pixel (row, col).
    void pixel_ray(double row, double col, Vec3& origin, Vec3& dir) const {
        origin = position();
        const Vec3 d_cam{(col + 0.5 - cx) / fx, -(row + 0.5 - cy) / fy, -1.0};
        dir = (rotation.transposed() * d_cam).normalized();
    }

    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int height,
                          int width) {
        const Vec3 zc = (eye - target).normalized();  // camera looks along -zc
        Vec3 xc = up.cross(zc);
        if (xc.norm() < 1e-9) xc = Vec3{1, 0, 0};
        xc = xc.normalized();
        const Vec3 yc = zc.cross(xc);
        Camera cam;
        cam.rotation.m = {xc.x, xc.y, xc.z, yc.x, yc.y, yc.z, zc.x, zc.y, zc.z};
        cam.translation = (cam.rotation * eye) * -1.0;
        cam.fx = fx;
        cam.fy = fy;
        cam.cx = width * 0.5;
        cam.cy = height * 0.5;
        cam.height = height;
        cam.width = width;
        return cam;
    }
};

}  // namespace gas
