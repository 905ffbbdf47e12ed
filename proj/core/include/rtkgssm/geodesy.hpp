#pragma once

#include <Eigen/Core>

namespace rtkgssm {

/// WGS-84 geodetic (lat, lon rad; height m) to ECEF meters.
Eigen::Vector3d ecef_from_geodetic(double lat_rad, double lon_rad, double height_m);

/// Inverse of ecef_from_geodetic: returns (lat, lon, height).
Eigen::Vector3d geodetic_from_ecef(const Eigen::Vector3d& ecef);

/// Rows are the local east, north and up unit vectors at the given point.
Eigen::Matrix3d enu_rotation(const Eigen::Vector3d& origin_ecef);

/// Local East-North-Up frame anchored at a fixed ECEF origin.
class EnuFrame {
public:
    explicit EnuFrame(const Eigen::Vector3d& origin_ecef);

    Eigen::Vector3d to_enu(const Eigen::Vector3d& ecef) const { return rot_ * (ecef - origin_); }
    Eigen::Vector3d delta_to_enu(const Eigen::Vector3d& delta_ecef) const { return rot_ * delta_ecef; }
    Eigen::Vector3d to_ecef(const Eigen::Vector3d& enu) const { return origin_ + rot_.transpose() * enu; }
    const Eigen::Vector3d& origin() const { return origin_; }
    const Eigen::Matrix3d& rotation() const { return rot_; }

private:
    Eigen::Vector3d origin_;
    Eigen::Matrix3d rot_;
};

/// Elevation of `target` seen from `station`, in radians.
double elevation_angle(const Eigen::Vector3d& station_ecef, const Eigen::Vector3d& target_ecef);

}  // namespace rtkgssm
