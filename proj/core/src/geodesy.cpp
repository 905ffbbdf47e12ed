#include "rtkgssm/geodesy.hpp"

#include <cmath>

#include <Eigen/Geometry>

namespace rtkgssm {

namespace {
constexpr double kWgs84A = 6378137.0;
constexpr double kWgs84F = 1.0 / 298.257223563;
constexpr double kWgs84E2 = kWgs84F * (2.0 - kWgs84F);
}  // namespace

Eigen::Vector3d ecef_from_geodetic(double lat, double lon, double h) {
    const double sl = std::sin(lat);
    const double n = kWgs84A / std::sqrt(1.0 - kWgs84E2 * sl * sl);
    return {(n + h) * std::cos(lat) * std::cos(lon), (n + h) * std::cos(lat) * std::sin(lon),
            (n * (1.0 - kWgs84E2) + h) * sl};
}

Eigen::Vector3d geodetic_from_ecef(const Eigen::Vector3d& r) {
    const double p = std::hypot(r.x(), r.y());
    const double lon = std::atan2(r.y(), r.x());
    double lat = std::atan2(r.z(), p * (1.0 - kWgs84E2));
    double h = 0.0;
    for (int i = 0; i < 8; ++i) {
        const double sl = std::sin(lat);
        const double n = kWgs84A / std::sqrt(1.0 - kWgs84E2 * sl * sl);
        h = p / std::cos(lat) - n;
        lat = std::atan2(r.z(), p * (1.0 - kWgs84E2 * n / (n + h)));
    }
    return {lat, lon, h};
}

Eigen::Matrix3d enu_rotation(const Eigen::Vector3d& origin_ecef) {
    const Eigen::Vector3d llh = geodetic_from_ecef(origin_ecef);
    const double sl = std::sin(llh.x()), cl = std::cos(llh.x());
    const double so = std::sin(llh.y()), co = std::cos(llh.y());
    Eigen::Matrix3d r;
    r << -so, co, 0.0,
         -sl * co, -sl * so, cl,
         cl * co, cl * so, sl;
    return r;
}

EnuFrame::EnuFrame(const Eigen::Vector3d& origin_ecef) : origin_(origin_ecef), rot_(enu_rotation(origin_ecef)) {}

double elevation_angle(const Eigen::Vector3d& station_ecef, const Eigen::Vector3d& target_ecef) {
    const Eigen::Vector3d enu = enu_rotation(station_ecef) * (target_ecef - station_ecef);
    return std::atan2(enu.z(), std::hypot(enu.x(), enu.y()));
}

}  // namespace rtkgssm
