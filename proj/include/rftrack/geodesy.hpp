#pragma once

#include <cmath>
#include <numbers>

#include "rftrack/errors.hpp"

namespace rftrack {

/// Geodetic position in decimal degrees (WGS-84, altitude ignored).
struct GeoPoint {
    double lat_deg = 0.0;
    double lon_deg = 0.0;
};

/// Local planar position in meters: x east, y north of an origin.
struct EnuPoint {
    double x = 0.0;
    double y = 0.0;

    friend EnuPoint operator+(EnuPoint a, EnuPoint b) { return {a.x + b.x, a.y + b.y}; }
    friend EnuPoint operator-(EnuPoint a, EnuPoint b) { return {a.x - b.x, a.y - b.y}; }
    friend EnuPoint operator-(EnuPoint a) { return {-a.x, -a.y}; }
    friend EnuPoint operator*(double s, EnuPoint a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const EnuPoint&, const EnuPoint&) = default;
};

inline double norm(EnuPoint p) { return std::hypot(p.x, p.y); }
inline double distance(EnuPoint a, EnuPoint b) { return norm(a - b); }

namespace geodesy {

namespace wgs84 {
inline constexpr double a = 6378137.0;
inline constexpr double f = 1.0 / 298.257223563;
inline constexpr double e2 = f * (2.0 - f);
}  // namespace wgs84

inline constexpr double kDeg = std::numbers::pi / 180.0;

inline bool valid(const GeoPoint& g) {
    return std::isfinite(g.lat_deg) && std::isfinite(g.lon_deg) && g.lat_deg >= -90.0 &&
           g.lat_deg <= 90.0 && g.lon_deg >= -180.0 && g.lon_deg <= 180.0;
}

inline void require_valid(const GeoPoint& g, const char* what) {
    if (!valid(g)) {
        throw InvalidInput(std::string(what) + " out of range: lat=" + std::to_string(g.lat_deg) +
                           " lon=" + std::to_string(g.lon_deg));
    }
}

namespace detail {

struct Ecef {
    double x, y, z;
};

inline Ecef to_ecef(double lat_rad, double lon_rad) {
    const double s = std::sin(lat_rad);
    const double c = std::cos(lat_rad);
    const double n = wgs84::a / std::sqrt(1.0 - wgs84::e2 * s * s);
    return {n * c * std::cos(lon_rad), n * c * std::sin(lon_rad), n * (1.0 - wgs84::e2) * s};
}

// East/north components of the ECEF difference rotated into the origin's tangent plane.
inline EnuPoint enu_of(double lat_rad, double lon_rad, double olat_rad, double olon_rad) {
    const Ecef p = to_ecef(lat_rad, lon_rad);
    const Ecef o = to_ecef(olat_rad, olon_rad);
    const double dx = p.x - o.x, dy = p.y - o.y, dz = p.z - o.z;
    const double sl = std::sin(olat_rad), cl = std::cos(olat_rad);
    const double so = std::sin(olon_rad), co = std::cos(olon_rad);
    return {-so * dx + co * dy, -sl * co * dx - sl * so * dy + cl * dz};
}

}  // namespace detail

/// East/north offset of `p` relative to `origin` on the WGS-84 ellipsoid, both at altitude 0.
inline EnuPoint to_enu(const GeoPoint& p, const GeoPoint& origin) {
    require_valid(p, "point");
    require_valid(origin, "origin");
    return detail::enu_of(p.lat_deg * kDeg, p.lon_deg * kDeg, origin.lat_deg * kDeg,
                          origin.lon_deg * kDeg);
}

/// Inverse of to_enu at the same origin.
///
/// Finds the altitude-0 point whose tangent-plane east/north coordinates equal `p`. Each
/// iteration corrects latitude and longitude by the residual scaled with the local meridian and
/// prime-vertical radii; convergence is geometric with ratio ~|p|/a.
inline GeoPoint from_enu(const EnuPoint& p, const GeoPoint& origin) {
    require_valid(origin, "origin");
    const double olat = origin.lat_deg * kDeg;
    const double olon = origin.lon_deg * kDeg;
    double lat = olat;
    double lon = olon;
    for (int iter = 0; iter < 50; ++iter) {
        const EnuPoint r = p - detail::enu_of(lat, lon, olat, olon);
        if (std::abs(r.x) < 1e-10 && std::abs(r.y) < 1e-10) break;
        const double s = std::sin(lat);
        const double w = 1.0 - wgs84::e2 * s * s;
        const double meridian = wgs84::a * (1.0 - wgs84::e2) / (w * std::sqrt(w));
        const double prime = wgs84::a / std::sqrt(w);
        lat += r.y / meridian;
        lon += r.x / (prime * std::cos(lat));
    }
    double lon_deg = lon / kDeg;
    if (lon_deg > 180.0) lon_deg -= 360.0;
    if (lon_deg < -180.0) lon_deg += 360.0;
    return {lat / kDeg, lon_deg};
}

}  // namespace geodesy
}  // namespace rftrack
