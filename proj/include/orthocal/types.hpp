#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "orthocal/errors.hpp"

namespace orthocal {

enum class Axis : int { X = 0, Y = 1, Z = 2 };

inline constexpr std::array<Axis, 3> kAxes{Axis::X, Axis::Y, Axis::Z};

constexpr std::size_t index(Axis a) noexcept { return static_cast<std::size_t>(a); }

constexpr char axis_name(Axis a) noexcept {
    switch (a) {
        case Axis::X: return 'x';
        case Axis::Y: return 'y';
        case Axis::Z: return 'z';
    }
    return '?';
}

/**
 * Three named doubles addressed by axis.  The tag keeps Cartesian points,
 * joint coordinates and joint offsets from being mixed up by accident.
 */
template <class Tag>
struct Triple {
    std::array<double, 3> v{0.0, 0.0, 0.0};

    constexpr Triple() = default;
    constexpr Triple(double x, double y, double z) : v{x, y, z} {}

    static Triple from(const Eigen::Vector3d& e) { return Triple(e[0], e[1], e[2]); }

    [[nodiscard]] constexpr double x() const noexcept { return v[0]; }
    [[nodiscard]] constexpr double y() const noexcept { return v[1]; }
    [[nodiscard]] constexpr double z() const noexcept { return v[2]; }

    constexpr double& operator[](Axis a) noexcept { return v[index(a)]; }
    constexpr double operator[](Axis a) const noexcept { return v[index(a)]; }
    constexpr double& operator[](std::size_t i) noexcept { return v[i]; }
    constexpr double operator[](std::size_t i) const noexcept { return v[i]; }

    [[nodiscard]] Eigen::Vector3d vec() const { return {v[0], v[1], v[2]}; }

    [[nodiscard]] double norm() const { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }
    [[nodiscard]] double max_abs() const {
        return std::max({std::abs(v[0]), std::abs(v[1]), std::abs(v[2])});
    }

    friend constexpr bool operator==(const Triple&, const Triple&) = default;
};

struct CartesianTag {};
struct JointTag {};
struct OffsetTag {};

/// TCP position (mm), frame origin at the intersection of the prismatic axes.
using CartesianPoint = Triple<CartesianTag>;
/// Prismatic joint variables (mm); the isotropic posture is (L, L, L).
using JointCoords = Triple<JointTag>;
/// Encoder offsets (mm), the identification target.
using JointOffsets = Triple<OffsetTag>;

/// Joint values as seen by the mechanism: commanded value plus encoder offset.
inline JointCoords effective(const JointCoords& rho, const JointOffsets& offsets) {
    return {rho.x() + offsets.x(), rho.y() + offsets.y(), rho.z() + offsets.z()};
}

/**
 * Leg geometry of the simplified PSS model.  Only the leg length and the
 * joint limits enter the equations; the tool offset and parallelogram width
 * are carried along as metadata.
 */
struct Geometry {
    double leg_length = 310.25;
    double rho_min = -100.0;
    double rho_max = 60.0;
    double tool_offset = 31.0;
    double parallelogram_width = 80.0;

    static constexpr Geometry prototype() { return {}; }

    /// Throws DomainError unless L > 0 and rho_min < 0 < rho_max with both limits inside (-L, L).
    void validate() const {
        if (!(std::isfinite(leg_length) && leg_length > 0.0)) {
            throw DomainError("geometry: leg length must be positive");
        }
        if (!(std::isfinite(rho_min) && std::isfinite(rho_max) && rho_min < 0.0 && rho_max > 0.0)) {
            throw DomainError("geometry: joint limits must satisfy rho_min < 0 < rho_max");
        }
        if (std::abs(rho_min) >= leg_length || std::abs(rho_max) >= leg_length) {
            throw DomainError("geometry: joint limits must be smaller than the leg length");
        }
    }

    [[nodiscard]] double joint_lower() const noexcept { return leg_length + rho_min; }
    [[nodiscard]] double joint_upper() const noexcept { return leg_length + rho_max; }

    friend constexpr bool operator==(const Geometry&, const Geometry&) = default;
};

/// Offsets must be finite and no larger than L/10 for the model to apply.
inline void validate_offsets(const JointOffsets& offsets, const Geometry& geom) {
    for (double d : offsets.v) {
        if (!std::isfinite(d)) throw DomainError("joint offsets must be finite");
        if (std::abs(d) > geom.leg_length / 10.0) {
            throw DomainError("joint offset magnitude exceeds L/10 (" + std::to_string(d) + " mm)");
        }
    }
}

/// Inverse-kinematic branch selectors; the prototype assembly fixes all three to +1.
struct ConfigurationIndices {
    int sx = 1;
    int sy = 1;
    int sz = 1;

    [[nodiscard]] constexpr int operator[](Axis a) const noexcept {
        return a == Axis::X ? sx : (a == Axis::Y ? sy : sz);
    }
    friend constexpr bool operator==(const ConfigurationIndices&, const ConfigurationIndices&) = default;
};

enum class PostureKind { Isotropic, MaxDisplacement, MinDisplacement };

/// One of the seven calibration postures.
struct Posture {
    PostureKind kind = PostureKind::Isotropic;
    Axis axis = Axis::X;

    static constexpr Posture isotropic() { return {PostureKind::Isotropic, Axis::X}; }
    static constexpr Posture max(Axis a) { return {PostureKind::MaxDisplacement, a}; }
    static constexpr Posture min(Axis a) { return {PostureKind::MinDisplacement, a}; }

    [[nodiscard]] std::string name() const {
        switch (kind) {
            case PostureKind::Isotropic: return "isotropic";
            case PostureKind::MaxDisplacement: return std::string(1, axis_name(axis)) + "-max";
            case PostureKind::MinDisplacement: return std::string(1, axis_name(axis)) + "-min";
        }
        return "?";
    }

    friend constexpr bool operator==(const Posture& a, const Posture& b) {
        return a.kind == b.kind && (a.kind == PostureKind::Isotropic || a.axis == b.axis);
    }
};

inline constexpr std::array<Posture, 7> kAllPostures{
    Posture::isotropic(),
    Posture::max(Axis::X), Posture::max(Axis::Y), Posture::max(Axis::Z),
    Posture::min(Axis::X), Posture::min(Axis::Y), Posture::min(Axis::Z),
};

/// Angle between the non-displaced legs and their axes at a displacement posture.
struct PostureAngles {
    double alpha = 0.0;
    double sin = 0.0;
    double cos = 1.0;
    double tan = 0.0;

    static PostureAngles from_limit(double limit, double leg_length) {
        PostureAngles a;
        a.alpha = std::asin(limit / leg_length);
        a.sin = limit / leg_length;
        a.cos = std::sqrt(leg_length * leg_length - limit * limit) / leg_length;
        a.tan = limit / std::sqrt(leg_length * leg_length - limit * limit);
        return a;
    }
};

/// alpha1 = asin(rho_max / L) > 0
inline PostureAngles max_angles(const Geometry& g) { return PostureAngles::from_limit(g.rho_max, g.leg_length); }
/// alpha2 = asin(rho_min / L) < 0
inline PostureAngles min_angles(const Geometry& g) { return PostureAngles::from_limit(g.rho_min, g.leg_length); }

inline PostureAngles angles_for(const Posture& p, const Geometry& g) {
    switch (p.kind) {
        case PostureKind::MaxDisplacement: return max_angles(g);
        case PostureKind::MinDisplacement: return min_angles(g);
        case PostureKind::Isotropic: break;
    }
    return {};
}

}  // namespace orthocal
