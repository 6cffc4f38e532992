#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "orthocal/errors.hpp"
#include "orthocal/types.hpp"

namespace orthocal {

/// Both solutions of A t^2 + B t + B C = 0 and the resulting TCP candidates.
struct QuadraticRoots {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double discriminant = 0.0;
    double t_plus = 0.0;   ///< (-B + sqrt(D)) / 2A
    double t_minus = 0.0;  ///< (-B - sqrt(D)) / 2A
    double t_selected = 0.0;
    CartesianPoint discarded;  ///< TCP of the root that was not selected
};

struct DirectSolution {
    CartesianPoint point;
    QuadraticRoots roots;
};

inline constexpr double kKinematicTolerance = 1e-9;  // mm

/**
 * Inverse kinematics with encoder offsets:
 *   rho_i = p_i + s_i sqrt(L^2 - p_j^2 - p_k^2) - d_rho_i.
 * Joint limits are not enforced here; see joint_limit_violations().
 */
inline JointCoords inverse_kinematics(const CartesianPoint& p, const JointOffsets& offsets,
                                      const Geometry& geom, ConfigurationIndices s = {}) {
    const double l2 = geom.leg_length * geom.leg_length;
    JointCoords rho;
    for (Axis i : kAxes) {
        double arg = l2;
        for (Axis j : kAxes) {
            if (j != i) arg -= p[j] * p[j];
        }
        if (!(arg > 0.0)) {
            throw DomainError(std::string("inverse kinematics: point unreachable by the ") +
                              axis_name(i) + "-leg");
        }
        rho[i] = p[i] + s[i] * std::sqrt(arg) - offsets[i];
    }
    return rho;
}

/// Axes whose joint value lies outside [L + rho_min, L + rho_max].
inline std::vector<Axis> joint_limit_violations(const JointCoords& rho, const Geometry& geom) {
    std::vector<Axis> out;
    for (Axis a : kAxes) {
        if (rho[a] < geom.joint_lower() || rho[a] > geom.joint_upper()) out.push_back(a);
    }
    return out;
}

inline void require_within_limits(const JointCoords& rho, const Geometry& geom) {
    const auto bad = joint_limit_violations(rho, geom);
    if (!bad.empty()) {
        throw LimitError(std::string("joint ") + axis_name(bad.front()) + " outside its limits (" +
                         std::to_string(rho[bad.front()]) + " mm)");
    }
}

/// Left-hand sides of the three sphere constraints minus L^2 (mm^2).
inline std::array<double, 3> constraint_residuals(const CartesianPoint& p, const JointCoords& rho,
                                                  const JointOffsets& offsets, const Geometry& geom) {
    const JointCoords r = effective(rho, offsets);
    const double l2 = geom.leg_length * geom.leg_length;
    std::array<double, 3> out{};
    for (Axis i : kAxes) {
        double s = 0.0;
        for (Axis j : kAxes) {
            const double d = (j == i) ? p[j] - r[j] : p[j];
            s += d * d;
        }
        out[index(i)] = s - l2;
    }
    return out;
}

/**
 * Direct kinematics.  Writing p_i = r_i/2 + t/r_i with r = rho + d_rho turns
 * the constraints into A t^2 + B t + B C = 0 where
 *   A = ry^2 rz^2 + rx^2 rz^2 + rx^2 ry^2,  B = rx^2 ry^2 rz^2,
 *   C = (rx^2 + ry^2 + rz^2 - 4 L^2) / 4.
 * Of the roots whose configuration indices are all +1, the one with the
 * smaller |p| is returned; the other branch lies outside the workspace.
 */
inline DirectSolution direct_kinematics(const JointCoords& rho, const JointOffsets& offsets,
                                        const Geometry& geom) {
    const JointCoords r = effective(rho, offsets);
    for (Axis a : kAxes) {
        if (std::abs(r[a]) < kKinematicTolerance) {
            throw DomainError(std::string("direct kinematics: effective joint ") + axis_name(a) + " is zero");
        }
    }
    const double sx = r.x() * r.x();
    const double sy = r.y() * r.y();
    const double sz = r.z() * r.z();
    const double l = geom.leg_length;

    QuadraticRoots q;
    q.a = sy * sz + sx * sz + sx * sy;
    q.b = sx * sy * sz;
    q.c = (sx + sy + sz - 4.0 * l * l) / 4.0;
    q.discriminant = q.b * (q.b - 4.0 * q.a * q.c);
    if (q.discriminant < 0.0) {
        throw DomainError("direct kinematics: negative discriminant, joint set unreachable");
    }
    // B > 0, so this form avoids cancellation in either root.
    const double half = -0.5 * (q.b + std::sqrt(q.discriminant));
    q.t_minus = half / q.a;
    q.t_plus = (q.b * q.c) / half;

    auto point_for = [&](double t) {
        return CartesianPoint(r.x() / 2 + t / r.x(), r.y() / 2 + t / r.y(), r.z() / 2 + t / r.z());
    };
    auto admissible = [&](const CartesianPoint& p) {
        return r.x() - p.x() > 0.0 && r.y() - p.y() > 0.0 && r.z() - p.z() > 0.0;
    };

    const CartesianPoint p_plus = point_for(q.t_plus);
    const CartesianPoint p_minus = point_for(q.t_minus);
    const bool ok_plus = admissible(p_plus);
    const bool ok_minus = admissible(p_minus);
    if (!ok_plus && !ok_minus) {
        throw SingularError("direct kinematics: no root with configuration indices (+1,+1,+1)");
    }
    const bool take_plus = ok_plus && (!ok_minus || p_plus.norm() < p_minus.norm());
    q.t_selected = take_plus ? q.t_plus : q.t_minus;
    q.discarded = take_plus ? p_minus : p_plus;
    return {take_plus ? p_plus : p_minus, q};
}

/// Zero-offset direct kinematics of effective joint values.
inline CartesianPoint nominal_direct(const JointCoords& effective_joints, const Geometry& geom) {
    return direct_kinematics(effective_joints, JointOffsets{}, geom).point;
}

/**
 * Matrix with unit diagonal and off-diagonal entries p_j / (p_i - rho_i),
 * rho being the effective joint values.  Differentiating the constraints
 * shows that this maps dp to drho, i.e. it is d(rho)/d(p).
 */
inline Eigen::Matrix3d inverse_jacobian(const CartesianPoint& p, const JointCoords& effective_joints) {
    Eigen::Matrix3d m;
    for (Axis i : kAxes) {
        const double den = p[i] - effective_joints[i];
        if (std::abs(den) < kKinematicTolerance) {
            throw SingularError(std::string("inverse jacobian: p_") + axis_name(i) + " coincides with rho_" +
                                axis_name(i));
        }
        for (Axis j : kAxes) {
            m(static_cast<int>(index(i)), static_cast<int>(index(j))) = (i == j) ? 1.0 : p[j] / den;
        }
    }
    return m;
}

/// d(p)/d(rho): the inverse of inverse_jacobian().
inline Eigen::Matrix3d forward_jacobian(const CartesianPoint& p, const JointCoords& effective_joints) {
    const Eigen::Matrix3d m = inverse_jacobian(p, effective_joints);
    const double det = m.determinant();
    if (std::abs(det) < 1e-12) throw SingularError("forward jacobian: singular configuration");
    return m.inverse();
}

/// Joint values commanded at a calibration posture (zero offsets).
inline JointCoords posture_commanded_joints(const Posture& posture, const Geometry& geom) {
    const double l = geom.leg_length;
    if (posture.kind == PostureKind::Isotropic) return {l, l, l};
    const PostureAngles ang = angles_for(posture, geom);
    JointCoords rho(l * ang.cos, l * ang.cos, l * ang.cos);
    rho[posture.axis] = l + l * ang.sin;
    return rho;
}

/// Nominal TCP at a calibration posture: L sin(alpha) along the displaced axis.
inline CartesianPoint posture_point(const Posture& posture, const Geometry& geom) {
    CartesianPoint p;
    if (posture.kind != PostureKind::Isotropic) {
        p[posture.axis] = geom.leg_length * angles_for(posture, geom).sin;
    }
    return p;
}

/**
 * d(p)/d(rho) at a calibration posture.  Identity at the isotropic posture;
 * for a displacement along axis i, column i carries tan(alpha) in the two
 * other rows.
 */
inline Eigen::Matrix3d posture_jacobian(const Posture& posture, const Geometry& geom) {
    Eigen::Matrix3d j = Eigen::Matrix3d::Identity();
    if (posture.kind == PostureKind::Isotropic) return j;
    const double t = angles_for(posture, geom).tan;
    const int col = static_cast<int>(index(posture.axis));
    for (int row = 0; row < 3; ++row) {
        if (row != col) j(row, col) = t;
    }
    return j;
}

struct SensitivityRow {
    std::string posture;  ///< "isotropic" or "x-displacement" etc.
    Axis leg = Axis::X;
    std::string plane;       ///< e.g. "XY"
    std::string expression;  ///< human-readable linear form
    double at_max = 0.0;     ///< value at the max-displacement posture (isotropic rows: the single value)
    double at_min = 0.0;
};

/**
 * TCP deviation normal to each leg/plane pair, linearised about the
 * calibration postures.  Six isotropic rows followed by six displacement
 * rows; each displacement row is evaluated with alpha1 and alpha2.
 */
inline std::vector<SensitivityRow> sensitivity_table(const Geometry& geom, const JointOffsets& offsets) {
    auto upper = [](Axis a) { return static_cast<char>(axis_name(a) - 'a' + 'A'); };
    auto plane_name = [&](Axis a, Axis b) {
        if (index(a) > index(b)) std::swap(a, b);
        return std::string{upper(a), upper(b)};
    };
    auto other = [](Axis a, Axis b) {
        for (Axis c : kAxes) {
            if (c != a && c != b) return c;
        }
        return a;
    };
    auto offset_name = [](Axis a) { return std::string("d_rho_") + axis_name(a); };

    const double t1 = max_angles(geom).tan;
    const double t2 = min_angles(geom).tan;

    std::vector<SensitivityRow> rows;
    rows.reserve(12);
    for (Axis leg : kAxes) {
        for (Axis k : kAxes) {
            if (k == leg) continue;
            const Axis normal = other(leg, k);
            rows.push_back({"isotropic", leg, plane_name(leg, k), offset_name(normal), offsets[normal],
                            offsets[normal]});
        }
    }
    for (Axis leg : kAxes) {
        for (Axis k : kAxes) {
            if (k == leg) continue;
            const Axis normal = other(leg, k);
            rows.push_back({std::string(1, axis_name(leg)) + "-displacement", leg, plane_name(leg, k),
                            "T_alpha*" + offset_name(leg) + " + " + offset_name(normal),
                            t1 * offsets[leg] + offsets[normal], t2 * offsets[leg] + offsets[normal]});
        }
    }
    return rows;
}

}  // namespace orthocal
