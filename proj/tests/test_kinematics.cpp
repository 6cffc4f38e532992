#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "orthocal/kinematics.hpp"

using namespace orthocal;

namespace {

const Geometry kGeom = Geometry::prototype();
constexpr double L = 310.25;

void expect_constraints_hold(const CartesianPoint& p, const JointCoords& rho, const JointOffsets& d,
                             double tol = 1e-9) {
    for (double r : constraint_residuals(p, rho, d, kGeom)) EXPECT_NEAR(r, 0.0, tol);
}

}  // namespace

TEST(Geometry, PrototypeIsValid) {
    EXPECT_NO_THROW(kGeom.validate());
    EXPECT_DOUBLE_EQ(kGeom.leg_length, 310.25);
    EXPECT_DOUBLE_EQ(kGeom.rho_min, -100.0);
    EXPECT_DOUBLE_EQ(kGeom.rho_max, 60.0);
}

TEST(Geometry, RejectsBadLimits) {
    Geometry g;
    g.rho_min = 10;
    EXPECT_THROW(g.validate(), DomainError);
    g = {};
    g.rho_max = 400;
    EXPECT_THROW(g.validate(), DomainError);
    g = {};
    g.leg_length = -1;
    EXPECT_THROW(g.validate(), DomainError);
}

TEST(Geometry, OffsetSanityBound) {
    EXPECT_NO_THROW(validate_offsets({1, -2, 3}, kGeom));
    EXPECT_THROW(validate_offsets({40, 0, 0}, kGeom), DomainError);
    EXPECT_THROW(validate_offsets({NAN, 0, 0}, kGeom), DomainError);
}

TEST(PostureAngles, TrigIdentities) {
    for (const auto& a : {max_angles(kGeom), min_angles(kGeom)}) {
        EXPECT_NEAR(a.sin * a.sin + a.cos * a.cos, 1.0, 1e-12);
        EXPECT_NEAR(std::sin(a.alpha), a.sin, 1e-15);
        EXPECT_NEAR(std::tan(a.alpha), a.tan, 1e-15);
    }
    EXPECT_GT(max_angles(kGeom).alpha, 0.0);
    EXPECT_LT(min_angles(kGeom).alpha, 0.0);
}

TEST(InverseKinematics, Isotropic) {
    const auto rho = inverse_kinematics({0, 0, 0}, {}, kGeom);
    EXPECT_DOUBLE_EQ(rho.x(), L);
    EXPECT_DOUBLE_EQ(rho.y(), L);
    EXPECT_DOUBLE_EQ(rho.z(), L);
}

TEST(InverseKinematics, SubtractsOffsets) {
    const auto rho = inverse_kinematics({0, 0, 0}, {1, 2, 3}, kGeom);
    EXPECT_DOUBLE_EQ(rho.x(), 309.25);
    EXPECT_DOUBLE_EQ(rho.y(), 308.25);
    EXPECT_DOUBLE_EQ(rho.z(), 307.25);
}

TEST(InverseKinematics, DisplacedAlongX) {
    const CartesianPoint p(60, 0, 0);
    const auto rho = inverse_kinematics(p, {}, kGeom);
    EXPECT_NEAR(rho.x(), 370.25, 1e-12);
    EXPECT_NEAR(rho.y(), 304.3929409496876, 1e-9);
    EXPECT_NEAR(rho.z(), 304.3929409496876, 1e-9);
    expect_constraints_hold(p, rho, {});
}

TEST(InverseKinematics, UnreachableThrows) {
    EXPECT_THROW(inverse_kinematics({0, 300, 100}, {}, kGeom), DomainError);
}

TEST(InverseKinematics, LimitViolationsAreReportedNotThrown) {
    const auto rho = inverse_kinematics({60, 0, 0}, {-1, 0, 0}, kGeom);
    const auto bad = joint_limit_violations(rho, kGeom);
    ASSERT_EQ(bad.size(), 1u);
    EXPECT_EQ(bad.front(), Axis::X);
    EXPECT_THROW(require_within_limits(rho, kGeom), LimitError);
    EXPECT_NO_THROW(require_within_limits(inverse_kinematics({0, 0, 0}, {}, kGeom), kGeom));
}

TEST(DirectKinematics, Isotropic) {
    const auto sol = direct_kinematics({L, L, L}, {}, kGeom);
    EXPECT_NEAR(sol.point.x(), 0.0, 1e-12);
    EXPECT_NEAR(sol.point.y(), 0.0, 1e-12);
    EXPECT_NEAR(sol.point.z(), 0.0, 1e-12);
}

TEST(DirectKinematics, RootSelectorPicksWorkspaceBranch) {
    const auto sol = direct_kinematics({L, L, L}, {}, kGeom);
    // the discarded branch sits at 2L/3 on every axis
    for (double c : sol.roots.discarded.v) EXPECT_NEAR(c, 2.0 * L / 3.0, 1e-9);
    expect_constraints_hold(sol.roots.discarded, {L, L, L}, {}, 1e-7);
    EXPECT_LT(sol.point.norm(), sol.roots.discarded.norm());
}

TEST(DirectKinematics, QuadraticCoefficientsSatisfied) {
    const auto q = direct_kinematics({320, 300, 305}, {0.5, -0.5, 1}, kGeom).roots;
    for (double t : {q.t_plus, q.t_minus}) {
        const double lhs = q.a * t * t + q.b * t + q.b * q.c;
        EXPECT_LE(std::abs(lhs), 1e-10 * (std::abs(q.b * t) + std::abs(q.b * q.c)));
    }
    EXPECT_GE(q.discriminant, 0.0);
}

TEST(DirectKinematics, SymmetricSmallDisplacement) {
    // symmetric case: 3p^2 - 2 rho p + rho^2 - L^2 = 0, smaller root
    const auto p = direct_kinematics({311.25, 311.25, 311.25}, {}, kGeom).point;
    for (double c : p.v) EXPECT_NEAR(c, 1.0032441712472746, 1e-10);
    expect_constraints_hold(p, {311.25, 311.25, 311.25}, {});
}

TEST(DirectKinematics, InvertsDisplacedPosture) {
    const JointCoords rho(370.25, 304.3929409496876, 304.3929409496876);
    const auto p = direct_kinematics(rho, {}, kGeom).point;
    EXPECT_NEAR(p.x(), 60.0, 1e-9);
    EXPECT_NEAR(p.y(), 0.0, 1e-9);
    EXPECT_NEAR(p.z(), 0.0, 1e-9);
}

TEST(DirectKinematics, Errors) {
    EXPECT_THROW(direct_kinematics({0, L, L}, {}, kGeom), DomainError);
    // joints far beyond 2L cannot be reached by legs of length L
    EXPECT_THROW(direct_kinematics({900, 900, 900}, {}, kGeom), DomainError);
}

TEST(DirectKinematics, RoundTripOverWorkspaceGrid) {
    const double offsets[] = {0.0, 0.5, -0.5, 2.0, -2.0};
    double worst = 0.0;
    std::mt19937 pick(7);
    std::uniform_int_distribution<int> which(0, 4);
    for (double x = -100; x <= 60; x += 5) {
        for (double y = -100; y <= 60; y += 5) {
            for (double z = -100; z <= 60; z += 5) {
                const JointOffsets d(offsets[which(pick)], offsets[which(pick)], offsets[which(pick)]);
                const CartesianPoint p(x, y, z);
                const auto rho = inverse_kinematics(p, d, kGeom);
                const auto back = direct_kinematics(rho, d, kGeom).point;
                for (Axis a : kAxes) worst = std::max(worst, std::abs(back[a] - p[a]));
                for (double r : constraint_residuals(back, rho, d, kGeom)) ASSERT_LE(std::abs(r), 1e-9);
            }
        }
    }
    EXPECT_LE(worst, 1e-9);
}

TEST(Jacobian, IdentityAtIsotropic) {
    const Eigen::Matrix3d m = inverse_jacobian({0, 0, 0}, {L, L, L});
    EXPECT_TRUE(m.isApprox(Eigen::Matrix3d::Identity(), 1e-15));
    EXPECT_TRUE(posture_jacobian(Posture::isotropic(), kGeom).isIdentity());
}

TEST(Jacobian, LowerTriangularAtMaxX) {
    const Posture px = Posture::max(Axis::X);
    const Eigen::Matrix3d inv = inverse_jacobian(posture_point(px, kGeom), posture_commanded_joints(px, kGeom));
    const Eigen::Matrix3d j = posture_jacobian(px, kGeom);
    EXPECT_NEAR(j(1, 0), 0.19711363809161808, 1e-14);
    EXPECT_NEAR(j(2, 0), 0.19711363809161808, 1e-14);
    EXPECT_DOUBLE_EQ(j(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(j(1, 2), 0.0);
    EXPECT_LE((inv * j - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Jacobian, MinYPattern) {
    const Eigen::Matrix3d j = posture_jacobian(Posture::min(Axis::Y), kGeom);
    EXPECT_NEAR(j(0, 1), -0.3404926197319396, 1e-14);
    EXPECT_NEAR(j(2, 1), -0.3404926197319396, 1e-14);
    EXPECT_DOUBLE_EQ(j(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(j(0, 2), 0.0);
}

TEST(Jacobian, InverseOfPostureJacobianAtAllPostures) {
    for (const Posture& p : kAllPostures) {
        const Eigen::Matrix3d inv = inverse_jacobian(posture_point(p, kGeom), posture_commanded_joints(p, kGeom));
        const Eigen::Matrix3d expected = posture_jacobian(p, kGeom).inverse();
        EXPECT_LE((inv - expected).cwiseAbs().maxCoeff(), 1e-10) << p.name();
    }
}

TEST(Jacobian, SingularGuard) {
    EXPECT_THROW(inverse_jacobian({L, 0, 0}, {L, L, L}), SingularError);
}

// Oracle: central differences of direct/inverse kinematics, step 1e-4 mm.
TEST(Jacobian, MatchesFiniteDifferencesAtRandomPoints) {
    std::mt19937_64 gen(42);
    std::uniform_real_distribution<double> coord(-90.0, 50.0);
    const double h = 1e-4;
    for (int n = 0; n < 100; ++n) {
        const CartesianPoint p(coord(gen), coord(gen), coord(gen));
        const JointCoords rho = inverse_kinematics(p, {}, kGeom);

        Eigen::Matrix3d dp_drho;
        for (Axis c : kAxes) {
            JointCoords hi = rho;
            JointCoords lo = rho;
            hi[c] += h;
            lo[c] -= h;
            const Eigen::Vector3d col =
                (direct_kinematics(hi, {}, kGeom).point.vec() - direct_kinematics(lo, {}, kGeom).point.vec()) / (2 * h);
            dp_drho.col(static_cast<int>(index(c))) = col;
        }
        Eigen::Matrix3d drho_dp;
        for (Axis c : kAxes) {
            CartesianPoint hi = p;
            CartesianPoint lo = p;
            hi[c] += h;
            lo[c] -= h;
            drho_dp.col(static_cast<int>(index(c))) =
                (inverse_kinematics(hi, {}, kGeom).vec() - inverse_kinematics(lo, {}, kGeom).vec()) / (2 * h);
        }

        const Eigen::Matrix3d inv = inverse_jacobian(p, rho);
        const Eigen::Matrix3d fwd = forward_jacobian(p, rho);
        const double scale_inv = inv.cwiseAbs().maxCoeff();
        const double scale_fwd = fwd.cwiseAbs().maxCoeff();
        EXPECT_LE((inv - drho_dp).cwiseAbs().maxCoeff() / scale_inv, 1e-6);
        EXPECT_LE((fwd - dp_drho).cwiseAbs().maxCoeff() / scale_fwd, 1e-6);
    }
}

TEST(Postures, CommandedJoints) {
    const auto iso = posture_commanded_joints(Posture::isotropic(), kGeom);
    EXPECT_EQ(iso, JointCoords(L, L, L));

    const auto mx = posture_commanded_joints(Posture::max(Axis::X), kGeom);
    EXPECT_NEAR(mx.x(), 370.25, 1e-12);
    EXPECT_NEAR(mx.y(), 304.3929409496876, 1e-9);
    EXPECT_NEAR(mx.z(), 304.3929409496876, 1e-9);

    const auto mn = posture_commanded_joints(Posture::min(Axis::X), kGeom);
    EXPECT_NEAR(mn.x(), 210.25, 1e-12);
    EXPECT_NEAR(mn.y(), 293.6921219576719, 1e-9);
    EXPECT_NEAR(mn.z(), 293.6921219576719, 1e-9);

    // every commanded posture maps back to its nominal TCP
    for (const Posture& p : kAllPostures) {
        const auto tcp = direct_kinematics(posture_commanded_joints(p, kGeom), {}, kGeom).point;
        const auto expected = posture_point(p, kGeom);
        for (Axis a : kAxes) EXPECT_NEAR(tcp[a], expected[a], 1e-9) << p.name();
        EXPECT_TRUE(joint_limit_violations(posture_commanded_joints(p, kGeom), kGeom).empty());
    }
}

TEST(Sensitivity, UnitOffsets) {
    const auto rows = sensitivity_table(kGeom, {1, 1, 1});
    ASSERT_EQ(rows.size(), 12u);
    for (int i = 0; i < 6; ++i) {
        EXPECT_EQ(rows[i].posture, "isotropic");
        EXPECT_DOUBLE_EQ(rows[i].at_max, 1.0);
    }
    for (int i = 6; i < 12; ++i) {
        EXPECT_NEAR(rows[i].at_max, 1.0 + 0.19711363809161808, 1e-12);
        EXPECT_NEAR(rows[i].at_min, 1.0 - 0.3404926197319396, 1e-12);
    }
    // min X-displacement, plane XY: 1 + T_alpha2, printed as 1.00 - 0.34
    EXPECT_EQ(rows[6].posture, "x-displacement");
    EXPECT_EQ(rows[6].plane, "XY");
    EXPECT_NEAR(rows[6].at_min, 0.66, 0.005);
}

TEST(Sensitivity, ZeroOffsets) {
    for (const auto& r : sensitivity_table(kGeom, {})) {
        EXPECT_EQ(r.at_max, 0.0);
        EXPECT_EQ(r.at_min, 0.0);
    }
}

TEST(Sensitivity, RowLayout) {
    const auto rows = sensitivity_table(kGeom, {1, 2, 3});
    // isotropic X-leg against XY sees d_rho_z, against XZ sees d_rho_y
    EXPECT_EQ(rows[0].plane, "XY");
    EXPECT_DOUBLE_EQ(rows[0].at_max, 3.0);
    EXPECT_EQ(rows[1].plane, "XZ");
    EXPECT_DOUBLE_EQ(rows[1].at_max, 2.0);
    // Y-displacement, plane YZ: T*d_rho_y + d_rho_x
    EXPECT_EQ(rows[9].posture, "y-displacement");
    EXPECT_EQ(rows[9].plane, "YZ");
    EXPECT_NEAR(rows[9].at_max, 0.19711363809161808 * 2 + 1, 1e-12);
}

TEST(Sensitivity, SymmetricLimitsGiveSymmetricValues) {
    Geometry g;
    g.rho_min = -80;
    g.rho_max = 80;
    for (const auto& r : sensitivity_table(g, {1, 0, 0})) {
        if (r.posture == "x-displacement") {
            EXPECT_NEAR(r.at_max, -r.at_min, 1e-12);
        }
    }
}

// Linear predictions vs exact TCP displacement for small offsets.
TEST(Sensitivity, LinearizationMatchesDirectKinematics) {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (int n = 0; n < 50; ++n) {
        const JointOffsets d(u(gen), u(gen), u(gen));
        for (const Posture& p : kAllPostures) {
            const JointCoords rho = posture_commanded_joints(p, kGeom);
            const Eigen::Vector3d exact =
                direct_kinematics(rho, d, kGeom).point.vec() - posture_point(p, kGeom).vec();
            const Eigen::Vector3d lin = posture_jacobian(p, kGeom) * d.vec();
            EXPECT_LE((exact - lin).cwiseAbs().maxCoeff(), 1e-3) << p.name();
        }
    }
}
