#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Dense>

#include "orthocal/errors.hpp"
#include "orthocal/kinematics.hpp"
#include "orthocal/random.hpp"
#include "orthocal/types.hpp"

namespace orthocal {

/// A gauge reading direction on a given leg, e.g. {X, Y} is "dx_y": x-direction deviation of the Y-leg.
struct Channel {
    Axis direction;
    Axis leg;
};

/// Layouts fix the storage order and canonical key names of each measurement shape.
struct SinglePostureLayout {
    static constexpr std::string_view kTag = "single-posture";
    static constexpr std::array<std::string_view, 6> kNames{"dz_x0",     "dz_y0",      "dz_x_plus",
                                                            "dz_x_minus", "dz_y_plus", "dz_y_minus"};
    static constexpr std::array<Posture, 6> kPostures{
        Posture::isotropic(),  Posture::isotropic(),  Posture::max(Axis::X),
        Posture::min(Axis::X), Posture::max(Axis::Y), Posture::min(Axis::Y)};
};

/// Rows grouped per plane pair: x_y/y_x, then y_z/z_y, then x_z/z_x.
struct DoublePostureLayout {
    static constexpr std::string_view kTag = "double-full";
    static constexpr std::array<std::string_view, 12> kNames{
        "dx_y_plus", "dy_x_plus", "dx_y_minus", "dy_x_minus", "dy_z_plus", "dz_y_plus",
        "dy_z_minus", "dz_y_minus", "dx_z_plus", "dz_x_plus", "dx_z_minus", "dz_x_minus"};
    static constexpr std::array<Channel, 12> kChannels{{
        {Axis::X, Axis::Y}, {Axis::Y, Axis::X}, {Axis::X, Axis::Y}, {Axis::Y, Axis::X},
        {Axis::Y, Axis::Z}, {Axis::Z, Axis::Y}, {Axis::Y, Axis::Z}, {Axis::Z, Axis::Y},
        {Axis::X, Axis::Z}, {Axis::Z, Axis::X}, {Axis::X, Axis::Z}, {Axis::Z, Axis::X},
    }};
    static constexpr std::array<bool, 12> kIsMax{true, true, false, false, true, true,
                                                 false, false, true, true, false, false};
};

/// Canonical wire order (experiment table column order).
struct ReducedLayout {
    static constexpr std::string_view kTag = "double-reduced";
    static constexpr std::array<std::string_view, 6> kNames{"dx_y", "dx_z", "dy_x", "dy_z", "dz_x", "dz_y"};
    static constexpr std::array<Channel, 6> kChannels{{
        {Axis::X, Axis::Y}, {Axis::X, Axis::Z}, {Axis::Y, Axis::X},
        {Axis::Y, Axis::Z}, {Axis::Z, Axis::X}, {Axis::Z, Axis::Y},
    }};
};

/// Fixed-size set of gauge deviations (mm) stored in the layout's order.
template <std::size_t N, class Layout>
struct Measurements {
    static constexpr std::size_t kSize = N;
    using layout = Layout;
    using Vector = Eigen::Matrix<double, static_cast<int>(N), 1>;

    std::array<double, N> values{};

    static constexpr std::string_view tag() { return Layout::kTag; }
    static constexpr const std::array<std::string_view, N>& names() { return Layout::kNames; }

    static std::optional<std::size_t> find(std::string_view name) {
        for (std::size_t i = 0; i < N; ++i) {
            if (Layout::kNames[i] == name) return i;
        }
        return std::nullopt;
    }

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    double& at(std::string_view name) {
        const auto i = find(name);
        if (!i) throw InputError("unknown measurement key '" + std::string(name) + "'");
        return values[*i];
    }
    [[nodiscard]] double at(std::string_view name) const {
        return const_cast<Measurements*>(this)->at(name);
    }

    [[nodiscard]] Vector vec() const { return Eigen::Map<const Vector>(values.data()); }
    static Measurements from(const Vector& v) {
        Measurements m;
        Eigen::Map<Vector>(m.values.data()) = v;
        return m;
    }

    [[nodiscard]] bool all_finite() const {
        for (double x : values) {
            if (!std::isfinite(x)) return false;
        }
        return true;
    }

    friend bool operator==(const Measurements&, const Measurements&) = default;
};

using SinglePostureMeasurements = Measurements<6, SinglePostureLayout>;
using DoublePostureMeasurements = Measurements<12, DoublePostureLayout>;
using ReducedMeasurements = Measurements<6, ReducedLayout>;

using MeasurementSet = std::variant<SinglePostureMeasurements, DoublePostureMeasurements, ReducedMeasurements>;

/// Max-minus-min differences of a double-posture set.
inline ReducedMeasurements reduce(const DoublePostureMeasurements& m) {
    ReducedMeasurements out;
    for (std::size_t r = 0; r < 6; ++r) {
        const Channel ch = ReducedLayout::kChannels[r];
        double plus = 0.0;
        double minus = 0.0;
        for (std::size_t k = 0; k < 12; ++k) {
            const Channel c = DoublePostureLayout::kChannels[k];
            if (c.direction == ch.direction && c.leg == ch.leg) {
                (DoublePostureLayout::kIsMax[k] ? plus : minus) = m.values[k];
            }
        }
        out.values[r] = plus - minus;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forward model
// ---------------------------------------------------------------------------

/// Gauge displacement along each leg from the isotropic leg midpoint (mm). Zero by default.
struct GaugePlacement {
    std::array<double, 3> axial_shift{0.0, 0.0, 0.0};
    [[nodiscard]] double operator[](Axis a) const { return axial_shift[index(a)]; }
};

/// TCP at a posture, the effective joints there, and d(tcp)/d(offsets).
struct PostureState {
    CartesianPoint tcp;
    JointCoords joints;
    Eigen::Matrix3d dtcp = Eigen::Matrix3d::Zero();
};

inline PostureState solve_posture(const Posture& posture, const JointOffsets& offsets, const Geometry& geom,
                                  bool with_jacobian = true) {
    PostureState s;
    s.joints = effective(posture_commanded_joints(posture, geom), offsets);
    try {
        s.tcp = nominal_direct(s.joints, geom);
    } catch (const DomainError& e) {
        throw DomainError("posture " + posture.name() + ": " + e.what());
    } catch (const SingularError& e) {
        throw SingularError("posture " + posture.name() + ": " + e.what());
    }
    // Effective joints move one-for-one with the offsets, so d(tcp)/d(offsets) = d(p)/d(rho).
    if (with_jacobian) s.dtcp = forward_jacobian(s.tcp, s.joints);
    return s;
}

struct GaugeLocation {
    Axis leg = Axis::X;
    CartesianPoint position;
};

namespace detail {

/// Coordinate of the gauge along the leg's own axis.
inline double gauge_coordinate(const PostureState& iso, Axis leg, const JointOffsets& offsets,
                               const Geometry& geom, const GaugePlacement& placement) {
    return geom.leg_length / 2 + (iso.tcp[leg] + offsets[leg]) / 2 + placement[leg];
}

/// Leg-line parameter at which the leg crosses the gauge coordinate: mu = (J - g) / (J - p).
inline double line_parameter(const PostureState& at, Axis leg, double gauge) {
    const double den = at.joints[leg] - at.tcp[leg];
    if (std::abs(den) < kKinematicTolerance) {
        throw SingularError(std::string("leg line parameter: ") + axis_name(leg) + "-leg degenerate");
    }
    return (at.joints[leg] - gauge) / den;
}

/**
 * Deviation of `leg` in `direction` between posture `at` and the isotropic
 * posture, read by a gauge fixed at the isotropic leg midpoint:
 *   mu * p_j(at) - mu0 * p_j(iso),  mu0 = 1/2 for an unshifted gauge.
 * Optionally returns the gradient with respect to the offsets.
 */
inline double leg_deviation(const PostureState& at, const PostureState& iso, Channel ch,
                            const JointOffsets& offsets, const Geometry& geom, const GaugePlacement& placement,
                            Eigen::RowVector3d* grad) {
    const Axis i = ch.leg;
    const Axis j = ch.direction;
    const int ii = static_cast<int>(index(i));
    const int jj = static_cast<int>(index(j));

    const double g = gauge_coordinate(iso, i, offsets, geom, placement);
    const double mu = line_parameter(at, i, g);
    const double mu0 = line_parameter(iso, i, g);
    const double value = mu * at.tcp[j] - mu0 * iso.tcp[j];

    if (grad) {
        Eigen::RowVector3d e = Eigen::RowVector3d::Zero();
        e(ii) = 1.0;
        const Eigen::RowVector3d dg = (iso.dtcp.row(ii) + e) / 2.0;

        const double n = at.joints[i] - g;
        const double d = at.joints[i] - at.tcp[i];
        const Eigen::RowVector3d dmu = ((e - dg) * d - n * (e - at.dtcp.row(ii))) / (d * d);

        const double n0 = iso.joints[i] - g;
        const double d0 = iso.joints[i] - iso.tcp[i];
        const Eigen::RowVector3d dmu0 = ((e - dg) * d0 - n0 * (e - iso.dtcp.row(ii))) / (d0 * d0);

        *grad = dmu * at.tcp[j] + mu * at.dtcp.row(jj) - dmu0 * iso.tcp[j] - mu0 * iso.dtcp.row(jj);
    }
    return value;
}

}  // namespace detail

/// Model values and their derivatives with respect to the offsets.
template <std::size_t N>
struct Prediction {
    Eigen::Matrix<double, static_cast<int>(N), 1> values;
    Eigen::Matrix<double, static_cast<int>(N), 3> jacobian;
};

/// Leg midpoints at the isotropic posture, where the gauges are placed.
inline std::array<GaugeLocation, 3> gauge_locations(const JointOffsets& offsets, const Geometry& geom,
                                                    const GaugePlacement& placement = {}) {
    const PostureState iso = solve_posture(Posture::isotropic(), offsets, geom, false);
    std::array<GaugeLocation, 3> out;
    for (Axis leg : kAxes) {
        const double g = detail::gauge_coordinate(iso, leg, offsets, geom, placement);
        const double mu0 = detail::line_parameter(iso, leg, g);
        GaugeLocation loc{leg, {}};
        for (Axis a : kAxes) loc.position[a] = (a == leg) ? g : mu0 * iso.tcp[a];
        out[index(leg)] = loc;
    }
    return out;
}

/// Position along `leg` (0 at the TCP, 1 at the prismatic joint) where the gauge touches it at `posture`.
inline double leg_line_scaling(const Posture& posture, Axis leg, const JointOffsets& offsets,
                               const Geometry& geom, const GaugePlacement& placement = {}) {
    const PostureState iso = solve_posture(Posture::isotropic(), offsets, geom, false);
    const PostureState at = posture.kind == PostureKind::Isotropic ? iso : solve_posture(posture, offsets, geom, false);
    const double g = detail::gauge_coordinate(iso, leg, offsets, geom, placement);
    return detail::line_parameter(at, leg, g);
}

inline Prediction<12> double_posture_model(const JointOffsets& offsets, const Geometry& geom,
                                           const GaugePlacement& placement = {}, bool with_jacobian = true) {
    const PostureState iso = solve_posture(Posture::isotropic(), offsets, geom, with_jacobian);
    std::array<PostureState, 3> at_max;
    std::array<PostureState, 3> at_min;
    for (Axis a : kAxes) {
        at_max[index(a)] = solve_posture(Posture::max(a), offsets, geom, with_jacobian);
        at_min[index(a)] = solve_posture(Posture::min(a), offsets, geom, with_jacobian);
    }
    Prediction<12> out;
    out.jacobian.setZero();
    for (std::size_t k = 0; k < 12; ++k) {
        const Channel ch = DoublePostureLayout::kChannels[k];
        const PostureState& at = DoublePostureLayout::kIsMax[k] ? at_max[index(ch.leg)] : at_min[index(ch.leg)];
        Eigen::RowVector3d grad;
        out.values(static_cast<int>(k)) =
            detail::leg_deviation(at, iso, ch, offsets, geom, placement, with_jacobian ? &grad : nullptr);
        if (with_jacobian) out.jacobian.row(static_cast<int>(k)) = grad;
    }
    return out;
}

inline Prediction<6> reduced_model(const JointOffsets& offsets, const Geometry& geom,
                                   const GaugePlacement& placement = {}, bool with_jacobian = true) {
    const Prediction<12> full = double_posture_model(offsets, geom, placement, with_jacobian);
    Prediction<6> out;
    out.jacobian.setZero();
    const ReducedMeasurements values = reduce(DoublePostureMeasurements::from(full.values));
    out.values = values.vec();
    if (with_jacobian) {
        for (int col = 0; col < 3; ++col) {
            const ReducedMeasurements dcol =
                reduce(DoublePostureMeasurements::from(full.jacobian.col(col)));
            out.jacobian.col(col) = dcol.vec();
        }
    }
    return out;
}

/// Each single-posture deviation is the z-coordinate of the TCP at that posture.
inline Prediction<6> single_posture_model(const JointOffsets& offsets, const Geometry& geom,
                                          bool with_jacobian = true) {
    Prediction<6> out;
    for (std::size_t k = 0; k < 6; ++k) {
        const PostureState s = solve_posture(SinglePostureLayout::kPostures[k], offsets, geom, with_jacobian);
        out.values(static_cast<int>(k)) = s.tcp.z();
        out.jacobian.row(static_cast<int>(k)) =
            with_jacobian ? Eigen::RowVector3d(s.dtcp.row(2)) : Eigen::RowVector3d::Zero();
    }
    return out;
}

inline DoublePostureMeasurements predict_double_posture(const JointOffsets& offsets, const Geometry& geom,
                                                        const GaugePlacement& placement = {}) {
    return DoublePostureMeasurements::from(double_posture_model(offsets, geom, placement, false).values);
}

inline ReducedMeasurements predict_reduced(const JointOffsets& offsets, const Geometry& geom,
                                           const GaugePlacement& placement = {}) {
    return reduce(predict_double_posture(offsets, geom, placement));
}

inline SinglePostureMeasurements predict_single_posture(const JointOffsets& offsets, const Geometry& geom) {
    return SinglePostureMeasurements::from(single_posture_model(offsets, geom, false).values);
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

/// i.i.d. N(0, sigma^2) errors on every raw gauge reading.
struct NoiseModel {
    double sigma = 0.0;
    std::uint64_t seed = 0;
    int repetitions = 1;  ///< readings averaged per reported value

    void validate() const {
        if (!(std::isfinite(sigma) && sigma >= 0.0)) throw InputError("noise sigma must be finite and >= 0");
        if (repetitions < 1) throw InputError("noise repetitions must be >= 1");
    }
};

namespace detail {

/// Mean over `reps` of (reading_a - reading_b).
inline double averaged_difference(GaussianStream& rng, double sigma, int reps) {
    double acc = 0.0;
    for (int r = 0; r < reps; ++r) {
        const double a = rng();
        const double b = rng();
        acc += a - b;
    }
    return sigma * acc / reps;
}

}  // namespace detail

/// Single-posture values are differences of two absolute distance readings.
inline SinglePostureMeasurements add_noise(const SinglePostureMeasurements& m, double sigma, GaussianStream& rng,
                                           int repetitions = 1) {
    if (sigma == 0.0) return m;
    SinglePostureMeasurements out = m;
    for (double& v : out.values) v += detail::averaged_difference(rng, sigma, repetitions);
    return out;
}

/**
 * Per leg and direction three readings are taken (isotropic, max, min); the
 * max and min deviations are both formed against the same isotropic reading,
 * which correlates them.
 */
inline DoublePostureMeasurements add_noise(const DoublePostureMeasurements& m, double sigma, GaussianStream& rng,
                                           int repetitions = 1) {
    if (sigma == 0.0) return m;
    DoublePostureMeasurements out = m;
    for (std::size_t k = 0; k < 12; ++k) {
        if (!DoublePostureLayout::kIsMax[k]) continue;
        // partner: same channel at the min posture, two rows further down
        const std::size_t plus = k;
        const std::size_t minus = k + 2;
        double e_plus = 0.0;
        double e_minus = 0.0;
        for (int r = 0; r < repetitions; ++r) {
            const double iso = rng();
            const double at_max = rng();
            const double at_min = rng();
            e_plus += at_max - iso;
            e_minus += at_min - iso;
        }
        out.values[plus] += sigma * e_plus / repetitions;
        out.values[minus] += sigma * e_minus / repetitions;
    }
    return out;
}

/// Max-minus-min values: difference of two independent readings, variance 2 sigma^2.
inline ReducedMeasurements add_noise(const ReducedMeasurements& m, double sigma, GaussianStream& rng,
                                     int repetitions = 1) {
    if (sigma == 0.0) return m;
    ReducedMeasurements out = m;
    for (double& v : out.values) v += detail::averaged_difference(rng, sigma, repetitions);
    return out;
}

template <class M>
M add_noise(const M& m, const NoiseModel& noise) {
    noise.validate();
    GaussianStream rng(noise.seed);
    return add_noise(m, noise.sigma, rng, noise.repetitions);
}

inline MeasurementSet add_noise(const MeasurementSet& m, const NoiseModel& noise) {
    return std::visit([&](const auto& v) -> MeasurementSet { return add_noise(v, noise); }, m);
}

}  // namespace orthocal
