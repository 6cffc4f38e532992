#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "orthocal/errors.hpp"
#include "orthocal/measurement.hpp"
#include "orthocal/types.hpp"

namespace orthocal {

/// Sensitivities of the linearised calibration equations (dimensionless).
struct CalibrationCoefficients {
    double a1 = 0.0;  ///< tan(alpha1), single-posture
    double a2 = 0.0;  ///< tan(alpha2)
    double b1 = 0.0;  ///< sin(alpha1)
    double c1 = 0.0;  ///< (0.5 + sin(alpha1)) tan(alpha1)
    double b2 = 0.0;
    double c2 = 0.0;
    double b = 0.0;  ///< b1 - b2
    double c = 0.0;  ///< c1 - c2
};

inline CalibrationCoefficients coefficients(const Geometry& geom) {
    geom.validate();
    const PostureAngles hi = max_angles(geom);
    const PostureAngles lo = min_angles(geom);
    CalibrationCoefficients k;
    k.a1 = hi.tan;
    k.a2 = lo.tan;
    k.b1 = hi.sin;
    k.c1 = (0.5 + hi.sin) * hi.tan;
    k.b2 = lo.sin;
    k.c2 = (0.5 + lo.sin) * lo.tan;
    k.b = k.b1 - k.b2;
    k.c = k.c1 - k.c2;
    return k;
}

enum class SystemKind { SinglePosture, TwelveEquation, SixEquation };

inline std::string_view system_name(SystemKind k) {
    switch (k) {
        case SystemKind::SinglePosture: return "single-posture";
        case SystemKind::TwelveEquation: return "twelve-equation";
        case SystemKind::SixEquation: return "six-equation";
    }
    return "?";
}

/**
 * Linearised calibration equations design * d_rho = rhs.  Rows follow the
 * published layout; storage_index[row] names the measurement slot (in the
 * measurement set's own storage order) that feeds that row.
 */
struct LinearSystem {
    SystemKind kind = SystemKind::SixEquation;
    Eigen::MatrixX3d design;
    Eigen::VectorXd rhs;
    std::vector<std::size_t> storage_index;

    [[nodiscard]] Eigen::Index rows() const { return design.rows(); }

    /// Design rows reordered to the measurement storage order.
    [[nodiscard]] Eigen::MatrixX3d storage_design() const {
        Eigen::MatrixX3d out(design.rows(), 3);
        for (Eigen::Index r = 0; r < design.rows(); ++r) {
            out.row(static_cast<Eigen::Index>(storage_index[static_cast<std::size_t>(r)])) = design.row(r);
        }
        return out;
    }

    template <class M>
    void set_rhs(const M& m) {
        if (M::kSize != static_cast<std::size_t>(design.rows())) {
            throw InputError("measurement set does not match the " + std::string(system_name(kind)) + " system");
        }
        rhs.resize(design.rows());
        for (Eigen::Index r = 0; r < design.rows(); ++r) rhs(r) = m[storage_index[static_cast<std::size_t>(r)]];
    }
};

inline LinearSystem build_single_posture_system(const Geometry& geom) {
    const auto k = coefficients(geom);
    LinearSystem s;
    s.kind = SystemKind::SinglePosture;
    s.design.resize(6, 3);
    // clang-format off
    s.design << 0.0,  0.0,  1.0,
                0.0,  0.0,  1.0,
                k.a1, 0.0,  1.0,
                k.a2, 0.0,  1.0,
                0.0,  k.a1, 1.0,
                0.0,  k.a2, 1.0;
    // clang-format on
    s.storage_index = {0, 1, 2, 3, 4, 5};
    return s;
}

inline LinearSystem build_twelve_eq_system(const Geometry& geom) {
    const auto k = coefficients(geom);
    LinearSystem s;
    s.kind = SystemKind::TwelveEquation;
    s.design.resize(12, 3);
    // clang-format off
    s.design << k.b1, k.c1, 0.0,
                k.c1, k.b1, 0.0,
                k.b2, k.c2, 0.0,
                k.c2, k.b2, 0.0,
                0.0,  k.b1, k.c1,
                0.0,  k.c1, k.b1,
                0.0,  k.b2, k.c2,
                0.0,  k.c2, k.b2,
                k.b1, 0.0,  k.c1,
                k.c1, 0.0,  k.b1,
                k.b2, 0.0,  k.c2,
                k.c2, 0.0,  k.b2;
    // clang-format on
    s.storage_index = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    return s;
}

/// Rows: dx_y, dy_x, dy_z, dz_y, dx_z, dz_x.
inline LinearSystem build_six_eq_system(const Geometry& geom) {
    const auto k = coefficients(geom);
    LinearSystem s;
    s.kind = SystemKind::SixEquation;
    s.design.resize(6, 3);
    // clang-format off
    s.design << k.b,  k.c,  0.0,
                k.c,  k.b,  0.0,
                0.0,  k.b,  k.c,
                0.0,  k.c,  k.b,
                k.b,  0.0,  k.c,
                k.c,  0.0,  k.b;
    // clang-format on
    const auto at = [](std::string_view n) { return *ReducedMeasurements::find(n); };
    s.storage_index = {at("dx_y"), at("dy_x"), at("dy_z"), at("dz_y"), at("dx_z"), at("dz_x")};
    return s;
}

inline LinearSystem build_single_posture_system(const Geometry& geom, const SinglePostureMeasurements& m) {
    auto s = build_single_posture_system(geom);
    s.set_rhs(m);
    return s;
}
inline LinearSystem build_twelve_eq_system(const Geometry& geom, const DoublePostureMeasurements& m) {
    auto s = build_twelve_eq_system(geom);
    s.set_rhs(m);
    return s;
}
inline LinearSystem build_six_eq_system(const Geometry& geom, const ReducedMeasurements& m) {
    auto s = build_six_eq_system(geom);
    s.set_rhs(m);
    return s;
}

enum class Method { ClosedForm, LinearSingle, LinearSix, LinearTwelve, NonlinearSix, NonlinearTwelve };

inline std::string_view method_name(Method m) {
    switch (m) {
        case Method::ClosedForm: return "closed-form";
        case Method::LinearSingle: return "linear-single";
        case Method::LinearSix: return "linear6";
        case Method::LinearTwelve: return "linear12";
        case Method::NonlinearSix: return "nonlinear6";
        case Method::NonlinearTwelve: return "nonlinear12";
    }
    return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
    for (Method m : {Method::ClosedForm, Method::LinearSingle, Method::LinearSix, Method::LinearTwelve,
                     Method::NonlinearSix, Method::NonlinearTwelve}) {
        if (method_name(m) == s) return m;
    }
    return std::nullopt;
}

struct CalibrationResult {
    JointOffsets offsets;
    Eigen::VectorXd residuals;  ///< observed - predicted (mm)
    double residual_rms = 0.0;  ///< sqrt(SSR / n)
    double sigma_hat = 0.0;     ///< sqrt(SSR / (n - 3))
    Method method = Method::LinearSix;
    int iterations = 0;
    bool converged = true;
    double gradient_norm = 0.0;
    std::vector<double> objective_trace;  ///< F after each accepted iterate, nonlinear only
};

struct ResidualStats {
    Eigen::VectorXd residuals;
    double rms = 0.0;
    double sigma_hat = 0.0;
};

inline ResidualStats residual_stats(Eigen::VectorXd residuals) {
    ResidualStats s;
    const double n = static_cast<double>(residuals.size());
    const double ssr = residuals.squaredNorm();
    s.rms = n > 0 ? std::sqrt(ssr / n) : 0.0;
    s.sigma_hat = n > 3 ? std::sqrt(ssr / (n - 3.0)) : 0.0;
    s.residuals = std::move(residuals);
    return s;
}

namespace detail {

inline void fill_stats(CalibrationResult& r, Eigen::VectorXd residuals) {
    auto s = residual_stats(std::move(residuals));
    r.residuals = std::move(s.residuals);
    r.residual_rms = s.rms;
    r.sigma_hat = s.sigma_hat;
}

template <class Design>
void require_full_rank(const Eigen::ColPivHouseholderQR<Design>& qr) {
    if (qr.rank() < 3) throw RankError("design matrix rank " + std::to_string(qr.rank()) + " < 3");
}

inline Eigen::VectorXd to_storage_order(const LinearSystem& sys, const Eigen::VectorXd& by_row) {
    Eigen::VectorXd out(by_row.size());
    for (Eigen::Index r = 0; r < by_row.size(); ++r) {
        out(static_cast<Eigen::Index>(sys.storage_index[static_cast<std::size_t>(r)])) = by_row(r);
    }
    return out;
}

}  // namespace detail

/**
 * Minimum-residual solution of the system's design * d_rho = rhs by
 * column-pivoted QR.  Residuals are returned in row order.
 */
inline CalibrationResult least_squares_solve(const LinearSystem& sys) {
    if (sys.rhs.size() != sys.design.rows()) throw InputError("linear system has no right-hand side");
    Eigen::ColPivHouseholderQR<Eigen::MatrixX3d> qr(sys.design);
    qr.setThreshold(1e-10);
    detail::require_full_rank(qr);
    const Eigen::Vector3d x = qr.solve(sys.rhs);
    CalibrationResult r;
    r.offsets = JointOffsets::from(x);
    r.method = sys.kind == SystemKind::SixEquation      ? Method::LinearSix
               : sys.kind == SystemKind::TwelveEquation ? Method::LinearTwelve
                                                        : Method::LinearSingle;
    detail::fill_stats(r, sys.rhs - sys.design * x);
    return r;
}

/// Linear solves on measurement sets; residuals come back in measurement storage order.
inline CalibrationResult calibrate_linear(const ReducedMeasurements& m, const Geometry& geom) {
    const LinearSystem sys = build_six_eq_system(geom, m);
    CalibrationResult r = least_squares_solve(sys);
    r.residuals = detail::to_storage_order(sys, r.residuals);
    return r;
}
inline CalibrationResult calibrate_linear(const DoublePostureMeasurements& m, const Geometry& geom) {
    const LinearSystem sys = build_twelve_eq_system(geom, m);
    CalibrationResult r = least_squares_solve(sys);
    r.residuals = detail::to_storage_order(sys, r.residuals);
    return r;
}
inline CalibrationResult calibrate_linear(const SinglePostureMeasurements& m, const Geometry& geom) {
    return least_squares_solve(build_single_posture_system(geom, m));
}

/**
 * Sequential single-posture solution: d_rho_z from the two isotropic
 * readings, then d_rho_x and d_rho_y from their displacement pairs.
 * Cheaper than the full pseudoinverse, at the price of a possibly larger
 * residual.
 */
inline CalibrationResult solve_single_posture_closed_form(const SinglePostureMeasurements& m,
                                                          const Geometry& geom) {
    const auto k = coefficients(geom);
    const double den = k.a1 * k.a1 + k.a2 * k.a2;
    const double dz = (m.at("dz_x0") + m.at("dz_y0")) / 2.0;
    const double dx = (k.a1 * (m.at("dz_x_plus") - dz) + k.a2 * (m.at("dz_x_minus") - dz)) / den;
    const double dy = (k.a1 * (m.at("dz_y_plus") - dz) + k.a2 * (m.at("dz_y_minus") - dz)) / den;

    CalibrationResult r;
    r.offsets = JointOffsets(dx, dy, dz);
    r.method = Method::ClosedForm;
    const LinearSystem sys = build_single_posture_system(geom, m);
    detail::fill_stats(r, sys.rhs - sys.design * r.offsets.vec());
    return r;
}

// ---------------------------------------------------------------------------
// Nonlinear identification
// ---------------------------------------------------------------------------

enum class JacobianModel {
    Exact,       ///< derivative of the nonlinear leg-deviation model at the current iterate
    Linearized,  ///< constant design matrix of the linear system
};

struct NonlinearOptions {
    int max_iterations = 100;
    double step_tolerance = 1e-9;       // mm
    double gradient_tolerance = 1e-12;  // mm^2
    int max_halvings = 20;
    JacobianModel jacobian = JacobianModel::Exact;
    GaugePlacement placement{};
};

namespace detail {

template <std::size_t N, class Model>
CalibrationResult gauss_newton(const Eigen::Matrix<double, static_cast<int>(N), 1>& observed,
                               const Eigen::Matrix<double, static_cast<int>(N), 3>& linear_design,
                               JointOffsets start, const Geometry& geom, const NonlinearOptions& opt,
                               Method method, Model&& model) {
    using Vec = Eigen::Matrix<double, static_cast<int>(N), 1>;
    using Mat = Eigen::Matrix<double, static_cast<int>(N), 3>;

    validate_offsets(start, geom);
    for (Eigen::Index i = 0; i < observed.size(); ++i) {
        if (!std::isfinite(observed(i))) throw InputError("nonlinear identification: non-finite measurement");
    }

    Eigen::Vector3d x = start.vec();
    Prediction<N> pred = model(JointOffsets::from(x));
    Vec r = observed - pred.values;
    double f = r.squaredNorm();

    CalibrationResult out;
    out.method = method;
    out.converged = false;
    out.objective_trace.push_back(f);

    const Eigen::ColPivHouseholderQR<Mat> linear_qr(linear_design);

    for (int it = 0; it < opt.max_iterations; ++it) {
        const Eigen::Vector3d grad = pred.jacobian.transpose() * r;
        out.gradient_norm = grad.norm();
        if (out.gradient_norm < opt.gradient_tolerance) {
            out.converged = true;
            break;
        }

        Eigen::Vector3d step;
        if (opt.jacobian == JacobianModel::Exact) {
            Eigen::ColPivHouseholderQR<Mat> qr(pred.jacobian);
            require_full_rank(qr);
            step = qr.solve(r);
        } else {
            step = linear_qr.solve(r);
        }

        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opt.max_halvings; ++h, scale *= 0.5) {
            const Eigen::Vector3d trial = x + scale * step;
            try {
                Prediction<N> p = model(JointOffsets::from(trial));
                const Vec rt = observed - p.values;
                const double ft = rt.squaredNorm();
                if (ft <= f) {
                    x = trial;
                    pred = std::move(p);
                    r = rt;
                    f = ft;
                    accepted = true;
                    break;
                }
            } catch (const DomainError&) {
            } catch (const SingularError&) {
            }
        }

        const double taken = scale * step.norm();
        if (!accepted) {
            // No decrease even for a vanishing step: the iterate is already a minimum to machine precision.
            if (taken < opt.step_tolerance) {
                out.converged = true;
                break;
            }
            throw ConvergenceError("nonlinear identification: line search failed", it + 1);
        }
        out.iterations = it + 1;
        out.objective_trace.push_back(f);
        if (taken < opt.step_tolerance) {
            out.converged = true;
            out.gradient_norm = (pred.jacobian.transpose() * r).norm();
            break;
        }
    }
    if (!out.converged) {
        throw ConvergenceError("nonlinear identification: no convergence after " +
                                   std::to_string(opt.max_iterations) + " iterations",
                               out.iterations);
    }
    out.offsets = JointOffsets::from(x);
    fill_stats(out, Eigen::VectorXd(r));
    return out;
}

}  // namespace detail

/**
 * Least-squares fit of the nonlinear leg-deviation model to max-minus-min
 * observations by damped Gauss-Newton.  Starts from the linear six-equation
 * solution unless an initial guess is given.
 */
inline CalibrationResult nonlinear_identify(const ReducedMeasurements& m, const Geometry& geom,
                                            std::optional<JointOffsets> initial = std::nullopt,
                                            const NonlinearOptions& opt = {}) {
    const JointOffsets start = initial ? *initial : calibrate_linear(m, geom).offsets;
    const Eigen::Matrix<double, 6, 3> design = build_six_eq_system(geom).storage_design();
    return detail::gauss_newton<6>(m.vec(), design, start, geom, opt, Method::NonlinearSix,
                                   [&](const JointOffsets& d) { return reduced_model(d, geom, opt.placement); });
}

/// Same fit on the twelve max/min-versus-isotropic deviations.
inline CalibrationResult nonlinear_identify(const DoublePostureMeasurements& m, const Geometry& geom,
                                            std::optional<JointOffsets> initial = std::nullopt,
                                            const NonlinearOptions& opt = {}) {
    const JointOffsets start = initial ? *initial : calibrate_linear(reduce(m), geom).offsets;
    const Eigen::Matrix<double, 12, 3> design = build_twelve_eq_system(geom).storage_design();
    return detail::gauss_newton<12>(m.vec(), design, start, geom, opt, Method::NonlinearTwelve,
                                    [&](const JointOffsets& d) { return double_posture_model(d, geom, opt.placement); });
}

enum class ResidualModel { Linear, Nonlinear };

/// observed - predicted for given offsets, in measurement storage order.
inline ResidualStats residual_report(const JointOffsets& offsets, const ReducedMeasurements& m,
                                     const Geometry& geom, ResidualModel model) {
    const Eigen::Matrix<double, 6, 1> pred =
        model == ResidualModel::Linear ? Eigen::Matrix<double, 6, 1>(build_six_eq_system(geom).storage_design() * offsets.vec())
                                       : predict_reduced(offsets, geom).vec();
    return residual_stats(m.vec() - pred);
}

inline ResidualStats residual_report(const JointOffsets& offsets, const DoublePostureMeasurements& m,
                                     const Geometry& geom, ResidualModel model) {
    const Eigen::Matrix<double, 12, 1> pred =
        model == ResidualModel::Linear ? Eigen::Matrix<double, 12, 1>(build_twelve_eq_system(geom).storage_design() * offsets.vec())
                                       : predict_double_posture(offsets, geom).vec();
    return residual_stats(m.vec() - pred);
}

inline ResidualStats residual_report(const JointOffsets& offsets, const SinglePostureMeasurements& m,
                                     const Geometry& geom, ResidualModel model) {
    const Eigen::Matrix<double, 6, 1> pred =
        model == ResidualModel::Linear ? Eigen::Matrix<double, 6, 1>(build_single_posture_system(geom).storage_design() * offsets.vec())
                                       : predict_single_posture(offsets, geom).vec();
    return residual_stats(m.vec() - pred);
}

}  // namespace orthocal
