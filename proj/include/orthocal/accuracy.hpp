#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "orthocal/errors.hpp"
#include "orthocal/identification.hpp"
#include "orthocal/measurement.hpp"
#include "orthocal/random.hpp"

namespace orthocal {

enum class CovarianceStructure { ScaledIdentity, BlockG };

/// Covariance of the measurement-error vector feeding a linear system (mm^2).
struct NoiseCovariance {
    Eigen::MatrixXd matrix;
    CovarianceStructure structure = CovarianceStructure::ScaledIdentity;
};

/// Max-minus-min differences are independent, each with variance 2 sigma^2.
inline NoiseCovariance six_eq_noise_covariance(double sigma) {
    return {2.0 * sigma * sigma * Eigen::MatrixXd::Identity(6, 6), CovarianceStructure::ScaledIdentity};
}

/// 4x4 block of the twelve-equation error covariance (in units of sigma^2).
inline Eigen::Matrix4d g_block() {
    Eigen::Matrix4d g;
    // clang-format off
    g << 2, 0, 1, 0,
         0, 2, 0, 1,
         1, 0, 2, 0,
         0, 1, 0, 2;
    // clang-format on
    return g;
}

/// Max and min deviations of one channel share the isotropic reading error: sigma^2 * blockdiag(G, G, G).
inline NoiseCovariance twelve_eq_noise_covariance(double sigma) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(12, 12);
    for (int b = 0; b < 3; ++b) m.block<4, 4>(4 * b, 4 * b) = g_block();
    return {sigma * sigma * m, CovarianceStructure::BlockG};
}

struct OffsetCovariance {
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // mm^2
    double sigma_rho = 0.0;                                // sqrt(trace / 3), mm
    SystemKind method = SystemKind::SixEquation;
};

inline double square_averaged_std(const Eigen::Matrix3d& v) { return std::sqrt(v.trace() / 3.0); }

/// Covariance K * noise * K^T of a linear estimator d_rho = K * measurements.
inline Eigen::Matrix3d estimator_covariance(const Eigen::MatrixXd& estimator, const Eigen::MatrixXd& noise) {
    if (estimator.cols() != noise.rows() || noise.rows() != noise.cols()) {
        throw InputError("estimator/noise covariance dimension mismatch");
    }
    Eigen::Matrix3d v = estimator * noise * estimator.transpose();
    return 0.5 * (v + v.transpose());
}

/// (J^T J)^-1 J^T, the least-squares estimator of a full-rank design.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixX3d& design) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixX3d> qr(design);
    qr.setThreshold(1e-10);
    detail::require_full_rank(qr);
    const Eigen::Matrix3d normal_inv = (design.transpose() * design).inverse();
    return normal_inv * design.transpose();
}

/// Sandwich (J^T J)^-1 J^T E J (J^T J)^-1 for a least-squares fit of `design`.
inline OffsetCovariance offset_covariance(const Eigen::MatrixX3d& design, const NoiseCovariance& noise,
                                          SystemKind kind) {
    OffsetCovariance out;
    out.covariance = estimator_covariance(pseudo_inverse(design), noise.matrix);
    out.sigma_rho = square_averaged_std(out.covariance);
    out.method = kind;
    return out;
}

inline OffsetCovariance offset_covariance_six(const Geometry& geom, double sigma) {
    if (!(sigma >= 0.0)) throw InputError("sigma must be >= 0");
    return offset_covariance(build_six_eq_system(geom).design, six_eq_noise_covariance(sigma),
                             SystemKind::SixEquation);
}

inline OffsetCovariance offset_covariance_twelve(const Geometry& geom, double sigma) {
    if (!(sigma >= 0.0)) throw InputError("sigma must be >= 0");
    return offset_covariance(build_twelve_eq_system(geom).design, twelve_eq_noise_covariance(sigma),
                             SystemKind::TwelveEquation);
}

/// The sequential single-posture solution is linear in the six readings, each a difference of two.
inline OffsetCovariance offset_covariance_single_closed_form(const Geometry& geom, double sigma) {
    if (!(sigma >= 0.0)) throw InputError("sigma must be >= 0");
    Eigen::Matrix<double, 3, 6> k;
    for (int c = 0; c < 6; ++c) {
        SinglePostureMeasurements unit;
        unit.values[static_cast<std::size_t>(c)] = 1.0;
        k.col(c) = solve_single_posture_closed_form(unit, geom).offsets.vec();
    }
    OffsetCovariance out;
    out.covariance = estimator_covariance(k, 2.0 * sigma * sigma * Eigen::MatrixXd::Identity(6, 6));
    out.sigma_rho = square_averaged_std(out.covariance);
    out.method = SystemKind::SinglePosture;
    return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo
// ---------------------------------------------------------------------------

enum class McMethod { LinearSix, LinearTwelve, NonlinearSix, NonlinearTwelve };

inline std::string_view mc_method_name(McMethod m) {
    switch (m) {
        case McMethod::LinearSix: return "six";
        case McMethod::LinearTwelve: return "twelve";
        case McMethod::NonlinearSix: return "nonlinear-six";
        case McMethod::NonlinearTwelve: return "nonlinear-twelve";
    }
    return "?";
}

inline std::optional<McMethod> parse_mc_method(std::string_view s) {
    for (McMethod m : {McMethod::LinearSix, McMethod::LinearTwelve, McMethod::NonlinearSix, McMethod::NonlinearTwelve}) {
        if (mc_method_name(m) == s) return m;
    }
    return std::nullopt;
}

struct MonteCarloConfig {
    JointOffsets true_offsets{0.1, 0.1, 0.1};
    double sigma = 0.01;
    int runs = 10000;
    int replications = 20;
    McMethod method = McMethod::NonlinearSix;
    std::uint64_t seed = 1;
    Geometry geometry{};
    unsigned threads = 0;  ///< 0: hardware concurrency
};

struct ReplicationStats {
    std::array<double, 3> mean_error{};
    std::array<double, 3> std_error{};
    double pooled_std = 0.0;
    int completed = 0;
    int failures = 0;
};

struct MonteCarloReport {
    MonteCarloConfig config;
    std::array<double, 3> mean_error{};  ///< over all completed runs (mm)
    std::array<double, 3> std_error{};   ///< over all completed runs (mm)
    double pooled_std = 0.0;             ///< mean over replications of the square-averaged std (mm)
    double pooled_std_spread = 0.0;      ///< std of that quantity across replications (mm)
    int failures = 0;
    double failure_rate = 0.0;
    bool ok = true;  ///< failure rate within 0.1 %
    std::vector<ReplicationStats> per_replication;
    std::string generator{GaussianStream::kAlgorithm};
    std::string seeding = "replication r draws from splitmix64(seed + r)";
};

inline constexpr double kMaxFailureRate = 1e-3;

namespace detail {

struct Welford {
    std::array<double, 3> mean{};
    std::array<double, 3> m2{};
    long n = 0;

    void add(const Eigen::Vector3d& e) {
        ++n;
        for (int a = 0; a < 3; ++a) {
            const double d = e(a) - mean[a];
            mean[a] += d / static_cast<double>(n);
            m2[a] += d * (e(a) - mean[a]);
        }
    }
    void merge(const Welford& o) {
        if (o.n == 0) return;
        const long total = n + o.n;
        for (int a = 0; a < 3; ++a) {
            const double d = o.mean[a] - mean[a];
            mean[a] += d * static_cast<double>(o.n) / static_cast<double>(total);
            m2[a] += o.m2[a] + d * d * static_cast<double>(n) * static_cast<double>(o.n) / static_cast<double>(total);
        }
        n = total;
    }
    [[nodiscard]] std::array<double, 3> stddev() const {
        std::array<double, 3> s{};
        for (int a = 0; a < 3; ++a) s[a] = n > 1 ? std::sqrt(m2[a] / static_cast<double>(n - 1)) : 0.0;
        return s;
    }
};

struct ReplicationOutcome {
    Welford acc;
    int failures = 0;
};

inline ReplicationOutcome run_replication(const MonteCarloConfig& cfg, int replication,
                                          const DoublePostureMeasurements& truth, const Eigen::MatrixXd& six_pinv,
                                          const Eigen::MatrixXd& twelve_pinv) {
    GaussianStream rng(GaussianStream::splitmix64(cfg.seed + static_cast<std::uint64_t>(replication)));
    ReplicationOutcome out;
    const Eigen::Vector3d truth_vec = cfg.true_offsets.vec();
    for (int run = 0; run < cfg.runs; ++run) {
        const DoublePostureMeasurements noisy = add_noise(truth, cfg.sigma, rng);
        Eigen::Vector3d estimate;
        try {
            switch (cfg.method) {
                case McMethod::LinearSix: estimate = six_pinv * reduce(noisy).vec(); break;
                case McMethod::LinearTwelve: estimate = twelve_pinv * noisy.vec(); break;
                case McMethod::NonlinearSix: {
                    const ReducedMeasurements red = reduce(noisy);
                    const JointOffsets start = JointOffsets::from(six_pinv * red.vec());
                    estimate = nonlinear_identify(red, cfg.geometry, start).offsets.vec();
                    break;
                }
                case McMethod::NonlinearTwelve: {
                    const JointOffsets start = JointOffsets::from(six_pinv * reduce(noisy).vec());
                    estimate = nonlinear_identify(noisy, cfg.geometry, start).offsets.vec();
                    break;
                }
            }
        } catch (const Error&) {
            ++out.failures;
            continue;
        }
        out.acc.add(estimate - truth_vec);
    }
    return out;
}

}  // namespace detail

/**
 * Repeated noisy simulation and identification.  Each replication draws
 * from its own stream, so the report does not depend on the thread count.
 */
inline MonteCarloReport monte_carlo(const MonteCarloConfig& cfg) {
    if (cfg.runs < 1) throw InputError("monte carlo: runs must be >= 1");
    if (cfg.replications < 1) throw InputError("monte carlo: replications must be >= 1");
    if (!(std::isfinite(cfg.sigma) && cfg.sigma >= 0.0)) throw InputError("monte carlo: sigma must be >= 0");
    cfg.geometry.validate();
    validate_offsets(cfg.true_offsets, cfg.geometry);

    const DoublePostureMeasurements truth = predict_double_posture(cfg.true_offsets, cfg.geometry);
    const Eigen::MatrixXd six_pinv = pseudo_inverse(build_six_eq_system(cfg.geometry).storage_design());
    const Eigen::MatrixXd twelve_pinv = pseudo_inverse(build_twelve_eq_system(cfg.geometry).storage_design());

    std::vector<detail::ReplicationOutcome> outcomes(static_cast<std::size_t>(cfg.replications));
    unsigned workers = cfg.threads != 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(cfg.replications));

    auto work = [&](unsigned w) {
        for (int r = static_cast<int>(w); r < cfg.replications; r += static_cast<int>(workers)) {
            outcomes[static_cast<std::size_t>(r)] = detail::run_replication(cfg, r, truth, six_pinv, twelve_pinv);
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    }

    MonteCarloReport rep;
    rep.config = cfg;
    detail::Welford all;
    std::vector<double> pooled;
    for (const auto& o : outcomes) {
        ReplicationStats s;
        s.mean_error = o.acc.mean;
        s.std_error = o.acc.stddev();
        s.pooled_std = std::sqrt((s.std_error[0] * s.std_error[0] + s.std_error[1] * s.std_error[1] +
                                  s.std_error[2] * s.std_error[2]) /
                                 3.0);
        s.completed = static_cast<int>(o.acc.n);
        s.failures = o.failures;
        rep.per_replication.push_back(s);
        pooled.push_back(s.pooled_std);
        all.merge(o.acc);
        rep.failures += o.failures;
    }
    rep.mean_error = all.mean;
    rep.std_error = all.stddev();

    double sum = 0.0;
    for (double p : pooled) sum += p;
    rep.pooled_std = sum / static_cast<double>(pooled.size());
    double ss = 0.0;
    for (double p : pooled) ss += (p - rep.pooled_std) * (p - rep.pooled_std);
    rep.pooled_std_spread = pooled.size() > 1 ? std::sqrt(ss / static_cast<double>(pooled.size() - 1)) : 0.0;

    const double total = static_cast<double>(cfg.runs) * cfg.replications;
    rep.failure_rate = rep.failures / total;
    rep.ok = rep.failure_rate <= kMaxFailureRate;
    return rep;
}

}  // namespace orthocal
