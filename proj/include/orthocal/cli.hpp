#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "orthocal/accuracy.hpp"
#include "orthocal/errors.hpp"
#include "orthocal/identification.hpp"
#include "orthocal/io.hpp"
#include "orthocal/kinematics.hpp"
#include "orthocal/measurement.hpp"

namespace orthocal::cli {

enum ExitCode : int { kSuccess = 0, kInputFailure = 1, kNumericFailure = 2 };

struct CalibrateOptions {
    std::string file;
    std::string method = "nonlinear6";
    std::optional<std::string> geometry;
    std::optional<std::string> out;
    bool verbose = false;
};

struct SimulateOptions {
    std::vector<double> offsets{0.0, 0.0, 0.0};
    double sigma = 0.0;
    std::uint64_t seed = 1;
    std::string method = "double-reduced";
    std::optional<double> quantize;
    int repetitions = 1;
    std::optional<std::string> geometry;
    std::optional<std::string> out;
    bool verbose = false;
};

struct AccuracyOptions {
    double sigma = 1.0;
    std::optional<std::string> geometry;
    bool verbose = false;
};

struct MonteCarloOptions {
    std::vector<double> offsets{0.1, 0.1, 0.1};
    double sigma = 0.01;
    int runs = 10000;
    int replications = 20;
    std::string method = "nonlinear-six";
    std::uint64_t seed = 1;
    unsigned threads = 0;
    std::optional<std::string> reproduce;
    std::optional<std::string> geometry;
    std::optional<std::string> out;
    bool verbose = false;
};

struct SensitivityOptions {
    std::vector<double> offsets{1.0, 1.0, 1.0};
    std::optional<std::string> geometry;
    bool verbose = false;
};

namespace detail {

inline JointOffsets to_offsets(const std::vector<double>& v) {
    if (v.size() != 3) throw InputError("--offsets expects three comma-separated values");
    for (double x : v) {
        if (!std::isfinite(x)) throw InputError("--offsets values must be finite");
    }
    return {v[0], v[1], v[2]};
}

inline Geometry resolve_geometry(const std::optional<std::string>& path, const std::optional<Geometry>& fallback = {}) {
    if (path) return io::load_geometry(*path);
    return fallback ? *fallback : Geometry::prototype();
}

/// Runs `body`, mapping failures to exit codes with a one-line message on `err`.
inline int guarded(std::ostream& err, bool domain_is_input, const std::function<int()>& body) {
    try {
        return body();
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kInputFailure;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return domain_is_input ? kInputFailure : kNumericFailure;
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << " (" << e.iterations() << " iterations)\n";
        return kNumericFailure;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kNumericFailure;
    }
}

inline void emit(std::ostream& out, const std::optional<std::string>& path, const std::string& text) {
    if (path) io::write_file(*path, text);
    out << text;
}

inline std::string fixed(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

inline double sigma_rho_for(Method m, const Geometry& geom, double sigma) {
    switch (m) {
        case Method::ClosedForm: return offset_covariance_single_closed_form(geom, sigma).sigma_rho;
        case Method::LinearSingle:
            return offset_covariance(build_single_posture_system(geom).design, six_eq_noise_covariance(sigma),
                                     SystemKind::SinglePosture)
                .sigma_rho;
        case Method::LinearSix:
        case Method::NonlinearSix: return offset_covariance_six(geom, sigma).sigma_rho;
        case Method::LinearTwelve:
        case Method::NonlinearTwelve: return offset_covariance_twelve(geom, sigma).sigma_rho;
    }
    return 0.0;
}

template <class M>
std::vector<std::pair<std::string, double>> keyed(const Eigen::VectorXd& r) {
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < M::kSize; ++i) out.emplace_back(std::string(M::names()[i]), r(static_cast<Eigen::Index>(i)));
    return out;
}

}  // namespace detail

/// Identifies offsets from a loaded measurement file.
inline io::CalibrationReport calibrate(const io::MeasurementFile& file, Method method, const Geometry& geom,
                                       std::string input_digest = {}) {
    const std::string shape(file.tag());
    auto incompatible = [&](std::string_view needs) {
        return InputError("method " + std::string(method_name(method)) + " needs " + std::string(needs) +
                          " measurements, file has " + shape);
    };

    CalibrationResult res;
    std::vector<std::pair<std::string, double>> residuals;
    if (const auto* single = std::get_if<SinglePostureMeasurements>(&file.values)) {
        if (method == Method::ClosedForm) {
            res = solve_single_posture_closed_form(*single, geom);
        } else if (method == Method::LinearSingle) {
            res = calibrate_linear(*single, geom);
        } else {
            throw incompatible(method == Method::LinearTwelve || method == Method::NonlinearTwelve ? "double-full"
                                                                                                : "double-reduced");
        }
        residuals = detail::keyed<SinglePostureMeasurements>(res.residuals);
    } else {
        if (method == Method::ClosedForm || method == Method::LinearSingle) throw incompatible("single-posture");
        const auto* full = std::get_if<DoublePostureMeasurements>(&file.values);
        if (method == Method::LinearTwelve || method == Method::NonlinearTwelve) {
            if (!full) throw incompatible("double-full");
            res = method == Method::LinearTwelve ? calibrate_linear(*full, geom) : nonlinear_identify(*full, geom);
            residuals = detail::keyed<DoublePostureMeasurements>(res.residuals);
        } else {
            const ReducedMeasurements red = full ? reduce(*full) : std::get<ReducedMeasurements>(file.values);
            res = method == Method::LinearSix ? calibrate_linear(red, geom) : nonlinear_identify(red, geom);
            residuals = detail::keyed<ReducedMeasurements>(res.residuals);
        }
    }

    io::CalibrationReport rep;
    rep.input_digest = std::move(input_digest);
    rep.method = std::string(method_name(method));
    rep.measurement_shape = shape;
    rep.offsets = res.offsets;
    rep.residuals = std::move(residuals);
    rep.residual_rms = res.residual_rms;
    rep.sigma_hat = res.sigma_hat;
    rep.sigma_rho_at_sigma_hat = detail::sigma_rho_for(method, geom, res.sigma_hat);
    rep.solver = {res.iterations, res.converged, res.gradient_norm};
    return rep;
}

inline int cmd_calibrate(const CalibrateOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, false, [&] {
        const auto method = parse_method(o.method);
        if (!method) {
            throw InputError("unknown method '" + o.method +
                             "' (closed-form, linear-single, linear6, linear12, nonlinear6, nonlinear12)");
        }
        const std::string text = io::read_file(o.file);
        const io::MeasurementFile file = io::parse_measurement_file(text);
        const Geometry geom = detail::resolve_geometry(o.geometry, file.geometry);
        const io::CalibrationReport rep = calibrate(file, *method, geom, io::digest(text));
        detail::emit(out, o.out, io::serialize(rep));
        if (o.verbose) {
            err << rep.method << " on " << rep.measurement_shape << " data (" << o.file << ")\n"
                << "  offsets (mm): " << detail::fixed(rep.offsets.x()) << " " << detail::fixed(rep.offsets.y()) << " "
                << detail::fixed(rep.offsets.z()) << "\n"
                << "  residual rms " << detail::fixed(rep.residual_rms) << " mm, sigma_hat "
                << detail::fixed(rep.sigma_hat) << " mm, sigma_rho " << detail::fixed(rep.sigma_rho_at_sigma_hat)
                << " mm\n";
            for (const auto& [k, v] : rep.residuals) err << "  " << std::setw(12) << k << " " << detail::fixed(v) << "\n";
        }
        return kSuccess;
    });
}

namespace detail {

template <class M>
void simulate_into(io::MeasurementFile& f, const M& truth, const SimulateOptions& o) {
    GaussianStream rng(o.seed);
    auto quantized = [&](M m) {
        if (o.quantize) {
            for (double& v : m.values) v = std::round(v / *o.quantize) * *o.quantize;
        }
        return m;
    };
    if (o.repetitions == 1) {
        f.values = quantized(add_noise(truth, o.sigma, rng));
        return;
    }
    f.repetitions.assign(M::kSize, {});
    M mean;
    for (int r = 0; r < o.repetitions; ++r) {
        const M noisy = quantized(add_noise(truth, o.sigma, rng));
        for (std::size_t i = 0; i < M::kSize; ++i) {
            f.repetitions[i].push_back(noisy.values[i]);
            mean.values[i] += noisy.values[i];
        }
    }
    for (double& v : mean.values) v /= o.repetitions;
    f.values = mean;
}

}  // namespace detail

inline io::MeasurementFile simulate(const SimulateOptions& o) {
    const JointOffsets d = detail::to_offsets(o.offsets);
    if (!(std::isfinite(o.sigma) && o.sigma >= 0.0)) throw InputError("--sigma must be >= 0");
    if (o.repetitions < 1) throw InputError("--repetitions must be >= 1");
    if (o.quantize && !(*o.quantize > 0.0)) throw InputError("--quantize must be > 0");
    const Geometry geom = detail::resolve_geometry(o.geometry);
    validate_offsets(d, geom);

    io::MeasurementFile f;
    if (o.geometry) f.geometry = geom;
    f.comment = "simulated";
    f.noise = io::NoiseMetadata{o.sigma, o.seed, o.repetitions, std::string(GaussianStream::kAlgorithm), o.quantize, d};
    if (o.method == SinglePostureMeasurements::tag()) {
        detail::simulate_into(f, predict_single_posture(d, geom), o);
    } else if (o.method == DoublePostureMeasurements::tag()) {
        detail::simulate_into(f, predict_double_posture(d, geom), o);
    } else if (o.method == ReducedMeasurements::tag()) {
        // reduced values come from a simulated full set so they carry the physical noise structure
        const DoublePostureMeasurements truth = predict_double_posture(d, geom);
        io::MeasurementFile full;
        detail::simulate_into(full, truth, o);
        f.values = reduce(std::get<DoublePostureMeasurements>(full.values));
        if (!full.repetitions.empty()) {
            f.repetitions.assign(6, {});
            for (int r = 0; r < o.repetitions; ++r) {
                DoublePostureMeasurements one;
                for (std::size_t i = 0; i < 12; ++i) one.values[i] = full.repetitions[i][static_cast<std::size_t>(r)];
                const ReducedMeasurements red = reduce(one);
                for (std::size_t i = 0; i < 6; ++i) f.repetitions[i].push_back(red.values[i]);
            }
        }
    } else {
        throw InputError("unknown measurement shape '" + o.method +
                         "' (single-posture, double-full, double-reduced)");
    }
    return f;
}

inline int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, true, [&] {
        const io::MeasurementFile f = simulate(o);
        detail::emit(out, o.out, io::serialize(f));
        if (o.verbose) err << "simulated " << f.tag() << " set, sigma " << o.sigma << " mm, seed " << o.seed << "\n";
        return kSuccess;
    });
}

inline io::json accuracy_report(const Geometry& geom, double sigma) {
    auto entry = [&](const OffsetCovariance& v) {
        io::json cov = io::json::array();
        for (int r = 0; r < 3; ++r) cov.push_back({v.covariance(r, 0), v.covariance(r, 1), v.covariance(r, 2)});
        return io::json{{"sigma_rho", v.sigma_rho}, {"factor", sigma > 0 ? v.sigma_rho / sigma : 0.0}, {"covariance", cov}};
    };
    return io::json{{"schema_version", io::kSchemaVersion},
                    {"sigma", sigma},
                    {"units", io::kUnits},
                    {"six", entry(offset_covariance_six(geom, sigma))},
                    {"twelve", entry(offset_covariance_twelve(geom, sigma))},
                    {"single_closed_form", entry(offset_covariance_single_closed_form(geom, sigma))}};
}

inline int cmd_accuracy(const AccuracyOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, true, [&] {
        if (!(std::isfinite(o.sigma) && o.sigma >= 0.0)) throw InputError("--sigma must be >= 0");
        const io::json rep = accuracy_report(detail::resolve_geometry(o.geometry), o.sigma);
        out << rep.dump(2) << "\n";
        if (o.verbose) {
            err << "sigma_rho / sigma:  six " << detail::fixed(rep["six"]["factor"].get<double>(), 3) << "  twelve "
                << detail::fixed(rep["twelve"]["factor"].get<double>(), 3) << "\n";
        }
        return kSuccess;
    });
}

inline io::json to_json(const MonteCarloReport& r) {
    io::json per = io::json::array();
    for (const auto& s : r.per_replication) {
        per.push_back({{"pooled_std", s.pooled_std},
                       {"mean_error", s.mean_error},
                       {"std_error", s.std_error},
                       {"completed", s.completed},
                       {"failures", s.failures}});
    }
    const auto& c = r.config;
    return io::json{{"method", mc_method_name(c.method)},
                    {"true_offsets", {c.true_offsets.x(), c.true_offsets.y(), c.true_offsets.z()}},
                    {"sigma", c.sigma},
                    {"runs", c.runs},
                    {"replications", c.replications},
                    {"seed", c.seed},
                    {"generator", r.generator},
                    {"seeding", r.seeding},
                    {"mean_error", r.mean_error},
                    {"std_error", r.std_error},
                    {"pooled_std", r.pooled_std},
                    {"pooled_std_spread", r.pooled_std_spread},
                    {"failures", r.failures},
                    {"failure_rate", r.failure_rate},
                    {"ok", r.ok},
                    {"per_replication", per}};
}

inline int cmd_montecarlo(const MonteCarloOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, true, [&] {
        MonteCarloConfig base;
        base.sigma = o.sigma;
        base.runs = o.runs;
        base.replications = o.replications;
        base.seed = o.seed;
        base.threads = o.threads;
        base.geometry = detail::resolve_geometry(o.geometry);

        io::json doc{{"schema_version", io::kSchemaVersion}, {"units", io::kUnits}};
        bool ok = true;
        if (o.reproduce) {
            if (*o.reproduce != "table3") throw InputError("unknown preset '" + *o.reproduce + "' (table3)");
            io::json rows = io::json::array();
            for (McMethod m : {McMethod::NonlinearSix, McMethod::NonlinearTwelve}) {
                io::json row{{"method", mc_method_name(m)}, {"cells", io::json::array()}};
                for (double off : {0.1, 1.0}) {
                    MonteCarloConfig cfg = base;
                    cfg.method = m;
                    cfg.true_offsets = {off, off, off};
                    const MonteCarloReport rep = monte_carlo(cfg);
                    ok = ok && rep.ok;
                    row["cells"].push_back({{"offset", off},
                                            {"pooled_std", rep.pooled_std},
                                            {"pooled_std_spread", rep.pooled_std_spread},
                                            {"failures", rep.failures}});
                    if (o.verbose) {
                        err << std::setw(16) << mc_method_name(m) << "  offset " << off << " mm: std "
                            << detail::fixed(rep.pooled_std) << " mm (+/- " << detail::fixed(rep.pooled_std_spread)
                            << ")\n";
                    }
                }
                rows.push_back(row);
            }
            doc["preset"] = "table3";
            doc["sigma"] = base.sigma;
            doc["runs"] = base.runs;
            doc["replications"] = base.replications;
            doc["seed"] = base.seed;
            doc["rows"] = rows;
        } else {
            const auto m = parse_mc_method(o.method);
            if (!m) throw InputError("unknown method '" + o.method + "' (six, twelve, nonlinear-six, nonlinear-twelve)");
            MonteCarloConfig cfg = base;
            cfg.method = *m;
            cfg.true_offsets = detail::to_offsets(o.offsets);
            const MonteCarloReport rep = monte_carlo(cfg);
            ok = rep.ok;
            doc["report"] = to_json(rep);
            if (o.verbose) {
                err << mc_method_name(*m) << ": pooled std " << detail::fixed(rep.pooled_std, 5) << " mm (spread "
                    << detail::fixed(rep.pooled_std_spread, 5) << "), failures " << rep.failures << "\n";
            }
        }
        detail::emit(out, o.out, doc.dump(2) + "\n");
        if (!ok) {
            err << "error: identification failure rate above " << kMaxFailureRate * 100 << "%\n";
            return kNumericFailure;
        }
        return kSuccess;
    });
}

inline int cmd_sensitivity(const SensitivityOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, true, [&] {
        const JointOffsets d = detail::to_offsets(o.offsets);
        const Geometry geom = detail::resolve_geometry(o.geometry);
        io::json rows = io::json::array();
        const auto table = sensitivity_table(geom, d);
        for (const auto& r : table) {
            rows.push_back({{"posture", r.posture},
                            {"leg", std::string(1, axis_name(r.leg))},
                            {"plane", r.plane},
                            {"expression", r.expression},
                            {"at_max", r.at_max},
                            {"at_min", r.at_min}});
        }
        out << io::json{{"offsets", {d.x(), d.y(), d.z()}}, {"units", io::kUnits}, {"rows", rows}}.dump(2) << "\n";
        if (o.verbose) {
            for (const auto& r : table) {
                err << std::left << std::setw(16) << r.posture << std::setw(4) << axis_name(r.leg) << std::setw(4)
                    << r.plane << std::setw(40) << r.expression << std::right << std::setw(9) << detail::fixed(r.at_max, 3)
                    << std::setw(9) << detail::fixed(r.at_min, 3) << "\n";
            }
        }
        return kSuccess;
    });
}

/// Full command line front end; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Joint-offset calibration toolkit for three-axis orthogonal parallel manipulators", "orthocal"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(io::kToolkitVersion));

    CalibrateOptions cal;
    auto* c = app.add_subcommand("calibrate", "identify joint offsets from a measurement file");
    c->add_option("file", cal.file, "measurement file (JSON)")->required();
    c->add_option("--method", cal.method, "closed-form|linear-single|linear6|linear12|nonlinear6|nonlinear12")
        ->capture_default_str();
    c->add_option("--geometry", cal.geometry, "geometry file (JSON)");
    c->add_option("--out", cal.out, "also write the report here");
    c->add_flag("--verbose,-v", cal.verbose, "summary on stderr");

    SimulateOptions sim;
    auto* s = app.add_subcommand("simulate", "write a synthetic measurement file");
    s->add_option("--offsets", sim.offsets, "true offsets x,y,z (mm)")->delimiter(',')->expected(3)->capture_default_str();
    s->add_option("--sigma", sim.sigma, "gauge noise std (mm)")->capture_default_str();
    s->add_option("--seed", sim.seed, "random seed")->capture_default_str();
    s->add_option("--method", sim.method, "single-posture|double-full|double-reduced")->capture_default_str();
    s->add_option("--quantize", sim.quantize, "round readings to this resolution (mm)");
    s->add_option("--repetitions", sim.repetitions, "replicate readings per value")->capture_default_str();
    s->add_option("--geometry", sim.geometry, "geometry file (JSON)");
    s->add_option("--out", sim.out, "also write the file here");
    s->add_flag("--verbose,-v", sim.verbose);

    AccuracyOptions acc;
    auto* a = app.add_subcommand("accuracy", "analytic offset accuracy for a given gauge noise");
    a->add_option("--sigma", acc.sigma, "gauge noise std (mm)")->capture_default_str();
    a->add_option("--geometry", acc.geometry, "geometry file (JSON)");
    a->add_flag("--verbose,-v", acc.verbose);

    MonteCarloOptions mc;
    auto* m = app.add_subcommand("montecarlo", "Monte-Carlo accuracy of the identification");
    m->add_option("--offsets", mc.offsets, "true offsets x,y,z (mm)")->delimiter(',')->expected(3)->capture_default_str();
    m->add_option("--sigma", mc.sigma)->capture_default_str();
    m->add_option("--runs", mc.runs, "runs per replication")->capture_default_str();
    m->add_option("--replications", mc.replications)->capture_default_str();
    m->add_option("--method", mc.method, "six|twelve|nonlinear-six|nonlinear-twelve")->capture_default_str();
    m->add_option("--seed", mc.seed)->capture_default_str();
    m->add_option("--threads", mc.threads, "worker threads, 0 = all cores")->capture_default_str();
    m->add_option("--reproduce", mc.reproduce, "preset: table3");
    m->add_option("--geometry", mc.geometry, "geometry file (JSON)");
    m->add_option("--out", mc.out, "also write the report here");
    m->add_flag("--verbose,-v", mc.verbose);

    SensitivityOptions sen;
    auto* t = app.add_subcommand("sensitivity", "linearised TCP deviations at the calibration postures");
    t->add_option("--offsets", sen.offsets, "offsets x,y,z (mm)")->delimiter(',')->expected(3)->capture_default_str();
    t->add_option("--geometry", sen.geometry, "geometry file (JSON)");
    t->add_flag("--verbose,-v", sen.verbose);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kInputFailure;
    }

    try {
        if (*c) return cmd_calibrate(cal, out, err);
        if (*s) return cmd_simulate(sim, out, err);
        if (*a) return cmd_accuracy(acc, out, err);
        if (*m) return cmd_montecarlo(mc, out, err);
        if (*t) return cmd_sensitivity(sen, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kNumericFailure;
    }
    return kInputFailure;
}

}  // namespace orthocal::cli
