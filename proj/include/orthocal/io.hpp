#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "orthocal/errors.hpp"
#include "orthocal/identification.hpp"
#include "orthocal/measurement.hpp"
#include "orthocal/types.hpp"

namespace orthocal::io {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kToolkitVersion = "0.1.0";
inline constexpr std::string_view kUnits = "mm";

/// 64-bit FNV-1a, used to tag reports with the exact input bytes.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string digest(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return std::string("fnv1a64:") + buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << text;
}

inline json parse_json(std::string_view text, std::string_view what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string(what) + ": invalid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

inline json geometry_to_json(const Geometry& g) {
    return json{{"L", g.leg_length},
                {"rho_min", g.rho_min},
                {"rho_max", g.rho_max},
                {"r", g.tool_offset},
                {"d", g.parallelogram_width}};
}

namespace detail {

inline double number(const json& obj, std::string_view key, std::string_view where) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw InputError(std::string(where) + ": missing key '" + std::string(key) + "'");
    if (!it->is_number()) throw InputError(std::string(where) + ": '" + std::string(key) + "' must be a number");
    const double v = it->get<double>();
    if (!std::isfinite(v)) throw InputError(std::string(where) + ": '" + std::string(key) + "' must be finite");
    return v;
}

}  // namespace detail

/// Missing keys keep their prototype values.
inline Geometry geometry_from_json(const json& j) {
    if (!j.is_object()) throw InputError("geometry: expected an object");
    Geometry g;
    auto opt = [&](std::string_view key, double& field) {
        if (j.contains(key)) field = detail::number(j, key, "geometry");
    };
    opt("L", g.leg_length);
    opt("rho_min", g.rho_min);
    opt("rho_max", g.rho_max);
    opt("r", g.tool_offset);
    opt("d", g.parallelogram_width);
    try {
        g.validate();
    } catch (const DomainError& e) {
        throw InputError(e.what());
    }
    return g;
}

inline Geometry load_geometry(const std::string& path) {
    const json j = parse_json(read_file(path), path);
    return geometry_from_json(j.contains("geometry") ? j["geometry"] : j);
}

// ---------------------------------------------------------------------------
// Measurement files
// ---------------------------------------------------------------------------

struct NoiseMetadata {
    double sigma = 0.0;
    std::uint64_t seed = 0;
    int repetitions = 1;
    std::string generator{GaussianStream::kAlgorithm};
    std::optional<double> quantize;
    std::optional<JointOffsets> true_offsets;

    friend bool operator==(const NoiseMetadata&, const NoiseMetadata&) = default;
};

struct MeasurementFile {
    int schema_version = kSchemaVersion;
    MeasurementSet values = ReducedMeasurements{};
    std::optional<Geometry> geometry;
    std::string comment;
    std::optional<NoiseMetadata> noise;
    /// Raw replicate readings per key, storage order; empty when absent.
    std::vector<std::vector<double>> repetitions;

    [[nodiscard]] std::string_view tag() const {
        return std::visit([](const auto& m) { return std::decay_t<decltype(m)>::tag(); }, values);
    }
};

inline std::optional<MeasurementSet> empty_set_for(std::string_view tag) {
    if (tag == SinglePostureMeasurements::tag()) return SinglePostureMeasurements{};
    if (tag == DoublePostureMeasurements::tag()) return DoublePostureMeasurements{};
    if (tag == ReducedMeasurements::tag()) return ReducedMeasurements{};
    return std::nullopt;
}

namespace detail {

template <class M>
void read_values(const json& j, M& m, std::vector<std::vector<double>>& reps) {
    const bool has_reps = j.contains("repetitions");
    const json* values = j.contains("values") ? &j["values"] : nullptr;
    if (values && !values->is_object()) throw InputError("measurement file: 'values' must be an object");
    if (has_reps && !j["repetitions"].is_object()) throw InputError("measurement file: 'repetitions' must be an object");
    if (!values && !has_reps) throw InputError("measurement file: missing key 'values'");

    std::vector<std::string> missing;
    for (std::size_t i = 0; i < M::kSize; ++i) {
        const std::string key(M::names()[i]);
        if (has_reps && j["repetitions"].contains(key)) {
            const json& arr = j["repetitions"][key];
            if (!arr.is_array() || arr.empty()) {
                throw InputError("measurement file: repetitions '" + key + "' must be a non-empty array");
            }
            std::vector<double> r;
            double sum = 0.0;
            for (const json& x : arr) {
                if (!x.is_number() || !std::isfinite(x.get<double>())) {
                    throw InputError("measurement file: repetitions '" + key + "' has a non-finite entry");
                }
                r.push_back(x.get<double>());
                sum += r.back();
            }
            m.values[i] = sum / static_cast<double>(r.size());
            reps.push_back(std::move(r));
        } else if (values && values->contains(key)) {
            m.values[i] = number(*values, key, "measurement file");
            if (has_reps) reps.emplace_back();
        } else {
            missing.push_back(key);
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& k : missing) list += (list.empty() ? "" : ", ") + k;
        throw InputError("measurement file: missing " + std::string(M::tag()) + " key(s): " + list);
    }
    auto unknown = [&](const json& obj, std::string_view section) {
        for (const auto& [key, _] : obj.items()) {
            if (!M::find(key)) {
                throw InputError("measurement file: unknown key '" + key + "' in '" + std::string(section) +
                                 "' for method " + std::string(M::tag()));
            }
        }
    };
    if (values) unknown(*values, "values");
    if (has_reps) unknown(j["repetitions"], "repetitions");
}

inline JointOffsets offsets_from_json(const json& j, std::string_view where) {
    if (!j.is_array() || j.size() != 3) throw InputError(std::string(where) + ": expected [x, y, z]");
    JointOffsets d;
    for (std::size_t i = 0; i < 3; ++i) {
        if (!j[i].is_number()) throw InputError(std::string(where) + ": expected numbers");
        d[i] = j[i].get<double>();
    }
    return d;
}

}  // namespace detail

inline MeasurementFile measurement_file_from_json(const json& j) {
    if (!j.is_object()) throw InputError("measurement file: expected a JSON object");
    MeasurementFile f;
    f.schema_version = static_cast<int>(detail::number(j, "schema_version", "measurement file"));
    if (f.schema_version != kSchemaVersion) {
        throw InputError("measurement file: unsupported schema_version " + std::to_string(f.schema_version));
    }
    if (!j.contains("units")) throw InputError("measurement file: missing key 'units'");
    if (!j["units"].is_string() || j["units"].get<std::string>() != kUnits) {
        throw InputError("measurement file: units must be \"mm\", got " + j["units"].dump());
    }
    if (!j.contains("method")) throw InputError("measurement file: missing key 'method'");
    const std::string tag = j["method"].is_string() ? j["method"].get<std::string>() : j["method"].dump();
    const auto empty = empty_set_for(tag);
    if (!empty) {
        throw InputError("measurement file: unknown method '" + tag +
                         "' (expected single-posture, double-full or double-reduced)");
    }
    f.values = *empty;
    std::visit([&](auto& m) { detail::read_values(j, m, f.repetitions); }, f.values);

    if (j.contains("geometry")) f.geometry = geometry_from_json(j["geometry"]);
    if (j.contains("comment")) f.comment = j["comment"].is_string() ? j["comment"].get<std::string>() : j["comment"].dump();
    if (j.contains("noise")) {
        const json& n = j["noise"];
        NoiseMetadata meta;
        meta.sigma = detail::number(n, "sigma", "noise");
        meta.seed = n.value("seed", std::uint64_t{0});
        meta.repetitions = n.value("repetitions", 1);
        meta.generator = n.value("generator", std::string(GaussianStream::kAlgorithm));
        if (n.contains("quantize")) meta.quantize = detail::number(n, "quantize", "noise");
        if (n.contains("true_offsets")) meta.true_offsets = detail::offsets_from_json(n["true_offsets"], "noise.true_offsets");
        f.noise = meta;
    }
    return f;
}

inline MeasurementFile parse_measurement_file(std::string_view text) {
    return measurement_file_from_json(parse_json(text, "measurement file"));
}

inline MeasurementFile load_measurement_file(const std::string& path) {
    return parse_measurement_file(read_file(path));
}

inline json to_json(const MeasurementFile& f) {
    json j;
    j["schema_version"] = f.schema_version;
    j["units"] = kUnits;
    j["method"] = f.tag();
    if (!f.comment.empty()) j["comment"] = f.comment;
    if (f.geometry) j["geometry"] = geometry_to_json(*f.geometry);
    std::visit(
        [&](const auto& m) {
            json values = json::object();
            for (std::size_t i = 0; i < m.kSize; ++i) values[std::string(m.names()[i])] = m.values[i];
            j["values"] = values;
            if (!f.repetitions.empty()) {
                json reps = json::object();
                for (std::size_t i = 0; i < m.kSize && i < f.repetitions.size(); ++i) {
                    if (!f.repetitions[i].empty()) reps[std::string(m.names()[i])] = f.repetitions[i];
                }
                j["repetitions"] = reps;
            }
        },
        f.values);
    if (f.noise) {
        json n{{"sigma", f.noise->sigma},
               {"seed", f.noise->seed},
               {"repetitions", f.noise->repetitions},
               {"generator", f.noise->generator}};
        if (f.noise->quantize) n["quantize"] = *f.noise->quantize;
        if (f.noise->true_offsets) {
            const auto& d = *f.noise->true_offsets;
            n["true_offsets"] = {d.x(), d.y(), d.z()};
        }
        j["noise"] = n;
    }
    return j;
}

inline std::string serialize(const MeasurementFile& f) { return to_json(f).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Calibration reports
// ---------------------------------------------------------------------------

struct SolverDiagnostics {
    int iterations = 0;
    bool converged = true;
    double gradient_norm = 0.0;

    friend bool operator==(const SolverDiagnostics&, const SolverDiagnostics&) = default;
};

struct CalibrationReport {
    int schema_version = kSchemaVersion;
    std::string toolkit_version{kToolkitVersion};
    std::string input_digest;
    std::string method;
    std::string measurement_shape;
    JointOffsets offsets;
    std::vector<std::pair<std::string, double>> residuals;  ///< storage order
    double residual_rms = 0.0;
    double sigma_hat = 0.0;
    double sigma_rho_at_sigma_hat = 0.0;
    SolverDiagnostics solver;

    friend bool operator==(const CalibrationReport&, const CalibrationReport&) = default;
};

inline json to_json(const CalibrationReport& r) {
    json res = json::object();
    for (const auto& [k, v] : r.residuals) res[k] = v;
    return json{{"schema_version", r.schema_version},
                {"toolkit_version", r.toolkit_version},
                {"input_digest", r.input_digest},
                {"method", r.method},
                {"measurement_shape", r.measurement_shape},
                {"units", kUnits},
                {"offsets", {{"x", r.offsets.x()}, {"y", r.offsets.y()}, {"z", r.offsets.z()}}},
                {"residuals", res},
                {"residual_rms", r.residual_rms},
                {"sigma_hat", r.sigma_hat},
                {"sigma_rho_at_sigma_hat", r.sigma_rho_at_sigma_hat},
                {"solver",
                 {{"iterations", r.solver.iterations},
                  {"converged", r.solver.converged},
                  {"gradient_norm", r.solver.gradient_norm}}}};
}

inline CalibrationReport report_from_json(const json& j) {
    if (!j.is_object()) throw InputError("report: expected a JSON object");
    CalibrationReport r;
    try {
        r.schema_version = j.at("schema_version").get<int>();
        if (r.schema_version != kSchemaVersion) {
            throw InputError("report: unsupported schema_version " + std::to_string(r.schema_version));
        }
        r.toolkit_version = j.at("toolkit_version").get<std::string>();
        r.input_digest = j.at("input_digest").get<std::string>();
        r.method = j.at("method").get<std::string>();
        r.measurement_shape = j.at("measurement_shape").get<std::string>();
        const json& o = j.at("offsets");
        r.offsets = JointOffsets(o.at("x").get<double>(), o.at("y").get<double>(), o.at("z").get<double>());
        for (const auto& [k, v] : j.at("residuals").items()) r.residuals.emplace_back(k, v.get<double>());
        r.residual_rms = j.at("residual_rms").get<double>();
        r.sigma_hat = j.at("sigma_hat").get<double>();
        r.sigma_rho_at_sigma_hat = j.at("sigma_rho_at_sigma_hat").get<double>();
        const json& s = j.at("solver");
        r.solver.iterations = s.at("iterations").get<int>();
        r.solver.converged = s.at("converged").get<bool>();
        r.solver.gradient_norm = s.at("gradient_norm").get<double>();
    } catch (const json::exception& e) {
        throw InputError(std::string("report: ") + e.what());
    }
    return r;
}

inline std::string serialize(const CalibrationReport& r) { return to_json(r).dump(2) + "\n"; }

inline CalibrationReport parse_report(std::string_view text) { return report_from_json(parse_json(text, "report")); }

}  // namespace orthocal::io
