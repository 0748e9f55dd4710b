#pragma once

// End-to-end commands behind the rftrack CLI. Every command reads its inputs from a RunConfig,
// writes into an output directory and is deterministic for a given configuration.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "rftrack/dataio.hpp"
#include "rftrack/ekf.hpp"
#include "rftrack/errors.hpp"
#include "rftrack/geodesy.hpp"
#include "rftrack/metrics.hpp"
#include "rftrack/simulation.hpp"
#include "rftrack/tdoa.hpp"

namespace rftrack::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

/// Origin used by `simulate` when the config leaves it on "auto" (an open field in Raleigh, NC).
inline constexpr GeoPoint kDefaultSimOrigin{35.7721, -78.6528};

using SensorPosition = std::variant<GeoPoint, EnuPoint>;

struct SimSettings {
    double sigma_t = 0.0;  // s
    double outlier_rate = 0.0;
    double outlier_max_m = 200.0;
    std::uint64_t seed = 1;
    std::int64_t rf_period_ms = 1000;
    FlightPlan plan;
};

struct FilterSettings {
    RMode r_mode = RMode::Mean;
    std::optional<Eigen::Vector2d> r_diag;  // explicit R diagonal, overrides estimation
    double v_max = 20.0;
    double init_acc_var = 25.0;
    double init_omega_var = 1.0;
    std::map<std::string, NoiseSigmas> sigmas;  // per-segment overrides by id
};

struct Paths {
    std::optional<fs::path> truth, rf, segments, estimate, aligned;
};

/// Fully parsed run configuration. `origin` empty means "auto" (first ground-truth sample).
struct RunConfig {
    std::optional<GeoPoint> origin;
    std::int64_t tol_ms = 1;
    double threshold_m = 60.0;
    bool clean_enabled = true;
    std::size_t reference_idx = 0;
    std::vector<SensorPosition> sensors;
    SimSettings sim;
    FilterSettings filter;
    Paths paths;
    unsigned parallel = 1;
};

/// Command-line overrides applied on top of the JSON config.
struct Overrides {
    std::optional<std::uint64_t> seed;
    bool raw = false;
    std::optional<unsigned> parallel;
    std::optional<std::string> r_mode;
    std::optional<double> threshold_m;
    std::optional<std::int64_t> tol_ms;
};

namespace detail {

inline GeoPoint geo_from_json(const json& j) {
    return {j.at("lat_deg").get<double>(), j.at("lon_deg").get<double>()};
}

inline json geo_to_json(const GeoPoint& g) { return {{"lat_deg", g.lat_deg}, {"lon_deg", g.lon_deg}}; }

inline json enu_to_json(const EnuPoint& p) { return {{"x", p.x}, {"y", p.y}}; }

inline EnuPoint enu_from_json(const json& j) { return {j.at("x").get<double>(), j.at("y").get<double>()}; }

inline NoiseSigmas sigmas_from_json(const json& j) {
    NoiseSigmas s{j.value("acc", 0.0), j.value("jerk", 0.0), j.value("omega", 0.0)};
    if (s.acc < 0 || s.jerk < 0 || s.omega < 0) throw ValidationError("sigmas must be non-negative");
    return s;
}

inline json sigmas_to_json(const NoiseSigmas& s) {
    return {{"acc", s.acc}, {"jerk", s.jerk}, {"omega", s.omega}};
}

inline RMode parse_r_mode(const std::string& s) {
    if (s == "mean") return RMode::Mean;
    if (s == "mse") return RMode::Mse;
    throw ValidationError("r_mode must be 'mean' or 'mse', got '" + s + "'");
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : fs::absolute(base / path).lexically_normal();
}

inline void write_json(const fs::path& path, const json& j) {
    auto out = dataio::detail::open_output(path);
    out << j.dump(2) << '\n';
}

inline json stats_json(const ErrorStats& s) {
    return {{"min_m", s.min_m}, {"max_m", s.max_m}, {"mean_m", s.mean_m}, {"std_m", s.std_m},
            {"n", s.n}};
}

}  // namespace detail

/// Parses a config document. Relative paths resolve against `base_dir`.
inline RunConfig parse_config(const json& j, const fs::path& base_dir) {
    RunConfig cfg;
    try {
        if (j.contains("origin") && !(j["origin"].is_string() && j["origin"] == "auto")) {
            cfg.origin = detail::geo_from_json(j["origin"]);
            geodesy::require_valid(*cfg.origin, "origin");
        }
        if (j.contains("align")) cfg.tol_ms = j["align"].value("tol_ms", cfg.tol_ms);
        if (j.contains("clean")) {
            cfg.threshold_m = j["clean"].value("threshold_m", cfg.threshold_m);
            cfg.clean_enabled = j["clean"].value("enabled", cfg.clean_enabled);
        }
        if (cfg.tol_ms < 0) throw ValidationError("align.tol_ms must be non-negative");
        if (!(cfg.threshold_m > 0)) throw ValidationError("clean.threshold_m must be positive");

        if (j.contains("sensors")) {
            const auto& s = j["sensors"];
            cfg.reference_idx = s.value("reference_idx", std::size_t{0});
            for (const auto& p : s.at("sensors")) {
                if (p.contains("lat_deg")) {
                    cfg.sensors.emplace_back(detail::geo_from_json(p));
                } else {
                    cfg.sensors.emplace_back(detail::enu_from_json(p));
                }
            }
        }

        if (j.contains("sim")) {
            const auto& s = j["sim"];
            auto& sim = cfg.sim;
            sim.sigma_t = s.value("sigma_t", sim.sigma_t);
            sim.outlier_rate = s.value("outlier_rate", sim.outlier_rate);
            sim.outlier_max_m = s.value("outlier_max_m", sim.outlier_max_m);
            sim.seed = s.value("seed", sim.seed);
            sim.rf_period_ms = s.value("rf_period_ms", sim.rf_period_ms);
            sim.plan.start_ms = s.value("start_ms", sim.plan.start_ms);
            sim.plan.step_ms = s.value("truth_step_ms", sim.plan.step_ms);
            sim.plan.accel_noise = s.value("accel_noise", sim.plan.accel_noise);
            if (s.contains("start")) sim.plan.start = detail::enu_from_json(s["start"]);
            if (s.contains("velocity")) sim.plan.velocity = detail::enu_from_json(s["velocity"]);
            if (sim.sigma_t < 0) throw ValidationError("sim.sigma_t must be non-negative");
            if (sim.outlier_rate < 0 || sim.outlier_rate > 1) {
                throw ValidationError("sim.outlier_rate must lie in [0, 1]");
            }
            if (sim.rf_period_ms < 0) throw ValidationError("sim.rf_period_ms must be non-negative");
            for (const auto& l : s.value("legs", json::array())) {
                FlightLeg leg;
                const auto label = l.at("mm").get<std::string>();
                const auto mm = parse_motion_model(label);
                if (!mm) throw ValidationError("unknown motion model '" + label + "' in sim.legs");
                leg.mm = *mm;
                leg.duration_s = l.at("duration_s").get<double>();
                leg.omega = l.value("omega", 0.0);
                leg.accel = l.value("accel", 0.0);
                if (l.contains("sigmas")) leg.sigmas = detail::sigmas_from_json(l["sigmas"]);
                leg.segment = l.value("segment", true);
                sim.plan.legs.push_back(leg);
            }
        }

        if (j.contains("filter")) {
            const auto& f = j["filter"];
            auto& flt = cfg.filter;
            flt.r_mode = detail::parse_r_mode(f.value("r_mode", std::string("mean")));
            if (f.contains("r_diag") && !f["r_diag"].is_null()) {
                const auto d = f["r_diag"].get<std::vector<double>>();
                if (d.size() != 2 || d[0] < 0 || d[1] < 0) {
                    throw ValidationError("filter.r_diag must hold two non-negative values");
                }
                flt.r_diag = Eigen::Vector2d(d[0], d[1]);
            }
            flt.v_max = f.value("v_max", flt.v_max);
            flt.init_acc_var = f.value("init_acc_var", flt.init_acc_var);
            flt.init_omega_var = f.value("init_omega_var", flt.init_omega_var);
            if (f.contains("sigmas")) {
                for (const auto& [id, sg] : f["sigmas"].items()) {
                    flt.sigmas[id] = detail::sigmas_from_json(sg);
                }
            }
            if (!(flt.v_max >= 0) || !(flt.init_acc_var >= 0) || !(flt.init_omega_var >= 0)) {
                throw ValidationError("filter initial covariance scalars must be non-negative");
            }
        }

        if (j.contains("paths")) {
            const auto& p = j["paths"];
            auto opt = [&](const char* key, std::optional<fs::path>& dst) {
                if (p.contains(key) && !p[key].is_null()) {
                    dst = detail::resolve(base_dir, p[key].get<std::string>());
                }
            };
            opt("truth", cfg.paths.truth);
            opt("rf", cfg.paths.rf);
            opt("segments", cfg.paths.segments);
            opt("estimate", cfg.paths.estimate);
            opt("aligned", cfg.paths.aligned);
        }
        cfg.parallel = j.value("parallel", cfg.parallel);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline RunConfig load_config(const fs::path& path) {
    auto in = dataio::detail::open_input(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    return parse_config(j, fs::absolute(path).parent_path());
}

inline void apply(RunConfig& cfg, const Overrides& o) {
    if (o.seed) cfg.sim.seed = *o.seed;
    if (o.raw) cfg.clean_enabled = false;
    if (o.parallel) cfg.parallel = std::max(1u, *o.parallel);
    if (o.r_mode) cfg.filter.r_mode = detail::parse_r_mode(*o.r_mode);
    if (o.threshold_m) {
        if (!(*o.threshold_m > 0)) throw ValidationError("--threshold-m must be positive");
        cfg.threshold_m = *o.threshold_m;
    }
    if (o.tol_ms) {
        if (*o.tol_ms < 0) throw ValidationError("--tol-ms must be non-negative");
        cfg.tol_ms = *o.tol_ms;
    }
}

/// Serializes a config so that parse_config(to_json(c)) reproduces `c`. Paths are absolute.
inline json to_json(const RunConfig& cfg) {
    json j;
    j["origin"] = cfg.origin ? detail::geo_to_json(*cfg.origin) : json("auto");
    j["align"] = {{"tol_ms", cfg.tol_ms}};
    j["clean"] = {{"threshold_m", cfg.threshold_m}, {"enabled", cfg.clean_enabled}};
    if (!cfg.sensors.empty()) {
        json list = json::array();
        for (const auto& s : cfg.sensors) {
            list.push_back(std::holds_alternative<GeoPoint>(s) ? detail::geo_to_json(std::get<GeoPoint>(s))
                                                               : detail::enu_to_json(std::get<EnuPoint>(s)));
        }
        j["sensors"] = {{"reference_idx", cfg.reference_idx}, {"sensors", list}};
    }
    const auto& sim = cfg.sim;
    json legs = json::array();
    for (const auto& l : sim.plan.legs) {
        json lj = {{"mm", std::string(to_string(l.mm))}, {"duration_s", l.duration_s}};
        if (l.mm == MotionModel::CT) lj["omega"] = l.omega;
        if (l.mm == MotionModel::CA) lj["accel"] = l.accel;
        if (l.sigmas) lj["sigmas"] = detail::sigmas_to_json(*l.sigmas);
        if (!l.segment) lj["segment"] = false;
        legs.push_back(lj);
    }
    j["sim"] = {{"sigma_t", sim.sigma_t},
                {"outlier_rate", sim.outlier_rate},
                {"outlier_max_m", sim.outlier_max_m},
                {"seed", sim.seed},
                {"rf_period_ms", sim.rf_period_ms},
                {"start_ms", sim.plan.start_ms},
                {"truth_step_ms", sim.plan.step_ms},
                {"accel_noise", sim.plan.accel_noise},
                {"start", detail::enu_to_json(sim.plan.start)},
                {"velocity", detail::enu_to_json(sim.plan.velocity)},
                {"legs", legs}};
    const auto& f = cfg.filter;
    json sig = json::object();
    for (const auto& [id, s] : f.sigmas) sig[id] = detail::sigmas_to_json(s);
    j["filter"] = {{"r_mode", f.r_mode == RMode::Mean ? "mean" : "mse"},
                   {"r_diag", f.r_diag ? json{(*f.r_diag)(0), (*f.r_diag)(1)} : json(nullptr)},
                   {"v_max", f.v_max},
                   {"init_acc_var", f.init_acc_var},
                   {"init_omega_var", f.init_omega_var},
                   {"sigmas", sig}};
    json paths = json::object();
    auto put = [&](const char* key, const std::optional<fs::path>& p) {
        if (p) paths[key] = p->string();
    };
    put("truth", cfg.paths.truth);
    put("rf", cfg.paths.rf);
    put("segments", cfg.paths.segments);
    put("estimate", cfg.paths.estimate);
    put("aligned", cfg.paths.aligned);
    j["paths"] = paths;
    j["parallel"] = cfg.parallel;
    return j;
}

/// Resolves configured sensor positions into the local frame of `origin`.
inline SensorArray sensor_array(const RunConfig& cfg, const GeoPoint& origin) {
    SensorArray arr;
    arr.reference_idx = cfg.reference_idx;
    for (const auto& s : cfg.sensors) {
        arr.positions.push_back(std::holds_alternative<GeoPoint>(s)
                                    ? geodesy::to_enu(std::get<GeoPoint>(s), origin)
                                    : std::get<EnuPoint>(s));
    }
    arr.validate();
    return arr;
}

/// Outcome of a command: warnings plus machine-readable details for summary.json.
struct CommandResult {
    Diagnostics diag;
    json details = json::object();
    std::string text;  // human-readable report, printed by the CLI
};

namespace detail {

inline void finish(const std::string& command, const RunConfig& cfg, const fs::path& out_dir,
                   CommandResult& result) {
    write_json(out_dir / "resolved_config.json", to_json(cfg));
    json summary = {{"command", command},
                    {"status", "ok"},
                    {"warning_count", result.diag.count()},
                    {"warnings", result.diag.warnings},
                    {"details", result.details}};
    write_json(out_dir / "summary.json", summary);
}

inline fs::path input_or(const std::optional<fs::path>& configured, const fs::path& fallback) {
    return configured ? *configured : fallback;
}

inline void require_file(const fs::path& p, const char* what) {
    if (!fs::exists(p)) {
        throw IoError(fmt::format("{} file '{}' not found (set paths.{} in the config)", what,
                                  p.string(), what));
    }
}

struct LoadedLogs {
    GeoPoint origin;
    std::vector<TimedSample> truth;
    std::vector<TimedSample> est;
    std::vector<AlignedPair> pairs;
};

inline LoadedLogs load_and_align(RunConfig& cfg, const fs::path& truth_path,
                                 const fs::path& est_path, Diagnostics& diag) {
    require_file(truth_path, "truth");
    require_file(est_path, est_path.filename() == "rf.csv" ? "rf" : "estimate");
    const auto truth_geo = dataio::parse_uav_log(truth_path, &diag);
    const auto est_geo = dataio::parse_rf_log(est_path, &diag);
    if (!cfg.origin) cfg.origin = truth_geo.front().pos;
    LoadedLogs out;
    out.origin = *cfg.origin;
    out.truth = dataio::to_enu(truth_geo, out.origin);
    out.est = dataio::to_enu(est_geo, out.origin);
    out.pairs = dataio::align(out.truth, out.est, cfg.tol_ms);
    if (out.pairs.empty()) diag.warn("no RF samples matched a ground-truth timestamp");
    return out;
}

inline std::vector<double> errors_of(std::span<const AlignedPair> pairs) {
    std::vector<double> e;
    e.reserve(pairs.size());
    for (const auto& p : pairs) e.push_back(p.error());
    return e;
}

inline void write_stats_rows(std::ostream& out, const std::string& id, const std::string& mm,
                             const ErrorStats& s) {
    for (const auto& [name, v] : metrics::stat_fields(s)) {
        out << fmt::format("{},{},{},{:.6f}\n", id, mm, name, v);
    }
}

}  // namespace detail

/// Builds a synthetic flight, runs the TDoA sensing chain over it and writes truth.csv,
/// rf.csv and segments.json.
inline CommandResult cmd_simulate(RunConfig cfg, const fs::path& out_dir) {
    CommandResult result;
    if (!cfg.origin) cfg.origin = kDefaultSimOrigin;
    if (cfg.sensors.empty()) throw ValidationError("simulate needs a sensor array (config 'sensors')");
    const SensorArray arr = sensor_array(cfg, *cfg.origin);
    fs::create_directories(out_dir);

    const auto truth = sim::build_truth(cfg.sim.plan, cfg.sim.seed);
    tdoa::FlightSimOptions opt;
    opt.period_ms = cfg.sim.rf_period_ms;
    opt.outliers = {cfg.sim.outlier_rate, cfg.sim.outlier_max_m};
    const auto flight = tdoa::simulate_flight(truth.samples, arr, cfg.sim.sigma_t,
                                              tdoa::epoch_seed(cfg.sim.seed, -1), opt);
    if (flight.dropped > 0) {
        result.diag.warn(fmt::format("{} epoch(s) dropped by the TDoA solver", flight.dropped));
    }
    if (flight.rf.empty()) throw Error("simulation produced no RF estimates");

    dataio::write_geo_log(out_dir / "truth.csv", dataio::to_geo(truth.samples, *cfg.origin));
    dataio::write_geo_log(out_dir / "rf.csv", dataio::to_geo(flight.rf, *cfg.origin));

    const auto pairs = dataio::align(truth.samples, flight.rf, cfg.tol_ms);
    const auto segments = sim::segments_for_legs(cfg.sim.plan, truth, pairs, &result.diag);
    detail::write_json(out_dir / "segments.json", dataio::segments_to_json(segments));

    const auto errors = detail::errors_of(pairs);
    double sq = 0.0;
    for (double e : errors) sq += e * e;
    result.details = {{"truth_samples", truth.samples.size()},
                      {"rf_samples", flight.rf.size()},
                      {"dropped_epochs", flight.dropped},
                      {"outliers", flight.outliers},
                      {"segments", segments.size()},
                      {"aligned", pairs.size()}};
    if (!errors.empty()) {
        result.details["rf_error"] = detail::stats_json(metrics::stats(errors));
        result.details["rf_rmse_m"] = std::sqrt(sq / static_cast<double>(errors.size()));
    }
    detail::finish("simulate", cfg, out_dir, result);
    return result;
}

/// Align, clean (unless raw), filter every segment and write the track, report and CDFs.
inline CommandResult cmd_track(RunConfig cfg, const fs::path& out_dir) {
    CommandResult result;
    auto& diag = result.diag;
    const auto truth_path = detail::input_or(cfg.paths.truth, out_dir / "truth.csv");
    const auto rf_path = detail::input_or(cfg.paths.rf, out_dir / "rf.csv");
    const auto seg_path = detail::input_or(cfg.paths.segments, out_dir / "segments.json");
    detail::require_file(seg_path, "segments");
    auto logs = detail::load_and_align(cfg, truth_path, rf_path, diag);
    const auto& all_pairs = logs.pairs;

    auto plan = dataio::load_segments(seg_path, all_pairs.size());
    for (auto& seg : plan.segments) {
        if (const auto it = cfg.filter.sigmas.find(seg.id); it != cfg.filter.sigmas.end()) {
            seg.sigmas = it->second;
        }
    }
    const auto used = cfg.clean_enabled ? dataio::clean(all_pairs, cfg.threshold_m) : all_pairs;
    if (used.empty()) throw Error("no aligned epochs left after cleaning");

    FilterConfig fc;
    fc.R = cfg.filter.r_diag ? Matrix2(cfg.filter.r_diag->asDiagonal())
                             : ekf::estimate_R(used, cfg.filter.r_mode);
    fc.v_max = cfg.filter.v_max;
    fc.init_acc_var = cfg.filter.init_acc_var;
    fc.init_omega_var = cfg.filter.init_omega_var;

    fs::create_directories(out_dir);
    const auto run = ekf::run_trajectory(plan.segments, used, fc, cfg.parallel);
    for (const auto& issue : run.issues) {
        diag.warn(fmt::format("segment '{}' {}: {}", issue.segment_id,
                              issue.skipped ? "skipped" : "failed", issue.message));
    }

    std::vector<IndexedError> rf_err, ekf_err;
    for (const auto& p : used) rf_err.push_back({p.index, p.error()});
    auto track_out = dataio::detail::open_output(out_dir / "track.csv");
    track_out << "segment,mm,index,t_ms,x,y,lat_deg,lon_deg,uav_x,uav_y,rf_x,rf_y,rf_error_m,"
                 "ekf_error_m\n";
    std::vector<double> ekf_values;
    for (const auto& [seg, track] : run.tracks) {
        for (const auto& pt : track.points) {
            const auto& pair = all_pairs[pt.index];
            const double e = distance(pair.uav, pt.pos);
            ekf_err.push_back({pt.index, e});
            ekf_values.push_back(e);
            const auto g = geodesy::from_enu(pt.pos, logs.origin);
            track_out << fmt::format(
                "{},{},{},{},{:.6f},{:.6f},{:.11f},{:.11f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n",
                seg.id, to_string(seg.mm), pt.index, pt.t_ms, pt.pos.x, pt.pos.y, g.lat_deg,
                g.lon_deg, pair.uav.x, pair.uav.y, pair.rf.x, pair.rf.y, pair.error(), e);
        }
    }
    track_out.close();

    const auto report = metrics::segment_report(plan.segments, rf_err, ekf_err, &diag);
    metrics::write_report_csv(out_dir / "report.csv", report);
    const auto rf_values = detail::errors_of(used);
    metrics::write_cdf(out_dir / "cdf_rf.csv", metrics::cdf(rf_values));
    if (ekf_values.empty()) {
        diag.warn("no segment produced a track; cdf_ekf.csv is empty");
        auto out = dataio::detail::open_output(out_dir / "cdf_ekf.csv");
        out << "error_m,fraction\n";
    } else {
        metrics::write_cdf(out_dir / "cdf_ekf.csv", metrics::cdf(ekf_values));
    }

    std::vector<TimedSample> truth_at_epochs;
    for (const auto& p : all_pairs) truth_at_epochs.push_back({p.t_ms, p.uav});
    json velocity = json::array();
    for (const auto& v : metrics::velocity_profile(truth_at_epochs, plan.segments, &diag)) {
        json vj = {{"segment", v.id}, {"mm", std::string(to_string(v.mm))},
                   {"speed_mean", v.speed_mean}, {"speed_std", v.speed_std}};
        if (v.accel_mean) {
            vj["accel_mean"] = *v.accel_mean;
            vj["accel_std"] = *v.accel_std;
        }
        velocity.push_back(vj);
    }

    result.details = {{"aligned", all_pairs.size()},
                      {"used", used.size()},
                      {"removed_by_cleaning", all_pairs.size() - used.size()},
                      {"segments", plan.segments.size()},
                      {"segments_filtered", run.tracks.size()},
                      {"excluded_epochs", plan.excluded.size()},
                      {"R_diag", {fc.R(0, 0), fc.R(1, 1)}},
                      {"rf_error", detail::stats_json(metrics::stats(rf_values))},
                      {"velocity", velocity}};
    if (!all_pairs.empty()) {
        result.details["rf_error_raw"] = detail::stats_json(metrics::stats(detail::errors_of(all_pairs)));
    }
    if (!ekf_values.empty()) result.details["ekf_error"] = detail::stats_json(metrics::stats(ekf_values));
    result.text = metrics::render_text(report);
    detail::finish("track", cfg, out_dir, result);
    return result;
}

/// Metrics without filtering for any estimate log against the ground truth.
inline CommandResult cmd_evaluate(RunConfig cfg, const fs::path& out_dir) {
    CommandResult result;
    auto& diag = result.diag;
    const auto truth_path = detail::input_or(cfg.paths.truth, out_dir / "truth.csv");
    const auto est_path = detail::input_or(cfg.paths.estimate, detail::input_or(cfg.paths.rf, out_dir / "rf.csv"));
    auto logs = detail::load_and_align(cfg, truth_path, est_path, diag);
    const auto used = cfg.clean_enabled ? dataio::clean(logs.pairs, cfg.threshold_m) : logs.pairs;
    if (used.empty()) throw Error("no aligned epochs to evaluate");

    std::vector<Segment> segments;
    const auto seg_path = detail::input_or(cfg.paths.segments, out_dir / "segments.json");
    if (fs::exists(seg_path)) segments = dataio::load_segments(seg_path, logs.pairs.size()).segments;

    fs::create_directories(out_dir);
    const auto errors = detail::errors_of(used);
    const auto overall = metrics::stats(errors);
    auto out = dataio::detail::open_output(out_dir / "evaluation.csv");
    out << "segment,mm,stat,est_m\n";
    detail::write_stats_rows(out, "ALL", "-", overall);
    json per_segment = json::array();
    for (const auto& seg : segments) {
        std::vector<double> e;
        for (const auto& p : used)
            if (seg.contains(p.index)) e.push_back(p.error());
        if (e.empty()) {
            diag.warn(fmt::format("segment '{}' has no error data; omitted", seg.id));
            continue;
        }
        const auto s = metrics::stats(e);
        detail::write_stats_rows(out, seg.id, std::string(to_string(seg.mm)), s);
        per_segment.push_back({{"segment", seg.id}, {"stats", detail::stats_json(s)}});
    }
    out.close();
    const auto curve = metrics::cdf(errors);
    metrics::write_cdf(out_dir / "cdf_est.csv", curve);
    result.details = {{"aligned", logs.pairs.size()},
                      {"used", used.size()},
                      {"error", detail::stats_json(overall)},
                      {"p90_m", metrics::quantile(curve, 0.9)},
                      {"segments", per_segment}};
    result.text = fmt::format("n={} min={:.2f} max={:.2f} mean={:.2f} std={:.2f} p90={:.2f} (m)\n",
                              overall.n, overall.min_m, overall.max_m, overall.mean_m,
                              overall.std_m, metrics::quantile(curve, 0.9));
    detail::finish("evaluate", cfg, out_dir, result);
    return result;
}

/// Writes aligned.csv: the matched (truth, RF) pairs in the local frame.
inline CommandResult cmd_align(RunConfig cfg, const fs::path& out_dir) {
    CommandResult result;
    const auto truth_path = detail::input_or(cfg.paths.truth, out_dir / "truth.csv");
    const auto rf_path = detail::input_or(cfg.paths.rf, out_dir / "rf.csv");
    auto logs = detail::load_and_align(cfg, truth_path, rf_path, result.diag);
    fs::create_directories(out_dir);
    dataio::write_aligned(out_dir / "aligned.csv", logs.pairs);
    result.details = {{"truth_samples", logs.truth.size()},
                      {"rf_samples", logs.est.size()},
                      {"aligned", logs.pairs.size()}};
    detail::finish("align", cfg, out_dir, result);
    return result;
}

/// Reads aligned.csv and writes clean.csv with the pairs above the threshold removed.
inline CommandResult cmd_clean(RunConfig cfg, const fs::path& out_dir) {
    CommandResult result;
    const auto in_path = detail::input_or(cfg.paths.aligned, out_dir / "aligned.csv");
    detail::require_file(in_path, "aligned");
    const auto pairs = dataio::read_aligned(in_path);
    const auto kept = dataio::clean(pairs, cfg.threshold_m);
    fs::create_directories(out_dir);
    dataio::write_aligned(out_dir / "clean.csv", kept);
    result.details = {{"input", pairs.size()},
                      {"kept", kept.size()},
                      {"removed", pairs.size() - kept.size()},
                      {"threshold_m", cfg.threshold_m}};
    detail::finish("clean", cfg, out_dir, result);
    return result;
}

/// Converts the configured geodetic logs into local-frame CSVs (truth_enu.csv, rf_enu.csv).
inline CommandResult cmd_convert(RunConfig cfg, const fs::path& out_dir) {
    CommandResult result;
    const auto truth_path = detail::input_or(cfg.paths.truth, out_dir / "truth.csv");
    const auto rf_path = detail::input_or(cfg.paths.rf, out_dir / "rf.csv");
    detail::require_file(truth_path, "truth");
    const auto truth = dataio::parse_uav_log(truth_path, &result.diag);
    if (!cfg.origin) cfg.origin = truth.front().pos;
    fs::create_directories(out_dir);
    dataio::write_enu_log(out_dir / "truth_enu.csv", dataio::to_enu(truth, *cfg.origin));
    result.details["truth_samples"] = truth.size();
    if (fs::exists(rf_path)) {
        const auto rf = dataio::parse_rf_log(rf_path, &result.diag);
        dataio::write_enu_log(out_dir / "rf_enu.csv", dataio::to_enu(rf, *cfg.origin));
        result.details["rf_samples"] = rf.size();
    }
    result.details["origin"] = detail::geo_to_json(*cfg.origin);
    detail::finish("convert", cfg, out_dir, result);
    return result;
}

/// Writes a summary.json describing a failed command.
inline void write_failure(const std::string& command, const fs::path& out_dir,
                          const std::string& message, const Diagnostics& diag = {}) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) return;
    std::ofstream out(out_dir / "summary.json", std::ios::binary | std::ios::trunc);
    if (!out) return;
    json summary = {{"command", command},
                    {"status", "error"},
                    {"error", message},
                    {"warning_count", diag.count()},
                    {"warnings", diag.warnings}};
    out << summary.dump(2) << '\n';
}

}  // namespace rftrack::pipeline
