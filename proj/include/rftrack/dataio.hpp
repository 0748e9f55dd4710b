#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "rftrack/errors.hpp"
#include "rftrack/geodesy.hpp"
#include "rftrack/motion_models.hpp"

namespace rftrack {

/// Geodetic log record as read from disk.
struct GeoSample {
    std::int64_t t_ms = 0;
    GeoPoint pos;
};

/// Timestamped position in the local planar frame.
struct TimedSample {
    std::int64_t t_ms = 0;
    EnuPoint pos;
};

/// Ground truth and sensor estimate matched at one epoch.
///
/// `index` is the pair's position in the aligned sequence; it survives cleaning so that segment
/// index ranges keep referring to the same epochs.
struct AlignedPair {
    std::int64_t t_ms = 0;
    EnuPoint uav;
    EnuPoint rf;
    std::size_t index = 0;

    double error() const { return distance(uav, rf); }
};

/// Contiguous, inclusive index range of the aligned sequence filtered with one motion model.
struct Segment {
    std::string id;
    std::size_t start_idx = 0;
    std::size_t end_idx = 0;
    MotionModel mm = MotionModel::CV;
    NoiseSigmas sigmas;

    bool contains(std::size_t i) const { return i >= start_idx && i <= end_idx; }
    std::size_t length() const { return end_idx - start_idx + 1; }
};

/// Validated segment list plus the aligned indices no segment covers.
struct SegmentPlan {
    std::vector<Segment> segments;
    std::vector<std::size_t> excluded;
};

namespace dataio {

inline constexpr std::string_view kGeoHeader = "t_ms,lat_deg,lon_deg";
inline constexpr std::string_view kEnuHeader = "t_ms,x,y";
inline constexpr std::string_view kAlignedHeader = "t_ms,uav_x,uav_y,rf_x,rf_y,error_m";

namespace detail {

inline std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

// Reads the header and yields (line_number, fields) for every non-blank data row.
template <class RowFn>
void read_csv(std::istream& in, const std::string& source, std::string_view header,
              std::size_t ncols, RowFn&& on_row) {
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim_cr(line);
        if (text.empty()) continue;
        if (!have_header) {
            if (text != header) {
                throw ParseError(source, line_no,
                                 "expected header '" + std::string(header) + "', got '" +
                                     std::string(text) + "'");
            }
            have_header = true;
            continue;
        }
        const auto fields = split(text);
        if (fields.size() != ncols) {
            throw ParseError(source, line_no,
                             "expected " + std::to_string(ncols) + " fields, got " +
                                 std::to_string(fields.size()));
        }
        on_row(line_no, fields);
    }
    if (!have_header) throw EmptyInput(source + ": empty input");
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

// Stable sort by timestamp, keep the first record of each duplicated timestamp.
template <class Sample>
void sort_dedupe(std::vector<Sample>& v, const std::string& source, Diagnostics* diag) {
    std::stable_sort(v.begin(), v.end(),
                     [](const Sample& a, const Sample& b) { return a.t_ms < b.t_ms; });
    const auto last = std::unique(v.begin(), v.end(), [](const Sample& a, const Sample& b) {
        return a.t_ms == b.t_ms;
    });
    const auto dropped = static_cast<std::size_t>(std::distance(last, v.end()));
    if (dropped > 0 && diag) {
        diag->warn(fmt::format("{}: dropped {} duplicate-timestamp row(s)", source, dropped));
    }
    v.erase(last, v.end());
}

}  // namespace detail

/// Parses a `t_ms,lat_deg,lon_deg` log. Output is sorted with duplicate timestamps collapsed.
inline std::vector<GeoSample> parse_geo_log(std::istream& in, const std::string& source,
                                            Diagnostics* diag = nullptr) {
    std::vector<GeoSample> out;
    detail::read_csv(in, source, kGeoHeader, 3, [&](std::size_t line, const auto& f) {
        const auto t = detail::parse_number<std::int64_t>(f[0]);
        const auto lat = detail::parse_number<double>(f[1]);
        const auto lon = detail::parse_number<double>(f[2]);
        if (!t || !lat || !lon) throw ParseError(source, line, "malformed number");
        if (!(*lat >= -90.0 && *lat <= 90.0)) {
            throw ParseError(source, line, "latitude out of range: " + std::string(f[1]));
        }
        if (!(*lon >= -180.0 && *lon <= 180.0)) {
            throw ParseError(source, line, "longitude out of range: " + std::string(f[2]));
        }
        out.push_back({*t, {*lat, *lon}});
    });
    if (out.empty()) throw EmptyInput(source + ": no data rows");
    detail::sort_dedupe(out, source, diag);
    return out;
}

/// UAV ground-truth GPS log (nominally 10 Hz).
inline std::vector<GeoSample> parse_uav_log(const std::filesystem::path& path,
                                            Diagnostics* diag = nullptr) {
    auto in = detail::open_input(path);
    return parse_geo_log(in, path.string(), diag);
}

/// RF-sensor position-estimate log (nominally 1 Hz).
inline std::vector<GeoSample> parse_rf_log(const std::filesystem::path& path,
                                           Diagnostics* diag = nullptr) {
    auto in = detail::open_input(path);
    return parse_geo_log(in, path.string(), diag);
}

inline std::vector<TimedSample> to_enu(std::span<const GeoSample> samples, const GeoPoint& origin) {
    std::vector<TimedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({s.t_ms, geodesy::to_enu(s.pos, origin)});
    return out;
}

inline std::vector<GeoSample> to_geo(std::span<const TimedSample> samples, const GeoPoint& origin) {
    std::vector<GeoSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({s.t_ms, geodesy::from_enu(s.pos, origin)});
    return out;
}

inline void write_geo_log(std::ostream& out, std::span<const GeoSample> samples) {
    out << kGeoHeader << '\n';
    for (const auto& s : samples) {
        out << fmt::format("{},{:.11f},{:.11f}\n", s.t_ms, s.pos.lat_deg, s.pos.lon_deg);
    }
}

inline void write_geo_log(const std::filesystem::path& path, std::span<const GeoSample> samples) {
    auto out = detail::open_output(path);
    write_geo_log(out, samples);
}

inline void write_enu_log(const std::filesystem::path& path, std::span<const TimedSample> samples) {
    auto out = detail::open_output(path);
    out << kEnuHeader << '\n';
    for (const auto& s : samples) out << fmt::format("{},{:.6f},{:.6f}\n", s.t_ms, s.pos.x, s.pos.y);
}

/// Matches every RF sample to the nearest unused UAV sample within +/- tol_ms.
///
/// Both inputs must be sorted by timestamp. Unmatched RF samples are dropped. The pair takes the
/// RF timestamp, the epoch of the measurement.
inline std::vector<AlignedPair> align(std::span<const TimedSample> uav,
                                      std::span<const TimedSample> rf, std::int64_t tol_ms) {
    if (tol_ms < 0) throw ContractError("alignment tolerance must be non-negative");
    std::vector<AlignedPair> out;
    std::vector<bool> used(uav.size(), false);
    for (const auto& r : rf) {
        const auto it = std::lower_bound(
            uav.begin(), uav.end(), r.t_ms,
            [](const TimedSample& s, std::int64_t t) { return s.t_ms < t; });
        const auto hi = static_cast<std::size_t>(std::distance(uav.begin(), it));
        std::optional<std::size_t> best;
        std::int64_t best_gap = 0;
        for (std::size_t cand : {hi - 1, hi}) {
            if (cand >= uav.size() || used[cand]) continue;  // hi-1 wraps when hi == 0
            const std::int64_t gap = std::abs(uav[cand].t_ms - r.t_ms);
            if (gap > tol_ms) continue;
            if (!best || gap < best_gap) {
                best = cand;
                best_gap = gap;
            }
        }
        if (!best) continue;
        used[*best] = true;
        out.push_back({r.t_ms, uav[*best].pos, r.pos, out.size()});
    }
    return out;
}

/// Keeps pairs whose position error is at most `threshold_m`; only errors strictly above it go.
inline std::vector<AlignedPair> clean(std::span<const AlignedPair> pairs, double threshold_m = 60.0) {
    if (!(threshold_m > 0.0)) throw ContractError("cleaning threshold must be positive");
    std::vector<AlignedPair> out;
    for (const auto& p : pairs) {
        if (!(p.error() > threshold_m)) out.push_back(p);
    }
    return out;
}

inline void write_aligned(std::ostream& out, std::span<const AlignedPair> pairs) {
    out << kAlignedHeader << '\n';
    for (const auto& p : pairs) {
        out << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", p.t_ms, p.uav.x, p.uav.y,
                           p.rf.x, p.rf.y, p.error());
    }
}

inline void write_aligned(const std::filesystem::path& path, std::span<const AlignedPair> pairs) {
    auto out = detail::open_output(path);
    write_aligned(out, pairs);
}

/// Reads an aligned-pairs CSV. Row order defines the pair indices.
inline std::vector<AlignedPair> read_aligned(std::istream& in, const std::string& source) {
    std::vector<AlignedPair> out;
    detail::read_csv(in, source, kAlignedHeader, 6, [&](std::size_t line, const auto& f) {
        const auto t = detail::parse_number<std::int64_t>(f[0]);
        double v[4];
        for (int i = 0; i < 4; ++i) {
            const auto d = detail::parse_number<double>(f[i + 1]);
            if (!d) throw ParseError(source, line, "malformed number");
            v[i] = *d;
        }
        if (!t) throw ParseError(source, line, "malformed timestamp");
        if (!out.empty() && *t <= out.back().t_ms) {
            throw ParseError(source, line, "timestamps must be strictly increasing");
        }
        out.push_back({*t, {v[0], v[1]}, {v[2], v[3]}, out.size()});
    });
    return out;
}

inline std::vector<AlignedPair> read_aligned(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    return read_aligned(in, path.string());
}

/// Validates segment definitions against an aligned sequence of length `K`.
inline SegmentPlan validate_segments(std::vector<Segment> segments, std::size_t K) {
    for (const auto& s : segments) {
        if (s.start_idx > s.end_idx || s.end_idx >= K) {
            throw ValidationError(fmt::format(
                "segment '{}': index range [{}, {}] invalid for {} aligned epochs", s.id,
                s.start_idx, s.end_idx, K));
        }
    }
    std::stable_sort(segments.begin(), segments.end(),
                     [](const Segment& a, const Segment& b) { return a.start_idx < b.start_idx; });
    for (std::size_t i = 1; i < segments.size(); ++i) {
        const auto& a = segments[i - 1];
        const auto& b = segments[i];
        if (b.start_idx <= a.end_idx) {
            throw ValidationError(fmt::format("segments '{}' [{}, {}] and '{}' [{}, {}] overlap",
                                              a.id, a.start_idx, a.end_idx, b.id, b.start_idx,
                                              b.end_idx));
        }
    }
    SegmentPlan plan;
    std::size_t next = 0;
    for (const auto& s : segments) {
        for (; next < s.start_idx; ++next) plan.excluded.push_back(next);
        next = s.end_idx + 1;
    }
    for (; next < K; ++next) plan.excluded.push_back(next);
    plan.segments = std::move(segments);
    return plan;
}

inline std::vector<Segment> segments_from_json(const nlohmann::json& j, const std::string& source) {
    if (!j.is_array()) throw ValidationError(source + ": segment file must be a JSON array");
    std::vector<Segment> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& o = j[i];
        const std::string id = o.value("id", fmt::format("#{}", i));
        try {
            Segment s;
            s.id = id;
            const auto start = o.at("start_idx").get<std::int64_t>();
            const auto end = o.at("end_idx").get<std::int64_t>();
            if (start < 0 || end < 0) {
                throw ValidationError(fmt::format("segment '{}': negative index", id));
            }
            s.start_idx = static_cast<std::size_t>(start);
            s.end_idx = static_cast<std::size_t>(end);
            const auto label = o.at("mm").get<std::string>();
            const auto mm = parse_motion_model(label);
            if (!mm) {
                throw ValidationError(fmt::format(
                    "segment '{}': unknown motion model '{}' (expected CV, CA or CT)", id, label));
            }
            s.mm = *mm;
            if (o.contains("sigmas")) {
                const auto& sg = o.at("sigmas");
                s.sigmas.acc = sg.value("acc", 0.0);
                s.sigmas.jerk = sg.value("jerk", 0.0);
                s.sigmas.omega = sg.value("omega", 0.0);
                if (s.sigmas.acc < 0 || s.sigmas.jerk < 0 || s.sigmas.omega < 0) {
                    throw ValidationError(fmt::format("segment '{}': negative sigma", id));
                }
            }
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(fmt::format("{}: segment '{}': {}", source, id, e.what()));
        }
    }
    return out;
}

inline nlohmann::json segments_to_json(std::span<const Segment> segments) {
    auto j = nlohmann::json::array();
    for (const auto& s : segments) {
        j.push_back({{"id", s.id},
                     {"start_idx", s.start_idx},
                     {"end_idx", s.end_idx},
                     {"mm", std::string(to_string(s.mm))},
                     {"sigmas", {{"acc", s.sigmas.acc},
                                 {"jerk", s.sigmas.jerk},
                                 {"omega", s.sigmas.omega}}}});
    }
    return j;
}

/// Loads and validates a segment file for an aligned sequence of length `K`.
inline SegmentPlan load_segments(const std::filesystem::path& path, std::size_t K) {
    auto in = detail::open_input(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    return validate_segments(segments_from_json(j, path.string()), K);
}

/// Pairs of `pairs` whose aligned index falls inside `seg`.
inline std::vector<AlignedPair> pairs_in(const Segment& seg, std::span<const AlignedPair> pairs) {
    std::vector<AlignedPair> out;
    for (const auto& p : pairs) {
        if (seg.contains(p.index)) out.push_back(p);
    }
    return out;
}

}  // namespace dataio
}  // namespace rftrack
