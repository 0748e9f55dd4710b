#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "rftrack/dataio.hpp"
#include "rftrack/errors.hpp"
#include "rftrack/geodesy.hpp"

namespace rftrack {

struct ErrorStats {
    double min_m = 0.0;
    double max_m = 0.0;
    double mean_m = 0.0;
    double std_m = 0.0;
    std::size_t n = 0;
};

struct CdfPoint {
    double error_m = 0.0;
    double fraction = 0.0;
};

/// Empirical staircase CDF evaluated at each distinct error.
struct CdfCurve {
    std::vector<CdfPoint> points;
};

/// An error value tagged with the aligned-sequence index it belongs to.
struct IndexedError {
    std::size_t index = 0;
    double error_m = 0.0;
};

enum class Better { Tie, Rf, Ekf };

struct SegmentRow {
    std::string id;
    std::string mm;
    ErrorStats rf;
    ErrorStats ekf;
};

struct SegmentReport {
    std::vector<SegmentRow> rows;
};

struct SpeedProfile {
    std::string id;
    MotionModel mm = MotionModel::CV;
    double speed_mean = 0.0;
    double speed_std = 0.0;
    std::optional<double> accel_mean;  // CA segments only
    std::optional<double> accel_std;
};

namespace metrics {

inline std::vector<double> euclidean_errors(std::span<const EnuPoint> truth,
                                            std::span<const EnuPoint> est) {
    if (truth.size() != est.size()) {
        throw ContractError(fmt::format("error sequences differ in length ({} vs {})",
                                        truth.size(), est.size()));
    }
    std::vector<double> out(truth.size());
    for (std::size_t k = 0; k < truth.size(); ++k) out[k] = distance(truth[k], est[k]);
    return out;
}

/// Min, max, mean and sample standard deviation (n-1 denominator; a single value has std 0).
inline ErrorStats stats(std::span<const double> errors) {
    if (errors.empty()) throw ContractError("statistics of an empty error sequence");
    ErrorStats s;
    s.n = errors.size();
    s.min_m = *std::min_element(errors.begin(), errors.end());
    s.max_m = *std::max_element(errors.begin(), errors.end());
    double sum = 0.0;
    for (double e : errors) sum += e;
    s.mean_m = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double e : errors) ss += (e - s.mean_m) * (e - s.mean_m);
        s.std_m = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    // Guard the ordering invariant against rounding in the mean of equal values.
    s.mean_m = std::clamp(s.mean_m, s.min_m, s.max_m);
    return s;
}

inline CdfCurve cdf(std::span<const double> errors) {
    if (errors.empty()) throw ContractError("CDF of an empty error sequence");
    std::vector<double> sorted(errors.begin(), errors.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    CdfCurve curve;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
        const double fraction = i + 1 == sorted.size() ? 1.0 : static_cast<double>(i + 1) / n;
        curve.points.push_back({sorted[i], fraction});
    }
    return curve;
}

/// Smallest error e with F(e) >= q.
inline double quantile(const CdfCurve& curve, double q) {
    if (!(q > 0.0 && q <= 1.0)) throw ContractError("quantile level must lie in (0, 1]");
    if (curve.points.empty()) throw ContractError("quantile of an empty CDF");
    // Fractions are k/n computed in floating point; compare with a small slack so that
    // q = k/n selects the k-th order statistic.
    constexpr double kSlack = 1e-12;
    for (const auto& p : curve.points) {
        if (p.fraction >= q - kSlack) return p.error_m;
    }
    return curve.points.back().error_m;
}

inline void write_cdf(std::ostream& out, const CdfCurve& curve) {
    out << "error_m,fraction\n";
    for (const auto& p : curve.points) out << fmt::format("{:.6f},{:.6f}\n", p.error_m, p.fraction);
}

inline void write_cdf(const std::filesystem::path& path, const CdfCurve& curve) {
    auto out = dataio::detail::open_output(path);
    write_cdf(out, curve);
}

inline Better compare(double rf, double ekf) {
    if (ekf < rf) return Better::Ekf;
    if (rf < ekf) return Better::Rf;
    return Better::Tie;
}

/// The four statistics of a row in table order, with their labels.
inline std::array<std::pair<const char*, double>, 4> stat_fields(const ErrorStats& s) {
    return {{{"min", s.min_m}, {"max", s.max_m}, {"mean", s.mean_m}, {"std", s.std_m}}};
}

/// Per-segment RF vs EKF statistics. Segments without data in both columns are left out
/// with a warning.
inline SegmentReport segment_report(std::span<const Segment> segments,
                                    std::span<const IndexedError> rf_errors,
                                    std::span<const IndexedError> ekf_errors,
                                    Diagnostics* diag = nullptr) {
    auto collect = [](const Segment& seg, std::span<const IndexedError> errs) {
        std::vector<double> out;
        for (const auto& e : errs)
            if (seg.contains(e.index)) out.push_back(e.error_m);
        return out;
    };
    SegmentReport report;
    for (const auto& seg : segments) {
        const auto rf = collect(seg, rf_errors);
        const auto ekf = collect(seg, ekf_errors);
        if (rf.empty() || ekf.empty()) {
            if (diag) diag->warn(fmt::format("segment '{}' has no error data; omitted from report", seg.id));
            continue;
        }
        report.rows.push_back({seg.id, std::string(to_string(seg.mm)), stats(rf), stats(ekf)});
    }
    return report;
}

inline std::string_view better_label(Better b) {
    switch (b) {
        case Better::Ekf: return "ekf";
        case Better::Rf: return "rf";
        case Better::Tie: return "tie";
    }
    return "tie";
}

/// Canonical CSV: one line per (segment, statistic).
inline void write_report_csv(std::ostream& out, const SegmentReport& report) {
    out << "segment,mm,stat,rf_m,ekf_m,better\n";
    for (const auto& row : report.rows) {
        const auto rf = stat_fields(row.rf);
        const auto ekf = stat_fields(row.ekf);
        for (std::size_t i = 0; i < rf.size(); ++i) {
            out << fmt::format("{},{},{},{:.6f},{:.6f},{}\n", row.id, row.mm, rf[i].first,
                               rf[i].second, ekf[i].second,
                               better_label(compare(rf[i].second, ekf[i].second)));
        }
    }
}

inline void write_report_csv(const std::filesystem::path& path, const SegmentReport& report) {
    auto out = dataio::detail::open_output(path);
    write_report_csv(out, report);
}

/// Plain-text table, segments as column pairs; the lower value of each pair is starred.
inline std::string render_text(const SegmentReport& report) {
    constexpr int kLabel = 10, kCell = 9;
    std::string header = fmt::format("{:<{}}", "", kLabel);
    std::string sub = fmt::format("{:<{}}", "Err. stats", kLabel);
    for (const auto& row : report.rows) {
        header += fmt::format("{:^{}}", row.id + " (" + row.mm + ")", 2 * kCell);
        sub += fmt::format("{:>{}}{:>{}}", "RF", kCell, "EKF", kCell);
    }
    std::string text = header + "\n" + sub + "\n";
    const char* names[] = {"min. (m)", "max. (m)", "mean (m)", "std (m)"};
    for (std::size_t i = 0; i < 4; ++i) {
        std::string line = fmt::format("{:<{}}", names[i], kLabel);
        for (const auto& row : report.rows) {
            const double rf = stat_fields(row.rf)[i].second;
            const double ekf = stat_fields(row.ekf)[i].second;
            const Better b = compare(rf, ekf);
            line += fmt::format("{:>{}}", (b == Better::Rf ? "*" : "") + fmt::format("{:.2f}", rf), kCell);
            line += fmt::format("{:>{}}", (b == Better::Ekf ? "*" : "") + fmt::format("{:.2f}", ekf), kCell);
        }
        text += line + "\n";
    }
    return text;
}

/// Finite-difference speed statistics per segment; CA segments also get acceleration magnitude.
/// `truth[i]` is the ground truth at aligned index i. Segments with fewer than two samples are
/// left out with a warning.
inline std::vector<SpeedProfile> velocity_profile(std::span<const TimedSample> truth,
                                                  std::span<const Segment> segments,
                                                  Diagnostics* diag = nullptr) {
    std::vector<SpeedProfile> out;
    for (const auto& seg : segments) {
        if (seg.end_idx >= truth.size() || seg.length() < 2) {
            if (diag) diag->warn(fmt::format("segment '{}' has too few samples for a velocity profile", seg.id));
            continue;
        }
        const auto slice = truth.subspan(seg.start_idx, seg.length());
        const auto kin = models::finite_difference_velocities(slice);
        std::vector<double> speeds;
        for (const auto& k : kin) speeds.push_back(norm(k.vel));
        const auto s = stats(speeds);
        SpeedProfile p{seg.id, seg.mm, s.mean_m, s.std_m, std::nullopt, std::nullopt};
        if (seg.mm == MotionModel::CA && kin.size() >= 2) {
            std::vector<double> acc;
            for (std::size_t k = 0; k + 1 < kin.size(); ++k) {
                const double dt = static_cast<double>(kin[k + 1].t_ms - kin[k].t_ms) / 1000.0;
                acc.push_back(norm(kin[k + 1].vel - kin[k].vel) / dt);
            }
            const auto a = stats(acc);
            p.accel_mean = a.mean_m;
            p.accel_std = a.std_m;
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace metrics
}  // namespace rftrack
