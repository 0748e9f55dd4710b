#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "rftrack/dataio.hpp"
#include "rftrack/errors.hpp"
#include "rftrack/motion_models.hpp"
#include "rftrack/parallel.hpp"

namespace rftrack {

using Matrix2 = Eigen::Matrix2d;

/// Mean and covariance of one model's state at epoch `t_ms`.
struct FilterState {
    Vector s;
    Matrix P;
    std::int64_t t_ms = 0;
};

/// Linear position measurement z = H s + v, v ~ N(0, R).
struct MeasurementModel {
    Matrix H;
    Matrix2 R = Matrix2::Zero();
};

/// How the measurement covariance is derived from RF errors.
enum class RMode {
    Mean,  // R = diag(mean error, mean error), numerically the mean error in meters
    Mse,   // R = diag(mean squared x error, mean squared y error)
};

struct FilterConfig {
    Matrix2 R = Matrix2::Identity();
    double v_max = 20.0;         // m/s, initial velocity std
    double init_acc_var = 25.0;  // (m/s^2)^2
    double init_omega_var = 1.0; // (rad/s)^2
};

struct TrackPoint {
    std::int64_t t_ms = 0;
    std::size_t index = 0;  // aligned-sequence index of the measurement
    EnuPoint pos;
    FilterState state;
};

/// Filtered output of one segment, one point per measurement epoch.
struct Track {
    std::string segment_id;
    MotionModel mm = MotionModel::CV;
    std::vector<TrackPoint> points;
};

namespace ekf {

namespace detail {

inline void symmetrize(Matrix& P) { P = 0.5 * (P + P.transpose()).eval(); }

}  // namespace detail

/// Prediction: s- = f(s, T), P- = F P F^T + Q with F the transition Jacobian at s.
inline FilterState predict(const FilterState& fs, MotionModel mm, double T, const Matrix& Q) {
    const int n = state_dim(mm);
    if (fs.s.size() != n || fs.P.rows() != n || fs.P.cols() != n || Q.rows() != n ||
        Q.cols() != n) {
        throw ContractError(fmt::format("predict: dimension mismatch for {} model",
                                        to_string(mm)));
    }
    const Matrix F = models::jacobian(mm, fs.s, T);
    FilterState out;
    out.s = models::transition(mm, fs.s, T);
    out.P = F * fs.P * F.transpose() + Q;
    detail::symmetrize(out.P);
    out.t_ms = fs.t_ms + static_cast<std::int64_t>(std::llround(T * 1000.0));
    return out;
}

/// Measurement update with the Joseph-form covariance.
inline FilterState update(const FilterState& fs, EnuPoint z, const MeasurementModel& meas) {
    const auto n = fs.s.size();
    if (meas.H.rows() != 2 || meas.H.cols() != n || fs.P.rows() != n || fs.P.cols() != n) {
        throw ContractError("update: dimension mismatch");
    }
    const Matrix& H = meas.H;
    const Matrix PHt = fs.P * H.transpose();
    const Matrix2 S = H * PHt + meas.R;
    Eigen::FullPivLU<Matrix2> lu(S);
    if (!lu.isInvertible() || !S.allFinite()) {
        throw NumericalError("update: innovation covariance is singular");
    }
    const Matrix K = PHt * lu.inverse();
    const Eigen::Vector2d innovation(z.x - (H * fs.s)(0), z.y - (H * fs.s)(1));

    FilterState out;
    out.t_ms = fs.t_ms;
    out.s = fs.s + K * innovation;
    const Matrix I_KH = Matrix::Identity(n, n) - K * H;
    out.P = I_KH * fs.P * I_KH.transpose() + K * meas.R * K.transpose();
    detail::symmetrize(out.P);
    return out;
}

/// Filter state at the first epoch of a segment: position from the measurement, all
/// derivatives zero, covariance inflated on the unmeasured components.
inline FilterState initial_state(MotionModel mm, EnuPoint z, std::int64_t t_ms,
                                 const FilterConfig& cfg) {
    const int n = state_dim(mm);
    FilterState fs;
    fs.t_ms = t_ms;
    fs.s = Vector::Zero(n);
    fs.s(models::idx::x) = z.x;
    fs.s(models::idx::y) = z.y;
    fs.P = Matrix::Zero(n, n);
    fs.P.topLeftCorner(2, 2) = cfg.R;
    fs.P(models::idx::vx, models::idx::vx) = cfg.v_max * cfg.v_max;
    fs.P(models::idx::vy, models::idx::vy) = cfg.v_max * cfg.v_max;
    if (mm == MotionModel::CA) {
        fs.P(models::idx::ax, models::idx::ax) = cfg.init_acc_var;
        fs.P(models::idx::ay, models::idx::ay) = cfg.init_acc_var;
    } else if (mm == MotionModel::CT) {
        fs.P(models::idx::omega, models::idx::omega) = cfg.init_omega_var;
    }
    return fs;
}

/// Filters the RF measurements of one segment. `pairs` must be the segment's pairs in order.
/// Throws SegmentSkipped when fewer than two epochs are available.
inline Track run_segment(const Segment& seg, std::span<const AlignedPair> pairs,
                         const FilterConfig& cfg) {
    if (pairs.size() < 2) {
        throw SegmentSkipped(fmt::format("segment '{}' has {} epoch(s); at least 2 required",
                                         seg.id, pairs.size()));
    }
    const MeasurementModel meas{models::measurement_matrix(seg.mm), cfg.R};
    Track track{seg.id, seg.mm, {}};
    track.points.reserve(pairs.size());

    FilterState fs = initial_state(seg.mm, pairs[0].rf, pairs[0].t_ms, cfg);
    track.points.push_back({pairs[0].t_ms, pairs[0].index, pairs[0].rf, fs});
    for (std::size_t k = 1; k < pairs.size(); ++k) {
        const auto gap = pairs[k].t_ms - pairs[k - 1].t_ms;
        if (gap <= 0) throw ContractError("segment epochs must be strictly increasing");
        const double T = static_cast<double>(gap) / 1000.0;
        fs = predict(fs, seg.mm, T, models::process_noise(seg.mm, T, seg.sigmas));
        fs.t_ms = pairs[k].t_ms;
        fs = update(fs, pairs[k].rf, meas);
        track.points.push_back(
            {pairs[k].t_ms, pairs[k].index, {fs.s(models::idx::x), fs.s(models::idx::y)}, fs});
    }
    return track;
}

struct SegmentIssue {
    std::string segment_id;
    std::string message;
    bool skipped = false;
};

struct TrajectoryResult {
    std::vector<std::pair<Segment, Track>> tracks;  // ordered by segment start
    std::vector<SegmentIssue> issues;
};

/// Runs every segment independently (fresh initialization per segment). Failures are recorded
/// in `issues` and the remaining segments still run. `threads` > 1 filters segments
/// concurrently; results do not depend on it.
inline TrajectoryResult run_trajectory(std::vector<Segment> segments,
                                       std::span<const AlignedPair> pairs,
                                       const FilterConfig& cfg, unsigned threads = 1) {
    std::stable_sort(segments.begin(), segments.end(),
                     [](const Segment& a, const Segment& b) { return a.start_idx < b.start_idx; });
    struct Outcome {
        std::optional<Track> track;
        std::optional<SegmentIssue> issue;
    };
    std::vector<Outcome> outcomes(segments.size());
    parallel_for(segments.size(), threads, [&](std::size_t i) {
        const auto& seg = segments[i];
        try {
            const auto mine = dataio::pairs_in(seg, pairs);
            outcomes[i].track = run_segment(seg, mine, cfg);
        } catch (const SegmentSkipped& e) {
            outcomes[i].issue = SegmentIssue{seg.id, e.what(), true};
        } catch (const Error& e) {
            outcomes[i].issue = SegmentIssue{seg.id, e.what(), false};
        }
    });
    TrajectoryResult result;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (outcomes[i].track) result.tracks.emplace_back(segments[i], std::move(*outcomes[i].track));
        if (outcomes[i].issue) result.issues.push_back(std::move(*outcomes[i].issue));
    }
    return result;
}

/// Measurement covariance from RF errors against ground truth.
inline Matrix2 estimate_R(std::span<const AlignedPair> pairs, RMode mode = RMode::Mean) {
    if (pairs.empty()) throw EstimationError("cannot estimate R from an empty pair set");
    const double n = static_cast<double>(pairs.size());
    Matrix2 R = Matrix2::Zero();
    if (mode == RMode::Mean) {
        double sum = 0.0;
        for (const auto& p : pairs) sum += p.error();
        R(0, 0) = R(1, 1) = sum / n;
    } else {
        double sx = 0.0, sy = 0.0;
        for (const auto& p : pairs) {
            const EnuPoint d = p.rf - p.uav;
            sx += d.x * d.x;
            sy += d.y * d.y;
        }
        R(0, 0) = sx / n;
        R(1, 1) = sy / n;
    }
    return R;
}

}  // namespace ekf
}  // namespace rftrack
