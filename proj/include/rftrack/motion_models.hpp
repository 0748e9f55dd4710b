#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rftrack/errors.hpp"
#include "rftrack/geodesy.hpp"

namespace rftrack {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Kinematic motion model assumed for one trajectory segment.
///
/// State layouts (all positions in meters, ENU frame):
///   CV: [x, y, vx, vy]
///   CA: [x, y, vx, vy, ax, ay]
///   CT: [x, y, vx, vy, omega]   (omega is the turn rate in rad/s)
enum class MotionModel { CV, CA, CT };

inline constexpr int state_dim(MotionModel mm) {
    switch (mm) {
        case MotionModel::CV: return 4;
        case MotionModel::CA: return 6;
        case MotionModel::CT: return 5;
    }
    return 0;
}

inline std::string_view to_string(MotionModel mm) {
    switch (mm) {
        case MotionModel::CV: return "CV";
        case MotionModel::CA: return "CA";
        case MotionModel::CT: return "CT";
    }
    return "?";
}

inline std::optional<MotionModel> parse_motion_model(std::string_view s) {
    if (s == "CV") return MotionModel::CV;
    if (s == "CA") return MotionModel::CA;
    if (s == "CT") return MotionModel::CT;
    return std::nullopt;
}

/// Process-noise standard deviations. CV uses `acc`, CA uses `jerk`, CT uses `acc` and `omega`.
struct NoiseSigmas {
    double acc = 0.0;    // m/s^2
    double jerk = 0.0;   // m/s^3
    double omega = 0.0;  // rad/s per step

    friend bool operator==(const NoiseSigmas&, const NoiseSigmas&) = default;
};

namespace models {

namespace idx {
inline constexpr int x = 0, y = 1, vx = 2, vy = 3, ax = 4, ay = 5, omega = 4;
}

/// Below this value of |omega * T| the turn terms use their Taylor series.
inline constexpr double kSmallTurn = 1e-6;
inline constexpr double kSmallTurnDerivative = 1e-2;

namespace detail {

inline void check_state(MotionModel mm, const Vector& s) {
    if (s.size() != state_dim(mm)) {
        throw ContractError("state of length " + std::to_string(s.size()) + " given to " +
                            std::string(to_string(mm)) + " model (expects " +
                            std::to_string(state_dim(mm)) + ")");
    }
}

inline void check_step(double T) {
    if (!(T > 0.0) || !std::isfinite(T)) {
        throw ContractError("time step must be positive, got " + std::to_string(T));
    }
}

// sin(wT)/w and (1 - cos(wT))/w together with their derivatives in w.
struct TurnTerms {
    double a, b, da, db, sin_wt, cos_wt;
};

inline TurnTerms turn_terms(double w, double T) {
    const double wt = w * T;
    TurnTerms t{};
    t.sin_wt = std::sin(wt);
    t.cos_wt = std::cos(wt);
    const double wt2 = wt * wt;
    if (std::abs(wt) < kSmallTurn) {
        t.a = T * (1.0 - wt2 / 6.0);
        t.b = T * (wt / 2.0 - wt * wt2 / 24.0);
    } else {
        const double h = std::sin(wt / 2.0);
        t.a = t.sin_wt / w;
        t.b = 2.0 * h * h / w;
    }
    // The closed-form derivatives cancel badly for small wT, so the series covers a wider band.
    if (std::abs(wt) < kSmallTurnDerivative) {
        const double wt4 = wt2 * wt2;
        t.da = T * T * wt * (-1.0 / 3.0 + wt2 / 30.0 - wt4 / 840.0);
        t.db = T * T * (0.5 - wt2 / 8.0 + wt4 / 144.0);
    } else {
        t.da = (T * t.cos_wt - t.a) / w;
        t.db = (T * t.sin_wt - t.b) / w;
    }
    return t;
}

inline Matrix linear_transition(MotionModel mm, double T) {
    const int n = state_dim(mm);
    Matrix F = Matrix::Identity(n, n);
    F(idx::x, idx::vx) = T;
    F(idx::y, idx::vy) = T;
    if (mm == MotionModel::CA) {
        F(idx::x, idx::ax) = T * T / 2.0;
        F(idx::y, idx::ay) = T * T / 2.0;
        F(idx::vx, idx::ax) = T;
        F(idx::vy, idx::ay) = T;
    }
    return F;
}

}  // namespace detail

/// Propagate a state over `T` seconds under the model's noise-free dynamics.
inline Vector transition(MotionModel mm, const Vector& s, double T) {
    detail::check_state(mm, s);
    detail::check_step(T);
    if (mm != MotionModel::CT) return detail::linear_transition(mm, T) * s;

    const double vx = s(idx::vx), vy = s(idx::vy), w = s(idx::omega);
    const auto t = detail::turn_terms(w, T);
    Vector out(5);
    out(idx::x) = s(idx::x) + vx * t.a - vy * t.b;
    out(idx::y) = s(idx::y) + vx * t.b + vy * t.a;
    out(idx::vx) = vx * t.cos_wt - vy * t.sin_wt;
    out(idx::vy) = vx * t.sin_wt + vy * t.cos_wt;
    out(idx::omega) = w;
    return out;
}

/// Jacobian of transition() with respect to the state, evaluated at `s`.
inline Matrix jacobian(MotionModel mm, const Vector& s, double T) {
    detail::check_state(mm, s);
    detail::check_step(T);
    if (mm != MotionModel::CT) return detail::linear_transition(mm, T);

    const double vx = s(idx::vx), vy = s(idx::vy), w = s(idx::omega);
    const auto t = detail::turn_terms(w, T);
    Matrix F = Matrix::Identity(5, 5);
    F(idx::x, idx::vx) = t.a;
    F(idx::x, idx::vy) = -t.b;
    F(idx::y, idx::vx) = t.b;
    F(idx::y, idx::vy) = t.a;
    F(idx::vx, idx::vx) = t.cos_wt;
    F(idx::vx, idx::vy) = -t.sin_wt;
    F(idx::vy, idx::vx) = t.sin_wt;
    F(idx::vy, idx::vy) = t.cos_wt;
    F(idx::x, idx::omega) = vx * t.da - vy * t.db;
    F(idx::y, idx::omega) = vx * t.db + vy * t.da;
    F(idx::vx, idx::omega) = -T * (vx * t.sin_wt + vy * t.cos_wt);
    F(idx::vy, idx::omega) = T * (vx * t.cos_wt - vy * t.sin_wt);
    return F;
}

/// Piecewise-constant white-noise process covariance.
///
/// CV and CT drive each axis with acceleration noise (gain [T^2/2, T] on position/velocity);
/// CA drives each axis with jerk noise (gain [T^2/2, T, 1] on position/velocity/acceleration).
/// CT adds sigma_omega^2 T^2 on the turn-rate diagonal. The x and y axes are uncorrelated.
inline Matrix process_noise(MotionModel mm, double T, const NoiseSigmas& sig) {
    detail::check_step(T);
    if (sig.acc < 0.0 || sig.jerk < 0.0 || sig.omega < 0.0) {
        throw ContractError("process-noise sigmas must be non-negative");
    }
    const int n = state_dim(mm);
    Matrix Q = Matrix::Zero(n, n);

    auto add_axis = [&](std::span<const int> layout, std::span<const double> gain, double var) {
        for (std::size_t i = 0; i < layout.size(); ++i)
            for (std::size_t j = 0; j < layout.size(); ++j)
                Q(layout[i], layout[j]) += var * gain[i] * gain[j];
    };

    if (mm == MotionModel::CA) {
        const double g[] = {T * T / 2.0, T, 1.0};
        const int xa[] = {idx::x, idx::vx, idx::ax};
        const int ya[] = {idx::y, idx::vy, idx::ay};
        add_axis(xa, g, sig.jerk * sig.jerk);
        add_axis(ya, g, sig.jerk * sig.jerk);
    } else {
        const double g[] = {T * T / 2.0, T};
        const int xa[] = {idx::x, idx::vx};
        const int ya[] = {idx::y, idx::vy};
        add_axis(xa, g, sig.acc * sig.acc);
        add_axis(ya, g, sig.acc * sig.acc);
        if (mm == MotionModel::CT) Q(idx::omega, idx::omega) = sig.omega * sig.omega * T * T;
    }
    return Q;
}

/// Position selector: z = H s picks (x, y).
inline Matrix measurement_matrix(MotionModel mm) {
    Matrix H = Matrix::Zero(2, state_dim(mm));
    H(0, idx::x) = 1.0;
    H(1, idx::y) = 1.0;
    return H;
}

/// Position and velocity of the target at one epoch.
struct KinematicSample {
    std::int64_t t_ms = 0;
    EnuPoint pos;
    EnuPoint vel;
};

/// Forward-difference velocities: sample k carries (p[k+1] - p[k]) / dt. Yields n-1 samples.
template <class Samples>
std::vector<KinematicSample> finite_difference_velocities(const Samples& samples) {
    std::vector<KinematicSample> out;
    if (samples.size() < 2) return out;
    out.reserve(samples.size() - 1);
    for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
        const double dt = static_cast<double>(samples[k + 1].t_ms - samples[k].t_ms) / 1000.0;
        if (!(dt > 0.0)) throw ContractError("timestamps must be strictly increasing");
        const EnuPoint v = (1.0 / dt) * (samples[k + 1].pos - samples[k].pos);
        out.push_back({samples[k].t_ms, samples[k].pos, v});
    }
    return out;
}

namespace detail {

// Sample standard deviation pooled over the x and y axes, each about its own mean.
inline double pooled_std(std::span<const EnuPoint> d) {
    if (d.size() < 2) return 0.0;
    EnuPoint mean{};
    for (const auto& p : d) mean = mean + p;
    mean = (1.0 / static_cast<double>(d.size())) * mean;
    double ss = 0.0;
    for (const auto& p : d) {
        ss += (p.x - mean.x) * (p.x - mean.x) + (p.y - mean.y) * (p.y - mean.y);
    }
    return std::sqrt(ss / (2.0 * static_cast<double>(d.size() - 1)));
}

inline double sample_std(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double wrap_angle(double a) {
    return std::remainder(a, 2.0 * std::numbers::pi);
}

}  // namespace detail

/// Process-noise sigmas implied by the variability of a ground-truth segment.
///
/// acc: std of per-step velocity changes over mean step duration. jerk: same for acceleration
/// changes. omega: std of per-step heading-rate estimates. Needs at least 3 samples.
inline NoiseSigmas estimate_process_sigmas(std::span<const KinematicSample> seg) {
    if (seg.size() < 3) {
        throw EstimationError("process-sigma estimation needs at least 3 samples, got " +
                              std::to_string(seg.size()));
    }
    const std::size_t m = seg.size() - 1;
    std::vector<EnuPoint> dv(m), acc(m);
    std::vector<double> rates;
    double dt_sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double dt = static_cast<double>(seg[k + 1].t_ms - seg[k].t_ms) / 1000.0;
        if (!(dt > 0.0)) throw EstimationError("timestamps must be strictly increasing");
        dt_sum += dt;
        dv[k] = seg[k + 1].vel - seg[k].vel;
        acc[k] = (1.0 / dt) * dv[k];
        if (norm(seg[k].vel) > 1e-9 && norm(seg[k + 1].vel) > 1e-9) {
            const double h0 = std::atan2(seg[k].vel.y, seg[k].vel.x);
            const double h1 = std::atan2(seg[k + 1].vel.y, seg[k + 1].vel.x);
            rates.push_back(detail::wrap_angle(h1 - h0) / dt);
        }
    }
    const double mean_dt = dt_sum / static_cast<double>(m);
    std::vector<EnuPoint> da;
    for (std::size_t k = 0; k + 1 < m; ++k) da.push_back(acc[k + 1] - acc[k]);

    NoiseSigmas out;
    out.acc = detail::pooled_std(dv) / mean_dt;
    out.jerk = detail::pooled_std(da) / mean_dt;
    out.omega = detail::sample_std(rates);
    return out;
}

}  // namespace models
}  // namespace rftrack
