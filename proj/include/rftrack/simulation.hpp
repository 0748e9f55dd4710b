#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "rftrack/dataio.hpp"
#include "rftrack/errors.hpp"
#include "rftrack/motion_models.hpp"

namespace rftrack {

/// One leg of a synthetic flight, flown under a single motion model.
struct FlightLeg {
    MotionModel mm = MotionModel::CV;
    double duration_s = 0.0;
    double omega = 0.0;  // CT turn rate, rad/s (positive = counter-clockwise)
    double accel = 0.0;  // CA along-track acceleration, m/s^2 (negative brakes)
    std::optional<NoiseSigmas> sigmas;  // filter sigmas for this leg; estimated when absent
    bool segment = true;  // false: flown as a connecting maneuver, left out of the segment file
};

struct FlightPlan {
    EnuPoint start;
    EnuPoint velocity{5.0, 0.0};
    std::vector<FlightLeg> legs;
    std::int64_t start_ms = 0;
    std::int64_t step_ms = 100;  // truth logging period
    double accel_noise = 0.0;    // white acceleration perturbation per truth step, m/s^2
};

/// Time window [start_ms, end_ms) covered by a leg.
struct LegWindow {
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
};

struct TruthFlight {
    std::vector<TimedSample> samples;
    std::vector<LegWindow> windows;  // one per leg
};

namespace sim {

inline void validate(const FlightPlan& plan) {
    if (plan.legs.empty()) throw ValidationError("flight plan has no legs");
    if (plan.step_ms <= 0) throw ValidationError("truth step must be positive");
    for (std::size_t i = 0; i < plan.legs.size(); ++i) {
        const auto& leg = plan.legs[i];
        const double steps = leg.duration_s * 1000.0 / static_cast<double>(plan.step_ms);
        if (!(leg.duration_s > 0.0) || std::abs(steps - std::round(steps)) > 1e-9) {
            throw ValidationError(fmt::format(
                "leg {}: duration {} s must be a positive multiple of the {} ms truth step", i,
                leg.duration_s, plan.step_ms));
        }
        if (!std::isfinite(leg.omega) || !std::isfinite(leg.accel)) {
            throw ValidationError(fmt::format("leg {}: non-finite parameter", i));
        }
    }
    if (plan.accel_noise < 0.0) throw ValidationError("accel_noise must be non-negative");
}

/// Integrates the legs back to back at the truth logging rate. Samples cover
/// [start_ms, start_ms + total duration).
inline TruthFlight build_truth(const FlightPlan& plan, std::uint64_t seed) {
    validate(plan);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double dt = static_cast<double>(plan.step_ms) / 1000.0;

    TruthFlight out;
    EnuPoint p = plan.start;
    EnuPoint v = plan.velocity;
    std::int64_t t = plan.start_ms;
    for (const auto& leg : plan.legs) {
        const auto steps = static_cast<std::int64_t>(
            std::llround(leg.duration_s * 1000.0 / static_cast<double>(plan.step_ms)));
        out.windows.push_back({t, t + steps * plan.step_ms});
        for (std::int64_t k = 0; k < steps; ++k, t += plan.step_ms) {
            out.samples.push_back({t, p});
            if (leg.mm == MotionModel::CT) {
                Vector s(5);
                s << p.x, p.y, v.x, v.y, leg.omega;
                const Vector n = models::transition(MotionModel::CT, s, dt);
                p = {n(0), n(1)};
                v = {n(2), n(3)};
            } else {
                EnuPoint a{};
                if (leg.mm == MotionModel::CA) {
                    const double speed = norm(v);
                    const EnuPoint dir = speed > 1e-9 ? (1.0 / speed) * v : EnuPoint{1.0, 0.0};
                    a = leg.accel * dir;
                }
                p = p + dt * v + (0.5 * dt * dt) * a;
                v = v + dt * a;
            }
            if (plan.accel_noise > 0.0) {
                const EnuPoint w{plan.accel_noise * noise(rng), plan.accel_noise * noise(rng)};
                p = p + (0.5 * dt * dt) * w;
                v = v + dt * w;
            }
        }
    }
    return out;
}

/// Segment per tracked leg over an aligned sequence: the pairs whose epoch falls inside the
/// leg's window. Ids count tracked legs (S1, S2, ...). Legs with no aligned epochs produce no
/// segment. Sigmas come from the leg when given,
/// otherwise they are estimated from the ground truth at the segment's epochs (zero, with a
/// warning, when the segment is too short to estimate).
inline std::vector<Segment> segments_for_legs(const FlightPlan& plan, const TruthFlight& truth,
                                              std::span<const AlignedPair> pairs,
                                              Diagnostics* diag = nullptr) {
    std::vector<Segment> out;
    std::size_t tracked = 0;
    for (std::size_t j = 0; j < plan.legs.size(); ++j) {
        if (!plan.legs[j].segment) continue;
        const std::string id = fmt::format("S{}", ++tracked);
        const auto& w = truth.windows[j];
        std::optional<std::size_t> first, last;
        for (const auto& p : pairs) {
            if (p.t_ms >= w.start_ms && p.t_ms < w.end_ms) {
                if (!first) first = p.index;
                last = p.index;
            }
        }
        if (!first) {
            if (diag) diag->warn(fmt::format("leg {} has no aligned epochs; no segment written", id));
            continue;
        }
        Segment seg{id, *first, *last, plan.legs[j].mm, {}};
        if (plan.legs[j].sigmas) {
            seg.sigmas = *plan.legs[j].sigmas;
        } else {
            std::vector<TimedSample> gt;
            for (std::size_t i = *first; i <= *last; ++i) gt.push_back({pairs[i].t_ms, pairs[i].uav});
            const auto kin = models::finite_difference_velocities(gt);
            if (kin.size() >= 3) {
                seg.sigmas = models::estimate_process_sigmas(kin);
            } else if (diag) {
                diag->warn(fmt::format("segment {} too short to estimate process sigmas; using 0", id));
            }
        }
        out.push_back(std::move(seg));
    }
    return out;
}

}  // namespace sim
}  // namespace rftrack
