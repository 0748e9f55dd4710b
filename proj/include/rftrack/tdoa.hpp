#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "rftrack/dataio.hpp"
#include "rftrack/errors.hpp"
#include "rftrack/geodesy.hpp"

namespace rftrack {

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s

/// Fixed receivers with one designated time reference.
struct SensorArray {
    std::vector<EnuPoint> positions;
    std::size_t reference_idx = 0;

    /// Throws ValidationError for a missing reference or sensors closer than 1 m.
    void validate() const {
        if (positions.size() < 2) throw ValidationError("sensor array needs at least 2 sensors");
        if (reference_idx >= positions.size()) {
            throw ValidationError(fmt::format("reference index {} out of range for {} sensors",
                                              reference_idx, positions.size()));
        }
        for (std::size_t i = 0; i < positions.size(); ++i)
            for (std::size_t j = i + 1; j < positions.size(); ++j)
                if (distance(positions[i], positions[j]) < 1.0) {
                    throw ValidationError(
                        fmt::format("sensors {} and {} are closer than 1 m", i, j));
                }
    }

    EnuPoint centroid() const {
        EnuPoint c{};
        for (const auto& p : positions) c = c + p;
        return (1.0 / static_cast<double>(positions.size())) * c;
    }
};

struct TdoaDelta {
    std::size_t sensor = 0;
    double seconds = 0.0;  // arrival at `sensor` minus arrival at the reference
};

/// Arrival-time differences of one emission, all relative to the array's reference sensor.
struct TdoaMeasurement {
    std::int64_t t_ms = 0;
    std::vector<TdoaDelta> deltas;
};

struct TdoaSolution {
    EnuPoint pos;
    double cost = 0.0;  // sum of squared range-difference residuals, m^2
    int iterations = 0;
    bool converged = false;
};

namespace tdoa {

/// Mixes a run seed with an epoch so each epoch draws from its own reproducible stream.
inline std::uint64_t epoch_seed(std::uint64_t seed, std::int64_t t_ms) {
    std::uint64_t z = seed ^ (static_cast<std::uint64_t>(t_ms) * 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace detail {

inline std::vector<double> noiseless_deltas(const SensorArray& arr, EnuPoint p) {
    const double d_ref = distance(p, arr.positions[arr.reference_idx]);
    std::vector<double> out;
    for (std::size_t i = 0; i < arr.positions.size(); ++i) {
        if (i == arr.reference_idx) continue;
        out.push_back((distance(p, arr.positions[i]) - d_ref) / kSpeedOfLight);
    }
    return out;
}

inline Eigen::Vector2d unit(EnuPoint from, EnuPoint to) {
    const Eigen::Vector2d d(to.x - from.x, to.y - from.y);
    const double n = d.norm();
    return n > 1e-12 ? Eigen::Vector2d(d / n) : Eigen::Vector2d::Zero();
}

}  // namespace detail

/// Range-difference residuals c*dtau_i - (|p - s_i| - |p - s_ref|).
inline Eigen::VectorXd residuals(const SensorArray& arr, const TdoaMeasurement& m, EnuPoint p) {
    const double d_ref = distance(p, arr.positions.at(arr.reference_idx));
    Eigen::VectorXd r(static_cast<Eigen::Index>(m.deltas.size()));
    for (std::size_t i = 0; i < m.deltas.size(); ++i) {
        const auto& d = m.deltas[i];
        r(static_cast<Eigen::Index>(i)) =
            kSpeedOfLight * d.seconds - (distance(p, arr.positions.at(d.sensor)) - d_ref);
    }
    return r;
}

inline double cost(const SensorArray& arr, const TdoaMeasurement& m, EnuPoint p) {
    return residuals(arr, m, p).squaredNorm();
}

/// Forward model: TDoAs of an emitter at `p`, with i.i.d. Gaussian timing noise of
/// `sigma_t` seconds on every delta. Deterministic for a given seed.
inline TdoaMeasurement simulate_tdoa(const SensorArray& arr, EnuPoint p, double sigma_t,
                                     std::uint64_t seed, std::int64_t t_ms = 0) {
    if (sigma_t < 0.0) throw ContractError("timing noise must be non-negative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    TdoaMeasurement m;
    m.t_ms = t_ms;
    const auto clean = detail::noiseless_deltas(arr, p);
    std::size_t k = 0;
    for (std::size_t i = 0; i < arr.positions.size(); ++i) {
        if (i == arr.reference_idx) continue;
        m.deltas.push_back({i, clean[k++] + sigma_t * noise(rng)});
    }
    return m;
}

/// Gauss-Newton least squares on range differences, with step halving.
///
/// Stops when an accepted step is shorter than 1e-6 m or after 100 iterations; in the latter
/// case the best iterate is returned with `converged == false`. Throws DegenerateGeometry when
/// fewer than two deltas are given or the Jacobian loses rank at an iterate.
inline TdoaSolution solve_position(const SensorArray& arr, const TdoaMeasurement& m,
                                   EnuPoint init) {
    if (m.deltas.size() < 2) {
        throw DegenerateGeometry(fmt::format(
            "2-D TDoA fix needs at least 3 sensors (2 deltas), got {} delta(s)", m.deltas.size()));
    }
    if (!std::isfinite(init.x) || !std::isfinite(init.y)) {
        throw ContractError("initial guess must be finite");
    }
    constexpr int kMaxIterations = 100;
    constexpr double kStepTolerance = 1e-6;
    constexpr int kMaxHalvings = 50;

    // Iterate in a frame anchored at the reference sensor to keep coordinates small.
    const EnuPoint anchor = arr.positions.at(arr.reference_idx);
    SensorArray local = arr;
    for (auto& p : local.positions) p = p - anchor;
    const EnuPoint ref{0.0, 0.0};
    TdoaSolution sol{init - anchor, cost(local, m, init - anchor), 0, false};
    Eigen::MatrixXd J(static_cast<Eigen::Index>(m.deltas.size()), 2);
    for (int it = 1; it <= kMaxIterations; ++it) {
        sol.iterations = it;
        const Eigen::VectorXd r = residuals(local, m, sol.pos);
        const Eigen::Vector2d u_ref = detail::unit(ref, sol.pos);
        for (std::size_t i = 0; i < m.deltas.size(); ++i) {
            const Eigen::Vector2d u_i = detail::unit(local.positions.at(m.deltas[i].sensor), sol.pos);
            J.row(static_cast<Eigen::Index>(i)) = -(u_i - u_ref).transpose();
        }
        const Eigen::Matrix2d JtJ = J.transpose() * J;
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(JtJ);
        const double lmax = eig.eigenvalues()(1);
        if (!(lmax > 0.0) || eig.eigenvalues()(0) <= 1e-12 * lmax) {
            throw DegenerateGeometry(fmt::format("TDoA Jacobian is rank deficient at ({:.3f}, {:.3f})",
                                                 sol.pos.x + anchor.x, sol.pos.y + anchor.y));
        }
        const Eigen::Vector2d delta = -JtJ.ldlt().solve(J.transpose() * r);

        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h < kMaxHalvings; ++h, scale *= 0.5) {
            const EnuPoint trial{sol.pos.x + scale * delta(0), sol.pos.y + scale * delta(1)};
            const double c = cost(local, m, trial);
            if (c <= sol.cost) {
                const double step = scale * delta.norm();
                sol.pos = trial;
                sol.cost = c;
                accepted = true;
                if (step < kStepTolerance) sol.converged = true;
                break;
            }
        }
        // No decrease along the Gauss-Newton direction: already at a stationary point.
        if (!accepted) sol.converged = true;
        if (sol.converged) break;
    }
    sol.pos = sol.pos + anchor;
    return sol;
}

/// Multi-start solve: Gauss-Newton from `init`, the array centroid and a point a quarter of the
/// way from each sensor toward the centroid; returns the converged solution with the lowest
/// cost. A single start can settle in a spurious minimum when the target is close to a sensor.
/// Throws DegenerateGeometry when no start yields a usable solution.
inline TdoaSolution locate(const SensorArray& arr, const TdoaMeasurement& m, EnuPoint init) {
    const EnuPoint c = arr.centroid();
    std::vector<EnuPoint> starts{init, c};
    for (const auto& p : arr.positions) starts.push_back(p + 0.25 * (c - p));
    std::optional<TdoaSolution> best;
    std::optional<DegenerateGeometry> last_error;
    for (const auto& start : starts) {
        try {
            const auto sol = solve_position(arr, m, start);
            if (!sol.converged) continue;
            if (!best || sol.cost < best->cost) best = sol;
        } catch (const DegenerateGeometry& e) {
            last_error = e;
        }
    }
    if (!best) {
        if (last_error) throw *last_error;
        throw DegenerateGeometry("no Gauss-Newton start converged");
    }
    return *best;
}

/// Extra corruption applied on top of the TDoA chain to emulate spurious detections.
struct OutlierModel {
    double rate = 0.0;       // probability per emitted epoch
    double max_m = 200.0;    // radius of the uniform-in-disk displacement
};

struct FlightSimOptions {
    std::int64_t period_ms = 1000;  // decimation of the truth to the sensor rate; 0 keeps all
    OutlierModel outliers;
};

struct FlightSimResult {
    std::vector<TimedSample> rf;
    std::size_t dropped = 0;   // epochs where the solver failed or did not converge
    std::size_t outliers = 0;
};

/// Runs the sensing chain over a ground-truth flight: decimate, simulate TDoA, solve.
///
/// Each epoch seeds its own generator from (seed, t_ms). The solve is seeded with the previous
/// solution (the array centroid for the first epoch) and falls back on the other starts of
/// locate().
inline FlightSimResult simulate_flight(std::span<const TimedSample> truth, const SensorArray& arr,
                                       double sigma_t, std::uint64_t seed,
                                       const FlightSimOptions& opt = {}) {
    if (truth.empty()) throw EmptyInput("flight simulation needs a non-empty truth trajectory");
    arr.validate();
    FlightSimResult out;
    EnuPoint init = arr.centroid();
    std::int64_t next_t = truth.front().t_ms;
    for (const auto& s : truth) {
        if (opt.period_ms > 0) {
            if (s.t_ms < next_t) continue;
            next_t = s.t_ms + opt.period_ms;
        }
        const std::uint64_t es = epoch_seed(seed, s.t_ms);
        const auto m = simulate_tdoa(arr, s.pos, sigma_t, es, s.t_ms);
        TdoaSolution sol;
        try {
            sol = locate(arr, m, init);
        } catch (const DegenerateGeometry&) {
            ++out.dropped;
            continue;
        }
        if (!sol.converged) {
            ++out.dropped;
            continue;
        }
        init = sol.pos;
        EnuPoint emitted = sol.pos;
        if (opt.outliers.rate > 0.0) {
            std::mt19937_64 rng(es ^ 0xA5A5A5A5A5A5A5A5ULL);
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            if (u01(rng) < opt.outliers.rate) {
                const double radius = opt.outliers.max_m * std::sqrt(u01(rng));
                const double angle = 2.0 * std::numbers::pi * u01(rng);
                emitted = s.pos + EnuPoint{radius * std::cos(angle), radius * std::sin(angle)};
                ++out.outliers;
            }
        }
        out.rf.push_back({s.t_ms, emitted});
    }
    return out;
}

}  // namespace tdoa
}  // namespace rftrack
