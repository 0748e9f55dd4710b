#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rftrack/dataio.hpp"
#include "rftrack/motion_models.hpp"

using namespace rftrack;
using namespace rftrack::models;

namespace {

constexpr double kPi = std::numbers::pi;

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

Vector random_state(MotionModel mm, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-500, 500), vel(-20, 20), acc(-3, 3), w(-0.5, 0.5);
    Vector s(state_dim(mm));
    s(0) = pos(rng);
    s(1) = pos(rng);
    s(2) = vel(rng);
    s(3) = vel(rng);
    if (mm == MotionModel::CA) {
        s(4) = acc(rng);
        s(5) = acc(rng);
    }
    if (mm == MotionModel::CT) s(4) = w(rng);
    return s;
}

}  // namespace

TEST(MotionModels, StateDimensions) {
    EXPECT_EQ(state_dim(MotionModel::CV), 4);
    EXPECT_EQ(state_dim(MotionModel::CA), 6);
    EXPECT_EQ(state_dim(MotionModel::CT), 5);
    EXPECT_EQ(parse_motion_model("CT"), MotionModel::CT);
    EXPECT_FALSE(parse_motion_model("CJ").has_value());
}

TEST(MotionModels, ConstantVelocityTransition) {
    const auto s = transition(MotionModel::CV, vec({0, 0, 1, 2}), 1.5);
    EXPECT_TRUE(s.isApprox(vec({1.5, 3, 1, 2})));
}

TEST(MotionModels, ConstantAccelerationTransition) {
    const auto s = transition(MotionModel::CA, vec({0, 0, 1, 0, 2, 0}), 2.0);
    EXPECT_TRUE(s.isApprox(vec({6, 0, 5, 0, 2, 0})));
}

TEST(MotionModels, ConstantTurnQuarterCircle) {
    const auto s = transition(MotionModel::CT, vec({0, 0, 1, 0, kPi / 2}), 1.0);
    const auto ref = oracle::integrate_turn({0, 0, 1, 0}, kPi / 2, 1.0, 10000);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(s(i), ref[static_cast<std::size_t>(i)], 1e-10);
    EXPECT_NEAR(s(0), 2 / kPi, 1e-12);
    EXPECT_NEAR(s(1), 2 / kPi, 1e-12);
    EXPECT_NEAR(s(2), 0.0, 1e-12);
    EXPECT_NEAR(s(3), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(s(4), kPi / 2);
}

TEST(MotionModels, TurnMatchesIntegrationForRandomStates) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        const Vector s = random_state(MotionModel::CT, rng);
        const auto out = transition(MotionModel::CT, s, 1.3);
        const auto ref = oracle::integrate_turn({s(0), s(1), s(2), s(3)}, s(4), 1.3, 2000);
        for (int k = 0; k < 4; ++k) EXPECT_NEAR(out(k), ref[static_cast<std::size_t>(k)], 1e-9);
    }
}

TEST(MotionModels, DimensionMismatchIsContractError) {
    EXPECT_THROW(transition(MotionModel::CV, vec({1, 2, 3}), 1.0), ContractError);
    EXPECT_THROW(jacobian(MotionModel::CT, vec({1, 2, 3, 4}), 1.0), ContractError);
    EXPECT_THROW(transition(MotionModel::CV, vec({1, 2, 3, 4}), 0.0), ContractError);
}

TEST(MotionModels, LinearJacobiansAreTransitionMatrices) {
    std::mt19937_64 rng(1);
    for (auto mm : {MotionModel::CV, MotionModel::CA}) {
        const Vector s = random_state(mm, rng);
        const Matrix F = jacobian(mm, s, 0.7);
        EXPECT_TRUE((F * s).isApprox(transition(mm, s, 0.7)));
    }
    Matrix expected(4, 4);
    expected << 1, 0, 2, 0, 0, 1, 0, 2, 0, 0, 1, 0, 0, 0, 0, 1;
    EXPECT_EQ(jacobian(MotionModel::CV, vec({9, 9, 9, 9}), 2.0), expected);
}

TEST(MotionModels, TurnJacobianMatchesFiniteDifferences) {
    const Vector s = vec({0, 0, 1, 0, kPi / 2});
    const Matrix J = jacobian(MotionModel::CT, s, 1.0);
    const Matrix fd = oracle::finite_difference_jacobian(
        [](const Vector& x) { return transition(MotionModel::CT, x, 1.0); }, s, 1e-6);
    for (Eigen::Index i = 0; i < 5; ++i)
        for (Eigen::Index j = 0; j < 5; ++j)
            EXPECT_LE(std::abs(J(i, j) - fd(i, j)), 1e-5 * std::max(1.0, std::abs(J(i, j))))
                << i << "," << j;
}

TEST(MotionModels, JacobianPropertyOverRandomStates) {
    std::mt19937_64 rng(99);
    for (auto mm : {MotionModel::CV, MotionModel::CA, MotionModel::CT}) {
        for (int i = 0; i < 100; ++i) {
            const Vector s = random_state(mm, rng);
            const Matrix J = jacobian(mm, s, 1.0);
            const Matrix fd = oracle::finite_difference_jacobian(
                [mm](const Vector& x) { return transition(mm, x, 1.0); }, s, 1e-6);
            EXPECT_LE(((J - fd).array().abs() / J.array().abs().max(1.0)).maxCoeff(), 1e-5);
        }
    }
}

TEST(MotionModels, TurnJacobianSmallOmegaLimit) {
    const Vector s = vec({3, 4, 2, -1, 1e-9});
    const Matrix J = jacobian(MotionModel::CT, s, 1.0);
    const Matrix cv = jacobian(MotionModel::CV, s.head(4), 1.0);
    EXPECT_LE((J.topLeftCorner(4, 4) - cv).cwiseAbs().maxCoeff(), 1e-8);
    // Either side of the series threshold agrees.
    const Matrix below = jacobian(MotionModel::CT, vec({0, 0, 2, -1, 0.9e-6}), 1.0);
    const Matrix above = jacobian(MotionModel::CT, vec({0, 0, 2, -1, 1.1e-6}), 1.0);
    EXPECT_LE((below - above).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MotionModels, TurnNearZeroRateEqualsConstantVelocity) {
    const Vector s = vec({10, -4, 3, 7, 1e-12});
    const auto ct = transition(MotionModel::CT, s, 2.5);
    const auto cv = transition(MotionModel::CV, s.head(4), 2.5);
    EXPECT_LE((ct.head(4) - cv).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MotionModels, SemigroupProperty) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> step(0.1, 3.0);
    for (auto mm : {MotionModel::CV, MotionModel::CA, MotionModel::CT}) {
        for (int i = 0; i < 100; ++i) {
            const Vector s = random_state(mm, rng);
            const double t1 = step(rng), t2 = step(rng);
            const Vector two = transition(mm, transition(mm, s, t1), t2);
            const Vector one = transition(mm, s, t1 + t2);
            for (Eigen::Index k = 0; k < s.size(); ++k)
                EXPECT_NEAR(two(k), one(k), 1e-9 * std::max(1.0, std::abs(one(k))));
        }
    }
}

TEST(MotionModels, TurnPreservesSpeed) {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 100; ++i) {
        const Vector s = random_state(MotionModel::CT, rng);
        const Vector n = transition(MotionModel::CT, s, 1.7);
        EXPECT_NEAR(std::hypot(n(2), n(3)), std::hypot(s(2), s(3)), 1e-9);
    }
}

TEST(MotionModels, ProcessNoiseZeroSigmas) {
    for (auto mm : {MotionModel::CV, MotionModel::CA, MotionModel::CT}) {
        const Matrix Q = process_noise(mm, 1.3, {});
        EXPECT_EQ(Q.rows(), state_dim(mm));
        EXPECT_EQ(Q.cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(MotionModels, ProcessNoiseConstantVelocityEntries) {
    const Matrix Q = process_noise(MotionModel::CV, 1.0, {1.0, 0.0, 0.0});
    Matrix expected(4, 4);
    expected << 0.25, 0, 0.5, 0,
                0, 0.25, 0, 0.5,
                0.5, 0, 1, 0,
                0, 0.5, 0, 1;
    EXPECT_TRUE(Q.isApprox(expected));
}

TEST(MotionModels, ProcessNoiseStructure) {
    const double T = 2.0;
    const Matrix ca = process_noise(MotionModel::CA, T, {0.0, 0.5, 0.0});
    // jerk^2 * [T^2/2, T, 1] outer product on (x, vx, ax).
    EXPECT_NEAR(ca(0, 0), 0.25 * 4.0, 1e-12);
    EXPECT_NEAR(ca(0, 2), 0.25 * 2.0 * 2.0, 1e-12);
    EXPECT_NEAR(ca(0, 4), 0.25 * 2.0, 1e-12);
    EXPECT_NEAR(ca(4, 4), 0.25, 1e-12);
    EXPECT_EQ(ca(0, 1), 0.0);
    EXPECT_EQ(ca(0, 5), 0.0);

    const Matrix ct = process_noise(MotionModel::CT, T, {1.0, 0.0, 0.1});
    EXPECT_NEAR(ct(4, 4), 0.01 * T * T, 1e-15);
    EXPECT_TRUE(ct.topLeftCorner(4, 4).isApprox(process_noise(MotionModel::CV, T, {1.0, 0, 0})));
    EXPECT_THROW(process_noise(MotionModel::CV, 1.0, {-1.0, 0, 0}), ContractError);
}

TEST(MotionModels, ProcessNoiseSymmetricPsd) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> T(1e-3, 5.0), sig(0.0, 10.0);
    for (int i = 0; i < 300; ++i) {
        for (auto mm : {MotionModel::CV, MotionModel::CA, MotionModel::CT}) {
            const Matrix Q = process_noise(mm, T(rng), {sig(rng), sig(rng), sig(rng)});
            EXPECT_LE((Q - Q.transpose()).cwiseAbs().maxCoeff(), 1e-12);
            Eigen::SelfAdjointEigenSolver<Matrix> eig(Q);
            EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12 * std::max(1.0, Q.norm()));
        }
    }
}

TEST(MotionModels, MeasurementMatrixSelectsPosition) {
    EXPECT_TRUE((measurement_matrix(MotionModel::CV) * vec({1, 2, 3, 4})).isApprox(vec({1, 2})));
    EXPECT_TRUE((measurement_matrix(MotionModel::CA) * vec({1, 2, 3, 4, 5, 6})).isApprox(vec({1, 2})));
    EXPECT_TRUE((measurement_matrix(MotionModel::CT) * vec({7, 8, 0, 0, 1})).isApprox(vec({7, 8})));
}

TEST(MotionModels, SigmaEstimateZeroForConstantVelocity) {
    std::vector<KinematicSample> seg;
    for (int k = 0; k < 20; ++k) seg.push_back({k * 1000, {3.0 * k, -1.0 * k}, {3.0, -1.0}});
    const auto s = estimate_process_sigmas(seg);
    EXPECT_EQ(s.acc, 0.0);
    EXPECT_EQ(s.jerk, 0.0);
    EXPECT_EQ(s.omega, 0.0);
}

TEST(MotionModels, SigmaEstimateRecoversInjectedAccelerationNoise) {
    // Monte-Carlo oracle: velocity random walk driven by N(0, 0.5^2) acceleration per axis.
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> a(0.0, 0.5);
    std::vector<KinematicSample> seg;
    EnuPoint p{}, v{4.0, 1.0};
    for (int k = 0; k <= 1000; ++k) {
        seg.push_back({k * 1000, p, v});
        p = p + v;
        v = v + EnuPoint{a(rng), a(rng)};
    }
    const auto s = estimate_process_sigmas(seg);
    EXPECT_NEAR(s.acc, 0.5, 0.15 * 0.5);
}

TEST(MotionModels, SigmaEstimateFromFiniteDifferences) {
    std::vector<TimedSample> truth;
    for (int k = 0; k < 30; ++k) {
        const double t = k * 0.5;
        truth.push_back({k * 500, {0.5 * 0.8 * t * t, 2.0 * t}});
    }
    const auto kin = finite_difference_velocities(truth);
    ASSERT_EQ(kin.size(), truth.size() - 1);
    const auto s = estimate_process_sigmas(kin);
    // Constant acceleration: velocity changes are constant, so jerk is zero.
    EXPECT_NEAR(s.jerk, 0.0, 1e-9);
    EXPECT_NEAR(s.acc, 0.0, 1e-9);
}

TEST(MotionModels, SigmaEstimateTurnRate) {
    std::vector<KinematicSample> seg;
    for (int k = 0; k < 40; ++k) {
        const double h = 0.2 * k;
        seg.push_back({k * 1000, {}, {5 * std::cos(h), 5 * std::sin(h)}});
    }
    EXPECT_NEAR(estimate_process_sigmas(seg).omega, 0.0, 1e-9);
}

TEST(MotionModels, SigmaEstimateNeedsThreeSamples) {
    std::vector<KinematicSample> seg{{0, {}, {}}, {1000, {}, {}}};
    EXPECT_THROW(estimate_process_sigmas(seg), EstimationError);
}
