#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "rftrack/ekf.hpp"

using namespace rftrack;

namespace {

FilterState make_state(Vector s, Matrix P) { return {std::move(s), std::move(P), 0}; }

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

std::vector<AlignedPair> pairs_from(const std::vector<EnuPoint>& truth,
                                    const std::vector<EnuPoint>& meas, std::int64_t step_ms = 1000) {
    std::vector<AlignedPair> out;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        out.push_back({static_cast<std::int64_t>(k) * step_ms, truth[k], meas[k], k});
    }
    return out;
}

}  // namespace

TEST(Ekf, PredictConstantVelocity) {
    const auto fs = make_state(vec({0, 0, 1, 0}), Matrix::Identity(4, 4));
    const auto out = ekf::predict(fs, MotionModel::CV, 1.0, Matrix::Zero(4, 4));
    EXPECT_TRUE(out.s.isApprox(vec({1, 0, 1, 0})));
    EXPECT_DOUBLE_EQ(out.P(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(out.P(0, 2), 1.0);
    EXPECT_DOUBLE_EQ(out.P(2, 2), 1.0);
}

TEST(Ekf, PredictDeterministicWithZeroCovariance) {
    const auto fs = make_state(vec({1, 2, 3, 4, 0.2}), Matrix::Zero(5, 5));
    const auto out = ekf::predict(fs, MotionModel::CT, 1.0, Matrix::Zero(5, 5));
    EXPECT_EQ(out.P.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ekf, PredictTurnAgainstMatrixProducts) {
    const Vector s = vec({0, 0, 1, 0, std::numbers::pi / 2});
    Matrix P = Matrix::Identity(5, 5);
    P(0, 2) = P(2, 0) = 0.3;
    const Matrix Q = models::process_noise(MotionModel::CT, 1.0, {0.2, 0, 0.05});
    const auto out = ekf::predict(make_state(s, P), MotionModel::CT, 1.0, Q);
    EXPECT_NEAR(out.s(0), 2 / std::numbers::pi, 1e-12);
    EXPECT_NEAR(out.s(1), 2 / std::numbers::pi, 1e-12);

    // Explicit entry-by-entry F P F^T + Q.
    const Matrix F = models::jacobian(MotionModel::CT, s, 1.0);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            double acc = Q(i, j);
            for (int a = 0; a < 5; ++a)
                for (int b = 0; b < 5; ++b) acc += F(i, a) * P(a, b) * F(j, b);
            EXPECT_NEAR(out.P(i, j), acc, 1e-12);
        }
}

TEST(Ekf, PredictDimensionMismatch) {
    const auto fs = make_state(vec({0, 0, 1, 0}), Matrix::Identity(4, 4));
    EXPECT_THROW(ekf::predict(fs, MotionModel::CA, 1.0, Matrix::Zero(6, 6)), ContractError);
    EXPECT_THROW(ekf::predict(fs, MotionModel::CV, 1.0, Matrix::Zero(5, 5)), ContractError);
}

TEST(Ekf, UpdateHalfGain) {
    const auto fs = make_state(vec({10, 20, 0, 0}), Matrix::Identity(4, 4));
    const MeasurementModel meas{models::measurement_matrix(MotionModel::CV), Matrix2::Identity()};
    const auto out = ekf::update(fs, {12, 22}, meas);
    EXPECT_NEAR(out.s(0), 11.0, 1e-12);
    EXPECT_NEAR(out.s(1), 21.0, 1e-12);
    EXPECT_NEAR(out.P(0, 0), 0.5, 1e-12);
}

TEST(Ekf, UpdateIgnoresUntrustedMeasurement) {
    const auto fs = make_state(vec({10, 20, 1, 1}), Matrix::Identity(4, 4));
    const MeasurementModel meas{models::measurement_matrix(MotionModel::CV), 1e12 * Matrix2::Identity()};
    const auto out = ekf::update(fs, {500, -300}, meas);
    EXPECT_LE((out.s - fs.s).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Ekf, UpdateTrustsPerfectMeasurement) {
    const auto fs = make_state(vec({10, 20, 1, 1}), Matrix::Identity(4, 4));
    const MeasurementModel meas{models::measurement_matrix(MotionModel::CV), Matrix2::Zero()};
    const auto out = ekf::update(fs, {13, 17}, meas);
    EXPECT_DOUBLE_EQ(out.s(0), 13.0);
    EXPECT_DOUBLE_EQ(out.s(1), 17.0);
}

TEST(Ekf, UpdateSingularInnovation) {
    const auto fs = make_state(vec({0, 0, 0, 0}), Matrix::Zero(4, 4));
    const MeasurementModel meas{models::measurement_matrix(MotionModel::CV), Matrix2::Zero()};
    EXPECT_THROW(ekf::update(fs, {1, 1}, meas), NumericalError);
}

TEST(Ekf, UpdateNeverIncreasesPositionCovariance) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 500; ++i) {
        Matrix A = Matrix::NullaryExpr(5, 5, [&] { return n(rng); });
        const Matrix P = A * A.transpose();
        Eigen::Matrix2d B = Eigen::Matrix2d::NullaryExpr([&] { return n(rng); });
        const Matrix2 R = B * B.transpose();
        const MeasurementModel meas{models::measurement_matrix(MotionModel::CT), R};
        const auto out = ekf::update(make_state(Vector::Zero(5), P), {n(rng), n(rng)}, meas);
        const Matrix& H = meas.H;
        EXPECT_LE((H * out.P * H.transpose()).trace(), (H * P * H.transpose()).trace() + 1e-9);
    }
}

TEST(Ekf, InitialStateLayout) {
    FilterConfig cfg;
    cfg.R = Matrix2::Identity() * 9.0;
    const auto ca = ekf::initial_state(MotionModel::CA, {3, 4}, 100, cfg);
    EXPECT_TRUE(ca.s.isApprox(vec({3, 4, 0, 0, 0, 0})));
    EXPECT_DOUBLE_EQ(ca.P(0, 0), 9.0);
    EXPECT_DOUBLE_EQ(ca.P(2, 2), 400.0);
    EXPECT_DOUBLE_EQ(ca.P(4, 4), 25.0);
    const auto ct = ekf::initial_state(MotionModel::CT, {3, 4}, 100, cfg);
    EXPECT_DOUBLE_EQ(ct.P(4, 4), 1.0);
}

TEST(Ekf, ConstantMeasurementsConverge) {
    std::vector<EnuPoint> z(51, EnuPoint{5, 5});
    const auto pairs = pairs_from(z, z);
    FilterConfig cfg;
    cfg.R = Matrix2::Identity() * 25.0;
    const Segment seg{"S", 0, 50, MotionModel::CV, {0.1, 0, 0}};
    const auto track = ekf::run_segment(seg, pairs, cfg);
    ASSERT_EQ(track.points.size(), 51u);
    EXPECT_LT(distance(track.points.back().pos, {5, 5}), 0.01);
}

TEST(Ekf, NoiselessFlightIsReproduced) {
    std::vector<EnuPoint> truth;
    for (int k = 0; k < 30; ++k) truth.push_back({2.0 + 3.0 * k, -1.0 + 1.5 * k});
    const auto pairs = pairs_from(truth, truth);
    FilterConfig cfg;
    cfg.R = Matrix2::Identity() * 1e-12;
    const Segment seg{"S", 0, 29, MotionModel::CV, {}};
    const auto track = ekf::run_segment(seg, pairs, cfg);
    for (std::size_t k = 0; k < truth.size(); ++k) {
        EXPECT_LT(distance(track.points[k].pos, truth[k]), 1e-6);
    }
}

TEST(Ekf, SinglePairSegmentIsSkipped) {
    const auto pairs = pairs_from({{0, 0}}, {{1, 1}});
    const Segment seg{"S", 0, 0, MotionModel::CV, {}};
    EXPECT_THROW(ekf::run_segment(seg, pairs, {}), SegmentSkipped);
}

TEST(Ekf, IrregularStepsUseTimestampGaps) {
    // Exact measurements of a constant-velocity target sampled at irregular intervals.
    std::vector<AlignedPair> pairs;
    const std::int64_t times[] = {0, 900, 2100, 3000, 4400, 5000};
    for (std::size_t k = 0; k < 6; ++k) {
        const double t = static_cast<double>(times[k]) / 1000.0;
        const EnuPoint p{4.0 * t, -2.0 * t};
        pairs.push_back({times[k], p, p, k});
    }
    FilterConfig cfg;
    cfg.R = Matrix2::Identity() * 1e-8;
    const auto track = ekf::run_segment({"S", 0, 5, MotionModel::CV, {}}, pairs, cfg);
    EXPECT_NEAR(track.points.back().state.s(2), 4.0, 1e-3);
    EXPECT_NEAR(track.points.back().state.s(3), -2.0, 1e-3);
}

TEST(Ekf, CausalTruncation) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0, 5);
    std::vector<EnuPoint> truth, meas;
    for (int k = 0; k < 40; ++k) {
        truth.push_back({1.0 * k, 0.5 * k});
        meas.push_back(truth.back() + EnuPoint{n(rng), n(rng)});
    }
    const auto pairs = pairs_from(truth, meas);
    FilterConfig cfg;
    cfg.R = Matrix2::Identity() * 25.0;
    const Segment full{"S", 0, 39, MotionModel::CA, {0, 0.3, 0}};
    const auto whole = ekf::run_segment(full, pairs, cfg);
    const std::span<const AlignedPair> head(pairs.data(), 20);
    const auto part = ekf::run_segment(full, head, cfg);
    for (std::size_t k = 0; k < 20; ++k) {
        EXPECT_EQ(part.points[k].pos, whole.points[k].pos);
    }
}

TEST(Ekf, SegmentsAreIndependent) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0, 4);
    std::vector<EnuPoint> truth, meas;
    for (int k = 0; k < 60; ++k) {
        truth.push_back({2.0 * k, std::sin(0.1 * k) * 30});
        meas.push_back(truth.back() + EnuPoint{n(rng), n(rng)});
    }
    const auto pairs = pairs_from(truth, meas);
    FilterConfig cfg;
    cfg.R = Matrix2::Identity() * 16.0;
    const Segment a{"A", 0, 24, MotionModel::CV, {0.5, 0, 0}};
    const Segment b{"B", 30, 59, MotionModel::CT, {0.5, 0, 0.02}};

    const auto both = ekf::run_trajectory({b, a}, pairs, cfg);
    ASSERT_EQ(both.tracks.size(), 2u);
    EXPECT_EQ(both.tracks[0].first.id, "A");  // sorted by start index

    // Deleting A's data leaves B's track bit-identical.
    std::vector<AlignedPair> without_a(pairs.begin() + 25, pairs.end());
    const auto only_b = ekf::run_trajectory({b}, without_a, cfg);
    ASSERT_EQ(only_b.tracks.size(), 1u);
    const auto& tb = both.tracks[1].second.points;
    const auto& ob = only_b.tracks[0].second.points;
    ASSERT_EQ(tb.size(), ob.size());
    for (std::size_t k = 0; k < tb.size(); ++k) EXPECT_EQ(tb[k].pos, ob[k].pos);

    // One segment over everything equals run_segment.
    const Segment all{"ALL", 0, 59, MotionModel::CV, {0.5, 0, 0}};
    const auto single = ekf::run_trajectory({all}, pairs, cfg);
    const auto direct = ekf::run_segment(all, pairs, cfg);
    ASSERT_EQ(single.tracks[0].second.points.size(), direct.points.size());
    for (std::size_t k = 0; k < direct.points.size(); ++k) {
        EXPECT_EQ(single.tracks[0].second.points[k].pos, direct.points[k].pos);
    }

    // Parallel execution gives the same result.
    const auto par = ekf::run_trajectory({a, b}, pairs, cfg, 4);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t k = 0; k < par.tracks[s].second.points.size(); ++k)
            EXPECT_EQ(par.tracks[s].second.points[k].pos, both.tracks[s].second.points[k].pos);
}

TEST(Ekf, TrajectoryReportsSkippedSegments) {
    const auto pairs = pairs_from({{0, 0}, {1, 1}, {2, 2}}, {{0, 0}, {1, 1}, {2, 2}});
    FilterConfig cfg;
    const auto out = ekf::run_trajectory(
        {{"A", 0, 1, MotionModel::CV, {}}, {"B", 2, 2, MotionModel::CV, {}}}, pairs, cfg);
    EXPECT_EQ(out.tracks.size(), 1u);
    ASSERT_EQ(out.issues.size(), 1u);
    EXPECT_EQ(out.issues[0].segment_id, "B");
    EXPECT_TRUE(out.issues[0].skipped);
}

TEST(Ekf, EstimateR) {
    std::vector<AlignedPair> same{{0, {1, 1}, {1, 1}, 0}, {1, {2, 2}, {2, 2}, 1}};
    EXPECT_EQ(ekf::estimate_R(same).cwiseAbs().maxCoeff(), 0.0);

    std::vector<AlignedPair> mean_case{
        {0, {0, 0}, {3, 0}, 0}, {1, {0, 0}, {0, 4}, 1}, {2, {0, 0}, {3, 4}, 2}};
    const auto R = ekf::estimate_R(mean_case, RMode::Mean);
    EXPECT_DOUBLE_EQ(R(0, 0), 4.0);
    EXPECT_DOUBLE_EQ(R(1, 1), 4.0);
    EXPECT_DOUBLE_EQ(R(0, 1), 0.0);

    std::vector<AlignedPair> offset;
    for (std::size_t k = 0; k < 5; ++k) {
        const EnuPoint u{static_cast<double>(k), 2.0};
        offset.push_back({static_cast<std::int64_t>(k), u, u + EnuPoint{3, -4}, k});
    }
    const auto M = ekf::estimate_R(offset, RMode::Mse);
    EXPECT_NEAR(M(0, 0), 9.0, 1e-12);
    EXPECT_NEAR(M(1, 1), 16.0, 1e-12);
    EXPECT_THROW(ekf::estimate_R(std::vector<AlignedPair>{}), EstimationError);
}
