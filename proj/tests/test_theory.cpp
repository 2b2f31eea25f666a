#include "lobregime/benchmark.hpp"
#include "lobregime/theory.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lobregime;
using namespace lobregime::theory;

namespace {

BoundInputs in(double eta, double t1, double delta, double ell = 0.0) {
    BoundInputs b;
    b.eta = eta;
    b.t1 = t1;
    b.delta = delta;
    b.ell = ell;
    return b;
}

}  // namespace

// ===========================================================================
// Closed-form bounds
// ===========================================================================

TEST(SnrSufficient, Examples) {
    EXPECT_TRUE(snr_sufficient(in(1.0, 20, 0.1)));
    EXPECT_NEAR(critical_eta(20, 0.1), std::sqrt(2.0 * std::log(10.0) / 20.0), 1e-15);
    EXPECT_NEAR(critical_eta(20, 0.1), 0.4799, 1e-4);
    for (double t1 : {1.0, 20.0, 1e4}) {
        for (double d : {0.01, 0.1, 0.5}) EXPECT_FALSE(snr_sufficient(in(0.0, t1, d)));
    }
    EXPECT_TRUE(snr_sufficient(in(0.01, 1e6, 0.1)));
    EXPECT_NEAR(critical_eta(1e6, 0.1), 0.00215, 1e-5);
}

TEST(EarlyDetectionBound, Examples) {
    const double expo = -25.0 + std::sqrt(100.0 * std::log(20.0));
    EXPECT_NEAR(expo, -7.69, 0.01);
    EXPECT_NEAR(early_detection_bound(in(1.0, 50, 0.05)), 1.0 - std::exp(expo) - 0.05, 1e-12);
    EXPECT_NEAR(early_detection_bound(in(1.0, 50, 0.05)), 0.9495, 1e-4);
    EXPECT_EQ(early_detection_bound(in(0.0, 50, 0.05)), 0.0);
    EXPECT_LT(early_detection_bound_raw(in(0.0, 50, 0.05)), 0.0);
}

TEST(EarlyDetectionBound, IncreasingInEta) {
    for (double t1 : {10.0, 20.0, 50.0, 200.0}) {
        for (double d : {0.01, 0.05, 0.1}) {
            double prev = early_detection_bound_raw(in(0.0, t1, d));
            for (int i = 1; i <= 300; ++i) {
                const double b = early_detection_bound_raw(in(0.01 * i, t1, d));
                // Strict until the exponential term drops below rounding of 1 - delta.
                if (b < 1.0 - d - 1e-12) EXPECT_GT(b, prev);
                EXPECT_GE(b, prev);
                EXPECT_LE(early_detection_bound(in(0.01 * i, t1, d)), 1.0);
                prev = b;
            }
        }
    }
}

TEST(EarlyDetectionBound, PositiveOnlyWhenSufficient) {
    // Positivity implies the sufficiency condition.
    for (double t1 = 2; t1 <= 200; t1 += 3) {
        for (double d : {0.01, 0.05, 0.1, 0.3}) {
            for (int i = 0; i <= 200; ++i) {
                const BoundInputs b = in(0.01 * i, t1, d);
                if (early_detection_bound(b) > 0.0) EXPECT_TRUE(snr_sufficient(b)) << b.eta << " " << t1 << " " << d;
            }
        }
    }
}

TEST(CoverageUpperBound, Examples) {
    EXPECT_NEAR(coverage_upper_bound(in(1.0, 20, 0.1, 0.0)), 0.5, 1e-15);
    // ell * eta / sqrt(t1) = 1.645
    EXPECT_NEAR(coverage_upper_bound(in(1.0, 25, 0.1, 1.645 * 5.0)), 0.05, 1e-3);
    double prev = 1.0;
    for (int l = 0; l <= 50; ++l) {
        const double b = coverage_upper_bound(in(0.2, 30, 0.1, l));
        EXPECT_LE(b, prev);
        prev = b;
    }
    EXPECT_NEAR(normal_cdf(1.96), 0.9750021048517795, 1e-12);
}

TEST(BoundInputs, Validation) {
    EXPECT_NO_THROW(in(0.5, 20, 0.1).validate());
    EXPECT_THROW(in(-0.1, 20, 0.1).validate(), ParameterError);
    EXPECT_THROW(in(0.5, 0.5, 0.1).validate(), ParameterError);
    EXPECT_THROW(in(0.5, 20, 0.0).validate(), ParameterError);
    EXPECT_THROW(in(0.5, 20, 1.0).validate(), ParameterError);
    EXPECT_THROW(in(0.5, 20, 0.1, -1.0).validate(), ParameterError);
}

// ===========================================================================
// Monte-Carlo oracle
// ===========================================================================

TEST(McStopping, DominatesBoundOnGrid) {
    for (double eta : {0.3, 0.5, 1.0}) {
        for (double t1 : {20.0, 50.0}) {
            for (double d : {0.05, 0.1}) {
                const BoundInputs b = in(eta, t1, d);
                const McEstimate mc = mc_stopping_probability(b, 100000, 9);
                EXPECT_EQ(mc.n, 100000u);
                EXPECT_EQ(mc.coupling_violations, 0u);
                const double bound = early_detection_bound(b);
                if (bound > 0.0) EXPECT_GE(mc.p, bound - 3.0 * mc.se) << eta << " " << t1 << " " << d;
            }
        }
    }
}

TEST(McStopping, MatchesIndependentSimulation) {
    // Same recursion written out here, with its own random stream.
    const BoundInputs b = in(0.3, 20, 0.1);
    const double h = std::log(1.0 / b.delta);
    std::mt19937_64 gen(17);
    std::normal_distribution<double> n(0.0, 1.0);
    const int trials = 40000;
    int hits = 0;
    for (int k = 0; k < trials; ++k) {
        double c = 0.0;
        for (int s = 1; s <= 20; ++s) {
            c = std::max(0.0, c + b.eta * s + n(gen) - b.eta / 2.0);
            if (c > h) {
                ++hits;
                break;
            }
        }
    }
    const double ref = static_cast<double>(hits) / trials;
    const McEstimate mc = mc_stopping_probability(b, 40000, 3);
    const double se = std::sqrt(ref * (1 - ref) / trials + mc.se * mc.se);
    EXPECT_NEAR(mc.p, ref, 4.0 * se + 1e-9);
}

TEST(McStopping, ZeroDriftIsFalseAlarmRate) {
    const BoundInputs b = in(0.0, 20, 0.1);
    const McEstimate mc = mc_stopping_probability(b, 20000, 5);
    EXPECT_GT(mc.p, 0.0);
    EXPECT_LT(mc.p, 1.0);
    EXPECT_GE(mc.p, early_detection_bound(b));
    EXPECT_NEAR(mc.se, std::sqrt(mc.p * (1 - mc.p) / 20000.0), 1e-12);
    EXPECT_EQ(mc.coupling_violations, 0u);
}

TEST(McStopping, Deterministic) {
    const BoundInputs b = in(0.5, 20, 0.05);
    const McEstimate a = mc_stopping_probability(b, 10000, 1);
    const McEstimate c = mc_stopping_probability(b, 10000, 1);
    EXPECT_EQ(a.p, c.p);
    EXPECT_EQ(a.partial_sum_exceedances, c.partial_sum_exceedances);
}

TEST(McStopping, RejectsTooFewSamples) {
    EXPECT_THROW(mc_stopping_probability(in(0.5, 20, 0.1), 100, 1), ParameterError);
}

// ===========================================================================
// Trade-off bound on the simulated benchmark
// ===========================================================================

TEST(TradeOff, SweepRespectsCoverageBound) {
    BenchmarkConfig cfg;
    const std::vector<double> ps = {70, 80, 85, 90, 95};
    const auto pts = pr_frontier(cfg, ps, false);
    const double eta = cfg.dgp.eta();
    const double t1 = 1.0 / cfg.dgp.p12;  // mean build-up duration
    for (const auto& pt : pts) {
        if (!pt.report.mean_lead.value || *pt.report.mean_lead.value <= 0.0) continue;
        const double ub = coverage_upper_bound(in(eta, t1, 0.1, *pt.report.mean_lead.value));
        EXPECT_LE(*pt.report.coverage.value, ub + 0.1) << "p=" << pt.percentile;
    }
}
