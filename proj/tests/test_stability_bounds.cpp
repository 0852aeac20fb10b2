#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracle_suites.hpp"

using namespace drqft;

namespace {

constexpr double pi = std::numbers::pi;

problem fixture(const std::string& name) { return load_problem(std::string(DRQFT_PROBLEMS_DIR) + "/" + name + ".json"); }

std::set<std::string> failing(const validation_report& r) {
    std::set<std::string> out;
    for (const auto& b : r.boundaries)
        if (!b.pass) out.insert(b.label);
    return out;
}

bool member(const boundary& b, double phase, double g_db) {
    for (const auto& iv : b.allowed_at(phase))
        if (iv.contains(g_db)) return true;
    return false;
}

} // namespace

TEST(Stability, Example3Frozen) {
    const auto v = assess(fixture("ex3").loop(), 512);
    EXPECT_TRUE(v.stable);
    EXPECT_TRUE(v.applicable);
    EXPECT_TRUE(v.oracle_agrees);
    EXPECT_EQ(v.net_crossings, 0);
    EXPECT_NEAR(v.oracle.max_modulus, 0.893352, 1e-6);
    EXPECT_NEAR(v.margins.gm_db, 8.88, 0.01);
    EXPECT_NEAR(v.margins.pm_deg, 54.57, 0.05);
}

TEST(Stability, PrintedExample3IsUnstable) {
    const auto v = assess(fixture("ex3_printed").loop(), 512);
    EXPECT_FALSE(v.stable);
    EXPECT_EQ(v.oracle.status, oracle_status::unstable);
    EXPECT_TRUE(v.oracle_agrees);
}

TEST(Stability, CrossingCountAgreesWithPoleOracle) {
    int doubling_failures = -1;
    const auto r = oracles::crossing_vs_roots(200, 12345, &doubling_failures);
    EXPECT_TRUE(r.pass) << r.detail;
    EXPECT_EQ(r.cases, 200);
    EXPECT_EQ(doubling_failures, 0);
}

TEST(Stability, DoublingRuleOnFixtures) {
    for (const char* name : {"ex3", "ex3_printed", "ex7", "ex9", "ex11"}) {
        const auto L = fixture(name).loop().open_loop();
        const auto half = count_crossings(nichols_curve_of(L, 512, false));
        const auto full = count_crossings(nichols_curve_of(L, 512, true));
        EXPECT_DOUBLE_EQ(full.net, 2 * half.net) << name;
    }
}

TEST(Stability, GainMarginFallsWithLoopGain) {
    const auto L = fixture("ex3").loop().open_loop();
    double prev = std::numeric_limits<double>::infinity();
    const double gm0 = margins(nichols_curve_of(L)).gm_db;
    for (double k : {1.0, 1.2, 1.5, 2.0, 2.5}) {
        const rational_tf Lk(k * L.num(), L.den(), L.ts());
        const double gm = margins(nichols_curve_of(Lk)).gm_db;
        EXPECT_LT(gm, prev);
        EXPECT_NEAR(gm, gm0 - 20 * std::log10(k), 1e-6);
        prev = gm;
    }
}

TEST(Stability, CriticalPointDetected) {
    const rational_tf L(polynomial{1.5}, polynomial{1, -0.5}, 0.1);
    const auto v = assess(L, 256);
    EXPECT_TRUE(v.critical_point);
    EXPECT_FALSE(v.stable);
}

TEST(Stability, PoleOnUnitCircleRejected) {
    const rational_tf L(polynomial{0.3}, polynomial{1, 1}, 0.1);
    try {
        (void)nichols_curve_of(L);
        FAIL();
    } catch (const error& e) {
        EXPECT_EQ(e.code(), error_code::on_circle_pole);
    }
}

TEST(Stability, WorstCaseMargins) {
    const auto a = worst_case_margins(0.5);
    EXPECT_NEAR(a.pm_deg, 28.955, 1e-3);
    EXPECT_NEAR(a.gm_db, 6.0206, 1e-4);
    const auto b = worst_case_margins(1 / std::sqrt(2.0));
    EXPECT_NEAR(b.pm_deg, 41.41, 0.01);
    EXPECT_NEAR(b.gm_db, 10.67, 0.01);
}

TEST(Stability, RwipPidCancelsAtOne) {
    const auto v = assess(fixture("rwip_pid").loop(), 512);
    EXPECT_FALSE(v.assumptions.items[2].pass);
    EXPECT_FALSE(v.applicable);
    EXPECT_DOUBLE_EQ(v.net_crossings, 0.5);
    EXPECT_EQ(v.oracle.status, oracle_status::unstable);
}

TEST(Bounds, Folding) {
    const double Ts = 0.4, u = pi / Ts, ws = 2 * pi / Ts;
    const double src[] = {2.5, 2.75, 3.0, 3.8, 5.0, 8.9};
    const double want[] = {0.5, 0.75, 1.0, 0.2, 1.0, 0.9};
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(fold(src[i] * u, Ts).first / u, want[i], 1e-12);
    EXPECT_TRUE(fold(3.8 * u, Ts).second);
    EXPECT_FALSE(fold(8.9 * u, Ts).second);
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> U(0, 1);
    for (int i = 0; i < 200; ++i) {
        const double w = u * U(rng);
        EXPECT_NEAR(fold(w, Ts).first, w, 1e-12);
        for (int k = 1; k <= 4; ++k) {
            EXPECT_NEAR(fold(k * ws + w, Ts).first, w, 1e-9);
            EXPECT_NEAR(fold(k * ws - w, Ts).first, w, 1e-9);
        }
    }
}

TEST(Bounds, MembershipMatchesInequality) {
    const auto r = oracles::boundary_membership(10000);
    EXPECT_TRUE(r.pass) << r.detail;
    EXPECT_GT(r.cases, 9900);
}

TEST(Bounds, NominalTemplateValue) {
    const auto p = fixture("ex7");
    const auto lf = lift_family(p.family, p.g_fast, p.timing);
    const auto t = build_template(lf, 3.0);
    EXPECT_EQ(t.delta_l[lf.nominal_index], cplx(1.0));
    EXPECT_EQ(t.delta_l.size(), p.family.size());
}

TEST(Bounds, SinglePlantStabilityBoundary) {
    uncertainty_template t;
    t.w = 1;
    t.delta_l = {1.0};
    t.delta = {1.0};
    const double mu = 0.5;
    const auto b = stability_boundary(t, mu, phase_grid{5});
    std::mt19937 rng(10);
    std::uniform_real_distribution<double> U(0, 1);
    for (int i = 0; i < 2000; ++i) {
        const double phase = -360 * U(rng), g_db = -40 + 80 * U(rng);
        const double m = std::abs(1.0 + std::pow(10.0, g_db / 20) * std::polar(1.0, phase * pi / 180));
        if (std::abs(m - mu) < 1e-9) continue;
        EXPECT_EQ(member(b, phase, g_db), m >= mu);
    }
}

TEST(Bounds, AllowedSetShrinksWithMu) {
    const auto p = fixture("ex7");
    const auto lf = lift_family(p.family, p.g_fast, p.timing);
    const auto t = build_template(lf, 0.5 * pi / p.timing.Ts);
    const phase_grid grid{5};
    const auto b3 = stability_boundary(t, 0.3, grid), b5 = stability_boundary(t, 0.5, grid), b7 = stability_boundary(t, 0.7, grid);
    for (double phase = -360; phase <= 0; phase += 5)
        for (double g = -79; g <= 79; g += 0.25) {
            if (member(b7, phase, g)) EXPECT_TRUE(member(b5, phase, g));
            if (member(b5, phase, g)) EXPECT_TRUE(member(b3, phase, g));
        }
}

TEST(Bounds, LooseTrackingSpecImposesNothing) {
    uncertainty_template t;
    t.w = 2;
    t.delta_l = {1.0};
    t.delta = {cplx(0.4, -0.7)};
    const ctrack_data d{2.0, 1e12, cplx(0.9, -0.2), cplx(0.8, 0.1), cplx(1.1, 0.3), 0.4};
    const auto b = ctrack_boundary(t, d, phase_grid{10});
    for (double phase = -360; phase <= 0; phase += 10) {
        const auto set = b.allowed_at(phase);
        ASSERT_EQ(set.size(), 1u);
        EXPECT_LE(set[0].lo, b.gain_min_db);
        EXPECT_GE(set[0].hi, b.gain_max_db);
    }
}

TEST(Bounds, RobustThresholdExample7) {
    const auto p = fixture("ex7");
    const auto lf = lift_family(p.family, p.g_fast, p.timing);
    const auto peaks = family_sensitivity_peaks(lf, p.g_slow, p.sweep_points);
    double first = 0;
    for (std::size_t i = 0; i < peaks.size(); ++i)
        if (peaks[i].peak > 1 / *p.specs.mu) {
            first = p.family.parameter_grid[i][0];
            break;
        }
    EXPECT_NEAR(first, 2.07, 1e-9);
    EXPECT_NEAR(peaks[lf.nominal_index].peak, 1.6103, 1e-4);
}

TEST(Bounds, FoldMetadataOnExample9) {
    const auto p = fixture("ex9");
    const auto lf = lift_family(p.family, p.g_fast, p.timing);
    const auto bs = problem_boundaries(p, lf);
    ASSERT_EQ(bs.size(), 13u);
    int beyond = 0;
    for (const auto& b : bs) {
        const auto [w, c] = fold(b.omega_source, p.timing.Ts);
        EXPECT_DOUBLE_EQ(b.omega_design, w);
        EXPECT_EQ(b.conjugated, c);
        if (b.omega_source > p.timing.slow_nyquist() * (1 + 1e-12)) ++beyond;
    }
    EXPECT_EQ(beyond, 6);
}

TEST(Bounds, RedesignValidation) {
    const auto orig = fixture("ex9");
    const auto lf = lift_family(orig.family, orig.g_fast, orig.timing);
    const auto bs = problem_boundaries(orig, lf);
    EXPECT_EQ(failing(validate_design(orig.loop(), bs, orig.specs)), (std::set<std::string>{"#10"}));
    EXPECT_TRUE(failing(validate_design(fixture("ex11").loop(), bs, orig.specs)).empty());
}

TEST(Bounds, NotchDetunesLowFrequencyTracking) {
    // the notch costs low-frequency gain: the sensitivity-tracking boundaries at
    // 0.3 and 0.5 pi/Ts are violated even though every ctrack boundary holds
    const auto p = fixture("ex9_dtrack");
    const auto lf = lift_family(p.family, p.g_fast, p.timing);
    const auto bs = problem_boundaries(p, lf);
    const auto notched = fixture("ex11");
    const auto f = failing(validate_design(notched.loop(), bs, p.specs));
    EXPECT_TRUE(f.count("dtrack@4"));
    for (const auto& l : f) EXPECT_EQ(l.rfind("dtrack@", 0), 0u) << l;
}
