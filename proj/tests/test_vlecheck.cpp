#include <cmath>
#include <limits>

#include "doctest.h"
#include "surcol/vlecheck.hpp"
#include "testutil.hpp"

using namespace surcol;
using testutil::make_params;

namespace {

// Anchored fit without the positivity guard, for building the deliberately
// broken systems the checks exist to catch (features_to_parameters would
// refuse them upstream).
ModelfluidParameters unguarded_fit(const ModelfluidFeatures& f) {
    ModelfluidParameters p;
    p.pressure = f.pressure;
    p.dh_vap = f.dh_vap;
    for (int k = 0; k < 6; ++k) p.margules[k] = std::log(f.gamma_inf[k]);
    const double lnp = std::log(f.pressure);
    const int anchor[3] = {2, 0, 0};
    const int pair_idx[3] = {2, 1, 3};  // gamma_1|3, gamma_2|1, gamma_3|1
    for (int i = 0; i < 3; ++i) {
        const double ti = f.t_sat[i];
        const double ta = f.t_sat[anchor[i]];
        const double b =
            std::log(f.dydx_inf[i] / f.gamma_inf[pair_idx[i]]) / (1.0 / ti - 1.0 / ta);
        p.antoine[i] = {lnp + b / ti, b};
    }
    return p;
}

ModelfluidParameters ideal_fluid() {
    return make_params({340.0, 370.0, 400.0}, {30e3, 30e3, 30e3}, {0, 0, 0, 0, 0, 0});
}

VleCurve ideal_curve(int n = 101) {
    const ModelfluidParameters p = ideal_fluid();
    return binary_vle_curve(0, 1, p, p.pressure, n);
}

ModelfluidParameters azeotropic_fluid() {
    return make_params({340.0, 344.0, 420.0}, {31.6e3, 33.3e3, 40e3}, {1.5, 1.5, 0, 0, 0, 0});
}

}  // namespace

TEST_CASE("endpoint check") {
    VleCurve c = ideal_curve();
    CHECK(check_endpoints(c).pass);

    c.y[0] = 0.05;
    const CheckVerdict v = check_endpoints(c);
    CHECK_FALSE(v.pass);
    CHECK(v.index == 0);
    CHECK(v.magnitude == doctest::Approx(0.05));
}

TEST_CASE("continuity check and inclusive threshold") {
    CheckConfig cfg;
    VleCurve c = ideal_curve();
    CHECK(check_continuity(c, cfg).pass);

    VleCurve jumped = c;
    jumped.y[50] = jumped.y[49] + 0.3;
    const CheckVerdict v = check_continuity(jumped, cfg);
    CHECK_FALSE(v.pass);
    CHECK(v.magnitude == doctest::Approx(0.3).epsilon(1e-6));

    // a jump of exactly the threshold is allowed
    VleCurve edge = c;
    edge.y[50] = edge.y[49] + 0.2;
    edge.y[51] = edge.y[50];  // keep the following jump small
    CHECK(check_continuity(edge, cfg).pass);
}

TEST_CASE("tightening the continuity tolerance never rescues a failure") {
    VleCurve c = ideal_curve();
    c.y[30] = c.y[29] + 0.15;
    CheckConfig loose, tight;
    loose.continuity_jump_tol = 0.18;
    tight.continuity_jump_tol = 0.12;
    CHECK(check_continuity(c, loose).pass);
    CHECK_FALSE(check_continuity(c, tight).pass);
    // failing at some tolerance implies failing at every tighter one
    for (double tol = 0.12; tol > 0.01; tol -= 0.01) {
        CheckConfig cfg;
        cfg.continuity_jump_tol = tol;
        CHECK_FALSE(check_continuity(c, cfg).pass);
    }
}

TEST_CASE("monotonicity check") {
    VleCurve c = ideal_curve();
    CHECK(check_monotonicity(c).pass);

    c.y[40] = c.y[41] + 1e-3;
    CHECK_FALSE(check_monotonicity(c).pass);

    // azeotropic but monotone-y curve passes
    const ModelfluidParameters az = azeotropic_fluid();
    const VleCurve ac = binary_vle_curve(0, 1, az, az.pressure, 101);
    CHECK(check_monotonicity(ac).pass);
    CHECK(check_azeotrope_extrema(ac).second == 1);
}

TEST_CASE("envelope check passes clean curves") {
    CheckConfig cfg;
    CHECK(check_envelope(ideal_curve(), cfg).pass);
}

TEST_CASE("swapped boiling points invert the envelope") {
    // Exchange T1 and T2 in the feature vector while keeping the dilute
    // slopes; the refit contradicts itself and the phase envelope flips.
    CheckConfig cfg;
    const ModelfluidParameters p0 = ideal_fluid();
    ModelfluidFeatures f = parameters_to_features(p0);
    std::swap(f.t_sat[0], f.t_sat[1]);

    CHECK_THROWS_AS((void)features_to_parameters(f), NonPositiveVaporPressure);

    const ModelfluidParameters swapped = unguarded_fit(f);
    const VleCurve c = binary_vle_curve(0, 1, swapped, f.pressure, 101);
    const CheckVerdict env = check_envelope(c, cfg);
    CHECK_FALSE(env.pass);
    CHECK(env.magnitude > 1e-3);

    // and through the full ternary battery the bad edge is identified
    TernaryCheckResult res = check_ternary_system(swapped, cfg);
    CHECK_FALSE(res.pass);
    CHECK_FALSE(res.reports[0].pass());  // edge (1,2)
    CHECK_FALSE(res.reports[0].envelope.pass);
}

TEST_CASE("envelope exemption window around an azeotrope") {
    CheckConfig cfg;
    const ModelfluidParameters az = azeotropic_fluid();
    VleCurve c = binary_vle_curve(0, 1, az, az.pressure, 101);
    REQUIRE(check_envelope(c, cfg).pass);

    const auto locs = azeotrope_locations(c);
    REQUIRE(locs.size() == 1);

    // a narrow crossing within +-0.02 of the azeotrope is tolerated
    VleCurve near_az = c;
    for (std::size_t k = 0; k < c.x.size(); ++k)
        if (std::abs(c.x[k] - locs[0]) <= 0.02) near_az.t_dew[k] = near_az.t_bub[k] - 0.05;
    CHECK(check_envelope(near_az, cfg).pass);

    // the same crossing away from the azeotrope is a violation
    VleCurve far = c;
    for (std::size_t k = 0; k < c.x.size(); ++k)
        if (std::abs(c.x[k] - 0.1) <= 0.02) far.t_dew[k] = far.t_bub[k] - 0.05;
    CHECK_FALSE(check_envelope(far, cfg).pass);
}

TEST_CASE("azeotrope and extrema bookkeeping") {
    const VleCurve zeo = ideal_curve();
    auto [v0, n0] = check_azeotrope_extrema(zeo);
    CHECK(v0.pass);
    CHECK(n0 == 0);

    const ModelfluidParameters az = azeotropic_fluid();
    const VleCurve ac = binary_vle_curve(0, 1, az, az.pressure, 101);
    auto [v1, n1] = check_azeotrope_extrema(ac);
    CHECK(v1.pass);
    CHECK(n1 == 1);
    // minimum-boiling: interior minimum of the bubble curve
    double tmin = ac.t_bub[0];
    for (const double t : ac.t_bub) tmin = std::min(tmin, t);
    CHECK(tmin < ac.t_bub.front());
    CHECK(tmin < ac.t_bub.back());

    // one sign change but a second bubble-curve extremum: mismatch
    VleCurve bad = ac;
    bad.t_bub[20] += 0.5;
    auto [v2, n2] = check_azeotrope_extrema(bad);
    CHECK(n2 == 1);
    CHECK_FALSE(v2.pass);
}

TEST_CASE("zeotropic curvature check with edge exemption") {
    CheckConfig cfg;
    VleCurve c = ideal_curve();
    CHECK(check_zeotropic_curvature(c, cfg).pass);

    VleCurve mid = c;
    mid.t_bub[50] += 0.5;  // inflection at x = 0.5
    CHECK_FALSE(check_zeotropic_curvature(mid, cfg).pass);

    VleCurve near_edge = c;
    near_edge.t_bub[5] += 0.5;  // x = 0.05, inside the exempt band
    CHECK(check_zeotropic_curvature(near_edge, cfg).pass);

    // azeotropic systems skip this check entirely
    const ModelfluidParameters az = azeotropic_fluid();
    VleCurve ac = binary_vle_curve(0, 1, az, az.pressure, 101);
    ac.t_bub[50] += 0.5;
    CHECK(check_zeotropic_curvature(ac, cfg).pass);
}

TEST_CASE("numerical validity check") {
    VleCurve c = ideal_curve();
    CHECK(check_numerical(c).pass);

    VleCurve with_nan = c;
    with_nan.t_bub[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(check_numerical(with_nan).pass);

    VleCurve with_inf = c;
    with_inf.t_dew[7] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(check_numerical(with_inf).pass);
}

TEST_CASE("full ternary battery on clean and random fluids") {
    CheckConfig cfg;
    const TernaryCheckResult ideal = check_ternary_system(ideal_fluid(), cfg);
    CHECK(ideal.pass);
    for (const auto& r : ideal.reports) {
        CHECK(r.pass());
        CHECK(r.azeotrope_count == 0);
    }

    // determinism, bit for bit
    const TernaryCheckResult again = check_ternary_system(ideal_fluid(), cfg);
    for (int e = 0; e < 3; ++e) {
        CHECK(again.reports[e].pass() == ideal.reports[e].pass());
        CHECK(again.reports[e].envelope.magnitude == ideal.reports[e].envelope.magnitude);
        CHECK(again.reports[e].azeotrope_count == ideal.reports[e].azeotrope_count);
    }

    // the filter rejects some but not all random candidates
    Rng rng(314159);
    int rejected = 0;
    const int total = 500;
    for (int trial = 0; trial < total; ++trial) {
        const ModelfluidParameters p =
            testutil::random_params(rng, std::log(0.2), std::log(10.0));
        const TernaryCheckResult res = check_ternary_system(p, cfg);
        if (!res.pass) ++rejected;
        CHECK(res.pass == (res.reports[0].pass() && res.reports[1].pass() &&
                           res.reports[2].pass()));
        // endpoint convergence is guaranteed whenever the solver converged
        for (const auto& rep : res.reports)
            if (rep.numerical.pass) CHECK(rep.endpoint.pass);
    }
    CHECK(rejected > 0);
    CHECK(rejected < total);
}
