#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "surcol/flowsheet.hpp"
#include "surcol/rng.hpp"
#include "testutil.hpp"

using namespace surcol;
namespace fs = std::filesystem;

namespace {

ModelfluidParameters azeo_fluid() {
    // max-boiling azeotrope on the 1-2 edge, mildly nonideal elsewhere
    return testutil::make_params({330, 365, 400}, {30e3, 35e3, 40e3},
                                 {-0.8, -0.8, 0.2, 0.2, 0.1, 0.1});
}

ModelfluidParameters ideal_fluid() {
    return testutil::make_params({330, 365, 400}, {30e3, 35e3, 40e3}, {});
}

FlowsheetSpec base_spec() {
    FlowsheetSpec s;
    s.columns[0] = {6, 6, 2.5, 0.50, 1e5};
    s.columns[1] = {6, 6, 2.5, 0.45, 1e5};
    s.columns[2] = {5, 5, 2.0, 0.60, 1e5};
    s.feed = {1.0, {0.5, 0.5, 0.0}};
    s.makeup_flow = 0.05;
    return s;
}

double worst_residual(const FlowsheetState& st) {
    double w = 0.0;
    for (const double v : st.residuals) w = std::max(w, std::abs(v));
    return w;
}

// Minimal network that ignores its input and predicts exactly `mean`.
MlpModel constant_model(const std::array<double, 5>& mean) {
    MlpModel m;
    m.net.dims = {22, 4, 5};
    m.net.w = {Eigen::MatrixXd::Zero(4, 22), Eigen::MatrixXd::Zero(5, 4)};
    m.net.b = {Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(5)};
    m.input_scaler.mean = Eigen::VectorXd::Zero(22);
    m.input_scaler.std = Eigen::VectorXd::Ones(22);
    m.target_scaler.mean = Eigen::VectorXd::Zero(5);
    for (int k = 0; k < 5; ++k) m.target_scaler.mean[k] = mean[k];
    m.target_scaler.std = Eigen::VectorXd::Ones(5);
    return m;
}

fs::path tmpdir() {
    const fs::path p = fs::temp_directory_path() / "surcol-flowsheet-test";
    fs::create_directories(p);
    return p;
}

bool stream_close(const Stream& a, const Stream& b, double tol) {
    if (std::abs(a.flow - b.flow) > tol) return false;
    for (int j = 0; j < 3; ++j)
        if (std::abs(a.x[j] - b.x[j]) > tol) return false;
    return true;
}

}  // namespace

TEST_CASE("spec validation rejects broken wiring and decisions") {
    CHECK_NOTHROW(validate(FlowsheetSpec{}));
    CHECK_NOTHROW(validate(base_spec()));

    FlowsheetSpec s = base_spec();
    s.topology.bottom[2] = {DestKind::kProduct, -1};  // two products on c3, no mixer return
    CHECK_THROWS_AS(validate(s), InvalidSpec);

    s = base_spec();
    s.topology.bottom[0] = {DestKind::kColumn, 0};  // self-feed
    CHECK_THROWS_AS(validate(s), InvalidSpec);

    s = base_spec();
    s.topology.bottom[0] = {DestKind::kMixer, -1};  // second mixer return, c2 unfed
    CHECK_THROWS_AS(validate(s), InvalidSpec);

    s = base_spec();
    s.topology.bottom[0] = {DestKind::kColumn, 2};
    s.topology.top[1] = {DestKind::kColumn, 2};  // c3 fed twice, wiring cycle
    CHECK_THROWS_AS(validate(s), InvalidSpec);

    s = base_spec();
    s.topology.first_column = 3;
    CHECK_THROWS_AS(validate(s), InvalidSpec);

    s = base_spec();
    s.columns[1].split = 1.0;
    CHECK_THROWS_AS(validate(s), InvalidSpec);

    s = base_spec();
    s.columns[0].n_above = 1;
    CHECK_THROWS_AS(validate(s), InvalidSpec);

    s = base_spec();
    s.makeup_flow = -0.1;
    CHECK_THROWS_AS(validate(s), InvalidSpec);

    s = base_spec();
    s.feed.x = {0.7, 0.7, 0.0};
    CHECK_THROWS_AS(validate(s), InvalidSpec);

    s = base_spec();
    s.product_component[2] = 3;
    CHECK_THROWS_AS(validate(s), InvalidSpec);
}

TEST_CASE("stage counting includes the feed stage") {
    FlowsheetSpec s = base_spec();
    CHECK(column_stage_count(s.columns[0]) == 13);
    CHECK(total_stage_count(s) == 13 + 13 + 11);
}

TEST_CASE("rigorous evaluation closes the recycle loop") {
    const FlowsheetSpec s = base_spec();
    const ModelfluidParameters params = azeo_fluid();
    const FlowsheetState st = evaluate_rigorous(s, params);

    CHECK(st.sweeps < 500);
    CHECK(st.tear_residual <= 1e-8);
    CHECK(worst_residual(st) <= 1e-8);
    CHECK(total_reboiler_duty(st) > 0.0);
    for (int c = 0; c < 3; ++c) {
        CHECK(st.feeds[c].flow > 0.0);
        CHECK(st.products[c].flow > 0.0);
        CHECK(st.q_reboiler[c] > 0.0);
        CHECK(st.q_condenser[c] > 0.0);  // reported as removed-heat magnitude
        for (int j = 0; j < 3; ++j) {
            CHECK(st.products[c].x[j] >= 0.0);
            CHECK(st.products[c].x[j] <= 1.0);
        }
    }
    // total products match total external inflow at the converged tear
    double out = 0.0;
    for (const auto& p : st.products) out += p.flow;
    CHECK(out == doctest::Approx(s.feed.flow + s.makeup_flow).epsilon(1e-8));
    // the recycle stream is the c3 bottoms under the default wiring
    CHECK(stream_close(st.recycle, st.bottoms[2], 1e-9));

    // determinism
    const FlowsheetState st2 = evaluate_rigorous(s, params);
    CHECK(st2.sweeps == st.sweeps);
    CHECK(total_reboiler_duty(st2) == total_reboiler_duty(st));
    CHECK(stream_close(st2.recycle, st.recycle, 0.0));
}

TEST_CASE("zero recycle reduces to a hand-built column cascade") {
    FlowsheetSpec s = base_spec();
    s.zero_recycle = true;
    const ModelfluidParameters params = azeo_fluid();
    const FlowsheetState st = evaluate_rigorous(s, params);
    CHECK(st.sweeps == 1);

    // the same cascade, assembled by hand from single-column solves
    const double f = s.feed.flow + s.makeup_flow;
    Vec3 z{s.feed.flow * s.feed.x[0] / f, s.feed.flow * s.feed.x[1] / f,
           (s.feed.flow * s.feed.x[2] + s.makeup_flow) / f};
    z[2] = 1.0 - z[0] - z[1];
    ColumnSpec c1{6, 6, 2.5, 0.50, 1e5, f, z};
    const ColumnResult r1 = simulate(c1, params);
    ColumnSpec c2{6, 6, 2.5, 0.45, 1e5, r1.bottoms.flow, r1.bottoms.x};
    const ColumnResult r2 = simulate(c2, params);
    ColumnSpec c3{5, 5, 2.0, 0.60, 1e5, r2.distillate.flow, r2.distillate.x};
    const ColumnResult r3 = simulate(c3, params);

    CHECK(stream_close(st.products[0], r1.distillate, 1e-12));
    CHECK(stream_close(st.products[1], r2.bottoms, 1e-12));
    CHECK(stream_close(st.products[2], r3.distillate, 1e-12));
    CHECK(stream_close(st.recycle, r3.bottoms, 1e-12));
    CHECK(st.q_reboiler[1] == doctest::Approx(r2.q_reboiler).epsilon(1e-12));

    // open-loop identity: inflows equal all four outlet streams, per component
    for (int j = 0; j < 3; ++j) {
        const double in = s.feed.flow * s.feed.x[j] + (j == 2 ? s.makeup_flow : 0.0);
        double outflow = st.recycle.flow * st.recycle.x[j];
        for (const auto& p : st.products) outflow += p.flow * p.x[j];
        CHECK(in == doctest::Approx(outflow).epsilon(1e-11));
    }
    CHECK(worst_residual(st) <= 1e-10);
}

TEST_CASE("distillate purity rises with reflux on an ideal wide-boiling fluid") {
    const ModelfluidParameters params = ideal_fluid();
    double prev = 0.0;
    for (const double rr : {1.0, 2.0, 5.0, 10.0}) {
        FlowsheetSpec s = base_spec();
        s.makeup_flow = 0.0;  // entrainer-free
        s.columns[0].reflux_ratio = rr;
        const FlowsheetState st = evaluate_rigorous(s, params);
        CHECK(st.products[0].x[0] > prev);
        prev = st.products[0].x[0];
    }
    CHECK(prev > 0.8);  // approaches the light component
}

TEST_CASE("column failures identify the failing column") {
    FlowsheetSpec s = base_spec();
    s.columns[0].split = 0.65;  // pinches the distillate beyond pure light
    try {
        evaluate_rigorous(s, azeo_fluid());
        FAIL("expected ColumnNoConvergence");
    } catch (const ColumnNoConvergence& e) {
        CHECK(e.column == 0);
        CHECK(std::string(e.what()).find("column 1") != std::string::npos);
    }
}

TEST_CASE("oracle closure matches the rigorous solution") {
    const ModelfluidParameters params = azeo_fluid();
    const OraclePredictor oracle(params);
    Rng rng(44);
    int compared = 0, attempts = 0;
    while (compared < 50 && attempts < 200) {
        ++attempts;
        FlowsheetSpec s = base_spec();
        for (int c = 0; c < 3; ++c) {
            s.columns[c].n_above = static_cast<int>(rng.uniform_int(4, 9));
            s.columns[c].n_below = static_cast<int>(rng.uniform_int(4, 9));
            s.columns[c].reflux_ratio = rng.uniform(1.0, 5.0);
            s.columns[c].split = rng.uniform(0.3, 0.7);
        }
        s.makeup_flow = rng.uniform(0.0, 0.1);
        FlowsheetState rig;
        try {
            rig = evaluate_rigorous(s, params);
        } catch (const Error&) {
            continue;  // spec infeasible for the rigorous solver; nothing to compare
        }
        const FlowsheetState sur = evaluate_with_predictor(s, oracle);
        const double q_rig = total_reboiler_duty(rig);
        const double q_sur = total_reboiler_duty(sur);
        CHECK(std::abs(q_sur - q_rig) <= 1e-6 * std::max(1.0, std::abs(q_rig)));
        for (int c = 0; c < 3; ++c)
            CHECK(std::abs(sur.q_reboiler[c] - rig.q_reboiler[c]) <=
                  1e-6 * std::max(1.0, std::abs(rig.q_reboiler[c])));
        CHECK(worst_residual(sur) <= 1e-8);
        ++compared;
    }
    CHECK(compared == 50);
}

TEST_CASE("predictor closure keeps balances exact even for inconsistent predictions") {
    const auto model = constant_model({0.10, 0.55, 0.70, 0.25, 400.0});
    const FlowsheetSpec s = base_spec();
    const FlowsheetState st = evaluate_surrogate(s, azeo_fluid(), model);

    CHECK(worst_residual(st) <= 1e-9);        // closure and balances hold
    CHECK(st.closure_mismatch > 1e-4);        // the constants cannot also satisfy them
    CHECK(st.closure_mismatch < 0.5);
    for (int c = 0; c < 3; ++c) {
        const double sum = st.products[c].x[0] + st.products[c].x[1] + st.products[c].x[2];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(st.q_reboiler[c] ==
              doctest::Approx(400.0 * st.feeds[c].flow).epsilon(1e-9));  // duty scales with feed
    }
    CHECK_FALSE(st.clipped);

    // determinism
    const FlowsheetState st2 = evaluate_surrogate(s, azeo_fluid(), model);
    CHECK(st2.sweeps == st.sweeps);
    CHECK(total_reboiler_duty(st2) == total_reboiler_duty(st));
}

TEST_CASE("confidence shifts move duty and purity in the advertised direction") {
    const auto model = constant_model({0.10, 0.55, 0.70, 0.25, 400.0});
    ConformalCalibration calib;
    calib.level = 0.95;
    calib.delta = Eigen::VectorXd::Zero(5);
    calib.delta << 0.02, 0.02, 0.02, 0.02, 60.0;
    const FlowsheetSpec s = base_spec();
    const ModelfluidParameters params = azeo_fluid();

    const FlowsheetState nom = evaluate_surrogate(s, params, model, calib, Shift::kNominal);
    const FlowsheetState best = evaluate_surrogate(s, params, model, calib, Shift::kBest);
    const FlowsheetState worst = evaluate_surrogate(s, params, model, calib, Shift::kWorst);

    CHECK(total_reboiler_duty(best) < total_reboiler_duty(nom));
    CHECK(total_reboiler_duty(nom) < total_reboiler_duty(worst));
    // designated components: light in c1's distillate, entrainer in c2's
    // bottoms (raised by lowering both other fractions), mid in c3's top
    CHECK(best.products[0].x[0] > nom.products[0].x[0]);
    CHECK(worst.products[0].x[0] < nom.products[0].x[0]);
    CHECK(best.products[1].x[2] > nom.products[1].x[2]);
    CHECK(best.products[2].x[1] > nom.products[2].x[1]);

    CHECK_THROWS_AS(evaluate_surrogate(s, params, model, std::nullopt, Shift::kBest),
                    InvalidSpec);
}

TEST_CASE("out-of-range predictions are clipped and flagged") {
    // distillate pair sums to 1.1; the predictor must renormalize it
    const auto model = constant_model({0.10, 0.55, 0.70, 0.40, 400.0});
    const FlowsheetState st = evaluate_surrogate(base_spec(), azeo_fluid(), model);
    CHECK(st.clipped);
    CHECK(worst_residual(st) <= 1e-9);  // balances stay exact despite the clip
    for (int c = 0; c < 3; ++c)
        CHECK(st.tops[c].x[0] + st.tops[c].x[1] + st.tops[c].x[2] ==
              doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("closure reports failure on a jagged predictor") {
    struct JaggedPredictor : ColumnPredictor {
        std::array<double, 5> predict(int, const ColumnSpec& spec) const override {
            const double w =
                std::sin(1e8 * (spec.feed_composition[0] + 1.7 * spec.feed_composition[1]));
            return {0.5 + 0.4 * w, 0.25, 0.5 - 0.4 * w, 0.25, 100.0};
        }
    };
    CHECK_THROWS_AS(evaluate_with_predictor(base_spec(), JaggedPredictor{}),
                    ClosureNoConvergence);
}

TEST_CASE("config files round trip") {
    const fs::path dir = tmpdir();
    const fs::path path = dir / "flowsheet.toml";

    FlowsheetSpec s = base_spec();
    s.topology = default_topology();
    s.topology.first_column = 0;
    s.product_component = {0, 1, 2};
    s.columns[1].pressure = 2.5e5;
    s.feed.x = {0.4, 0.45, 0.15};
    s.zero_recycle = true;
    write_flowsheet_config(path.string(), s);

    const FlowsheetSpec r = read_flowsheet_config(path.string());
    CHECK(r.feed.flow == s.feed.flow);
    for (int j = 0; j < 3; ++j) CHECK(r.feed.x[j] == s.feed.x[j]);
    CHECK(r.makeup_flow == s.makeup_flow);
    CHECK(r.zero_recycle == s.zero_recycle);
    CHECK(r.topology.first_column == s.topology.first_column);
    for (int c = 0; c < 3; ++c) {
        CHECK(r.topology.top[c].kind == s.topology.top[c].kind);
        CHECK(r.topology.bottom[c].kind == s.topology.bottom[c].kind);
        CHECK(r.topology.bottom[c].column == s.topology.bottom[c].column);
        CHECK(r.columns[c].n_above == s.columns[c].n_above);
        CHECK(r.columns[c].n_below == s.columns[c].n_below);
        CHECK(r.columns[c].reflux_ratio == s.columns[c].reflux_ratio);
        CHECK(r.columns[c].split == s.columns[c].split);
        CHECK(r.columns[c].pressure == doctest::Approx(s.columns[c].pressure).epsilon(1e-15));
        CHECK(r.product_component[c] == s.product_component[c]);
    }

    // partial config: unspecified keys keep their defaults
    {
        std::ofstream out(dir / "partial.toml");
        out << "[column2]\nreflux_ratio = 7.5\n";
    }
    const FlowsheetSpec p = read_flowsheet_config((dir / "partial.toml").string());
    CHECK(p.columns[1].reflux_ratio == 7.5);
    CHECK(p.columns[0].reflux_ratio == FlowsheetSpec{}.columns[0].reflux_ratio);
    CHECK(p.feed.flow == 1.0);

    CHECK_THROWS_AS(read_flowsheet_config((dir / "absent.toml").string()), DataError);
    {
        std::ofstream out(dir / "bad.toml");
        out << "[column9]\nunknown_key = 1\n";
    }
    CHECK_THROWS_AS(read_flowsheet_config((dir / "bad.toml").string()), DataError);
    {
        std::ofstream out(dir / "baddest.toml");
        out << "[topology]\nc1_top = \"c7\"\n";
    }
    CHECK_THROWS_AS(read_flowsheet_config((dir / "baddest.toml").string()), DataError);
}

TEST_CASE("state json records a converged evaluation") {
    const fs::path path = tmpdir() / "state.json";
    const FlowsheetSpec s = base_spec();
    const FlowsheetState st = evaluate_rigorous(s, azeo_fluid());
    write_state_json(path.string(), s, st);

    std::ifstream in(path);
    REQUIRE(in.good());
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("schema_version") == 1);
    CHECK(j.at("totals").at("q_reboiler_W").get<double>() ==
          doctest::Approx(total_reboiler_duty(st)).epsilon(1e-15));
    CHECK(j.at("totals").at("stages") == total_stage_count(s));
    CHECK(j.at("columns").size() == 3);
    CHECK(j.at("residuals").size() == kResidualCount);
    CHECK(j.at("max_abs_residual").get<double>() <= 1e-8);
    CHECK(j.at("columns")[1].at("feed").at("flow_mol_s").get<double>() ==
          doctest::Approx(st.feeds[1].flow).epsilon(1e-15));
}
