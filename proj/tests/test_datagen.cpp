#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "surcol/datagen.hpp"
#include "surcol/vlecheck.hpp"
#include "testutil.hpp"

using namespace surcol;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
    const fs::path d = fs::temp_directory_path() / "surcol-datagen-test";
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const FluidLibrary& small_library() {
    static const FluidLibrary lib = synthesize_fluids(3, 910);
    return lib;
}

// A fluid whose parameters are fine but whose VLE curves fail the battery;
// random draws land on one almost immediately.
Fluid curve_failing_fluid() {
    Rng rng(321);
    for (;;) {
        const ModelfluidParameters p = testutil::random_params(rng);
        if (!check_ternary_system(p, CheckConfig{}).pass)
            return {"BADCURVE", parameters_to_features(p)};
    }
}

void require_equal(const Dataset& a, const Dataset& b) {
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].fluid_id == b.rows[i].fluid_id);
        for (int k = 0; k < kFeatureCount; ++k)
            CHECK(a.rows[i].features[k] == b.rows[i].features[k]);
        for (int k = 0; k < kTargetCount; ++k)
            CHECK(a.rows[i].targets[k] == b.rows[i].targets[k]);
    }
}

SamplingBounds quick_bounds(int specs) {
    SamplingBounds b;
    b.specs_per_fluid = specs;
    return b;
}

}  // namespace

TEST_CASE("feature vector round trip") {
    const auto params = testutil::make_params({340.0, 370.0, 400.0}, {30e3, 33e3, 36e3},
                                              {0.2, -0.3, 0.1, 0.4, -0.2, 0.3});
    const ModelfluidFeatures f = parameters_to_features(params);
    const auto v = feature_vector(f);
    CHECK(v[0] == f.pressure);
    CHECK(v[2] == f.t_sat[1]);
    CHECK(v[12] == f.gamma_inf[5]);
    CHECK(v[15] == f.dydx_inf[2]);
    const ModelfluidFeatures g = features_from_vector(v);
    CHECK(feature_vector(g) == v);

    std::set<std::string> names(kModelfluidFeatureNames.begin(), kModelfluidFeatureNames.end());
    CHECK(names.size() == kModelfluidFeatureNames.size());
}

TEST_CASE("synthesized fluids pass the battery and are deterministic") {
    const FluidLibrary& lib = small_library();
    REQUIRE(lib.size() == 3);
    CHECK(lib[0].id == "F0001");
    CHECK(lib[2].id == "F0003");
    for (const Fluid& f : lib) {
        const ModelfluidParameters p = features_to_parameters(f.features);
        CHECK(check_ternary_system(p, CheckConfig{}).pass);
    }

    const FluidLibrary again = synthesize_fluids(3, 910);
    const FluidLibrary parallel = synthesize_fluids(3, 910, {}, 3);
    REQUIRE(again.size() == 3);
    REQUIRE(parallel.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(feature_vector(again[i].features) == feature_vector(lib[i].features));
        CHECK(feature_vector(parallel[i].features) == feature_vector(lib[i].features));
    }

    CHECK_THROWS_AS(synthesize_fluids(5, 910, {}, 0, 3), TooFewSamples);
    CHECK_THROWS_AS(synthesize_fluids(0, 910), InvalidSpec);
    SynthesisBounds bad;
    bad.t_min_sep = 0.0;
    CHECK_THROWS_AS(synthesize_fluids(1, 910, bad), InvalidSpec);
}

TEST_CASE("fluid library file round trip") {
    const fs::path path = tmpdir() / "lib.csv";
    const FluidLibrary& lib = small_library();
    write_fluid_library(path.string(), lib);
    const FluidLibrary back = read_fluid_library(path.string());
    REQUIRE(back.size() == lib.size());
    for (std::size_t i = 0; i < lib.size(); ++i) {
        CHECK(back[i].id == lib[i].id);
        const auto a = feature_vector(lib[i].features);
        const auto b = feature_vector(back[i].features);
        for (int k = 0; k < kModelfluidFeatureCount; ++k)
            CHECK(std::abs(a[k] - b[k]) <= 1e-12 * std::abs(a[k]));
    }

    const fs::path copy = tmpdir() / "lib2.csv";
    write_fluid_library(copy.string(), lib);
    CHECK(slurp(path) == slurp(copy));

    CHECK_THROWS_AS(read_fluid_library((tmpdir() / "absent.csv").string()), DataError);
    std::ofstream bad(tmpdir() / "bad.csv");
    bad << "id,wrong\nX,1\n";
    bad.close();
    CHECK_THROWS_AS(read_fluid_library((tmpdir() / "bad.csv").string()), DataError);
}

TEST_CASE("spec sampling stays inside bounds and is deterministic") {
    const Fluid& fluid = small_library()[0];
    const SamplingBounds b = quick_bounds(5000);
    const auto specs = sample_specs(b, fluid, 77);
    REQUIRE(specs.size() == 5000);
    for (const ColumnSpec& s : specs) {
        CHECK(s.reflux_ratio >= b.reflux_lo);
        CHECK(s.reflux_ratio <= b.reflux_hi);
        CHECK(s.split >= b.split_lo);
        CHECK(s.split <= b.split_hi);
        CHECK(s.n_above >= b.n_above_lo);
        CHECK(s.n_above <= b.n_above_hi);
        CHECK(s.n_below >= b.n_below_lo);
        CHECK(s.n_below <= b.n_below_hi);
        CHECK(s.pressure >= b.pressure_lo);
        CHECK(s.pressure <= b.pressure_hi);
        CHECK(s.feed_flow == 1.0);
        double sum = 0.0;
        for (const double z : s.feed_composition) {
            CHECK(z >= 0.0);
            sum += z;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-14);
    }

    const auto again = sample_specs(b, fluid, 77);
    bool same = true;
    for (std::size_t i = 0; i < specs.size(); ++i)
        same = same && specs[i].reflux_ratio == again[i].reflux_ratio &&
               specs[i].split == again[i].split && specs[i].n_above == again[i].n_above &&
               specs[i].n_below == again[i].n_below && specs[i].pressure == again[i].pressure &&
               specs[i].feed_composition == again[i].feed_composition;
    CHECK(same);

    // per-fluid substreams: a different id yields a different draw sequence
    const auto other = sample_specs(b, small_library()[1], 77);
    CHECK(other[0].reflux_ratio != specs[0].reflux_ratio);

    SamplingBounds bad = b;
    bad.split_hi = 1.5;
    CHECK_THROWS_AS(sample_specs(bad, fluid, 77), InvalidSpec);
    bad = b;
    bad.specs_per_fluid = 0;
    CHECK_THROWS_AS(sample_specs(bad, fluid, 77), InvalidSpec);
}

TEST_CASE("spec sampling statistics match uniform draws") {
    const Fluid& fluid = small_library()[0];
    SamplingBounds b = quick_bounds(100000);
    const auto specs = sample_specs(b, fluid, 123);

    std::array<long, 31> freq{};
    Vec3 mean = {0.0, 0.0, 0.0};
    for (const ColumnSpec& s : specs) {
        ++freq[s.n_above];
        for (int i = 0; i < 3; ++i) mean[i] += s.feed_composition[i] / specs.size();
    }
    for (int v = 2; v <= 30; ++v) {
        const double f = double(freq[v]) / specs.size();
        CHECK(std::abs(f - 1.0 / 29) <= 0.005);
    }
    for (int i = 0; i < 3; ++i) CHECK(std::abs(mean[i] - 1.0 / 3) <= 0.01);
}

TEST_CASE("generation emits valid self-describing rows with a reconciling report") {
    const FluidLibrary& lib = small_library();
    const SamplingBounds b = quick_bounds(20);
    const auto [ds, rep] = generate(lib, b, 1, 5);

    REQUIRE(!ds.rows.empty());
    CHECK(ds.rows.size() <= 60);
    CHECK(rep.fluids_total == 3);
    CHECK(rep.fluids_rejected == 0);
    CHECK(rep.rejected_specs == 0);
    CHECK(rep.attempts == 60);
    CHECK(rep.attempts ==
          rep.converged + rep.failed + rep.rejected_specs + rep.duplicates_removed);
    CHECK(rep.converged == static_cast<long long>(ds.rows.size()));
    CHECK(rep.duplicates_removed == 0);

    std::set<std::string> ids;
    for (const Fluid& f : lib) ids.insert(f.id);
    for (const DataRow& row : ds.rows) {
        CHECK(ids.count(row.fluid_id) == 1);
        for (const double v : row.features) CHECK(std::isfinite(v));
        CHECK(row.features[0] >= b.pressure_lo);
        CHECK(row.features[0] <= b.pressure_hi);
        CHECK(row.features[18] == std::floor(row.features[18]));
        CHECK(row.features[19] == std::floor(row.features[19]));
        CHECK(row.features[20] + row.features[21] <= 1.0 + 1e-12);
        for (int k = 0; k < 4; ++k) {
            CHECK(row.targets[k] >= 0.0);
            CHECK(row.targets[k] <= 1.0);
        }
        CHECK(row.targets[4] >= 0.0);
    }

    // every row reproduces its own targets from features alone
    for (std::size_t i = 0; i < std::min<std::size_t>(5, ds.rows.size()); ++i) {
        const DataRow& row = ds.rows[i];
        const ColumnResult res = simulate(spec_from_row(row), parameters_from_row(row));
        CHECK(std::abs(res.bottoms.x[0] - row.targets[0]) <= 1e-9);
        CHECK(std::abs(res.bottoms.x[1] - row.targets[1]) <= 1e-9);
        CHECK(std::abs(res.distillate.x[0] - row.targets[2]) <= 1e-9);
        CHECK(std::abs(res.distillate.x[1] - row.targets[3]) <= 1e-9);
        CHECK(std::abs(res.q_reboiler - row.targets[4]) <= 1e-9 * std::max(1.0, row.targets[4]));
    }

    const auto [ds2, rep2] = generate(lib, b, 1, 5);
    const auto [ds3, rep3] = generate(lib, b, 3, 5);
    require_equal(ds, ds2);
    require_equal(ds, ds3);
    CHECK(rep2.failed == rep.failed);
    CHECK(rep3.failed == rep.failed);
}

TEST_CASE("generation rejects inconsistent fluids and counts their specs") {
    FluidLibrary lib = {small_library()[0]};

    Fluid swapped = small_library()[0];
    swapped.id = "BADSWAP";
    std::swap(swapped.features.t_sat[0], swapped.features.t_sat[1]);
    lib.push_back(swapped);
    lib.push_back(curve_failing_fluid());

    const SamplingBounds b = quick_bounds(10);
    const auto [ds, rep] = generate(lib, b, 0, 5);
    CHECK(rep.fluids_total == 3);
    CHECK(rep.fluids_rejected == 2);
    CHECK(rep.rejected_specs == 20);
    CHECK(rep.attempts == 30);
    CHECK(rep.attempts ==
          rep.converged + rep.failed + rep.rejected_specs + rep.duplicates_removed);
    for (const DataRow& row : ds.rows) CHECK(row.fluid_id == small_library()[0].id);

    FluidLibrary bad_only = {swapped};
    CHECK_THROWS_AS(generate(bad_only, b, 0, 5), EmptyOutput);
    CHECK_THROWS_AS(generate(FluidLibrary{}, b, 0, 5), EmptyOutput);
}

TEST_CASE("dataset files round trip byte-stable") {
    const auto [ds, rep] = generate(small_library(), quick_bounds(15), 0, 5);
    const fs::path dir = tmpdir();
    const fs::path csv1 = dir / "ds1.csv", csv2 = dir / "ds2.csv";
    write_dataset_csv(csv1.string(), ds);
    write_dataset_csv(csv2.string(), ds);
    CHECK(slurp(csv1) == slurp(csv2));

    const Dataset back = read_dataset_csv(csv1.string());
    REQUIRE(back.rows.size() == ds.rows.size());
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        CHECK(back.rows[i].fluid_id == ds.rows[i].fluid_id);
        for (int k = 0; k < kFeatureCount; ++k)
            CHECK(std::abs(back.rows[i].features[k] - ds.rows[i].features[k]) <=
                  1e-12 * std::max(1.0, std::abs(ds.rows[i].features[k])));
        for (int k = 0; k < kTargetCount; ++k)
            CHECK(std::abs(back.rows[i].targets[k] - ds.rows[i].targets[k]) <=
                  1e-12 * std::max(1.0, std::abs(ds.rows[i].targets[k])));
    }

    // every stored row re-simulates to its stored targets after disk rounding
    for (std::size_t i = 0; i < std::min<std::size_t>(10, back.rows.size()); ++i) {
        const DataRow& row = back.rows[i];
        const ColumnResult res = simulate(spec_from_row(row), parameters_from_row(row));
        const double re[5] = {res.bottoms.x[0], res.bottoms.x[1], res.distillate.x[0],
                              res.distillate.x[1], res.q_reboiler};
        for (int k = 0; k < 5; ++k)
            CHECK(std::abs(re[k] - row.targets[k]) <=
                  1e-9 * std::max(1.0, std::abs(row.targets[k])));
    }

    const fs::path meta = dir / "dataset.meta.json";
    const fs::path report = dir / "genreport.json";
    write_dataset_meta(meta.string(), quick_bounds(15), 5, rep, ds.rows.size());
    write_genreport(report.string(), rep);
    const auto jm = nlohmann::json::parse(slurp(meta));
    CHECK(jm["schema_version"] == 1);
    CHECK(jm["seed"] == 5);
    CHECK(jm["rows"] == ds.rows.size());
    CHECK(jm["feature_names"].size() == kFeatureCount);
    CHECK(jm["target_names"].size() == kTargetCount);
    CHECK(jm["bounds"]["specs_per_fluid"] == 15);
    const auto jr = nlohmann::json::parse(slurp(report));
    CHECK(jr["attempts"] == rep.attempts);
    CHECK(jr["rows"] == rep.converged);
    CHECK(jr["failed"] == rep.failed);

    std::ofstream bad(dir / "badds.csv");
    bad << "fluid_id,nope\nX,1\n";
    bad.close();
    CHECK_THROWS_AS(read_dataset_csv((dir / "badds.csv").string()), DataError);
}

TEST_CASE("row-level split excludes holdout fluids and honors the fraction") {
    Dataset ds;
    for (int i = 0; i < 60; ++i) {
        DataRow row;
        row.fluid_id = i < 20 ? "A" : (i < 40 ? "B" : "H");
        row.features[0] = i;  // unique marker
        ds.rows.push_back(row);
    }

    const auto [train, val] = split_dataset(ds, 0.8, 99, {"H"});
    CHECK(train.rows.size() == 32);
    CHECK(val.rows.size() == 8);
    for (const DataRow& r : train.rows) CHECK(r.fluid_id != "H");
    for (const DataRow& r : val.rows) CHECK(r.fluid_id != "H");

    // order-preserving partition of the kept rows
    std::size_t it = 0, iv = 0;
    for (const DataRow& r : ds.rows) {
        if (r.fluid_id == "H") continue;
        if (it < train.rows.size() && train.rows[it].features[0] == r.features[0])
            ++it;
        else {
            REQUIRE(iv < val.rows.size());
            CHECK(val.rows[iv].features[0] == r.features[0]);
            ++iv;
        }
    }
    CHECK(it == train.rows.size());
    CHECK(iv == val.rows.size());

    const auto [t2, v2] = split_dataset(ds, 0.8, 99, {"H"});
    require_equal(train, t2);
    require_equal(val, v2);

    const auto [t3, v3] = split_dataset(ds, 1.0, 99, {});
    CHECK(t3.rows.size() == 60);
    CHECK(v3.rows.empty());

    CHECK_THROWS_AS(split_dataset(ds, 1.5, 99, {}), InvalidSpec);
}

TEST_CASE("test-set construction rejects id collisions") {
    const FluidLibrary& lib = small_library();
    CHECK_THROWS_AS(build_test_set(lib, quick_bounds(5), 7, {lib[1].id}), DataError);

    const Dataset ds = build_test_set(lib, quick_bounds(5), 7, {"other1", "other2"});
    const auto [expect, rep] = generate(lib, quick_bounds(5), 0, 7);
    require_equal(ds, expect);
}

TEST_CASE("reference-scale pipeline smoke") {
    const FluidLibrary lib = synthesize_fluids(20, 2024);
    const Dataset ds = build_test_set(lib, quick_bounds(30), 11, {}, 0);
    CHECK(ds.rows.size() >= 300);
    std::set<std::string> ids;
    for (const DataRow& r : ds.rows) ids.insert(r.fluid_id);
    CHECK(ids.size() >= 15);  // most fluids contribute converged rows
}
