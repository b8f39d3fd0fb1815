#include "surcol/datagen.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"
#include "surcol/csv.hpp"
#include "surcol/parallel.hpp"
#include "surcol/rng.hpp"
#include "surcol/vlecheck.hpp"

namespace surcol {

const std::array<const char*, kFeatureCount> kDatasetFeatureNames = {
    "p_Pa", "tsv1_K", "tsv2_K",  "tsv3_K", "dhv1_J_mol", "dhv2_J_mol", "dhv3_J_mol", "g12",
    "g21",  "g13",    "g31",     "g23",    "g32",        "d13",        "d21",        "d31",
    "split", "reflux", "n_below", "n_above", "z1",        "z2"};

const std::array<const char*, kTargetCount> kDatasetTargetNames = {"x_B1", "x_B2", "x_D1",
                                                                   "x_D2", "q_reboiler_W"};

void validate(const SamplingBounds& b) {
    if (!(b.reflux_lo > 0.0 && b.reflux_lo < b.reflux_hi))
        throw InvalidSpec("bounds: bad reflux range");
    if (!(b.split_lo > 0.0 && b.split_lo < b.split_hi && b.split_hi < 1.0))
        throw InvalidSpec("bounds: bad split range");
    if (!(b.n_above_lo >= 1 && b.n_above_lo <= b.n_above_hi))
        throw InvalidSpec("bounds: bad n_above range");
    if (!(b.n_below_lo >= 1 && b.n_below_lo <= b.n_below_hi))
        throw InvalidSpec("bounds: bad n_below range");
    if (!(b.pressure_lo > 0.0 && b.pressure_lo < b.pressure_hi))
        throw InvalidSpec("bounds: bad pressure range");
    if (b.specs_per_fluid < 1) throw InvalidSpec("bounds: specs_per_fluid must be positive");
}

ColumnSpec spec_from_row(const DataRow& row) {
    ColumnSpec s;
    s.pressure = row.features[0];
    s.split = row.features[16];
    s.reflux_ratio = row.features[17];
    s.n_below = static_cast<int>(std::llround(row.features[18]));
    s.n_above = static_cast<int>(std::llround(row.features[19]));
    s.feed_flow = 1.0;
    const double z1 = row.features[20], z2 = row.features[21];
    s.feed_composition = {z1, z2, 1.0 - z1 - z2};
    return s;
}

ModelfluidParameters parameters_from_row(const DataRow& row) {
    std::array<double, kModelfluidFeatureCount> v;
    std::copy_n(row.features.begin(), kModelfluidFeatureCount, v.begin());
    return features_to_parameters(features_from_vector(v));
}

std::array<double, kFeatureCount> feature_row(const ModelfluidParameters& params,
                                              const ColumnSpec& spec) {
    std::array<double, kFeatureCount> f{};
    const auto mf = feature_vector(parameters_to_features(params, spec.pressure));
    std::copy(mf.begin(), mf.end(), f.begin());
    f[16] = spec.split;
    f[17] = spec.reflux_ratio;
    f[18] = static_cast<double>(spec.n_below);
    f[19] = static_cast<double>(spec.n_above);
    f[20] = spec.feed_composition[0];
    f[21] = spec.feed_composition[1];
    return f;
}

std::vector<ColumnSpec> sample_specs(const SamplingBounds& bounds, const Fluid& fluid,
                                     std::uint64_t seed) {
    validate(bounds);
    Rng rng(Rng::substream(seed, "specs-" + fluid.id));
    std::vector<ColumnSpec> out(bounds.specs_per_fluid);
    for (ColumnSpec& s : out) {
        s.reflux_ratio = rng.uniform(bounds.reflux_lo, bounds.reflux_hi);
        s.split = rng.uniform(bounds.split_lo, bounds.split_hi);
        s.n_above = static_cast<int>(rng.uniform_int(bounds.n_above_lo, bounds.n_above_hi));
        s.n_below = static_cast<int>(rng.uniform_int(bounds.n_below_lo, bounds.n_below_hi));
        s.pressure = rng.uniform(bounds.pressure_lo, bounds.pressure_hi);
        s.feed_flow = 1.0;
        s.feed_composition = rng.simplex3();
    }
    return out;
}

namespace {

enum FailKind {
    kOk = 0,
    kNoConvergence,
    kAnchorDegenerate,
    kVaporPressure,
    kNonPhysical,
    kInvalidSpec,
    kRowInvariant,
    kOther,
    kKindCount
};

const char* kKindNames[kKindCount] = {"ok",           "no_convergence", "anchor_degenerate",
                                      "nonpositive_vapor_pressure", "non_physical",
                                      "invalid_spec", "row_invariant",  "other"};

struct Slot {
    int kind = kOther;
    DataRow row;
};

DataRow make_row(const Fluid& fluid, const ModelfluidParameters& params, const ColumnSpec& spec) {
    DataRow row;
    row.fluid_id = fluid.id;
    row.features = feature_row(params, spec);

    // A row must be able to reproduce its own fluid; refitting can
    // legitimately fail when re-anchoring pushes boiling points together.
    (void)parameters_from_row(row);

    ModelfluidParameters local = params;
    local.pressure = spec.pressure;
    const ColumnResult res = simulate(spec, local);
    row.targets = {res.bottoms.x[0], res.bottoms.x[1], res.distillate.x[0], res.distillate.x[1],
                   res.q_reboiler};
    for (const double v : row.features)
        if (!std::isfinite(v)) throw DataError("non-finite feature");
    for (int k = 0; k < 4; ++k)
        if (!(row.targets[k] >= 0.0 && row.targets[k] <= 1.0))
            throw DataError("composition target outside [0,1]");
    if (!(std::isfinite(row.targets[4]) && row.targets[4] >= 0.0))
        throw DataError("bad reboiler duty");
    return row;
}

std::string row_key(const DataRow& r) {
    std::string k = r.fluid_id;
    k.push_back('|');
    for (const double v : r.features) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        k.append(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    return k;
}

void spot_check(const Dataset& ds, std::uint64_t seed) {
    Rng rng(Rng::substream(seed, "respot"));
    const std::size_t n = ds.rows.size();
    const std::size_t checks = std::max<std::size_t>(1, n / 100);
    for (std::size_t c = 0; c < checks; ++c) {
        const auto& row = ds.rows[rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)];
        const ColumnResult res = simulate(spec_from_row(row), parameters_from_row(row));
        const double re[5] = {res.bottoms.x[0], res.bottoms.x[1], res.distillate.x[0],
                              res.distillate.x[1], res.q_reboiler};
        for (int k = 0; k < 5; ++k)
            if (!(std::abs(re[k] - row.targets[k]) <=
                  1e-9 * std::max(1.0, std::abs(row.targets[k]))))
                throw DataError("row for fluid " + row.fluid_id +
                                " does not re-simulate to its targets");
    }
}

}  // namespace

std::pair<Dataset, GenReport> generate(const FluidLibrary& fluids, const SamplingBounds& bounds,
                                       unsigned workers, std::uint64_t seed) {
    validate(bounds);
    GenReport rep;
    rep.fluids_total = static_cast<long long>(fluids.size());
    rep.attempts = rep.fluids_total * bounds.specs_per_fluid;

    // Re-derive parameters and re-run the consistency battery per fluid;
    // library files are data, not trusted input.
    std::vector<char> pass(fluids.size(), 0);
    std::vector<ModelfluidParameters> params(fluids.size());
    parallel_for(
        fluids.size(),
        [&](std::size_t f) {
            try {
                params[f] = features_to_parameters(fluids[f].features);
                pass[f] = check_ternary_system(params[f], CheckConfig{}).pass ? 1 : 0;
            } catch (const Error&) {
                pass[f] = 0;
            }
        },
        workers);

    struct Pair {
        std::size_t fluid;
        ColumnSpec spec;
    };
    std::vector<Pair> pairs;
    for (std::size_t f = 0; f < fluids.size(); ++f) {
        if (!pass[f]) {
            ++rep.fluids_rejected;
            rep.rejected_specs += bounds.specs_per_fluid;
            continue;
        }
        for (ColumnSpec& s : sample_specs(bounds, fluids[f], seed))
            pairs.push_back({f, std::move(s)});
    }

    std::vector<Slot> slots(pairs.size());
    parallel_for(
        pairs.size(),
        [&](std::size_t i) {
            Slot& slot = slots[i];
            try {
                slot.row = make_row(fluids[pairs[i].fluid], params[pairs[i].fluid], pairs[i].spec);
                slot.kind = kOk;
            } catch (const ColumnNoConvergence&) {
                slot.kind = kNoConvergence;
            } catch (const NoConvergence&) {
                slot.kind = kNoConvergence;
            } catch (const AnchorDegenerate&) {
                slot.kind = kAnchorDegenerate;
            } catch (const NonPositiveVaporPressure&) {
                slot.kind = kVaporPressure;
            } catch (const NonPhysical&) {
                slot.kind = kNonPhysical;
            } catch (const InvalidSpec&) {
                slot.kind = kInvalidSpec;
            } catch (const DataError&) {
                slot.kind = kRowInvariant;
            } catch (const Error&) {
                slot.kind = kOther;
            }
        },
        workers);

    Dataset ds;
    std::set<std::string> seen;
    for (Slot& slot : slots) {
        if (slot.kind != kOk) {
            ++rep.failed;
            ++rep.failure_kinds[kKindNames[slot.kind]];
            continue;
        }
        if (!seen.insert(row_key(slot.row)).second) {
            ++rep.duplicates_removed;
            continue;
        }
        ds.rows.push_back(std::move(slot.row));
    }
    rep.converged = static_cast<long long>(ds.rows.size());
    if (ds.rows.empty()) throw EmptyOutput("dataset generation produced zero rows");
    spot_check(ds, seed);
    return {std::move(ds), std::move(rep)};
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_frac,
                                          std::uint64_t seed,
                                          const std::vector<std::string>& holdout_fluid_ids) {
    if (!(train_frac >= 0.0 && train_frac <= 1.0))
        throw InvalidSpec("split: train_frac outside [0,1]");
    const std::set<std::string> hold(holdout_fluid_ids.begin(), holdout_fluid_ids.end());
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.rows.size(); ++i)
        if (!hold.count(ds.rows[i].fluid_id)) keep.push_back(i);

    Rng rng(Rng::substream(seed, "split"));
    for (std::size_t i = keep.size(); i > 1; --i)
        std::swap(keep[i - 1], keep[rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * keep.size()));

    std::vector<char> in_train(ds.rows.size(), 0), kept(ds.rows.size(), 0);
    for (std::size_t k = 0; k < keep.size(); ++k) {
        kept[keep[k]] = 1;
        if (k < n_train) in_train[keep[k]] = 1;
    }
    std::pair<Dataset, Dataset> out;
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        if (!kept[i]) continue;
        (in_train[i] ? out.first : out.second).rows.push_back(ds.rows[i]);
    }
    return out;
}

Dataset build_test_set(const FluidLibrary& reference_fluids, const SamplingBounds& bounds,
                       std::uint64_t seed, const std::vector<std::string>& training_ids,
                       unsigned workers) {
    const std::set<std::string> train(training_ids.begin(), training_ids.end());
    for (const Fluid& f : reference_fluids)
        if (train.count(f.id))
            throw DataError("test-set fluid id '" + f.id + "' collides with the training library");
    return generate(reference_fluids, bounds, workers, seed).first;
}

void write_dataset_csv(const std::string& path, const Dataset& ds) {
    std::vector<std::string> header = {"fluid_id"};
    for (const char* n : kDatasetFeatureNames) header.emplace_back(n);
    for (const char* n : kDatasetTargetNames) header.emplace_back(n);
    csv::Writer out(path, header);
    std::vector<std::string> fields(header.size());
    for (const DataRow& row : ds.rows) {
        fields[0] = row.fluid_id;
        for (int i = 0; i < kFeatureCount; ++i) fields[1 + i] = csv::fmt(row.features[i]);
        for (int i = 0; i < kTargetCount; ++i)
            fields[1 + kFeatureCount + i] = csv::fmt(row.targets[i]);
        out.row(fields);
    }
}

Dataset read_dataset_csv(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    if (t.header.size() != 1 + kFeatureCount + kTargetCount || t.header[0] != "fluid_id")
        throw DataError("dataset: unexpected header in " + path);
    for (int i = 0; i < kFeatureCount; ++i)
        if (t.header[1 + i] != kDatasetFeatureNames[i])
            throw DataError("dataset: unexpected column '" + t.header[1 + i] + "' in " + path);
    for (int i = 0; i < kTargetCount; ++i)
        if (t.header[1 + kFeatureCount + i] != kDatasetTargetNames[i])
            throw DataError("dataset: unexpected column '" + t.header[1 + kFeatureCount + i] +
                            "' in " + path);
    Dataset ds;
    ds.rows.reserve(t.rows.size());
    for (const auto& raw : t.rows) {
        DataRow row;
        row.fluid_id = raw[0];
        if (row.fluid_id.empty()) throw DataError("dataset: empty fluid_id in " + path);
        for (int i = 0; i < kFeatureCount; ++i) row.features[i] = csv::to_double(raw[1 + i]);
        for (int i = 0; i < kTargetCount; ++i)
            row.targets[i] = csv::to_double(raw[1 + kFeatureCount + i]);
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

namespace {

nlohmann::ordered_json report_json(const GenReport& rep) {
    nlohmann::ordered_json j;
    j["attempts"] = rep.attempts;
    j["rows"] = rep.converged;
    j["failed"] = rep.failed;
    j["fluids_total"] = rep.fluids_total;
    j["fluids_rejected"] = rep.fluids_rejected;
    j["rejected_specs"] = rep.rejected_specs;
    j["duplicates_removed"] = rep.duplicates_removed;
    j["failure_kinds"] = rep.failure_kinds;
    return j;
}

void dump_json(const std::string& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

}  // namespace

void write_dataset_meta(const std::string& path, const SamplingBounds& bounds,
                        std::uint64_t seed, const GenReport& report, std::size_t rows) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["seed"] = seed;
    j["rows"] = rows;
    j["bounds"] = {{"reflux", {bounds.reflux_lo, bounds.reflux_hi}},
                   {"split", {bounds.split_lo, bounds.split_hi}},
                   {"n_above", {bounds.n_above_lo, bounds.n_above_hi}},
                   {"n_below", {bounds.n_below_lo, bounds.n_below_hi}},
                   {"pressure_Pa", {bounds.pressure_lo, bounds.pressure_hi}},
                   {"specs_per_fluid", bounds.specs_per_fluid}};
    j["feature_names"] = kDatasetFeatureNames;
    j["target_names"] = kDatasetTargetNames;
    j["counts"] = report_json(report);
    dump_json(path, j);
}

void write_genreport(const std::string& path, const GenReport& report) {
    dump_json(path, report_json(report));
}

}  // namespace surcol
