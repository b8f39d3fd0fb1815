#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "surcol/column.hpp"
#include "surcol/fluids.hpp"

namespace surcol {

// Sampling window for random column specifications. Pressures are stored in
// Pa (config files speak bar, converted at the boundary).
struct SamplingBounds {
    double reflux_lo = 0.1;
    double reflux_hi = 40.0;
    double split_lo = 0.001;
    double split_hi = 0.999;
    int n_above_lo = 2;
    int n_above_hi = 30;
    int n_below_lo = 2;
    int n_below_hi = 30;
    double pressure_lo = 0.5e5;  // Pa
    double pressure_hi = 10.0e5;
    int specs_per_fluid = 100;
};

void validate(const SamplingBounds& b);  // InvalidSpec on violation

inline constexpr int kFeatureCount = 22;
inline constexpr int kTargetCount = 5;

// Feature layout: the 16 modelfluid entries re-anchored at the row's
// pressure, then split, reflux, n_below, n_above (stage counts stored as
// reals), then the first two feed mole fractions.
extern const std::array<const char*, kFeatureCount> kDatasetFeatureNames;
extern const std::array<const char*, kTargetCount> kDatasetTargetNames;

struct DataRow {
    std::string fluid_id;
    std::array<double, kFeatureCount> features{};
    std::array<double, kTargetCount> targets{};
};

struct Dataset {
    std::vector<DataRow> rows;
};

// Reconstructs the simulation inputs a row encodes; every row is
// self-describing (features alone determine fluid and column).
ColumnSpec spec_from_row(const DataRow& row);
ModelfluidParameters parameters_from_row(const DataRow& row);

// The inverse direction: the feature vector a fluid/column pair maps to,
// with the fluid block re-anchored at the column pressure.
std::array<double, kFeatureCount> feature_row(const ModelfluidParameters& params,
                                              const ColumnSpec& spec);

struct GenReport {
    long long attempts = 0;   // fluids_total * specs_per_fluid
    long long converged = 0;  // emitted rows
    long long failed = 0;     // specs whose simulation raised
    long long fluids_total = 0;
    long long fluids_rejected = 0;  // failed the VLE check battery (or invalid)
    long long rejected_specs = 0;   // specs skipped because their fluid was rejected
    long long duplicates_removed = 0;
    std::map<std::string, long long> failure_kinds;
};

// Deterministic per-fluid specification draws; each fluid id gets its own
// substream so the list is independent of library order.
std::vector<ColumnSpec> sample_specs(const SamplingBounds& bounds, const Fluid& fluid,
                                     std::uint64_t seed);

// Re-checks every fluid, simulates all sampled specs (parallel across
// fluid/spec pairs, order-stable), keeps converged rows, and spot-checks 1%
// of them by re-simulating from row data alone. EmptyOutput if nothing
// survives.
std::pair<Dataset, GenReport> generate(const FluidLibrary& fluids, const SamplingBounds& bounds,
                                       unsigned workers, std::uint64_t seed);

// Row-level random split after removing every row of the holdout fluids.
// Outputs preserve input row order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_frac,
                                          std::uint64_t seed,
                                          const std::vector<std::string>& holdout_fluid_ids);

// Same pipeline as generate, for a curated reference library; refuses ids
// that collide with the training library.
Dataset build_test_set(const FluidLibrary& reference_fluids, const SamplingBounds& bounds,
                       std::uint64_t seed, const std::vector<std::string>& training_ids = {},
                       unsigned workers = 0);

void write_dataset_csv(const std::string& path, const Dataset& ds);
Dataset read_dataset_csv(const std::string& path);
void write_dataset_meta(const std::string& path, const SamplingBounds& bounds,
                        std::uint64_t seed, const GenReport& report, std::size_t rows);
void write_genreport(const std::string& path, const GenReport& report);

}  // namespace surcol
