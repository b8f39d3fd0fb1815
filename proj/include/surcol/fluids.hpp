#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "surcol/thermo.hpp"

namespace surcol {

inline constexpr int kModelfluidFeatureCount = 16;

// Column names of the flattened feature vector, shared by the fluid-library
// and dataset schemas.
extern const std::array<const char*, kModelfluidFeatureCount> kModelfluidFeatureNames;

std::array<double, kModelfluidFeatureCount> feature_vector(const ModelfluidFeatures& f);
ModelfluidFeatures features_from_vector(const std::array<double, kModelfluidFeatureCount>& v);

struct Fluid {
    std::string id;
    ModelfluidFeatures features;
};

using FluidLibrary = std::vector<Fluid>;

// CSV schema: id column followed by kModelfluidFeatureNames.
FluidLibrary read_fluid_library(const std::string& path);
void write_fluid_library(const std::string& path, const FluidLibrary& lib);

// Random-search window for fluid synthesis. Defaults keep the consistency
// pass rate and downstream column convergence reasonable while still
// producing azeotropes and strongly nonideal systems.
struct SynthesisBounds {
    double t_lo = 320.0;   // K
    double t_hi = 390.0;   // K
    double t_min_sep = 5.0;
    double dh_lo = 25e3;   // J/mol
    double dh_hi = 45e3;
    double margules_lo = -1.2;
    double margules_hi = 1.2;
    double pressure = 1.0e5;  // Pa, anchoring pressure of the library
};

// Draws random parameter sets and keeps those passing the full binary-VLE
// check battery until `count` fluids are collected. Deterministic in
// (count, seed, bounds): each attempt has its own substream, attempts are
// scanned in order, so the result does not depend on `workers`. Throws
// TooFewSamples when max_attempts (default 400 per requested fluid) runs out;
// the default bounds pass at roughly 5-10%.
FluidLibrary synthesize_fluids(int count, std::uint64_t seed,
                               const SynthesisBounds& bounds = {}, unsigned workers = 0,
                               long max_attempts = 0);

}  // namespace surcol
