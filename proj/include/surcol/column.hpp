#pragma once

#include <string>
#include <vector>

#include "surcol/thermo.hpp"

namespace surcol {

// Stage counts exclude the terminal units: condenser and reboiler are total
// (non-separating), the feed stage is an equilibrium stage, so a column has
// n_above + n_below + 1 equilibrium stages.
struct ColumnSpec {
    int n_above = 2;            // stages above the feed stage
    int n_below = 2;            // stages below the feed stage
    double reflux_ratio = 1.0;  // external, L_reflux / D
    double split = 0.5;         // bottoms-to-feed molar ratio
    double pressure = 1.0e5;    // Pa
    double feed_flow = 1.0;     // mol/s
    Vec3 feed_composition{1.0 / 3, 1.0 / 3, 1.0 / 3};
};

struct Stream {
    double flow = 0.0;  // mol/s
    Vec3 x{};
};

// One equilibrium stage, numbered bottom-up. l and v are the liquid leaving
// downward and the vapor leaving upward.
struct StageProfile {
    double t = 0.0;
    Vec3 x{};
    Vec3 y{};
    double l = 0.0;
    double v = 0.0;
};

struct ColumnResult {
    double q_reboiler = 0.0;   // W
    double q_condenser = 0.0;  // W
    Stream bottoms;
    Stream distillate;
    double boilup = 0.0;  // vapor flow leaving the reboiler, mol/s
    std::vector<StageProfile> stages;
    double residual_norm = 0.0;
    int iterations = 0;
};

ColumnResult simulate(const ColumnSpec& spec, const ModelfluidParameters& params);

// Recomputes the scaled MESH residual from stored profiles; lets tests and
// callers verify a result without trusting the solver's own bookkeeping.
double mesh_residual_norm(const ColumnSpec& spec, const ModelfluidParameters& params,
                          const ColumnResult& result);

struct BatchItem {
    bool ok = false;
    ColumnResult result;
    std::string error;
};

// Order-preserving parallel map of simulate; failures become records, never
// aborts. specs and fluids must be aligned.
std::vector<BatchItem> simulate_batch(const std::vector<ColumnSpec>& specs,
                                      const std::vector<ModelfluidParameters>& fluids,
                                      unsigned workers = 0);

}  // namespace surcol
