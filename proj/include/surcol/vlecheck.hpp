#pragma once

#include <array>
#include <utility>
#include <vector>

#include "surcol/thermo.hpp"

namespace surcol {

struct CheckConfig {
    double continuity_jump_tol = 0.2;
    double envelope_az_window = 0.05;
    double curvature_edge_tol = 0.1;
    int grid_points = 101;
};

struct CheckVerdict {
    bool pass = true;
    int index = -1;       // first violating grid index, -1 when passing
    double magnitude = 0.0;
};

struct CheckReport {
    CheckVerdict endpoint;
    CheckVerdict continuity;
    CheckVerdict monotonicity;
    CheckVerdict envelope;
    CheckVerdict azeotrope_extrema;
    CheckVerdict zeotropic_curvature;
    CheckVerdict numerical;
    int azeotrope_count = 0;

    bool pass() const {
        return endpoint.pass && continuity.pass && monotonicity.pass && envelope.pass &&
               azeotrope_extrema.pass && zeotropic_curvature.pass && numerical.pass;
    }
};

CheckVerdict check_endpoints(const VleCurve& curve);
CheckVerdict check_continuity(const VleCurve& curve, const CheckConfig& cfg);
CheckVerdict check_monotonicity(const VleCurve& curve);
CheckVerdict check_envelope(const VleCurve& curve, const CheckConfig& cfg);
std::pair<CheckVerdict, int> check_azeotrope_extrema(const VleCurve& curve);
CheckVerdict check_zeotropic_curvature(const VleCurve& curve, const CheckConfig& cfg);
CheckVerdict check_numerical(const VleCurve& curve);

// All seven checks on one curve, evaluated unconditionally so the report is
// complete even after an early failure.
CheckReport check_curve(const VleCurve& curve, const CheckConfig& cfg);

// Interpolated (y - x) roots, used for the envelope exemption windows and
// exposed for reporting.
std::vector<double> azeotrope_locations(const VleCurve& curve);

struct TernaryCheckResult {
    // edge order (1,2), (1,3), (2,3); indices of the components, 0-based
    std::array<std::pair<int, int>, 3> edges{{{0, 1}, {0, 2}, {1, 2}}};
    std::array<CheckReport, 3> reports;
    bool pass = false;
};

TernaryCheckResult check_ternary_system(const ModelfluidParameters& params,
                                        const CheckConfig& cfg);

}  // namespace surcol
