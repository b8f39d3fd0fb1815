#pragma once

#include <array>
#include <vector>

#include "surcol/errors.hpp"

namespace surcol {

// Reference pressure of the simplified Antoine form ln(p_sat/p_ref) = A - B/T.
inline constexpr double kPRef = 1.0;  // Pa
// Minimum anchor-temperature separation for the feature-to-parameter map.
inline constexpr double kTEps = 0.1;  // K
inline constexpr double kGasConstant = 8.31446261815324;  // J/(mol K)

using Vec3 = std::array<double, 3>;
using Vec6 = std::array<double, 6>;

struct AntoinePair {
    double a = 0.0;  // dimensionless
    double b = 0.0;  // K
};

// Feature vector of a ternary modelfluid at a fixed system pressure.
// gamma_inf holds the infinite-dilution activity coefficients in the ordered
// pair sequence (1,2),(2,1),(1,3),(3,1),(2,3),(3,2); dydx_inf the retained
// dilute-limit slopes D_13, D_21, D_31.
struct ModelfluidFeatures {
    double pressure = 0.0;  // Pa
    Vec3 t_sat{};           // K
    Vec3 dh_vap{};          // J/mol, at t_sat
    Vec6 gamma_inf{};
    Vec3 dydx_inf{};
};

// Internal parameterization: Antoine pairs, Margules coefficients
// A_ij = ln(gamma_i|j) in the same pair order, vaporization enthalpies, and
// the anchoring pressure.
struct ModelfluidParameters {
    std::array<AntoinePair, 3> antoine{};
    Vec3 dh_vap{};
    Vec6 margules{};
    double pressure = 0.0;  // Pa
};

// Isobaric binary T-x-y data on a shared composition axis. t_dew[k] is the
// dew temperature of vapor with composition x[k] (same uniform grid as the
// bubble side). Unconverged points are NaN.
struct VleCurve {
    double pressure = 0.0;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> t_bub;
    std::vector<double> t_dew;
};

struct BubbleResult {
    double t = 0.0;
    Vec3 y{};
};

struct DewResult {
    double t = 0.0;
    Vec3 x{};
};

ModelfluidParameters features_to_parameters(const ModelfluidFeatures& f);

// Re-evaluates the feature vector implied by a parameter set, at the stored
// pressure or at an explicit one (re-anchoring).
ModelfluidFeatures parameters_to_features(const ModelfluidParameters& p);
ModelfluidFeatures parameters_to_features(const ModelfluidParameters& p, double pressure);

// ln(gamma) of the ternary Margules form; scale-invariant in x (normalizes
// internally), so solvers may call it with unnormalized iterates.
Vec3 ln_activity_coefficients(const Vec3& x, const Vec6& margules);

// Strict variant: requires sum(x) = 1 within 1e-12 and x >= 0.
Vec3 activity_coefficients(const Vec3& x, const Vec6& margules);

double vapor_pressure(double t, const AntoinePair& antoine);

// Molar vapor enthalpy relative to the boiling-liquid datum.
double dh_mix(const Vec3& y, const Vec3& dh_vap);

BubbleResult bubble_point(const Vec3& x, double p, const ModelfluidParameters& params);
DewResult dew_point(const Vec3& y, double p, const ModelfluidParameters& params);

// Binary sub-system (components i, j, 0-based) of a ternary fluid. The grid
// axis is the mole fraction of component i; n_points >= 11. Solver failures
// become NaN entries rather than errors.
VleCurve binary_vle_curve(int i, int j, const ModelfluidParameters& params, double p,
                          int n_points);

}  // namespace surcol
