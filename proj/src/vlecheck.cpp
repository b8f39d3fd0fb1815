#include "surcol/vlecheck.hpp"

#include <cmath>

namespace surcol {

namespace {

constexpr double kEndpointTol = 1e-8;
constexpr double kMonotoneTol = 1e-10;
constexpr double kEnvelopeTol = 1e-9;   // K
constexpr double kExtremaNoise = 1e-9;  // K noise floor on first differences

bool finite(double v) { return std::isfinite(v); }

// Sign changes of the first-difference sequence of t, with near-zero
// differences treated as flat. Returns the extremum types in order
// (+1 maximum, -1 minimum) plus the grid index where each flip is detected.
struct Extremum {
    int index;
    int type;
};

std::vector<Extremum> curve_extrema(const std::vector<double>& t) {
    std::vector<Extremum> out;
    int prev_sign = 0;
    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
        if (!finite(t[k]) || !finite(t[k + 1])) continue;
        const double d = t[k + 1] - t[k];
        if (std::abs(d) <= kExtremaNoise) continue;
        const int sign = d > 0.0 ? 1 : -1;
        if (prev_sign != 0 && sign != prev_sign)
            out.push_back({static_cast<int>(k), sign < 0 ? +1 : -1});
        prev_sign = sign;
    }
    return out;
}

}  // namespace

CheckVerdict check_endpoints(const VleCurve& curve) {
    CheckVerdict v;
    const double y0 = curve.y.front();
    const double y1 = curve.y.back();
    if (!(std::abs(y0) <= kEndpointTol)) {
        v.pass = false;
        v.index = 0;
        v.magnitude = std::abs(y0);
        return v;
    }
    if (!(std::abs(y1 - 1.0) <= kEndpointTol)) {
        v.pass = false;
        v.index = static_cast<int>(curve.y.size()) - 1;
        v.magnitude = std::abs(y1 - 1.0);
    }
    return v;
}

CheckVerdict check_continuity(const VleCurve& curve, const CheckConfig& cfg) {
    CheckVerdict v;
    for (std::size_t k = 0; k + 1 < curve.y.size(); ++k) {
        if (!finite(curve.y[k]) || !finite(curve.y[k + 1])) continue;
        const double jump = std::abs(curve.y[k + 1] - curve.y[k]);
        if (jump > cfg.continuity_jump_tol) {
            v.pass = false;
            v.index = static_cast<int>(k);
            v.magnitude = jump;
            return v;
        }
    }
    return v;
}

CheckVerdict check_monotonicity(const VleCurve& curve) {
    CheckVerdict v;
    for (std::size_t k = 0; k + 1 < curve.y.size(); ++k) {
        if (!finite(curve.y[k]) || !finite(curve.y[k + 1])) continue;
        const double drop = curve.y[k] - curve.y[k + 1];
        if (drop > kMonotoneTol) {
            v.pass = false;
            v.index = static_cast<int>(k + 1);
            v.magnitude = drop;
            return v;
        }
    }
    return v;
}

std::vector<double> azeotrope_locations(const VleCurve& curve) {
    std::vector<double> out;
    const std::size_t n = curve.x.size();
    // interior only: the endpoints have y = x by construction
    for (std::size_t k = 1; k + 2 < n; ++k) {
        const double a = curve.y[k] - curve.x[k];
        const double b = curve.y[k + 1] - curve.x[k + 1];
        if (!finite(a) || !finite(b)) continue;
        if (a == 0.0) {
            out.push_back(curve.x[k]);
            continue;
        }
        if (a * b < 0.0)
            out.push_back(curve.x[k] + (curve.x[k + 1] - curve.x[k]) * a / (a - b));
    }
    return out;
}

CheckVerdict check_envelope(const VleCurve& curve, const CheckConfig& cfg) {
    CheckVerdict v;
    const std::vector<double> az = azeotrope_locations(curve);
    for (std::size_t k = 0; k < curve.x.size(); ++k) {
        if (!finite(curve.t_bub[k]) || !finite(curve.t_dew[k])) continue;
        bool exempt = false;
        for (const double a : az)
            if (std::abs(curve.x[k] - a) <= cfg.envelope_az_window) {
                exempt = true;
                break;
            }
        if (exempt) continue;
        const double gap = curve.t_bub[k] - curve.t_dew[k];
        if (gap > kEnvelopeTol) {
            v.pass = false;
            v.index = static_cast<int>(k);
            v.magnitude = gap;
            return v;
        }
    }
    return v;
}

std::pair<CheckVerdict, int> check_azeotrope_extrema(const VleCurve& curve) {
    CheckVerdict v;
    const std::size_t n = curve.x.size();

    int az_count = 0;
    int prev_sign = 0;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        const double d = curve.y[k] - curve.x[k];
        if (!finite(d) || d == 0.0) continue;
        const int sign = d > 0.0 ? 1 : -1;
        if (prev_sign != 0 && sign != prev_sign) ++az_count;
        prev_sign = sign;
    }

    const std::vector<Extremum> bub = curve_extrema(curve.t_bub);
    const std::vector<Extremum> dew = curve_extrema(curve.t_dew);
    if (static_cast<int>(bub.size()) != az_count) {
        v.pass = false;
        v.index = bub.empty() ? -1 : bub.front().index;
        v.magnitude = std::abs(static_cast<double>(bub.size()) - az_count);
        return {v, az_count};
    }
    if (static_cast<int>(dew.size()) != az_count) {
        v.pass = false;
        v.index = dew.empty() ? -1 : dew.front().index;
        v.magnitude = std::abs(static_cast<double>(dew.size()) - az_count);
        return {v, az_count};
    }
    if (az_count >= 2) {
        for (std::size_t k = 0; k + 1 < bub.size(); ++k) {
            if (bub[k].type == bub[k + 1].type) {
                v.pass = false;
                v.index = bub[k + 1].index;
                v.magnitude = 0.0;
                return {v, az_count};
            }
        }
    }
    return {v, az_count};
}

CheckVerdict check_zeotropic_curvature(const VleCurve& curve, const CheckConfig& cfg) {
    CheckVerdict v;
    const int az = check_azeotrope_extrema(curve).second;
    if (az != 0) return v;  // azeotropic systems are out of this check's scope

    for (const std::vector<double>* t : {&curve.t_bub, &curve.t_dew}) {
        int prev_sign = 0;
        for (std::size_t k = 1; k + 1 < curve.x.size(); ++k) {
            if (curve.x[k] < cfg.curvature_edge_tol || curve.x[k] > 1.0 - cfg.curvature_edge_tol)
                continue;
            const double tm = (*t)[k - 1], t0 = (*t)[k], tp = (*t)[k + 1];
            if (!finite(tm) || !finite(t0) || !finite(tp)) {
                prev_sign = 0;
                continue;
            }
            const double s = tp - 2.0 * t0 + tm;
            if (std::abs(s) <= kExtremaNoise) continue;
            const int sign = s > 0.0 ? 1 : -1;
            if (prev_sign != 0 && sign != prev_sign) {
                v.pass = false;
                v.index = static_cast<int>(k);
                v.magnitude = std::abs(s);
                return v;
            }
            prev_sign = sign;
        }
    }
    return v;
}

CheckVerdict check_numerical(const VleCurve& curve) {
    CheckVerdict v;
    const std::vector<double>* arrays[] = {&curve.x, &curve.y, &curve.t_bub, &curve.t_dew};
    for (const auto* arr : arrays) {
        for (std::size_t k = 0; k < arr->size(); ++k) {
            if (!finite((*arr)[k])) {
                v.pass = false;
                v.index = static_cast<int>(k);
                v.magnitude = 0.0;
                return v;
            }
        }
    }
    if (!finite(curve.pressure)) {
        v.pass = false;
        v.index = -1;
    }
    return v;
}

CheckReport check_curve(const VleCurve& curve, const CheckConfig& cfg) {
    CheckReport r;
    r.endpoint = check_endpoints(curve);
    r.continuity = check_continuity(curve, cfg);
    r.monotonicity = check_monotonicity(curve);
    r.envelope = check_envelope(curve, cfg);
    auto [az_verdict, az_count] = check_azeotrope_extrema(curve);
    r.azeotrope_extrema = az_verdict;
    r.azeotrope_count = az_count;
    r.zeotropic_curvature = check_zeotropic_curvature(curve, cfg);
    r.numerical = check_numerical(curve);
    return r;
}

TernaryCheckResult check_ternary_system(const ModelfluidParameters& params,
                                        const CheckConfig& cfg) {
    TernaryCheckResult res;
    res.pass = true;
    for (int e = 0; e < 3; ++e) {
        const auto [i, j] = res.edges[e];
        const VleCurve curve =
            binary_vle_curve(i, j, params, params.pressure, cfg.grid_points);
        res.reports[e] = check_curve(curve, cfg);
        res.pass = res.pass && res.reports[e].pass();
    }
    return res;
}

}  // namespace surcol
