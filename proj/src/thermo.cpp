#include "surcol/thermo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace surcol {

namespace {

// Ordered-pair layout of gamma_inf / margules arrays.
// index:  0     1     2     3     4     5
// pair : (1,2) (2,1) (1,3) (3,1) (2,3) (3,2)
// For component k (0-based) infinitely diluted in solvent s, the coefficient
// A_{k+1, s+1} lives at:
int pair_index(int k, int s) {
    static constexpr int tbl[3][3] = {{-1, 0, 2}, {1, -1, 4}, {3, 5, -1}};
    return tbl[k][s];
}

// Anchor solvent of each component in the feature-to-parameter map:
// component 1 anchors in 3, components 2 and 3 anchor in 1 (0-based below).
constexpr int kAnchor[3] = {2, 0, 0};

double finite_or_throw(double v, const char* what) {
    if (!std::isfinite(v)) throw NonPhysical(what);
    return v;
}

}  // namespace

ModelfluidParameters features_to_parameters(const ModelfluidFeatures& f) {
    if (!(f.pressure > 0.0)) throw NonPhysical("features: pressure must be positive");
    for (const double t : f.t_sat)
        if (!(t > 0.0)) throw NonPhysical("features: t_sat must be positive");
    for (const double d : f.dh_vap)
        if (!(d > 0.0)) throw NonPhysical("features: dh_vap must be positive");
    for (const double g : f.gamma_inf)
        if (!(g > 0.0)) throw NonPhysical("features: gamma_inf must be positive");
    for (const double d : f.dydx_inf)
        if (!(d > 0.0)) throw NonPhysical("features: dydx_inf must be positive");

    ModelfluidParameters p;
    p.pressure = f.pressure;
    p.dh_vap = f.dh_vap;
    p.margules = f.gamma_inf;
    for (double& m : p.margules) m = std::log(m);

    const double lnp = std::log(f.pressure / kPRef);
    for (int i = 0; i < 3; ++i) {
        const int a = kAnchor[i];
        const double ti = f.t_sat[i];
        const double ta = f.t_sat[a];
        if (std::abs(ti - ta) < kTEps)
            throw AnchorDegenerate("anchor temperatures coincide for component " +
                                   std::to_string(i + 1));
        const double gamma = f.gamma_inf[pair_index(i, a)];
        // The dilute-limit slope D_i = gamma_i|a * p_i_sat(T_a) / p pins a
        // second point of the vapor-pressure curve at the anchor's boiling
        // temperature.
        const double b = std::log(f.dydx_inf[i] / gamma) / (1.0 / ti - 1.0 / ta);
        if (!(b > 0.0))
            throw NonPositiveVaporPressure("component " + std::to_string(i + 1) +
                                           ": inferred Antoine B = " + std::to_string(b));
        p.antoine[i] = {finite_or_throw(lnp + b / ti, "antoine A"), b};
    }
    return p;
}

ModelfluidFeatures parameters_to_features(const ModelfluidParameters& p) {
    return parameters_to_features(p, p.pressure);
}

ModelfluidFeatures parameters_to_features(const ModelfluidParameters& p, double pressure) {
    if (!(pressure > 0.0)) throw NonPhysical("parameters_to_features: pressure must be positive");
    ModelfluidFeatures f;
    f.pressure = pressure;
    f.dh_vap = p.dh_vap;
    const double lnp = std::log(pressure / kPRef);
    for (int i = 0; i < 3; ++i) {
        const double denom = p.antoine[i].a - lnp;
        if (!(denom > 0.0))
            throw NonPhysical("component " + std::to_string(i + 1) +
                              " has no positive boiling point at this pressure");
        f.t_sat[i] = p.antoine[i].b / denom;
    }
    for (int k = 0; k < 6; ++k) f.gamma_inf[k] = std::exp(p.margules[k]);
    for (int i = 0; i < 3; ++i) {
        const int a = kAnchor[i];
        const double gamma = f.gamma_inf[pair_index(i, a)];
        f.dydx_inf[i] = gamma * vapor_pressure(f.t_sat[a], p.antoine[i]) / pressure;
    }
    return f;
}

Vec3 ln_activity_coefficients(const Vec3& x_in, const Vec6& m) {
    const double n = x_in[0] + x_in[1] + x_in[2];
    if (!(n > 0.0)) throw CompositionInvalid("nonpositive total composition");
    const Vec3 x = {x_in[0] / n, x_in[1] / n, x_in[2] / n};

    // g = sum over pairs i<j of x_i x_j (A_ji x_i + A_ij x_j); ln gamma_k is
    // the partial-molar derivative of n*g.
    Vec3 lg = {0.0, 0.0, 0.0};
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            const double aij = m[pair_index(i, j)];
            const double aji = m[pair_index(j, i)];
            const double s = aji * x[i] + aij * x[j];
            const double common = 2.0 * x[i] * x[j] * s;
            for (int k = 0; k < 3; ++k) {
                double d = -common;
                if (k == i) d += x[j] * s + x[i] * x[j] * aji;
                if (k == j) d += x[i] * s + x[i] * x[j] * aij;
                lg[k] += d;
            }
        }
    }
    return lg;
}

Vec3 activity_coefficients(const Vec3& x, const Vec6& m) {
    double sum = 0.0;
    for (const double v : x) {
        if (v < 0.0) throw CompositionInvalid("negative mole fraction");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw CompositionInvalid("mole fractions do not sum to 1");
    Vec3 g = ln_activity_coefficients(x, m);
    for (double& v : g) v = std::exp(v);
    return g;
}

double vapor_pressure(double t, const AntoinePair& antoine) {
    if (!(t > 0.0)) throw NonPhysical("vapor_pressure: temperature must be positive");
    return std::exp(antoine.a - antoine.b / t) * kPRef;
}

double dh_mix(const Vec3& y, const Vec3& dh_vap) {
    return y[0] * dh_vap[0] + y[1] * dh_vap[1] + y[2] * dh_vap[2];
}

namespace {

struct Bracket {
    double lo, hi;
};

Bracket t_bracket(const ModelfluidParameters& params, double lnp) {
    // T where p_i_sat crosses p; components whose curve never crosses (only
    // possible for malformed fluids, e.g. decreasing vapor pressure above p
    // everywhere) contribute no anchor.
    double tmin = std::numeric_limits<double>::infinity();
    double tmax = 0.0;
    for (const auto& a : params.antoine) {
        const double t = a.b / (a.a - lnp);
        if (!(t > 0.0)) continue;
        tmin = std::min(tmin, t);
        tmax = std::max(tmax, t);
    }
    if (!(tmax > 0.0)) throw NonPhysical("no component boils at this pressure");
    return {0.5 * tmin, 2.0 * tmax};
}

// Safeguarded Newton on a scalar residual: Newton steps clipped to a
// sign-change bracket, bisection when the step leaves it. When the bracket
// endpoints do not straddle a root (non-monotone residuals of malformed
// fluids), a subdivision scan locates the sign change nearest t0.
template <class F, class DF>
double solve_scalar(F resid, DF dresid, Bracket br, double t0, double tol, int max_iter,
                    const char* what) {
    double flo = resid(br.lo);
    double fhi = resid(br.hi);
    if (std::isnan(flo) || std::isnan(fhi))
        throw NoConvergence(std::string(what) + ": residual not finite at bracket", 0.0, 0);
    if (flo * fhi > 0.0) {
        constexpr int kScan = 64;
        const double step = (br.hi - br.lo) / kScan;
        Bracket best{0.0, 0.0};
        double best_flo = 0.0, best_fhi = 0.0;
        double best_dist = std::numeric_limits<double>::infinity();
        double ta = br.lo, fa = flo;
        for (int k = 1; k <= kScan; ++k) {
            const double tb = br.lo + k * step;
            const double fb = resid(tb);
            if (std::isfinite(fb) && std::isfinite(fa) && fa * fb <= 0.0) {
                const double mid = 0.5 * (ta + tb);
                if (std::abs(mid - t0) < best_dist) {
                    best_dist = std::abs(mid - t0);
                    best = {ta, tb};
                    best_flo = fa;
                    best_fhi = fb;
                }
            }
            ta = tb;
            fa = fb;
        }
        if (!(best_dist < std::numeric_limits<double>::infinity()))
            throw NoConvergence(std::string(what) + ": no sign change in temperature bracket",
                                std::min(std::abs(flo), std::abs(fhi)), 0);
        br = best;
        flo = best_flo;
        fhi = best_fhi;
    }
    if (std::abs(flo) < tol) return br.lo;
    if (std::abs(fhi) < tol) return br.hi;

    double t = std::clamp(t0, br.lo, br.hi);
    double f = resid(t);
    for (int it = 1; it <= max_iter; ++it) {
        if (std::abs(f) < tol) return t;
        if ((f < 0.0) == (flo < 0.0)) {
            br.lo = t;
            flo = f;
        } else {
            br.hi = t;
            fhi = f;
        }
        const double df = dresid(t);
        double tn = t - f / df;
        if (!std::isfinite(tn) || tn <= std::min(br.lo, br.hi) || tn >= std::max(br.lo, br.hi))
            tn = 0.5 * (br.lo + br.hi);
        t = tn;
        f = resid(t);
    }
    throw NoConvergence(std::string(what) + ": residual above tolerance", std::abs(f), max_iter);
}

}  // namespace

BubbleResult bubble_point(const Vec3& x, double p, const ModelfluidParameters& params) {
    if (!(p > 0.0)) throw NonPhysical("bubble_point: pressure must be positive");
    const Vec3 gamma = activity_coefficients(x, params.margules);
    const double lnp = std::log(p / kPRef);
    const Bracket br = t_bracket(params, lnp);

    auto partials = [&](double t, Vec3& out) {
        for (int i = 0; i < 3; ++i)
            out[i] = gamma[i] * x[i] * vapor_pressure(t, params.antoine[i]);
    };
    auto resid = [&](double t) {
        Vec3 pp;
        partials(t, pp);
        return pp[0] + pp[1] + pp[2] - p;
    };
    auto dresid = [&](double t) {
        Vec3 pp;
        partials(t, pp);
        double d = 0.0;
        for (int i = 0; i < 3; ++i) d += pp[i] * params.antoine[i].b / (t * t);
        return d;
    };

    double t0 = 0.0;
    for (int i = 0; i < 3; ++i) t0 += x[i] * params.antoine[i].b / (params.antoine[i].a - lnp);
    const double t = solve_scalar(resid, dresid, br, t0, 1e-10 * p, 100, "bubble_point");

    BubbleResult out;
    out.t = t;
    Vec3 pp;
    partials(t, pp);
    // Normalize away the residual tolerance so sum(y) = 1 exactly.
    const double tot = pp[0] + pp[1] + pp[2];
    for (int i = 0; i < 3; ++i) out.y[i] = pp[i] / tot;
    return out;
}

DewResult dew_point(const Vec3& y, double p, const ModelfluidParameters& params) {
    if (!(p > 0.0)) throw NonPhysical("dew_point: pressure must be positive");
    {
        double sum = 0.0;
        for (const double v : y) {
            if (v < 0.0) throw CompositionInvalid("negative mole fraction");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw CompositionInvalid("mole fractions do not sum to 1");
    }
    const double lnp = std::log(p / kPRef);
    const Bracket br = t_bracket(params, lnp);

    Vec3 x_carry = y;  // warm start across outer iterations

    // Liquid composition consistent with y at temperature t: damped fixed
    // point x <- normalize(y_i p / (gamma_i(x) p_i_sat)).
    auto liquid_at = [&](double t, Vec3& x) {
        for (int sweep = 0; sweep < 200; ++sweep) {
            const Vec3 gamma = ln_activity_coefficients(x, params.margules);
            Vec3 xn;
            double tot = 0.0;
            for (int i = 0; i < 3; ++i) {
                xn[i] = y[i] * p / (std::exp(gamma[i]) * vapor_pressure(t, params.antoine[i]));
                tot += xn[i];
            }
            double delta = 0.0;
            for (int i = 0; i < 3; ++i) {
                xn[i] /= tot;
                const double next = 0.5 * x[i] + 0.5 * xn[i];
                delta = std::max(delta, std::abs(next - x[i]));
                x[i] = next;
            }
            if (delta < 1e-13) return;
        }
        throw NoConvergence("dew_point: liquid composition fixed point stalled", 0.0, 200);
    };

    auto resid = [&](double t) {
        Vec3 x = x_carry;
        liquid_at(t, x);
        x_carry = x;
        const Vec3 gamma = activity_coefficients(x, params.margules);
        double sum = 0.0;
        for (int i = 0; i < 3; ++i)
            sum += y[i] * p / (gamma[i] * vapor_pressure(t, params.antoine[i]));
        return sum - 1.0;
    };
    // Quasi-derivative with gamma frozen; the safeguard bracket covers the
    // neglected composition dependence.
    auto dresid = [&](double t) {
        const Vec3 gamma = activity_coefficients(x_carry, params.margules);
        double d = 0.0;
        for (int i = 0; i < 3; ++i)
            d -= y[i] * p * params.antoine[i].b /
                 (gamma[i] * vapor_pressure(t, params.antoine[i]) * t * t);
        return d;
    };

    double t0 = 0.0;
    for (int i = 0; i < 3; ++i) t0 += y[i] * params.antoine[i].b / (params.antoine[i].a - lnp);
    const double t = solve_scalar(resid, dresid, br, t0, 1e-10, 100, "dew_point");

    DewResult out;
    out.t = t;
    out.x = x_carry;
    liquid_at(t, out.x);
    const double tot = out.x[0] + out.x[1] + out.x[2];
    for (double& v : out.x) v /= tot;
    return out;
}

VleCurve binary_vle_curve(int i, int j, const ModelfluidParameters& params, double p,
                          int n_points) {
    if (i == j || i < 0 || j < 0 || i > 2 || j > 2)
        throw DataError("binary_vle_curve: pair indices must be distinct and in 0..2");
    if (n_points < 11) throw DataError("binary_vle_curve: need at least 11 grid points");

    VleCurve c;
    c.pressure = p;
    c.x.resize(n_points);
    c.y.assign(n_points, std::numeric_limits<double>::quiet_NaN());
    c.t_bub.assign(n_points, std::numeric_limits<double>::quiet_NaN());
    c.t_dew.assign(n_points, std::numeric_limits<double>::quiet_NaN());

    for (int k = 0; k < n_points; ++k) {
        const double z = static_cast<double>(k) / (n_points - 1);
        c.x[k] = z;
        Vec3 comp = {0.0, 0.0, 0.0};
        comp[i] = z;
        comp[j] = 1.0 - z;
        try {
            const BubbleResult b = bubble_point(comp, p, params);
            c.t_bub[k] = b.t;
            c.y[k] = b.y[i];
        } catch (const Error&) {
        }
        try {
            // Same uniform grid on the vapor side, so the shared axis needs
            // no interpolation: t_dew[k] belongs to vapor composition z.
            c.t_dew[k] = dew_point(comp, p, params).t;
        } catch (const Error&) {
        }
    }
    return c;
}

}  // namespace surcol
