#include "surcol/flowsheet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <CLI11.hpp>
#include <json.hpp>

#include "surcol/csv.hpp"
#include "surcol/datagen.hpp"

namespace surcol {

namespace {

constexpr double kTearTol = 1e-8;
constexpr int kTearBudget = 500;
constexpr int kClosureBudget = 200;

// Chain of columns from the mixer to the mixer-return outlet, with the
// product/internal role of every outlet. Assumes a validated topology.
struct Route {
    std::array<int, 3> order{};
    std::array<bool, 3> top_is_product{};  // per column index, not chain position
};

const StreamDest& internal_dest(const Topology& t, int column, bool top_is_product) {
    return top_is_product ? t.bottom[column] : t.top[column];
}

Route route_of(const Topology& t) {
    Route r;
    for (int c = 0; c < 3; ++c) r.top_is_product[c] = t.top[c].kind == DestKind::kProduct;
    int cur = t.first_column;
    for (int step = 0; step < 3; ++step) {
        r.order[step] = cur;
        const StreamDest& d = internal_dest(t, cur, r.top_is_product[cur]);
        if (d.kind == DestKind::kColumn) cur = d.column;
    }
    return r;
}

Vec3 clamped_nonneg(Vec3 v) {
    for (double& e : v) e = std::max(e, 0.0);
    return v;
}

// Mole fractions from component flows, with the exact-sum guarantee the
// column solver's input check expects.
Vec3 normalize_composition(const Vec3& n) {
    Vec3 x = clamped_nonneg(n);
    const double s = x[0] + x[1] + x[2];
    if (!(s > 0.0)) throw InvalidSpec("stream has no positive component flow");
    for (double& e : x) e /= s;
    x[2] = 1.0 - x[0] - x[1];
    if (x[2] < 0.0) {
        x[2] = 0.0;
        const double p = x[0] + x[1];
        x[0] /= p;
        x[1] = 1.0 - x[0];
    }
    return x;
}

ColumnSpec column_spec_for(const FlowsheetSpec& spec, int column, const Stream& feed) {
    const ColumnDecision& d = spec.columns[column];
    ColumnSpec cs;
    cs.n_above = d.n_above;
    cs.n_below = d.n_below;
    cs.reflux_ratio = d.reflux_ratio;
    cs.split = d.split;
    cs.pressure = d.pressure;
    cs.feed_flow = feed.flow;
    cs.feed_composition = feed.x;
    return cs;
}

Vec3 component_flows(const Stream& s) {
    return {s.flow * s.x[0], s.flow * s.x[1], s.flow * s.x[2]};
}

Stream stream_from_flows(const Vec3& n) {
    Stream s;
    s.flow = n[0] + n[1] + n[2];
    s.x = normalize_composition(n);
    return s;
}

// Inconsistent predictions can drive individual component flows slightly
// negative. The state keeps those signed so every balance stays exact; the
// clamped view is only ever handed to predictors.
Stream signed_stream(const Vec3& n) {
    Stream s;
    s.flow = n[0] + n[1] + n[2];
    if (!(s.flow > 0.0)) throw InvalidSpec("stream has no positive total flow");
    for (int j = 0; j < 3; ++j) s.x[j] = n[j] / s.flow;
    s.x[2] = 1.0 - s.x[0] - s.x[1];
    return s;
}

Stream mix_inputs(const FlowsheetSpec& spec, const Vec3& recycle_flows) {
    Vec3 n = component_flows(spec.feed);
    n[2] += spec.makeup_flow;
    for (int j = 0; j < 3; ++j) n[j] += recycle_flows[j];
    return stream_from_flows(n);
}

double flow_scale(const FlowsheetSpec& spec) {
    return std::max(1.0, spec.feed.flow + spec.makeup_flow);
}

void fill_residuals(const FlowsheetSpec& spec, FlowsheetState& st) {
    const Route route = route_of(spec.topology);
    const double inv = 1.0 / flow_scale(spec);
    for (int c = 0; c < 3; ++c) {
        const Stream& prod = route.top_is_product[c] ? st.tops[c] : st.bottoms[c];
        const Stream& other = route.top_is_product[c] ? st.bottoms[c] : st.tops[c];
        st.products[c] = prod;
        st.residuals[c] = 1.0 - (prod.x[0] + prod.x[1] + prod.x[2]);
        st.residuals[3 + c] = 1.0 - (other.x[0] + other.x[1] + other.x[2]);
    }
    for (int j = 0; j < 3; ++j) {
        double r = spec.feed.flow * spec.feed.x[j] + (j == 2 ? spec.makeup_flow : 0.0);
        for (int c = 0; c < 3; ++c) r -= st.products[c].flow * st.products[c].x[j];
        if (spec.zero_recycle) r -= st.recycle.flow * st.recycle.x[j];
        st.residuals[6 + j] = r * inv;
    }
    for (int c = 0; c < 3; ++c)
        for (int j = 0; j < 3; ++j) {
            const double r = st.feeds[c].flow * st.feeds[c].x[j] -
                             st.tops[c].flow * st.tops[c].x[j] -
                             st.bottoms[c].flow * st.bottoms[c].x[j];
            st.residuals[9 + 3 * c + j] = r * inv;
        }
}

}  // namespace

Topology default_topology() {
    Topology t;
    t.first_column = 0;
    t.top[0] = {DestKind::kProduct, -1};
    t.bottom[0] = {DestKind::kColumn, 1};
    t.top[1] = {DestKind::kColumn, 2};
    t.bottom[1] = {DestKind::kProduct, -1};
    t.top[2] = {DestKind::kProduct, -1};
    t.bottom[2] = {DestKind::kMixer, -1};
    return t;
}

void validate(const FlowsheetSpec& spec) {
    const Topology& t = spec.topology;
    if (t.first_column < 0 || t.first_column > 2) throw InvalidSpec("first_column out of range");
    int mixer_edges = 0;
    for (int c = 0; c < 3; ++c) {
        const StreamDest& a = t.top[c];
        const StreamDest& b = t.bottom[c];
        if ((a.kind == DestKind::kProduct) == (b.kind == DestKind::kProduct))
            throw InvalidSpec("each column needs exactly one product outlet");
        for (const StreamDest* d : {&a, &b}) {
            if (d->kind == DestKind::kMixer) ++mixer_edges;
            if (d->kind == DestKind::kColumn) {
                if (d->column < 0 || d->column > 2) throw InvalidSpec("outlet routed to a bad column");
                if (d->column == c) throw InvalidSpec("column feeds itself");
                if (d->column == t.first_column)
                    throw InvalidSpec("the first column is fed by the mixer only");
            }
        }
    }
    if (mixer_edges != 1) throw InvalidSpec("exactly one outlet must return to the mixer");

    // The internal outlets must chain every column once, ending at the mixer.
    std::array<bool, 3> seen{};
    int cur = t.first_column;
    for (int step = 0; step < 3; ++step) {
        if (seen[cur]) throw InvalidSpec("column wiring has a cycle");
        seen[cur] = true;
        const StreamDest& d = internal_dest(t, cur, t.top[cur].kind == DestKind::kProduct);
        if (d.kind == DestKind::kMixer) {
            if (step != 2) throw InvalidSpec("wiring leaves a column unfed");
        } else {
            if (step == 2) throw InvalidSpec("last column in the chain must return to the mixer");
            cur = d.column;
        }
    }

    for (int c = 0; c < 3; ++c) {
        const ColumnDecision& d = spec.columns[c];
        if (d.n_above < 2 || d.n_below < 2)
            throw InvalidSpec("need at least 2 stages above and below the feed");
        if (!(d.reflux_ratio > 0.0) || !std::isfinite(d.reflux_ratio))
            throw InvalidSpec("reflux ratio must be positive");
        if (!(d.split > 0.0 && d.split < 1.0)) throw InvalidSpec("split must be in (0,1)");
        if (!(d.pressure > 0.0)) throw InvalidSpec("pressure must be positive");
        if (spec.product_component[c] < 0 || spec.product_component[c] > 2)
            throw InvalidSpec("product component out of range");
    }
    if (!(spec.feed.flow > 0.0)) throw InvalidSpec("fresh feed flow must be positive");
    double sum = 0.0;
    for (const double v : spec.feed.x) {
        if (v < 0.0) throw InvalidSpec("feed composition has a negative entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidSpec("feed composition must sum to 1");
    if (!(spec.makeup_flow >= 0.0) || !std::isfinite(spec.makeup_flow))
        throw InvalidSpec("makeup flow must be nonnegative");
}

int column_stage_count(const ColumnDecision& c) { return c.n_above + c.n_below + 1; }

int total_stage_count(const FlowsheetSpec& spec) {
    int n = 0;
    for (const ColumnDecision& c : spec.columns) n += column_stage_count(c);
    return n;
}

double total_reboiler_duty(const FlowsheetState& state) {
    return state.q_reboiler[0] + state.q_reboiler[1] + state.q_reboiler[2];
}

// ---------------------------------------------------------------------------
// rigorous evaluation
// ---------------------------------------------------------------------------

namespace {

// One pass mixer -> chain of MESH solves; returns the component flows of the
// stream headed back to the mixer.
Vec3 sweep_rigorous(const FlowsheetSpec& spec, const ModelfluidParameters& params,
                    const Route& route, const Vec3& recycle_flows, FlowsheetState& st) {
    st.mixed = mix_inputs(spec, recycle_flows);
    st.columns.clear();
    Stream cur = st.mixed;
    Vec3 tear_out{};
    for (int step = 0; step < 3; ++step) {
        const int c = route.order[step];
        const ColumnSpec cs = column_spec_for(spec, c, cur);
        ModelfluidParameters local = params;
        local.pressure = cs.pressure;
        ColumnResult res;
        try {
            res = simulate(cs, local);
        } catch (const NoConvergence& e) {
            throw ColumnNoConvergence("column " + std::to_string(c + 1) + ": " + e.what(), c);
        }
        st.feeds[c] = cur;
        st.tops[c] = res.distillate;
        st.bottoms[c] = res.bottoms;
        st.q_reboiler[c] = res.q_reboiler;
        st.q_condenser[c] = res.q_condenser;
        st.column_specs[c] = cs;
        st.columns.push_back(res);
        const Stream& internal = route.top_is_product[c] ? res.bottoms : res.distillate;
        const StreamDest& d = internal_dest(spec.topology, c, route.top_is_product[c]);
        if (d.kind == DestKind::kColumn)
            cur = internal;
        else
            tear_out = component_flows(internal);
    }
    return tear_out;
}

}  // namespace

FlowsheetState evaluate_rigorous(const FlowsheetSpec& spec, const ModelfluidParameters& params) {
    validate(spec);
    const Route route = route_of(spec.topology);
    const double scale = flow_scale(spec);

    FlowsheetState st;
    Vec3 t{};
    Vec3 g = sweep_rigorous(spec, params, route, t, st);
    st.sweeps = 1;
    if (spec.zero_recycle) {
        st.recycle = stream_from_flows(g);
        st.tear_residual = 0.0;
        fill_residuals(spec, st);
        return st;
    }

    Vec3 t_prev{}, g_prev{};
    bool have_prev = false;
    while (true) {
        double resid = 0.0;
        for (int j = 0; j < 3; ++j) resid = std::max(resid, std::abs(g[j] - t[j]));
        if (resid <= kTearTol * scale) {
            st.recycle = stream_from_flows(g);
            st.tear_residual = resid / scale;
            fill_residuals(spec, st);
            return st;
        }
        if (st.sweeps >= kTearBudget)
            throw TearNoConvergence("tear stream not converged after " +
                                    std::to_string(kTearBudget) +
                                    " sweeps, residual " + std::to_string(resid / scale));
        Vec3 t_next;
        for (int j = 0; j < 3; ++j) {
            // bounded Wegstein factor; 0.5 is the damped-substitution fallback
            double q = 0.5;
            if (have_prev && std::abs(t[j] - t_prev[j]) > 1e-14 * scale) {
                const double s = (g[j] - g_prev[j]) / (t[j] - t_prev[j]);
                q = std::clamp(s / (s - 1.0), -5.0, 0.0);
            }
            t_next[j] = q * t[j] + (1.0 - q) * g[j];
        }
        t_next = clamped_nonneg(t_next);
        t_prev = t;
        g_prev = g;
        t = t_next;
        g = sweep_rigorous(spec, params, route, t, st);
        ++st.sweeps;
        have_prev = true;
    }
}

// ---------------------------------------------------------------------------
// predictor-based evaluation
// ---------------------------------------------------------------------------

std::array<double, 5> OraclePredictor::predict(int column, const ColumnSpec& spec) const {
    ModelfluidParameters local = params_;
    local.pressure = spec.pressure;
    ColumnResult res;
    try {
        res = simulate(spec, local);
    } catch (const NoConvergence& e) {
        throw ColumnNoConvergence("column " + std::to_string(column + 1) + ": " + e.what(),
                                  column);
    }
    return {res.bottoms.x[0], res.bottoms.x[1], res.distillate.x[0], res.distillate.x[1],
            res.q_reboiler};
}

MlpPredictor::MlpPredictor(const MlpModel& model, const ModelfluidParameters& params,
                           const FlowsheetSpec& spec, Shift shift,
                           const std::optional<ConformalCalibration>& calib)
    : model_(model) {
    validate(spec);
    if (shift != Shift::kNominal) {
        if (!calib) throw InvalidSpec("best/worst shift needs a conformal calibration");
        if (calib->delta.size() != 5) throw ShapeMismatch("calibration width must be 5");
    }
    for (int c = 0; c < 3; ++c) {
        ModelfluidParameters local = params;
        local.pressure = spec.columns[c].pressure;
        fluid_features_[c] = feature_vector(parameters_to_features(local, local.pressure));
        if (shift == Shift::kNominal) continue;
        const double sgn = shift == Shift::kBest ? 1.0 : -1.0;
        auto& d = shift_delta_[c];
        d[4] = -sgn * 0.5 * calib->delta[4];
        const bool top_is_product = spec.topology.top[c].kind == DestKind::kProduct;
        const int base = top_is_product ? 2 : 0;  // distillate pair vs bottoms pair
        const int comp = spec.product_component[c];
        if (comp == 2) {
            // raising the third fraction means lowering the two reported ones
            d[base + 0] = -sgn * 0.5 * calib->delta[base + 0];
            d[base + 1] = -sgn * 0.5 * calib->delta[base + 1];
        } else {
            d[base + comp] = sgn * 0.5 * calib->delta[base + comp];
        }
    }
}

long MlpPredictor::clip_count() const { return clips_.load(); }

std::array<double, 5> MlpPredictor::predict(int column, const ColumnSpec& spec) const {
    Eigen::VectorXd f(kFeatureCount);
    for (int i = 0; i < 16; ++i) f[i] = fluid_features_[column][i];
    f[16] = spec.split;
    f[17] = spec.reflux_ratio;
    f[18] = static_cast<double>(spec.n_below);
    f[19] = static_cast<double>(spec.n_above);
    f[20] = spec.feed_composition[0];
    f[21] = spec.feed_composition[1];
    const Eigen::VectorXd y = surcol::predict(model_, f);

    std::array<double, 5> out;
    for (int k = 0; k < 5; ++k) out[k] = y[k] + shift_delta_[column][k];
    long clips = 0;
    for (int k = 0; k < 4; ++k) {
        const double c = std::clamp(out[k], 0.0, 1.0);
        if (c != out[k]) ++clips;
        out[k] = c;
    }
    for (int base : {0, 2}) {
        const double s = out[base] + out[base + 1];
        if (s > 1.0) {
            out[base] /= s;
            out[base + 1] /= s;
            ++clips;
        }
    }
    if (out[4] < 0.0) {
        out[4] = 0.0;
        ++clips;
    }
    out[4] *= spec.feed_flow;  // the network predicts duty per unit feed
    if (clips > 0) clips_.fetch_add(clips);
    return out;
}

namespace {

// Streams implied by a distillate-composition guess: flows are resolved
// exactly from the linear recycle relation, bottoms compositions follow from
// component balances. No predictor calls happen here.
struct PassResult {
    Stream mixed;
    std::array<Stream, 3> feeds;
    std::array<Vec3, 3> top_flows;     // component flows, distillate side
    std::array<Vec3, 3> bottom_flows;  // component flows, by balance
    Vec3 recycle_flows{};
};

// u holds (x_D1, x_D2) per column. Streams are signed quantities during the
// iteration; only predictor inputs get sanitized.
PassResult propagate(const FlowsheetSpec& spec, const Route& route,
                     const Eigen::VectorXd& u, const Vec3& recycle_flows) {
    PassResult out;
    Vec3 n = component_flows(spec.feed);
    n[2] += spec.makeup_flow;
    for (int j = 0; j < 3; ++j) n[j] += recycle_flows[j];
    out.mixed = signed_stream(n);
    Vec3 cur = n;
    for (int step = 0; step < 3; ++step) {
        const int c = route.order[step];
        const double f = cur[0] + cur[1] + cur[2];
        const double dist = (1.0 - spec.columns[c].split) * f;
        out.feeds[c] = signed_stream(cur);
        const Vec3 xd{u[2 * c], u[2 * c + 1], 1.0 - u[2 * c] - u[2 * c + 1]};
        for (int j = 0; j < 3; ++j) {
            out.top_flows[c][j] = dist * xd[j];
            out.bottom_flows[c][j] = cur[j] - out.top_flows[c][j];
        }
        const bool product_is_top = route.top_is_product[c];
        const Vec3& internal = product_is_top ? out.bottom_flows[c] : out.top_flows[c];
        const StreamDest& d = internal_dest(spec.topology, c, product_is_top);
        if (d.kind == DestKind::kColumn)
            cur = internal;
        else
            out.recycle_flows = internal;
    }
    return out;
}

PassResult resolve_streams(const FlowsheetSpec& spec, const Route& route,
                           const Eigen::VectorXd& u) {
    if (spec.zero_recycle) return propagate(spec, route, u, Vec3{});
    // recycle_out = a + M * recycle_in, all linear at fixed u
    const PassResult base = propagate(spec, route, u, Vec3{});
    Eigen::Vector3d a(base.recycle_flows[0], base.recycle_flows[1], base.recycle_flows[2]);
    Eigen::Matrix3d m;
    for (int k = 0; k < 3; ++k) {
        Vec3 e{};
        e[k] = 1.0;
        const PassResult p = propagate(spec, route, u, e);
        for (int j = 0; j < 3; ++j) m(j, k) = p.recycle_flows[j] - a(j);
    }
    const Eigen::Vector3d rec = (Eigen::Matrix3d::Identity() - m).lu().solve(a);
    return propagate(spec, route, u, Vec3{rec[0], rec[1], rec[2]});
}

Eigen::VectorXd closure_residuals(const FlowsheetSpec& spec, const Route& route,
                                  const ColumnPredictor& pred, const Eigen::VectorXd& u,
                                  PassResult* keep = nullptr,
                                  std::array<std::array<double, 5>, 3>* keep_pred = nullptr) {
    const PassResult pass = resolve_streams(spec, route, u);
    Eigen::VectorXd r(12);
    for (int c = 0; c < 3; ++c) {
        Stream feed = pass.feeds[c];
        feed.x = normalize_composition(feed.x);
        const ColumnSpec cs = column_spec_for(spec, c, feed);
        const auto p = pred.predict(c, cs);
        const double b = pass.bottom_flows[c][0] + pass.bottom_flows[c][1] +
                         pass.bottom_flows[c][2];
        r[4 * c + 0] = p[0] - pass.bottom_flows[c][0] / b;
        r[4 * c + 1] = p[1] - pass.bottom_flows[c][1] / b;
        r[4 * c + 2] = p[2] - u[2 * c];
        r[4 * c + 3] = p[3] - u[2 * c + 1];
        if (keep_pred) (*keep_pred)[c] = p;
    }
    if (keep) *keep = pass;
    return r;
}

// Trial points can wander into states whose stream algebra is undefined
// (negative or vanishing flows); those count as infinitely bad, not fatal.
Eigen::VectorXd guarded_residuals(const FlowsheetSpec& spec, const Route& route,
                                  const ColumnPredictor& pred, const Eigen::VectorXd& u) {
    try {
        return closure_residuals(spec, route, pred, u);
    } catch (const Error&) {
        return Eigen::VectorXd::Constant(12, std::numeric_limits<double>::infinity());
    }
}

Eigen::VectorXd initial_guess(const FlowsheetSpec& spec, const Route& route,
                              const ColumnPredictor& pred) {
    // open-cascade pass: predict each column from the entrainer-free chain
    Eigen::VectorXd u = Eigen::VectorXd::Constant(6, 1.0 / 3);
    Vec3 cur = component_flows(spec.feed);
    cur[2] += spec.makeup_flow;
    for (int step = 0; step < 3; ++step) {
        const int c = route.order[step];
        Stream feed = stream_from_flows(cur);
        const ColumnSpec cs = column_spec_for(spec, c, feed);
        const auto p = pred.predict(c, cs);
        u[2 * c] = p[2];
        u[2 * c + 1] = p[3];
        const double dist = (1.0 - spec.columns[c].split) * feed.flow;
        Vec3 top{dist * p[2], dist * p[3], dist * (1.0 - p[2] - p[3])};
        Vec3 bottom;
        for (int j = 0; j < 3; ++j) bottom[j] = cur[j] - top[j];
        cur = route.top_is_product[c] ? bottom : top;
    }
    return u;
}

}  // namespace

FlowsheetState evaluate_with_predictor(const FlowsheetSpec& spec, const ColumnPredictor& pred) {
    validate(spec);
    const Route route = route_of(spec.topology);

    Eigen::VectorXd u = initial_guess(spec, route, pred);
    Eigen::VectorXd r = closure_residuals(spec, route, pred, u);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    int iters = 0;
    bool done = false;
    while (!done) {
        if (r.lpNorm<Eigen::Infinity>() <= 1e-9) break;
        if (iters >= kClosureBudget)
            throw ClosureNoConvergence("closure not converged after " +
                                       std::to_string(kClosureBudget) + " iterations");
        ++iters;

        Eigen::MatrixXd jac(12, 6);
        for (int k = 0; k < 6; ++k) {
            const double h = 1e-6 * std::max(1.0, std::abs(u[k]));
            Eigen::VectorXd up = u;
            up[k] += h;
            jac.col(k) = (guarded_residuals(spec, route, pred, up) - r) / h;
        }
        if (!jac.allFinite())
            throw ClosureNoConvergence("closure jacobian undefined at the current iterate");
        const Eigen::VectorXd grad = jac.transpose() * r;
        if (grad.lpNorm<Eigen::Infinity>() <= 1e-12) break;

        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd lhs = jtj;
            for (int k = 0; k < 6; ++k) lhs(k, k) += lambda * std::max(jtj(k, k), 1e-12);
            const Eigen::VectorXd step = lhs.ldlt().solve(-grad);
            const Eigen::VectorXd u_try = u + step;
            const Eigen::VectorXd r_try = guarded_residuals(spec, route, pred, u_try);
            const double cost_try = r_try.squaredNorm();
            if (std::isfinite(cost_try) && cost_try < cost) {
                u = u_try;
                r = r_try;
                cost = cost_try;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (step.lpNorm<Eigen::Infinity>() <= 1e-12) done = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e10) {
                    // no downhill direction left; settle only if stationary
                    if (grad.lpNorm<Eigen::Infinity>() <= 1e-8 * std::max(1.0, std::sqrt(cost))) {
                        done = true;
                        accepted = true;
                    } else {
                        throw ClosureNoConvergence("closure stalled, residual " +
                                                   std::to_string(std::sqrt(cost / 12)));
                    }
                }
            }
        }
    }

    const long clips_before = pred.clip_count();
    PassResult pass;
    std::array<std::array<double, 5>, 3> preds{};
    r = closure_residuals(spec, route, pred, u, &pass, &preds);

    FlowsheetState st;
    st.mixed = pass.mixed;
    for (int c = 0; c < 3; ++c) {
        st.feeds[c] = pass.feeds[c];
        st.tops[c] = signed_stream(pass.top_flows[c]);
        st.bottoms[c] = signed_stream(pass.bottom_flows[c]);
        st.q_reboiler[c] = preds[c][4];
        st.column_specs[c] = column_spec_for(spec, c, pass.feeds[c]);
    }
    st.recycle = signed_stream(pass.recycle_flows);
    st.sweeps = iters;
    st.closure_mismatch = std::sqrt(r.squaredNorm() / 12);
    st.clipped = pred.clip_count() > clips_before;
    fill_residuals(spec, st);
    return st;
}

FlowsheetState evaluate_surrogate(const FlowsheetSpec& spec, const ModelfluidParameters& params,
                                  const MlpModel& model,
                                  const std::optional<ConformalCalibration>& calib,
                                  Shift shift) {
    const MlpPredictor pred(model, params, spec, shift, calib);
    return evaluate_with_predictor(spec, pred);
}

// ---------------------------------------------------------------------------
// config and state files
// ---------------------------------------------------------------------------

namespace {

std::string dest_to_string(const StreamDest& d) {
    switch (d.kind) {
        case DestKind::kProduct: return "product";
        case DestKind::kMixer: return "mixer";
        case DestKind::kColumn: return "c" + std::to_string(d.column + 1);
    }
    throw InvalidSpec("bad stream destination");
}

StreamDest dest_from_string(const std::string& s) {
    if (s == "product") return {DestKind::kProduct, -1};
    if (s == "mixer") return {DestKind::kMixer, -1};
    if (s.size() == 2 && s[0] == 'c' && s[1] >= '1' && s[1] <= '3')
        return {DestKind::kColumn, s[1] - '1'};
    throw DataError("unknown stream destination '" + s + "'");
}

constexpr double kPaPerBar = 1e5;

}  // namespace

FlowsheetSpec read_flowsheet_config(const std::string& path) {
    FlowsheetSpec spec;
    CLI::App app("flowsheet config");
    app.allow_config_extras(false);

    std::vector<double> feed_x(spec.feed.x.begin(), spec.feed.x.end());
    std::vector<int> prod_comp = {1, 2, 3};
    std::array<std::string, 3> top_s, bottom_s;
    std::array<double, 3> pressure_bar{};
    int first_column = spec.topology.first_column + 1;
    for (int c = 0; c < 3; ++c) {
        top_s[c] = dest_to_string(spec.topology.top[c]);
        bottom_s[c] = dest_to_string(spec.topology.bottom[c]);
        pressure_bar[c] = spec.columns[c].pressure / kPaPerBar;
    }

    // one configurable subcommand per file section, so unknown keys and
    // unknown sections both fail the parse
    CLI::App* feed = app.add_subcommand("feed")->configurable();
    feed->add_option("--flow", spec.feed.flow)->capture_default_str();
    feed->add_option("--composition", feed_x)->expected(3)->capture_default_str();
    CLI::App* makeup = app.add_subcommand("makeup")->configurable();
    makeup->add_option("--flow", spec.makeup_flow)->capture_default_str();
    CLI::App* topo = app.add_subcommand("topology")->configurable();
    topo->add_option("--first_column", first_column)->capture_default_str();
    topo->add_option("--product_components", prod_comp)->expected(3)->capture_default_str();
    topo->add_option("--zero_recycle", spec.zero_recycle)->capture_default_str();
    for (int c = 0; c < 3; ++c) {
        ColumnDecision& d = spec.columns[c];
        topo->add_option("--c" + std::to_string(c + 1) + "_top", top_s[c])
            ->capture_default_str();
        topo->add_option("--c" + std::to_string(c + 1) + "_bottom", bottom_s[c])
            ->capture_default_str();
        CLI::App* col = app.add_subcommand("column" + std::to_string(c + 1))->configurable();
        col->add_option("--n_above", d.n_above)->capture_default_str();
        col->add_option("--n_below", d.n_below)->capture_default_str();
        col->add_option("--reflux_ratio", d.reflux_ratio)->capture_default_str();
        col->add_option("--split", d.split)->capture_default_str();
        col->add_option("--pressure_bar", pressure_bar[c])->capture_default_str();
    }
    app.set_config("--config", path, "", true);
    try {
        app.parse(std::vector<std::string>{});
    } catch (const CLI::ParseError& e) {
        throw DataError("flowsheet config '" + path + "': " + e.what());
    }

    for (int j = 0; j < 3; ++j) spec.feed.x[j] = feed_x[j];
    spec.topology.first_column = first_column - 1;
    for (int c = 0; c < 3; ++c) {
        spec.topology.top[c] = dest_from_string(top_s[c]);
        spec.topology.bottom[c] = dest_from_string(bottom_s[c]);
        if (prod_comp[c] < 1 || prod_comp[c] > 3)
            throw DataError("product component must be 1..3");
        spec.product_component[c] = prod_comp[c] - 1;
        spec.columns[c].pressure = pressure_bar[c] * kPaPerBar;
    }
    validate(spec);
    return spec;
}

void write_flowsheet_config(const std::string& path, const FlowsheetSpec& spec) {
    validate(spec);
    std::ostringstream os;
    os << "[feed]\n";
    os << "flow = " << csv::fmt(spec.feed.flow) << "\n";
    os << "composition = [" << csv::fmt(spec.feed.x[0]) << ", " << csv::fmt(spec.feed.x[1])
       << ", " << csv::fmt(spec.feed.x[2]) << "]\n\n";
    os << "[makeup]\n";
    os << "flow = " << csv::fmt(spec.makeup_flow) << "\n\n";
    os << "[topology]\n";
    os << "first_column = " << spec.topology.first_column + 1 << "\n";
    for (int c = 0; c < 3; ++c) {
        os << "c" << c + 1 << "_top = \"" << dest_to_string(spec.topology.top[c]) << "\"\n";
        os << "c" << c + 1 << "_bottom = \"" << dest_to_string(spec.topology.bottom[c])
           << "\"\n";
    }
    os << "product_components = [" << spec.product_component[0] + 1 << ", "
       << spec.product_component[1] + 1 << ", " << spec.product_component[2] + 1 << "]\n";
    os << "zero_recycle = " << (spec.zero_recycle ? "true" : "false") << "\n";
    for (int c = 0; c < 3; ++c) {
        const ColumnDecision& d = spec.columns[c];
        os << "\n[column" << c + 1 << "]\n";
        os << "n_above = " << d.n_above << "\n";
        os << "n_below = " << d.n_below << "\n";
        os << "reflux_ratio = " << csv::fmt(d.reflux_ratio) << "\n";
        os << "split = " << csv::fmt(d.split) << "\n";
        os << "pressure_bar = " << csv::fmt(d.pressure / kPaPerBar) << "\n";
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << os.str();
    if (!out.good()) throw DataError("failed writing " + path);
}

namespace {

nlohmann::ordered_json stream_json(const Stream& s) {
    return {{"flow_mol_s", s.flow}, {"x", {s.x[0], s.x[1], s.x[2]}}};
}

}  // namespace

void write_state_json(const std::string& path, const FlowsheetSpec& spec,
                      const FlowsheetState& state) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["totals"] = {{"q_reboiler_W", total_reboiler_duty(state)},
                   {"stages", total_stage_count(spec)}};
    j["mixed"] = stream_json(state.mixed);
    j["recycle"] = stream_json(state.recycle);
    auto cols = nlohmann::ordered_json::array();
    for (int c = 0; c < 3; ++c) {
        nlohmann::ordered_json jc;
        jc["feed"] = stream_json(state.feeds[c]);
        jc["top"] = stream_json(state.tops[c]);
        jc["bottom"] = stream_json(state.bottoms[c]);
        jc["product"] = stream_json(state.products[c]);
        jc["q_reboiler_W"] = state.q_reboiler[c];
        jc["q_condenser_W"] = state.q_condenser[c];
        jc["n_above"] = state.column_specs[c].n_above;
        jc["n_below"] = state.column_specs[c].n_below;
        jc["reflux_ratio"] = state.column_specs[c].reflux_ratio;
        jc["split"] = state.column_specs[c].split;
        jc["pressure_Pa"] = state.column_specs[c].pressure;
        cols.push_back(jc);
    }
    j["columns"] = cols;
    j["residuals"] = state.residuals;
    double worst = 0.0;
    for (const double v : state.residuals) worst = std::max(worst, std::abs(v));
    j["max_abs_residual"] = worst;
    j["tear_residual"] = state.tear_residual;
    j["closure_mismatch"] = state.closure_mismatch;
    j["sweeps"] = state.sweeps;
    j["clipped"] = state.clipped;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out.good()) throw DataError("failed writing " + path);
}

}  // namespace surcol
