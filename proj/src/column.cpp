#include "surcol/column.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "surcol/parallel.hpp"

namespace surcol {

namespace {

constexpr int kVarsPerStage = 9;  // x(3), y(3), T, L, V
constexpr double kTol = 1e-8;
constexpr double kTargetTol = 1e-11;  // keep iterating below kTol while progress lasts
constexpr int kMaxIter = 200;
constexpr int kMaxHalvings = 20;

struct Layout {
    int n_stages;
    int feed_stage;  // 0-based, stages numbered bottom-up
    double b_flow;   // bottoms, at unit feed
    double d_flow;   // distillate, at unit feed
    double reflux;   // L into the top stage = RR * D
    double pressure;
    Vec3 z;
    double h_ref;  // enthalpy scale for the energy residuals
};

// State vector layout per stage: [x0 x1 x2 y0 y1 y2 T L V]
inline double& sv(Eigen::VectorXd& u, int stage, int slot) {
    return u[stage * kVarsPerStage + slot];
}
inline double sv(const Eigen::VectorXd& u, int stage, int slot) {
    return u[stage * kVarsPerStage + slot];
}

void validate(const ColumnSpec& spec) {
    if (spec.n_above < 2 || spec.n_below < 2)
        throw InvalidSpec("need at least 2 stages above and below the feed");
    if (!(spec.reflux_ratio > 0.0)) throw InvalidSpec("reflux ratio must be positive");
    if (!(spec.split > 0.0 && spec.split < 1.0)) throw InvalidSpec("split must be in (0,1)");
    if (!(spec.pressure > 0.0)) throw InvalidSpec("pressure must be positive");
    if (!(spec.feed_flow > 0.0)) throw InvalidSpec("feed flow must be positive");
    double sum = 0.0;
    for (const double v : spec.feed_composition) {
        if (v < 0.0) throw InvalidSpec("feed composition has a negative entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw InvalidSpec("feed composition must sum to 1");
}

// Full scaled MESH residual. Mass in units of the feed (solved at F = 1),
// energy divided by h_ref, so the tolerance is dimensionless.
void mesh_residual(const Eigen::VectorXd& u, const Layout& lay,
                   const ModelfluidParameters& params, Eigen::VectorXd& r) {
    const int n = lay.n_stages;
    r.resize(n * kVarsPerStage);

    auto hvap = [&](const Vec3& y) { return dh_mix(y, params.dh_vap); };

    for (int s = 0; s < n; ++s) {
        const Vec3 x = {sv(u, s, 0), sv(u, s, 1), sv(u, s, 2)};
        const Vec3 y = {sv(u, s, 3), sv(u, s, 4), sv(u, s, 5)};
        const double t = sv(u, s, 6);
        const double l = sv(u, s, 7);
        const double v = sv(u, s, 8);

        // streams entering from the neighbours (or the terminal units)
        Vec3 x_in, y_in;
        double l_in, v_in;
        if (s + 1 < n) {
            x_in = {sv(u, s + 1, 0), sv(u, s + 1, 1), sv(u, s + 1, 2)};
            l_in = sv(u, s + 1, 7);
        } else {
            x_in = y;  // total condenser refluxes boiling liquid at y_top
            l_in = lay.reflux;
        }
        if (s > 0) {
            y_in = {sv(u, s - 1, 3), sv(u, s - 1, 4), sv(u, s - 1, 5)};
            v_in = sv(u, s - 1, 8);
        } else {
            y_in = x;  // total reboiler vaporizes the stage-1 liquid
            v_in = l - lay.b_flow;
        }

        const bool is_feed = (s == lay.feed_stage);
        double* rs = r.data() + s * kVarsPerStage;

        for (int i = 0; i < 3; ++i) {
            rs[i] = l_in * x_in[i] + v_in * y_in[i] - l * x[i] - v * y[i];
            if (is_feed) rs[i] += lay.z[i];
        }

        const Vec3 lng = ln_activity_coefficients(x, params.margules);
        for (int i = 0; i < 3; ++i) {
            const double k = std::exp(lng[i]) * vapor_pressure(t, params.antoine[i]) /
                             lay.pressure;
            rs[3 + i] = y[i] - k * x[i];
        }

        rs[6] = x[0] + x[1] + x[2] - 1.0;
        rs[7] = y[0] + y[1] + y[2] - 1.0;
        // adiabatic stage, boiling liquid carries no enthalpy
        rs[8] = (v_in * hvap(y_in) - v * hvap(y)) / lay.h_ref;
    }
}

void clip_state(Eigen::VectorXd& u, const Layout& lay, double t_lo, double t_hi) {
    const int n = lay.n_stages;
    for (int s = 0; s < n; ++s) {
        for (int group = 0; group < 2; ++group) {
            double sum = 0.0;
            for (int i = 0; i < 3; ++i) {
                double& v = sv(u, s, group * 3 + i);
                v = std::clamp(v, 1e-12, 1.0);
                sum += v;
            }
            for (int i = 0; i < 3; ++i) sv(u, s, group * 3 + i) /= sum;
        }
        sv(u, s, 6) = std::clamp(sv(u, s, 6), t_lo, t_hi);
        sv(u, s, 7) = std::max(sv(u, s, 7), 1e-9);
        sv(u, s, 8) = std::max(sv(u, s, 8), 1e-9);
    }
}

using Block = Eigen::Matrix<double, kVarsPerStage, kVarsPerStage>;

// Finite-difference Jacobian in block-tridiagonal form. Stages three apart
// never share a residual, so one colour perturbs every third stage at once:
// 27 residual evaluations regardless of column height.
void fd_jacobian(const Eigen::VectorXd& u, const Eigen::VectorXd& r0, const Layout& lay,
                 const ModelfluidParameters& params, std::vector<Block>& sub,
                 std::vector<Block>& diag, std::vector<Block>& super) {
    const int n = lay.n_stages;
    sub.assign(n, Block::Zero());
    diag.assign(n, Block::Zero());
    super.assign(n, Block::Zero());

    Eigen::VectorXd up = u;
    Eigen::VectorXd rp(n * kVarsPerStage);
    for (int colour = 0; colour < 3; ++colour) {
        for (int slot = 0; slot < kVarsPerStage; ++slot) {
            std::vector<double> steps(n, 0.0);
            bool any = false;
            for (int s = colour; s < n; s += 3) {
                const double v = sv(u, s, slot);
                const double h = 1e-7 * std::abs(v) + 1e-9;
                sv(up, s, slot) = v + h;
                steps[s] = h;
                any = true;
            }
            if (!any) continue;
            mesh_residual(up, lay, params, rp);
            for (int s = colour; s < n; s += 3) {
                // rows affected by stage s: s-1, s, s+1
                for (int row = std::max(0, s - 1); row <= std::min(n - 1, s + 1); ++row) {
                    Block* blk = row == s ? &diag[row] : (row == s - 1 ? &super[row] : &sub[row]);
                    for (int q = 0; q < kVarsPerStage; ++q) {
                        const int idx = row * kVarsPerStage + q;
                        (*blk)(q, slot) = (rp[idx] - r0[idx]) / steps[s];
                    }
                }
                sv(up, s, slot) = sv(u, s, slot);
            }
        }
    }
}

// Block Thomas algorithm: factor and solve the tridiagonal system in place.
Eigen::VectorXd block_tridiag_solve(std::vector<Block>& sub, std::vector<Block>& diag,
                                    std::vector<Block>& super, const Eigen::VectorXd& rhs) {
    const int n = static_cast<int>(diag.size());
    std::vector<Block> carry(n);
    std::vector<Eigen::Matrix<double, kVarsPerStage, 1>> g(n);

    Eigen::PartialPivLU<Block> lu(diag[0]);
    carry[0] = lu.solve(super[0]);
    g[0] = lu.solve(rhs.segment<kVarsPerStage>(0));
    for (int s = 1; s < n; ++s) {
        const Block m = diag[s] - sub[s] * carry[s - 1];
        lu.compute(m);
        carry[s] = lu.solve(super[s]);
        g[s] = lu.solve(rhs.segment<kVarsPerStage>(s * kVarsPerStage).eval() -
                        sub[s] * g[s - 1]);
    }
    Eigen::VectorXd out(n * kVarsPerStage);
    Eigen::Matrix<double, kVarsPerStage, 1> acc = g[n - 1];
    out.segment<kVarsPerStage>((n - 1) * kVarsPerStage) = acc;
    for (int s = n - 2; s >= 0; --s) {
        acc = g[s] - carry[s] * acc;
        out.segment<kVarsPerStage>(s * kVarsPerStage) = acc;
    }
    return out;
}

}  // namespace

ColumnResult simulate(const ColumnSpec& spec, const ModelfluidParameters& params) {
    validate(spec);

    Layout lay;
    lay.n_stages = spec.n_above + spec.n_below + 1;
    lay.feed_stage = spec.n_below;  // 0-based
    lay.b_flow = spec.split;        // solved at F = 1, rescaled afterwards
    lay.d_flow = 1.0 - spec.split;
    lay.reflux = spec.reflux_ratio * lay.d_flow;
    lay.pressure = spec.pressure;
    lay.z = spec.feed_composition;
    lay.h_ref = std::max({params.dh_vap[0], params.dh_vap[1], params.dh_vap[2]});

    // boiling points at the operating pressure seed the temperature profile
    const double lnp = std::log(spec.pressure / kPRef);
    double t_min = std::numeric_limits<double>::infinity(), t_max = 0.0;
    for (const auto& a : params.antoine) {
        const double t = a.b / (a.a - lnp);
        if (!(t > 0.0)) continue;
        t_min = std::min(t_min, t);
        t_max = std::max(t_max, t);
    }
    if (!(t_max > 0.0)) throw NonPhysical("no component boils at the column pressure");
    double t_lo = t_min - 50.0, t_hi = t_max + 50.0;
    try {
        t_lo = bubble_point(lay.z, spec.pressure, params).t - 50.0;
        t_hi = dew_point(lay.z, spec.pressure, params).t + 50.0;
    } catch (const Error&) {
        // fall back to the pure-component range
    }

    const int n = lay.n_stages;
    Eigen::VectorXd u(n * kVarsPerStage);
    const double v_init = (1.0 + spec.reflux_ratio) * lay.d_flow;
    for (int s = 0; s < n; ++s) {
        for (int i = 0; i < 3; ++i) {
            sv(u, s, i) = lay.z[i];
            sv(u, s, 3 + i) = lay.z[i];
        }
        const double frac = n > 1 ? static_cast<double>(s) / (n - 1) : 0.5;
        sv(u, s, 6) = t_max + frac * (t_min - t_max);
        sv(u, s, 7) = s <= lay.feed_stage ? lay.reflux + 1.0 : lay.reflux;
        sv(u, s, 8) = v_init;
    }
    clip_state(u, lay, t_lo, t_hi);

    Eigen::VectorXd r;
    mesh_residual(u, lay, params, r);
    double rnorm = r.lpNorm<Eigen::Infinity>();

    std::vector<Block> sub, diag, super;
    int iter = 0;
    while (rnorm > kTargetTol && iter < kMaxIter) {
        ++iter;
        fd_jacobian(u, r, lay, params, sub, diag, super);
        const Eigen::VectorXd step = block_tridiag_solve(sub, diag, super, r);
        if (!step.allFinite()) break;

        double alpha = 1.0;
        Eigen::VectorXd u_try;
        Eigen::VectorXd r_try;
        double best = rnorm;
        bool accepted = false;
        for (int h = 0; h <= kMaxHalvings; ++h) {
            u_try = u - alpha * step;
            clip_state(u_try, lay, t_lo, t_hi);
            mesh_residual(u_try, lay, params, r_try);
            const double cand = r_try.lpNorm<Eigen::Infinity>();
            if (std::isfinite(cand) && cand < best) {
                u = u_try;
                r = r_try;
                rnorm = cand;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;  // stalled; verdict decided by the norm below
    }

    if (!(rnorm <= kTol))
        throw NoConvergence("column solve stalled", rnorm, iter);

    const double f = spec.feed_flow;
    ColumnResult res;
    res.iterations = iter;
    res.residual_norm = rnorm;
    res.stages.resize(n);
    for (int s = 0; s < n; ++s) {
        StageProfile& sp = res.stages[s];
        sp.x = {sv(u, s, 0), sv(u, s, 1), sv(u, s, 2)};
        sp.y = {sv(u, s, 3), sv(u, s, 4), sv(u, s, 5)};
        sp.t = sv(u, s, 6);
        sp.l = sv(u, s, 7) * f;
        sp.v = sv(u, s, 8) * f;
    }
    res.bottoms.flow = lay.b_flow * f;
    res.bottoms.x = res.stages.front().x;
    res.distillate.flow = lay.d_flow * f;
    res.distillate.x = res.stages.back().y;
    res.boilup = res.stages.front().l - res.bottoms.flow;
    res.q_reboiler = res.boilup * dh_mix(res.stages.front().x, params.dh_vap);
    res.q_condenser = res.stages.back().v * dh_mix(res.stages.back().y, params.dh_vap);
    return res;
}

double mesh_residual_norm(const ColumnSpec& spec, const ModelfluidParameters& params,
                          const ColumnResult& result) {
    Layout lay;
    lay.n_stages = spec.n_above + spec.n_below + 1;
    lay.feed_stage = spec.n_below;
    lay.b_flow = spec.split;
    lay.d_flow = 1.0 - spec.split;
    lay.reflux = spec.reflux_ratio * lay.d_flow;
    lay.pressure = spec.pressure;
    lay.z = spec.feed_composition;
    lay.h_ref = std::max({params.dh_vap[0], params.dh_vap[1], params.dh_vap[2]});

    const int n = lay.n_stages;
    if (static_cast<int>(result.stages.size()) != n)
        throw InvalidSpec("profile length does not match the spec");
    Eigen::VectorXd u(n * kVarsPerStage);
    const double f = spec.feed_flow;
    for (int s = 0; s < n; ++s) {
        const StageProfile& sp = result.stages[s];
        for (int i = 0; i < 3; ++i) {
            sv(u, s, i) = sp.x[i];
            sv(u, s, 3 + i) = sp.y[i];
        }
        sv(u, s, 6) = sp.t;
        sv(u, s, 7) = sp.l / f;
        sv(u, s, 8) = sp.v / f;
    }
    Eigen::VectorXd r;
    mesh_residual(u, lay, params, r);
    return r.lpNorm<Eigen::Infinity>();
}

std::vector<BatchItem> simulate_batch(const std::vector<ColumnSpec>& specs,
                                      const std::vector<ModelfluidParameters>& fluids,
                                      unsigned workers) {
    if (specs.size() != fluids.size())
        throw InvalidSpec("simulate_batch: specs and fluids must be aligned");
    std::vector<BatchItem> out(specs.size());
    parallel_for(specs.size(), [&](std::size_t k) {
        try {
            out[k].result = simulate(specs[k], fluids[k]);
            out[k].ok = true;
        } catch (const std::exception& e) {
            out[k].ok = false;
            out[k].error = e.what();
        }
    }, workers);
    return out;
}

}  // namespace surcol
