#include "surcol/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "surcol/csv.hpp"
#include "surcol/errors.hpp"
#include "surcol/rng.hpp"

namespace surcol {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double nearest_distance(const ObjectivePoint& p, const std::vector<ObjectivePoint>& set,
                        const std::array<double, 2>& scale) {
    double best = kInf;
    for (const auto& q : set) {
        const double dx = (p[0] - q[0]) / scale[0];
        const double dy = (p[1] - q[1]) / scale[1];
        best = std::min(best, std::hypot(dx, dy));
    }
    return best;
}

std::array<double, 2> union_scale(const std::vector<ObjectivePoint>& a,
                                  const std::vector<ObjectivePoint>& b, bool normalize) {
    if (!normalize) return {1.0, 1.0};
    std::array<double, 2> lo{kInf, kInf}, hi{-kInf, -kInf};
    for (const auto* set : {&a, &b}) {
        for (const auto& p : *set) {
            for (int k = 0; k < 2; ++k) {
                lo[k] = std::min(lo[k], p[k]);
                hi[k] = std::max(hi[k], p[k]);
            }
        }
    }
    std::array<double, 2> s;
    for (int k = 0; k < 2; ++k) s[k] = hi[k] > lo[k] ? hi[k] - lo[k] : 1.0;
    return s;
}

void require_nonempty(const std::vector<ObjectivePoint>& approx,
                      const std::vector<ObjectivePoint>& truth) {
    if (approx.empty() || truth.empty())
        throw EmptyFrontier("distance metrics need two non-empty frontiers");
}

double directed_mean(const std::vector<ObjectivePoint>& from,
                     const std::vector<ObjectivePoint>& to,
                     const std::array<double, 2>& scale) {
    double sum = 0.0;
    for (const auto& p : from) sum += nearest_distance(p, to, scale);
    return sum / static_cast<double>(from.size());
}

double directed_max(const std::vector<ObjectivePoint>& from,
                    const std::vector<ObjectivePoint>& to,
                    const std::array<double, 2>& scale) {
    double worst = 0.0;
    for (const auto& p : from) worst = std::max(worst, nearest_distance(p, to, scale));
    return worst;
}

}  // namespace

std::string opt_mode_name(OptMode mode) {
    switch (mode) {
        case OptMode::kRigorous: return "rigorous";
        case OptMode::kSurrogate: return "surrogate";
        case OptMode::kSurrogateBest: return "surrogate-best";
        case OptMode::kSurrogateWorst: return "surrogate-worst";
    }
    throw InvalidSpec("bad optimization mode");
}

OptMode opt_mode_from_name(const std::string& name) {
    for (const OptMode m : {OptMode::kRigorous, OptMode::kSurrogate, OptMode::kSurrogateBest,
                            OptMode::kSurrogateWorst})
        if (opt_mode_name(m) == name) return m;
    throw DataError("unknown optimization mode '" + name + "'");
}

double gd(const std::vector<ObjectivePoint>& approx, const std::vector<ObjectivePoint>& truth,
          bool normalize) {
    require_nonempty(approx, truth);
    return directed_mean(approx, truth, union_scale(approx, truth, normalize));
}

double igd(const std::vector<ObjectivePoint>& approx, const std::vector<ObjectivePoint>& truth,
           bool normalize) {
    require_nonempty(approx, truth);
    return directed_mean(truth, approx, union_scale(approx, truth, normalize));
}

double asd(const std::vector<ObjectivePoint>& approx, const std::vector<ObjectivePoint>& truth,
           bool normalize) {
    return (gd(approx, truth, normalize) + igd(approx, truth, normalize)) / 2.0;
}

double hausdorff(const std::vector<ObjectivePoint>& approx,
                 const std::vector<ObjectivePoint>& truth, bool normalize) {
    require_nonempty(approx, truth);
    const auto scale = union_scale(approx, truth, normalize);
    return std::max(directed_max(approx, truth, scale), directed_max(truth, approx, scale));
}

std::vector<ObjectivePoint> frontier_points(const Frontier& f) {
    std::vector<ObjectivePoint> out;
    for (const auto& p : f.points)
        if (p.feasible && !p.dominated)
            out.push_back({static_cast<double>(p.n_stages_total), p.q_total});
    return out;
}

double gd(const Frontier& approx, const Frontier& truth, bool normalize) {
    return gd(frontier_points(approx), frontier_points(truth), normalize);
}
double igd(const Frontier& approx, const Frontier& truth, bool normalize) {
    return igd(frontier_points(approx), frontier_points(truth), normalize);
}
double asd(const Frontier& approx, const Frontier& truth, bool normalize) {
    return asd(frontier_points(approx), frontier_points(truth), normalize);
}
double hausdorff(const Frontier& approx, const Frontier& truth, bool normalize) {
    return hausdorff(frontier_points(approx), frontier_points(truth), normalize);
}

// ---------------------------------------------------------------------------
// epsilon-constraint solver
// ---------------------------------------------------------------------------

namespace {

using Allocation = std::array<std::array<int, 2>, 3>;  // (n_above, n_below) per column

int alloc_stages(const Allocation& a) {
    int n = 0;
    for (const auto& c : a) n += c[0] + c[1] + 1;
    return n;
}

// Coarse stage lattice: epsilon split across the columns by a few fixed
// patterns, feed placed at roughly 1/4, 1/2 or 3/4 of each column.
std::vector<Allocation> stage_lattice(int epsilon) {
    static const std::array<std::array<double, 3>, 4> kPatterns{{
        {1.0 / 3, 1.0 / 3, 1.0 / 3},
        {0.5, 0.25, 0.25},
        {0.25, 0.5, 0.25},
        {0.25, 0.25, 0.5},
    }};
    static const std::array<double, 3> kRatios{0.25, 0.5, 0.75};
    std::vector<Allocation> cells;
    for (const auto& pattern : kPatterns) {
        std::array<int, 3> total;
        for (int c = 0; c < 3; ++c)
            total[c] = std::max(kMinColumnStages,
                                static_cast<int>(std::floor(pattern[c] * epsilon)));
        bool fits = true;
        while (total[0] + total[1] + total[2] > epsilon) {
            const int big = static_cast<int>(
                std::max_element(total.begin(), total.end()) - total.begin());
            if (total[big] <= kMinColumnStages) {
                fits = false;
                break;
            }
            --total[big];
        }
        if (!fits) continue;
        for (const double ratio : kRatios) {
            Allocation a;
            for (int c = 0; c < 3; ++c) {
                const int trays = total[c] - 1;  // stages besides the feed stage
                const int above = std::clamp(static_cast<int>(std::lround(ratio * trays)), 2,
                                             trays - 2);
                a[c] = {above, trays - above};
            }
            if (std::find(cells.begin(), cells.end(), a) == cells.end()) cells.push_back(a);
        }
    }
    return cells;
}

// Continuous decisions, normalized to [0,1]^6 as (reflux, split) per column.
using Theta = std::array<double, 6>;

struct EvalOutcome {
    double q = kInf;
    double violation = kInf;  // 0 when all constraints hold; inf on solver failure
    std::array<double, 6> unknowns{};
};

// Feasibility first, duty second.
bool better(const EvalOutcome& a, const EvalOutcome& b) {
    if ((a.violation == 0.0) != (b.violation == 0.0)) return a.violation == 0.0;
    if (a.violation == 0.0) return a.q < b.q;
    if (a.violation != b.violation) return a.violation < b.violation;
    return a.q < b.q;
}

struct Candidate {
    EvalOutcome out;
    Allocation alloc{};
    Theta z{};  // normalized continuous decisions
};

class DesignEvaluator {
  public:
    DesignEvaluator(const OptProblem& problem, OptMode mode)
        : p_(problem), mode_(mode) {
        if (mode != OptMode::kRigorous) {
            if (p_.oracle_surrogate) {
                if (mode != OptMode::kSurrogate)
                    throw InvalidSpec("confidence shifts need the network predictor");
            } else if (p_.model == nullptr) {
                throw InvalidSpec("surrogate mode needs a model");
            }
            if ((mode == OptMode::kSurrogateBest || mode == OptMode::kSurrogateWorst) &&
                !p_.calib)
                throw InvalidSpec("best/worst modes need a conformal calibration");
        }
        validate(p_.spec);
        if (!(p_.reflux.lo > 0.0 && p_.reflux.hi > p_.reflux.lo))
            throw InvalidSpec("bad reflux bounds");
        if (!(p_.split.lo > 0.0 && p_.split.hi < 1.0 && p_.split.hi > p_.split.lo))
            throw InvalidSpec("bad split bounds");
        for (int c = 0; c < 3; ++c) {
            const int j = p_.spec.product_component[c];
            const double inflow = p_.spec.feed.flow * p_.spec.feed.x[j] +
                                  (j == 2 ? p_.spec.makeup_flow : 0.0);
            l_min_[c] = p_.l_min_frac * inflow;
        }
    }

    double decode(double z, const Bounds& b) const { return b.lo + (b.hi - b.lo) * z; }

    FlowsheetSpec design(const Allocation& alloc, const Theta& z) const {
        FlowsheetSpec s = p_.spec;
        for (int c = 0; c < 3; ++c) {
            s.columns[c].n_above = alloc[c][0];
            s.columns[c].n_below = alloc[c][1];
            s.columns[c].reflux_ratio = decode(z[2 * c], p_.reflux);
            s.columns[c].split = decode(z[2 * c + 1], p_.split);
        }
        return s;
    }

    EvalOutcome operator()(const Allocation& alloc, const Theta& z) const {
        ++evals_;
        const FlowsheetSpec s = design(alloc, z);
        FlowsheetState st;
        try {
            switch (mode_) {
                case OptMode::kRigorous: st = evaluate_rigorous(s, p_.params); break;
                case OptMode::kSurrogate:
                    if (p_.oracle_surrogate) {
                        st = evaluate_with_predictor(s, OraclePredictor(p_.params));
                    } else {
                        st = evaluate_surrogate(s, p_.params, *p_.model, p_.calib,
                                                Shift::kNominal);
                    }
                    break;
                case OptMode::kSurrogateBest:
                    st = evaluate_surrogate(s, p_.params, *p_.model, p_.calib, Shift::kBest);
                    break;
                case OptMode::kSurrogateWorst:
                    st = evaluate_surrogate(s, p_.params, *p_.model, p_.calib, Shift::kWorst);
                    break;
            }
        } catch (const Error&) {
            return {};  // no converged state to judge
        }
        EvalOutcome out;
        out.q = total_reboiler_duty(st);
        out.violation = 0.0;
        for (int c = 0; c < 3; ++c) {
            const int j = p_.spec.product_component[c];
            out.violation += std::max(0.0, (p_.x_min - st.products[c].x[j]) / p_.x_min);
            if (l_min_[c] > 0.0)
                out.violation +=
                    std::max(0.0, (l_min_[c] - st.products[c].flow) / l_min_[c]);
            out.unknowns[2 * c] = st.tops[c].x[0];
            out.unknowns[2 * c + 1] = st.tops[c].x[1];
        }
        if (!std::isfinite(out.q)) return {};
        best_violation_ = std::min(best_violation_, out.violation);
        return out;
    }

    long evals() const { return evals_; }
    double best_violation() const { return best_violation_; }

  private:
    const OptProblem& p_;
    OptMode mode_;
    std::array<double, 3> l_min_{};
    mutable long evals_ = 0;
    mutable double best_violation_ = kInf;
};

Theta clamp01(Theta z) {
    for (double& v : z) v = std::clamp(v, 0.0, 1.0);
    return z;
}

// Compass pattern search; polls coordinate steps in a fixed order, first
// improvement wins, step halves when a full poll fails.
Candidate pattern_search(const DesignEvaluator& eval, const Allocation& alloc, Theta z,
                         int budget) {
    Candidate c{eval(alloc, z), alloc, z};
    int used = 1;
    double step = 0.25;
    while (step > 1e-3 && used < budget) {
        bool improved = false;
        for (int k = 0; k < 6 && used < budget; ++k) {
            for (const double dir : {+1.0, -1.0}) {
                Theta trial = z;
                trial[k] = std::clamp(trial[k] + dir * step, 0.0, 1.0);
                if (trial[k] == z[k]) continue;
                const EvalOutcome out = eval(alloc, trial);
                ++used;
                if (better(out, c.out)) {
                    c = {out, alloc, trial};
                    z = trial;
                    improved = true;
                    break;
                }
                if (used >= budget) break;
            }
        }
        if (!improved) step *= 0.5;
    }
    return c;
}

// Projected gradient descent on a penalized objective, finite-difference
// gradients in the normalized coordinates. Used for the network surrogate,
// where evaluations are cheap and smooth.
Candidate projected_descent(const DesignEvaluator& eval, const Allocation& alloc, Theta z,
                            int budget) {
    Candidate best{eval(alloc, z), alloc, z};
    int used = 1;
    if (!std::isfinite(best.out.violation))
        return pattern_search(eval, alloc, z, budget - used);  // no smooth foothold here
    const double q0 = std::max(1.0, std::abs(best.out.q));
    const auto merit = [&](const EvalOutcome& o) {
        return std::isfinite(o.violation) ? o.q / q0 + 1e4 * o.violation : kInf;
    };
    EvalOutcome cur = best.out;
    const double h = 1e-5;
    while (used + 7 < budget) {
        const double f0 = merit(cur);
        Theta grad{};
        bool edge = false;
        for (int k = 0; k < 6; ++k) {
            Theta probe = z;
            probe[k] = z[k] + (z[k] + h <= 1.0 ? h : -h);
            const EvalOutcome out = eval(alloc, probe);
            ++used;
            if (!std::isfinite(out.violation)) {
                edge = true;
                break;
            }
            grad[k] = (merit(out) - f0) / (probe[k] - z[k]);
        }
        if (edge) break;
        double gnorm = 0.0;
        for (const double g : grad) gnorm = std::max(gnorm, std::abs(g));
        if (gnorm < 1e-10) break;
        double step = 0.2 / gnorm;
        bool accepted = false;
        for (int bt = 0; bt < 10 && used < budget; ++bt, step *= 0.5) {
            Theta trial = z;
            for (int k = 0; k < 6; ++k) trial[k] = z[k] - step * grad[k];
            trial = clamp01(trial);
            const EvalOutcome out = eval(alloc, trial);
            ++used;
            if (better(out, best.out)) best = {out, alloc, trial};
            if (std::isfinite(out.violation) && merit(out) < f0 - 1e-12) {
                z = trial;
                cur = out;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    return best;
}

Candidate continuous_solve(const DesignEvaluator& eval, OptMode mode, bool oracle,
                           const Allocation& alloc, const Theta& z0, int budget) {
    if (mode == OptMode::kRigorous || oracle) return pattern_search(eval, alloc, z0, budget);
    return projected_descent(eval, alloc, z0, budget);
}

// +/-1 hill climb over the stage counts at fixed continuous decisions,
// then a short continuous polish at the winning allocation.
Candidate refine_integers(const DesignEvaluator& eval, OptMode mode, bool oracle,
                          Candidate best, int epsilon, int budget) {
    for (int round = 0; round < 8; ++round) {
        Candidate improved = best;
        for (int c = 0; c < 3; ++c) {
            for (int side = 0; side < 2; ++side) {
                for (const int delta : {+1, -1}) {
                    Allocation a = best.alloc;
                    a[c][side] += delta;
                    if (a[c][side] < 2 || alloc_stages(a) > epsilon) continue;
                    const EvalOutcome out = eval(a, best.z);
                    if (better(out, improved.out)) improved = {out, a, best.z};
                }
            }
        }
        if (!better(improved.out, best.out)) break;
        best = improved;
    }
    const Candidate polished =
        continuous_solve(eval, mode, oracle, best.alloc, best.z, std::max(12, budget / 4));
    return better(polished.out, best.out) ? polished : best;
}

}  // namespace

FrontierPoint solve_epsilon(const OptProblem& problem, OptMode mode, int starts,
                            std::uint64_t seed,
                            const std::vector<FrontierPoint>& warm_starts) {
    if (problem.epsilon < 3 * kMinColumnStages)
        throw Infeasible("stage bound " + std::to_string(problem.epsilon) +
                         " is below the " + std::to_string(3 * kMinColumnStages) +
                         " needed for three minimal columns");
    const DesignEvaluator eval(problem, mode);
    const std::vector<Allocation> cells = stage_lattice(problem.epsilon);
    Rng rng(Rng::substream(seed, "solve_epsilon"));

    const auto encode = [&](double v, const Bounds& b) {
        return std::clamp((v - b.lo) / (b.hi - b.lo), 0.0, 1.0);
    };
    std::vector<std::pair<Allocation, Theta>> initial;
    for (const auto& w : warm_starts) {
        Allocation a;
        for (int c = 0; c < 3; ++c) a[c] = {w.columns[c].n_above, w.columns[c].n_below};
        if (alloc_stages(a) > problem.epsilon) continue;  // does not fit this bound
        bool legal = true;
        for (const auto& s : a) legal = legal && s[0] >= 2 && s[1] >= 2;
        if (!legal) continue;
        Theta z;
        for (int c = 0; c < 3; ++c) {
            z[2 * c] = encode(w.columns[c].reflux_ratio, problem.reflux);
            z[2 * c + 1] = encode(w.columns[c].split, problem.split);
        }
        initial.emplace_back(a, z);
    }
    for (int k = 0; k < std::max(1, starts); ++k) {
        const Allocation& a = cells[static_cast<std::size_t>(k) % cells.size()];
        Theta z;
        if (k == 0) {
            z.fill(0.5);  // first start from the middle of the box
        } else {
            for (double& v : z) v = rng.uniform();
        }
        initial.emplace_back(a, z);
    }

    Candidate best;
    for (const auto& [alloc, z0] : initial) {
        const Candidate c =
            continuous_solve(eval, mode, problem.oracle_surrogate, alloc, z0,
                             problem.eval_budget);
        if (better(c.out, best.out)) best = c;
    }
    if (std::isfinite(best.out.violation))
        best = refine_integers(eval, mode, problem.oracle_surrogate, best, problem.epsilon,
                               problem.eval_budget);

    if (best.out.violation != 0.0) {
        const double v = eval.best_violation();
        throw BudgetExhausted(
            "no feasible design in " + std::to_string(initial.size()) + " starts (" +
            std::to_string(eval.evals()) + " evaluations); smallest constraint violation " +
            (std::isfinite(v) ? std::to_string(v) : std::string("unbounded")));
    }

    FrontierPoint pt;
    pt.epsilon = problem.epsilon;
    pt.feasible = true;
    pt.n_stages_total = alloc_stages(best.alloc);
    pt.q_total = best.out.q;
    const FlowsheetSpec s = eval.design(best.alloc, best.z);
    for (int c = 0; c < 3; ++c) pt.columns[c] = s.columns[c];
    pt.stream_unknowns = best.out.unknowns;
    return pt;
}

Frontier nq_curve(const OptProblem& problem, OptMode mode,
                  const std::vector<int>& epsilon_grid, int starts, std::uint64_t seed,
                  const Frontier* warm) {
    Frontier f;
    f.mode = mode;
    f.seed = seed;
    f.starts = starts;
    std::vector<FrontierPoint> chain;
    if (warm)
        for (const auto& p : warm->points)
            if (p.feasible) chain.push_back(p);
    for (std::size_t i = 0; i < epsilon_grid.size(); ++i) {
        OptProblem sub = problem;
        sub.epsilon = epsilon_grid[i];
        FrontierPoint pt;
        try {
            pt = solve_epsilon(sub, mode, starts,
                               Rng::substream(seed, "eps" + std::to_string(epsilon_grid[i])),
                               chain);
            chain.push_back(pt);
        } catch (const Error& e) {
            pt.epsilon = epsilon_grid[i];
            pt.feasible = false;
            pt.q_total = std::numeric_limits<double>::quiet_NaN();
            pt.note = e.what();
        }
        f.points.push_back(std::move(pt));
    }
    std::sort(f.points.begin(), f.points.end(),
              [](const FrontierPoint& a, const FrontierPoint& b) {
                  if (a.feasible != b.feasible) return a.feasible;
                  if (!a.feasible) return a.epsilon < b.epsilon;
                  if (a.n_stages_total != b.n_stages_total)
                      return a.n_stages_total < b.n_stages_total;
                  return a.epsilon < b.epsilon;
              });
    for (auto& p : f.points) {
        if (!p.feasible) continue;
        for (const auto& q : f.points) {
            if (!q.feasible || &q == &p) continue;
            const bool no_worse =
                q.n_stages_total <= p.n_stages_total && q.q_total <= p.q_total;
            const bool strictly =
                q.n_stages_total < p.n_stages_total || q.q_total < p.q_total;
            if (no_worse && strictly) {
                p.dominated = true;
                break;
            }
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// dominance ranking
// ---------------------------------------------------------------------------

namespace {

// A frontier reduced to a piecewise-linear q(n_stages) map: min q per
// stage total over the feasible nondominated points, sorted by stages.
std::vector<std::array<double, 2>> frontier_map(const Frontier& f) {
    std::map<int, double> by_stage;
    for (const auto& p : f.points) {
        if (!p.feasible || p.dominated) continue;
        const auto it = by_stage.find(p.n_stages_total);
        if (it == by_stage.end() || p.q_total < it->second)
            by_stage[p.n_stages_total] = p.q_total;
    }
    std::vector<std::array<double, 2>> out;
    for (const auto& [n, q] : by_stage) out.push_back({static_cast<double>(n), q});
    return out;
}

double interpolate(const std::vector<std::array<double, 2>>& map, double n) {
    if (n <= map.front()[0]) return map.front()[1];
    if (n >= map.back()[0]) return map.back()[1];
    for (std::size_t i = 1; i < map.size(); ++i) {
        if (n <= map[i][0]) {
            const double t = (n - map[i - 1][0]) / (map[i][0] - map[i - 1][0]);
            return map[i - 1][1] + t * (map[i][1] - map[i - 1][1]);
        }
    }
    return map.back()[1];
}

}  // namespace

int RankingResult::rank_of(int candidate) const {
    for (std::size_t i = 0; i < order.size(); ++i)
        if (order[i] == candidate) return static_cast<int>(i);
    throw InvalidSpec("candidate " + std::to_string(candidate) + " absent from ranking");
}

RankingResult rank_candidates(const std::vector<Frontier>& frontiers) {
    const int n = static_cast<int>(frontiers.size());
    if (n == 0) throw EmptyFrontier("no candidates to rank");
    std::vector<std::vector<std::array<double, 2>>> maps(frontiers.size());
    for (int i = 0; i < n; ++i) maps[i] = frontier_map(frontiers[i]);

    RankingResult r;
    r.copeland.assign(n, 0.0);
    r.mean_q.assign(n, kInf);
    for (int i = 0; i < n; ++i) {
        if (maps[i].empty()) continue;
        double sum = 0.0;
        for (const auto& p : maps[i]) sum += p[1];
        r.mean_q[i] = sum / static_cast<double>(maps[i].size());
    }

    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            if (maps[a].empty() || maps[b].empty()) {
                r.no_overlap.push_back({a, b});
                continue;
            }
            const double lo = std::max(maps[a].front()[0], maps[b].front()[0]);
            const double hi = std::min(maps[a].back()[0], maps[b].back()[0]);
            std::set<double> grid;
            for (const auto* m : {&maps[a], &maps[b]})
                for (const auto& p : *m)
                    if (p[0] >= lo && p[0] <= hi) grid.insert(p[0]);
            if (grid.empty()) {
                r.no_overlap.push_back({a, b});
                continue;
            }
            int wins_a = 0, wins_b = 0;
            for (const double g : grid) {
                const double qa = interpolate(maps[a], g);
                const double qb = interpolate(maps[b], g);
                if (qa < qb) ++wins_a;
                if (qb < qa) ++wins_b;
            }
            const int total = static_cast<int>(grid.size());
            if (2 * wins_a > total) {
                r.copeland[a] += 1.0;
                r.copeland[b] -= 1.0;
            } else if (2 * wins_b > total) {
                r.copeland[b] += 1.0;
                r.copeland[a] -= 1.0;
            }
        }
    }

    r.order.resize(frontiers.size());
    for (int i = 0; i < n; ++i) r.order[static_cast<std::size_t>(i)] = i;
    std::sort(r.order.begin(), r.order.end(), [&](int a, int b) {
        if (r.copeland[a] != r.copeland[b]) return r.copeland[a] > r.copeland[b];
        if (r.mean_q[a] != r.mean_q[b]) return r.mean_q[a] < r.mean_q[b];
        return a < b;
    });
    return r;
}

RankErrorResult ranking_error(const RankingResult& approx, const RankingResult& reference) {
    if (approx.order.size() != reference.order.size())
        throw InvalidSpec("rankings cover different candidate counts");
    RankErrorResult out;
    out.error.assign(approx.order.size(), 0);
    double sum = 0.0;
    for (std::size_t id = 0; id < approx.order.size(); ++id) {
        const int e = std::abs(approx.rank_of(static_cast<int>(id)) -
                               reference.rank_of(static_cast<int>(id)));
        out.error[id] = e;
        sum += e;
    }
    out.mean = sum / static_cast<double>(approx.order.size());
    return out;
}

// ---------------------------------------------------------------------------
// csv writers
// ---------------------------------------------------------------------------

void write_frontier_csv(const std::string& path, const std::vector<Frontier>& frontiers,
                        const std::vector<int>& candidate_ids) {
    if (candidate_ids.size() != frontiers.size())
        throw InvalidSpec("one candidate id per frontier required");
    std::vector<std::string> header{"candidate_id", "mode",     "epsilon", "n_stages_total",
                                    "q_total_W",    "feasible", "dominated"};
    for (int c = 1; c <= 3; ++c) {
        const std::string p = "c" + std::to_string(c) + "_";
        for (const char* f : {"n_above", "n_below", "reflux_ratio", "split", "pressure_Pa"})
            header.push_back(p + f);
    }
    for (int k = 1; k <= 6; ++k) header.push_back("u" + std::to_string(k));
    header.push_back("note");
    csv::Writer w(path, header);
    for (std::size_t i = 0; i < frontiers.size(); ++i) {
        for (const auto& p : frontiers[i].points) {
            std::vector<std::string> row{std::to_string(candidate_ids[i]),
                                         opt_mode_name(frontiers[i].mode),
                                         std::to_string(p.epsilon),
                                         std::to_string(p.n_stages_total),
                                         p.feasible ? csv::fmt(p.q_total) : "nan",
                                         p.feasible ? "1" : "0",
                                         p.dominated ? "1" : "0"};
            for (int c = 0; c < 3; ++c) {
                row.push_back(std::to_string(p.columns[c].n_above));
                row.push_back(std::to_string(p.columns[c].n_below));
                row.push_back(csv::fmt(p.columns[c].reflux_ratio));
                row.push_back(csv::fmt(p.columns[c].split));
                row.push_back(csv::fmt(p.columns[c].pressure));
            }
            for (const double u : p.stream_unknowns) row.push_back(csv::fmt(u));
            std::string note = p.note;
            for (char& ch : note)
                if (ch == ',' || ch == '\n') ch = ';';
            row.push_back(note);
            w.row(row);
        }
    }
}

void write_frontier_csv(const std::string& path, const std::vector<Frontier>& frontiers) {
    std::vector<int> ids(frontiers.size());
    std::iota(ids.begin(), ids.end(), 0);
    write_frontier_csv(path, frontiers, ids);
}

std::vector<Frontier> read_frontier_csv(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    const int ci = t.column("candidate_id");
    const int cm = t.column("mode");
    const int ce = t.column("epsilon");
    const int cn = t.column("n_stages_total");
    const int cq = t.column("q_total_W");
    const int cf = t.column("feasible");
    const int cd = t.column("dominated");
    const int cnote = t.column("note");
    std::array<std::array<int, 5>, 3> col_idx{};
    for (int c = 0; c < 3; ++c) {
        const std::string p = "c" + std::to_string(c + 1) + "_";
        col_idx[c] = {t.column(p + "n_above"), t.column(p + "n_below"),
                      t.column(p + "reflux_ratio"), t.column(p + "split"),
                      t.column(p + "pressure_Pa")};
    }
    std::array<int, 6> u_idx{};
    for (int k = 0; k < 6; ++k) u_idx[k] = t.column("u" + std::to_string(k + 1));

    std::vector<Frontier> out;
    std::string open_key;
    for (const auto& r : t.rows) {
        const std::string key = r[ci] + "|" + r[cm];
        if (out.empty() || key != open_key) {
            out.push_back(Frontier{opt_mode_from_name(r[cm]), 0, 0, {}});
            open_key = key;
        }
        FrontierPoint p;
        p.epsilon = static_cast<int>(csv::to_int(r[ce]));
        p.n_stages_total = static_cast<int>(csv::to_int(r[cn]));
        p.feasible = csv::to_int(r[cf]) != 0;
        p.dominated = csv::to_int(r[cd]) != 0;
        p.q_total = p.feasible ? csv::to_double(r[cq])
                               : std::numeric_limits<double>::quiet_NaN();
        for (int c = 0; c < 3; ++c) {
            p.columns[c].n_above = static_cast<int>(csv::to_int(r[col_idx[c][0]]));
            p.columns[c].n_below = static_cast<int>(csv::to_int(r[col_idx[c][1]]));
            p.columns[c].reflux_ratio = csv::to_double(r[col_idx[c][2]]);
            p.columns[c].split = csv::to_double(r[col_idx[c][3]]);
            p.columns[c].pressure = csv::to_double(r[col_idx[c][4]]);
        }
        for (int k = 0; k < 6; ++k) p.stream_unknowns[k] = csv::to_double(r[u_idx[k]]);
        p.note = r[cnote];
        out.back().points.push_back(p);
    }
    if (out.empty()) throw DataError("no frontier rows in " + path);
    return out;
}

void write_ranking_csv(const std::string& path, const RankingResult& ranking,
                       const RankErrorResult* errors) {
    csv::Writer w(path, {"candidate_id", "rank", "copeland", "mean_q", "rank_error"});
    for (std::size_t rank = 0; rank < ranking.order.size(); ++rank) {
        const int id = ranking.order[rank];
        w.row({std::to_string(id), std::to_string(rank),
               csv::fmt(ranking.copeland[static_cast<std::size_t>(id)]),
               csv::fmt(ranking.mean_q[static_cast<std::size_t>(id)]),
               errors ? std::to_string(errors->error[static_cast<std::size_t>(id)])
                      : std::string()});
    }
}

void write_metrics_csv(const std::string& path,
                       const std::vector<std::array<double, 4>>& rows) {
    csv::Writer w(path, {"candidate_id", "gd", "igd", "asd", "hausdorff"});
    for (std::size_t id = 0; id < rows.size(); ++id)
        w.row({std::to_string(id), csv::fmt(rows[id][0]), csv::fmt(rows[id][1]),
               csv::fmt(rows[id][2]), csv::fmt(rows[id][3])});
}

}  // namespace surcol
