#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "surcol/flowsheet.hpp"
#include "surcol/mlp.hpp"
#include "surcol/thermo.hpp"

namespace surcol {

// How a candidate flowsheet design is evaluated during optimization.
enum class OptMode { kRigorous, kSurrogate, kSurrogateBest, kSurrogateWorst };

std::string opt_mode_name(OptMode mode);
OptMode opt_mode_from_name(const std::string& name);  // DataError on unknown

struct Bounds {
    double lo = 0.0;
    double hi = 0.0;
};

// Epsilon-constraint problem: minimize total reboiler duty subject to an
// upper bound on the total equilibrium stage count, product purity and
// product flow constraints, and the flowsheet closure.
struct OptProblem {
    FlowsheetSpec spec;              // wiring, feed, makeup, designated products, pressures
    ModelfluidParameters params;
    const MlpModel* model = nullptr;            // required by surrogate modes
    std::optional<ConformalCalibration> calib;  // required by best/worst modes
    bool oracle_surrogate = false;  // close on the rigorous column model instead of the network
    Bounds reflux{0.5, 15.0};
    Bounds split{0.05, 0.95};
    double x_min = 0.95;       // purity of each designated product component
    double l_min_frac = 0.9;   // of the stoichiometric product flow
    int epsilon = 45;          // upper bound on the total equilibrium stage count
    int eval_budget = 200;     // flowsheet evaluations per continuous sub-solve
};

// Smallest column under the stage counting convention: two equilibrium
// stages on each side of the feed stage.
constexpr int kMinColumnStages = 5;

struct FrontierPoint {
    int epsilon = 0;
    bool feasible = false;
    bool dominated = false;
    int n_stages_total = 0;
    double q_total = 0.0;  // W; NaN when infeasible
    std::array<ColumnDecision, 3> columns{};
    std::array<double, 6> stream_unknowns{};  // closed distillate pairs, surrogate modes
    std::string note;                         // failure reason when infeasible
};

struct Frontier {
    OptMode mode = OptMode::kRigorous;
    std::uint64_t seed = 0;
    int starts = 0;
    std::vector<FrontierPoint> points;  // sorted by n_stages_total, then epsilon
};

// Best feasible design found for one stage bound. Stage allocations come
// from a coarse lattice (splits of epsilon across the columns, feed at
// 1/4, 1/2 or 3/4 of the column) refined by a +/-1 per-count hill climb;
// continuous decisions by projected-gradient descent (network surrogate)
// or compass pattern search (rigorous and oracle closures). `starts`
// counts continuous sub-solves, spread over the lattice round-robin.
// Warm starts contribute their own stage allocation and starting point.
// Throws Infeasible when epsilon cannot fit three minimal columns,
// BudgetExhausted when no evaluated design satisfied the constraints.
FrontierPoint solve_epsilon(const OptProblem& problem, OptMode mode, int starts,
                            std::uint64_t seed,
                            const std::vector<FrontierPoint>& warm_starts = {});

// One solve_epsilon per grid value; failures are recorded as infeasible
// points, not rethrown. Each solve warm-starts from the previous grid
// point's solution plus any points of `warm` (e.g. a surrogate frontier
// warm-starting a rigorous one). Points are sorted and dominated ones
// flagged but kept.
Frontier nq_curve(const OptProblem& problem, OptMode mode,
                  const std::vector<int>& epsilon_grid, int starts, std::uint64_t seed,
                  const Frontier* warm = nullptr);

// Objective-space point: (total stage count, total reboiler duty in W).
using ObjectivePoint = std::array<double, 2>;

// Distance metrics between point sets, raw Euclidean by default; the
// normalize flag min-max scales each coordinate over the union first.
// gd: mean over approx of the distance to the nearest truth point.
// igd: mean over truth of the distance to the nearest approx point.
// asd: (gd + igd) / 2.  hausdorff: max of the two directed maxima.
double gd(const std::vector<ObjectivePoint>& approx, const std::vector<ObjectivePoint>& truth,
          bool normalize = false);
double igd(const std::vector<ObjectivePoint>& approx, const std::vector<ObjectivePoint>& truth,
           bool normalize = false);
double asd(const std::vector<ObjectivePoint>& approx, const std::vector<ObjectivePoint>& truth,
           bool normalize = false);
double hausdorff(const std::vector<ObjectivePoint>& approx,
                 const std::vector<ObjectivePoint>& truth, bool normalize = false);

// The feasible nondominated points of a frontier as objective-space points.
std::vector<ObjectivePoint> frontier_points(const Frontier& f);

double gd(const Frontier& approx, const Frontier& truth, bool normalize = false);
double igd(const Frontier& approx, const Frontier& truth, bool normalize = false);
double asd(const Frontier& approx, const Frontier& truth, bool normalize = false);
double hausdorff(const Frontier& approx, const Frontier& truth, bool normalize = false);

struct RankingResult {
    std::vector<int> order;        // candidate ids, best first
    std::vector<double> copeland;  // per candidate id: wins minus losses
    std::vector<double> mean_q;    // per candidate id: mean q over its own frontier
    std::vector<std::array<int, 2>> no_overlap;  // pairs that could not be compared

    int rank_of(int candidate) const;  // 0-based position in `order`
};

// Pairwise dominance ranking: candidates are compared on the union of
// their frontiers' stage totals restricted to the overlapping span, with
// q linearly interpolated within each frontier. A beats B when it is
// strictly cheaper at a strict majority of grid points. Candidates are
// sorted by Copeland score, ties broken by mean q, then candidate id.
RankingResult rank_candidates(const std::vector<Frontier>& frontiers);

struct RankErrorResult {
    std::vector<int> error;  // per candidate id: |rank(approx) - rank(reference)|
    double mean = 0.0;
};

RankErrorResult ranking_error(const RankingResult& approx, const RankingResult& reference);

// candidate_id,mode,epsilon,n_stages_total,q_total_W,feasible,dominated,
// per-column decisions, stream unknowns, note. The ids overload labels the
// rows explicitly (e.g. several modes of the same candidate in one file);
// the plain form numbers the frontiers 0..n-1.
void write_frontier_csv(const std::string& path, const std::vector<Frontier>& frontiers,
                        const std::vector<int>& candidate_ids);
void write_frontier_csv(const std::string& path, const std::vector<Frontier>& frontiers);

// Reads a frontier file back, one Frontier per (candidate_id, mode) group in
// row order. seed/starts are not stored in the CSV and come back as zero.
std::vector<Frontier> read_frontier_csv(const std::string& path);

// candidate_id,rank,copeland,mean_q,rank_error (rank_error blank without errors)
void write_ranking_csv(const std::string& path, const RankingResult& ranking,
                       const RankErrorResult* errors = nullptr);

// candidate_id,gd,igd,asd,hausdorff
void write_metrics_csv(const std::string& path,
                       const std::vector<std::array<double, 4>>& rows);

}  // namespace surcol
