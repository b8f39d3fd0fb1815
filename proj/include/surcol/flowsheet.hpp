#pragma once

#include <array>
#include <atomic>
#include <optional>
#include <string>
#include <vector>

#include "surcol/column.hpp"
#include "surcol/mlp.hpp"

namespace surcol {

// Where a column outlet stream is routed.
enum class DestKind { kProduct, kColumn, kMixer };

struct StreamDest {
    DestKind kind = DestKind::kProduct;
    int column = -1;  // destination column when kind == kColumn
};

// Unit wiring. The mixer combines fresh feed, entrainer makeup, and the one
// outlet routed back to it, and feeds first_column. Each column sends exactly
// one outlet to a product; exactly one outlet in the whole sheet returns to
// the mixer; the remaining outlets feed other columns, every column reachable
// from the mixer.
struct Topology {
    int first_column = 0;
    std::array<StreamDest, 3> top{};
    std::array<StreamDest, 3> bottom{};
};

// Mixer -> C1; C1 top = product, C1 bottoms -> C2; C2 top -> C3,
// C2 bottoms = product; C3 top = product, C3 bottoms -> mixer.
Topology default_topology();

// Per-column decision variables; the feed side comes from the wiring.
struct ColumnDecision {
    int n_above = 2;
    int n_below = 2;
    double reflux_ratio = 1.0;
    double split = 0.5;      // bottoms-to-feed molar ratio
    double pressure = 1e5;   // Pa
};

struct FlowsheetSpec {
    Topology topology = default_topology();
    std::array<ColumnDecision, 3> columns{};
    Stream feed{1.0, {0.5, 0.5, 0.0}};  // component 3 is the entrainer slot
    double makeup_flow = 0.0;           // pure-entrainer stream into the mixer, mol/s
    // Designated purity component (0-based) of each column's product stream.
    // Default wiring sends a heavy entrainer down every column, so the light
    // key leaves C1's top, the entrainer bleed C2's bottoms, the mid-boiler
    // C3's top.
    std::array<int, 3> product_component{{0, 2, 1}};
    // Pin the mixer-return stream to zero flow: the sheet degenerates to an
    // open column cascade and the would-be recycle leaves as an extra outlet.
    bool zero_recycle = false;
};

void validate(const FlowsheetSpec& spec);  // InvalidSpec on violation

int column_stage_count(const ColumnDecision& c);  // equilibrium stages, feed stage included
int total_stage_count(const FlowsheetSpec& spec);

// Residual layout (all entries scaled by 1/max(1, total external inflow)):
// [0..2]  product-stream closure 1 - sum(x) per column
// [3..5]  non-product outlet closure per column
// [6..8]  overall component balance feed + makeup - products (- open recycle)
// [9..17] per-column component balances, column-major (column, then component)
inline constexpr int kResidualCount = 18;

struct FlowsheetState {
    Stream mixed;                          // mixer outlet
    std::array<Stream, 3> feeds;           // realized column feeds
    std::array<Stream, 3> tops, bottoms;   // column outlet streams
    std::array<Stream, 3> products;        // product stream of each column
    Stream recycle;                        // stream routed back to the mixer
    std::array<double, 3> q_reboiler{};    // W
    std::array<double, 3> q_condenser{};   // W (zero in surrogate mode)
    std::array<ColumnSpec, 3> column_specs{};  // the specs the columns were run at
    std::vector<ColumnResult> columns;     // rigorous solves only; empty otherwise
    std::array<double, kResidualCount> residuals{};
    double tear_residual = 0.0;    // final tear mismatch (rigorous mode)
    double closure_mismatch = 0.0; // RMS prediction-vs-balance gap (predictor mode)
    int sweeps = 0;                // tear sweeps or closure iterations
    bool clipped = false;          // a prediction had to be clipped into [0,1]
};

double total_reboiler_duty(const FlowsheetState& state);

// Sequential-modular evaluation: every column solved with the full MESH
// model, the mixer-return stream converged by bounded Wegstein iteration
// (damped substitution fallback), budget 500 sweeps.
FlowsheetState evaluate_rigorous(const FlowsheetSpec& spec, const ModelfluidParameters& params);

// A column model returning {x_B1, x_B2, x_D1, x_D2, q_reboiler_W} for a
// fully specified column. Implementations must be deterministic.
class ColumnPredictor {
  public:
    virtual ~ColumnPredictor() = default;
    virtual std::array<double, 5> predict(int column, const ColumnSpec& spec) const = 0;
    virtual long clip_count() const { return 0; }  // boundary clips so far
};

// Wraps the rigorous column model behind the predictor interface.
class OraclePredictor : public ColumnPredictor {
  public:
    explicit OraclePredictor(const ModelfluidParameters& params) : params_(params) {}
    std::array<double, 5> predict(int column, const ColumnSpec& spec) const override;

  private:
    ModelfluidParameters params_;
};

enum class Shift { kNominal, kBest, kWorst };

// Neural column model with optional confidence shifting. Best case raises
// the designated product-component fraction by half its conformal interval
// and lowers the duty by half of its interval; worst case is the reverse.
// Prediction outputs are clipped into [0,1] (pairs renormalized when their
// sum exceeds 1) and the clips are counted.
class MlpPredictor : public ColumnPredictor {
  public:
    MlpPredictor(const MlpModel& model, const ModelfluidParameters& params,
                 const FlowsheetSpec& spec, Shift shift = Shift::kNominal,
                 const std::optional<ConformalCalibration>& calib = std::nullopt);
    std::array<double, 5> predict(int column, const ColumnSpec& spec) const override;
    long clip_count() const override;

  private:
    MlpModel model_;
    std::array<std::array<double, 5>, 3> shift_delta_{};  // additive, per column output
    std::array<std::array<double, 16>, 3> fluid_features_{};
    mutable std::atomic<long> clips_{0};
};

// Simultaneous closure: the two reported distillate mole fractions of each
// column are the unknowns, bottoms compositions and all flows follow from
// exact balances, and a damped least-squares iteration drives the predictions
// and the balanced streams together.
FlowsheetState evaluate_with_predictor(const FlowsheetSpec& spec, const ColumnPredictor& pred);

FlowsheetState evaluate_surrogate(const FlowsheetSpec& spec, const ModelfluidParameters& params,
                                  const MlpModel& model,
                                  const std::optional<ConformalCalibration>& calib = std::nullopt,
                                  Shift shift = Shift::kNominal);

// TOML config with [feed], [makeup], [topology], [column1..3] tables;
// pressures in bar and column numbers 1-based at the file boundary.
FlowsheetSpec read_flowsheet_config(const std::string& path);
void write_flowsheet_config(const std::string& path, const FlowsheetSpec& spec);

void write_state_json(const std::string& path, const FlowsheetSpec& spec,
                      const FlowsheetState& state);

}  // namespace surcol
