#include "surcol/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <json.hpp>

#include "surcol/csv.hpp"
#include "surcol/datagen.hpp"
#include "surcol/errors.hpp"
#include "surcol/fluids.hpp"
#include "surcol/flowsheet.hpp"
#include "surcol/mlp.hpp"
#include "surcol/pareto.hpp"
#include "surcol/rng.hpp"
#include "surcol/thermo.hpp"
#include "surcol/vlecheck.hpp"

namespace surcol {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr double kPaPerBar = 1.0e5;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void dump_json(const std::string& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

// ---- error classification ----

// Solver breakdowns get exit code 4 and a diagnostics file; everything the
// user can fix by changing inputs stays at 3.
bool numerical_failure(const Error& e) {
    return dynamic_cast<const NoConvergence*>(&e) != nullptr ||
           dynamic_cast<const TearNoConvergence*>(&e) != nullptr ||
           dynamic_cast<const ColumnNoConvergence*>(&e) != nullptr ||
           dynamic_cast<const ClosureNoConvergence*>(&e) != nullptr ||
           dynamic_cast<const DivergedLoss*>(&e) != nullptr ||
           dynamic_cast<const Infeasible*>(&e) != nullptr ||
           dynamic_cast<const BudgetExhausted*>(&e) != nullptr ||
           dynamic_cast<const EmptyFrontier*>(&e) != nullptr;
}

std::string error_kind(const Error& e) {
    if (dynamic_cast<const TearNoConvergence*>(&e)) return "tear_no_convergence";
    if (dynamic_cast<const ColumnNoConvergence*>(&e)) return "column_no_convergence";
    if (dynamic_cast<const ClosureNoConvergence*>(&e)) return "closure_no_convergence";
    if (dynamic_cast<const NoConvergence*>(&e)) return "no_convergence";
    if (dynamic_cast<const DivergedLoss*>(&e)) return "diverged_loss";
    if (dynamic_cast<const Infeasible*>(&e)) return "infeasible";
    if (dynamic_cast<const BudgetExhausted*>(&e)) return "budget_exhausted";
    if (dynamic_cast<const EmptyFrontier*>(&e)) return "empty_frontier";
    return "error";
}

void write_diagnostics(const std::string& dir, const std::string& subcommand, const Error& e) {
    ordered_json j;
    j["schema_version"] = 1;
    j["subcommand"] = subcommand;
    j["error"] = error_kind(e);
    j["message"] = e.what();
    if (const auto* nc = dynamic_cast<const NoConvergence*>(&e)) {
        j["residual"] = nc->residual;
        j["iterations"] = nc->iterations;
    }
    if (const auto* cc = dynamic_cast<const ColumnNoConvergence*>(&e)) j["column"] = cc->column + 1;
    dump_json((fs::path(dir) / "diagnostics.json").string(), j);
}

// ---- shared plumbing ----

struct Common {
    std::uint64_t seed = 0;
    unsigned workers = 0;
    std::string out;
};

void add_common(CLI::App* sub, Common& c, bool out_required = true) {
    // --config lives on the top-level app; fallthrough lets it appear after
    // the subcommand name as well
    sub->fallthrough();
    sub->add_option("--seed", c.seed, "master random seed; every stage derives a named substream")
        ->envname("SURCOL_SEED")
        ->capture_default_str();
    sub->add_option("--workers", c.workers, "worker threads for batch stages, 0 = all cores")
        ->envname("SURCOL_WORKERS")
        ->capture_default_str();
    CLI::Option* out = sub->add_option("--out", c.out, "output directory")->capture_default_str();
    if (out_required) out->required();
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw DataError("cannot create output directory " + out + ": " + ec.message());
}

// Re-runnable record of the options a run actually used; command-line flags
// override it on a rerun, so `--config <snapshot> --out elsewhere`
// reproduces a run next to different outputs.
void write_snapshot(const CLI::App* sub, const std::string& out_dir) {
    const std::string path = (fs::path(out_dir) / "resolved-config.toml").string();
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "# rerun with: surcol " << sub->get_name() << " --config <this file>\n"
      << "[" << sub->get_name() << "]\n"
      << sub->config_to_str(true, false);
}

std::vector<std::string> read_id_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open id list " + path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string field = line.substr(0, line.find(','));
        while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back())))
            field.pop_back();
        while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front())))
            field.erase(field.begin());
        if (field.empty() || field[0] == '#' || field == "id") continue;
        ids.push_back(field);
    }
    if (ids.empty()) throw DataError("no ids in " + path);
    return ids;
}

// Flat TOML file; pressures cross the boundary in bar.
SamplingBounds read_bounds_config(const std::string& path) {
    SamplingBounds b;
    double p_lo_bar = b.pressure_lo / kPaPerBar;
    double p_hi_bar = b.pressure_hi / kPaPerBar;
    CLI::App app("sampling bounds");
    app.allow_config_extras(false);
    app.add_option("--reflux_lo", b.reflux_lo)->capture_default_str();
    app.add_option("--reflux_hi", b.reflux_hi)->capture_default_str();
    app.add_option("--split_lo", b.split_lo)->capture_default_str();
    app.add_option("--split_hi", b.split_hi)->capture_default_str();
    app.add_option("--n_above_lo", b.n_above_lo)->capture_default_str();
    app.add_option("--n_above_hi", b.n_above_hi)->capture_default_str();
    app.add_option("--n_below_lo", b.n_below_lo)->capture_default_str();
    app.add_option("--n_below_hi", b.n_below_hi)->capture_default_str();
    app.add_option("--pressure_lo_bar", p_lo_bar)->capture_default_str();
    app.add_option("--pressure_hi_bar", p_hi_bar)->capture_default_str();
    app.add_option("--specs_per_fluid", b.specs_per_fluid)->capture_default_str();
    app.set_config("--config", path, "", true);
    try {
        app.parse(std::vector<std::string>{});
    } catch (const CLI::ParseError& e) {
        throw DataError("bounds config " + path + ": " + e.what());
    }
    b.pressure_lo = p_lo_bar * kPaPerBar;
    b.pressure_hi = p_hi_bar * kPaPerBar;
    validate(b);
    return b;
}

const Fluid& find_fluid(const FluidLibrary& lib, const std::string& id) {
    for (const Fluid& f : lib)
        if (f.id == id) return f;
    throw DataError("fluid '" + id + "' not in library (" + std::to_string(lib.size()) +
                    " fluids)");
}

// Directory names are derived from fluid ids; refuse anything surprising.
void check_id_pathsafe(const std::string& id) {
    if (id.empty() || id == "." || id == "..")
        throw DataError("fluid id '" + id + "' not usable as a directory name");
    for (const char ch : id)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' ||
              ch == '.'))
            throw DataError("fluid id '" + id + "' not usable as a directory name");
}

void write_nq_csv(const std::string& path, const Frontier& f) {
    csv::Writer w(path, {"epsilon", "n_stages_total", "q_total_W", "feasible", "dominated"});
    for (const FrontierPoint& p : f.points)
        w.row({std::to_string(p.epsilon), std::to_string(p.n_stages_total),
               p.feasible ? csv::fmt(p.q_total) : "nan", p.feasible ? "1" : "0",
               p.dominated ? "1" : "0"});
}

// Clamped piecewise-linear q over the stage axis; pts sorted by stage count.
double interp_q(const std::vector<ObjectivePoint>& pts, double n) {
    if (n <= pts.front()[0]) return pts.front()[1];
    if (n >= pts.back()[0]) return pts.back()[1];
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (n <= pts[i][0]) {
            const double span = pts[i][0] - pts[i - 1][0];
            if (span <= 0.0) return pts[i][1];
            const double t = (n - pts[i - 1][0]) / span;
            return pts[i - 1][1] + t * (pts[i][1] - pts[i - 1][1]);
        }
    }
    return pts.back()[1];
}

// ---- subcommand option holders ----

struct MakeFluidsOpts {
    Common c;
    int count = 8;
    long max_attempts = 0;
};

struct CheckFluidsOpts {
    Common c;
    std::string fluids;
    int grid = 101;
};

struct GenDataOpts {
    Common c;
    std::string fluids, bounds;
    int specs_per_fluid = -1;
};

struct TrainOpts {
    Common c;
    std::string data, holdout;
    double val_frac = 0.2;
    std::vector<int> layers = {22, 256, 128, 64, 5};
    int batch = 64;
    std::vector<double> schedule = {800, 1e-4, 200, 5e-5};
};

struct CalibrateOpts {
    Common c;
    std::string data, model, holdout;
    double val_frac = 0.2;
    double level = 0.95;
};

struct EvaluateOpts {
    Common c;
    std::string data, model, holdout;
};

struct SimulateOpts {
    Common c;
    std::string fluid, fluids, spec, model;
    std::string mode = "rigorous";
    std::string shift = "nominal";
};

struct OptimizeOpts {
    Common c;
    std::string flowsheet, candidates, model, warm_from;
    std::vector<std::string> modes = {"surrogate"};
    std::vector<int> eps;
    int starts = 4;
    double x_min = 0.95;
    double l_min_frac = 0.9;
    int budget = 200;
    bool oracle = false;
};

struct RankOpts {
    Common c;
    std::string frontiers, reference, mode, ref_mode;
    bool normalize = false;
};

// ---- subcommand bodies ----

void run_make_fluids(const MakeFluidsOpts& o) {
    const FluidLibrary lib = synthesize_fluids(o.count, Rng::substream(o.c.seed, "make-fluids"),
                                               {}, o.c.workers, o.max_attempts);
    write_fluid_library((fs::path(o.c.out) / "fluids.csv").string(), lib);
    std::cout << "wrote " << lib.size() << " fluids to " << o.c.out << "/fluids.csv\n";
}

void run_check_fluids(const CheckFluidsOpts& o) {
    const FluidLibrary lib = read_fluid_library(o.fluids);
    if (lib.empty()) throw DataError("no fluids in " + o.fluids);
    CheckConfig cfg;
    cfg.grid_points = o.grid;

    csv::Writer report((fs::path(o.c.out) / "check-report.csv").string(),
                       {"fluid_id", "edge", "check", "pass", "violation_index", "magnitude",
                        "azeotrope_count", "fluid_pass"});
    static constexpr const char* kCheckNames[7] = {
        "endpoint",          "continuity",          "monotonicity", "envelope",
        "azeotrope_extrema", "zeotropic_curvature", "numerical"};
    FluidLibrary passed;
    for (const Fluid& f : lib) {
        TernaryCheckResult res;
        try {
            res = check_ternary_system(features_to_parameters(f.features), cfg);
        } catch (const Error&) {
            // unusable parameter set: report as a failed fluid, keep going
            report.row({f.id, "", "parameters", "0", "-1", "nan", "0", "0"});
            continue;
        }
        for (int e = 0; e < 3; ++e) {
            const CheckReport& r = res.reports[e];
            const std::string edge = std::to_string(res.edges[e].first + 1) + "-" +
                                     std::to_string(res.edges[e].second + 1);
            const CheckVerdict* verdicts[7] = {&r.endpoint,          &r.continuity,
                                               &r.monotonicity,      &r.envelope,
                                               &r.azeotrope_extrema, &r.zeotropic_curvature,
                                               &r.numerical};
            for (int k = 0; k < 7; ++k)
                report.row({f.id, edge, kCheckNames[k], verdicts[k]->pass ? "1" : "0",
                            std::to_string(verdicts[k]->index), csv::fmt(verdicts[k]->magnitude),
                            std::to_string(r.azeotrope_count), res.pass ? "1" : "0"});
        }
        if (res.pass) passed.push_back(f);
    }
    write_fluid_library((fs::path(o.c.out) / "fluids.pass.csv").string(), passed);
    std::cout << passed.size() << " of " << lib.size() << " fluids pass the check battery\n";
}

void run_gen_data(const GenDataOpts& o) {
    SamplingBounds bounds = o.bounds.empty() ? SamplingBounds{} : read_bounds_config(o.bounds);
    if (o.specs_per_fluid >= 0) bounds.specs_per_fluid = o.specs_per_fluid;
    if (bounds.specs_per_fluid == 0)
        throw EmptyOutput("specs-per-fluid is zero; nothing to generate");
    const FluidLibrary lib = read_fluid_library(o.fluids);
    if (lib.empty()) throw DataError("no fluids in " + o.fluids);

    const std::uint64_t stage_seed = Rng::substream(o.c.seed, "gen-data");
    const auto [ds, report] = generate(lib, bounds, o.c.workers, stage_seed);
    write_dataset_csv((fs::path(o.c.out) / "dataset.csv").string(), ds);
    write_dataset_meta((fs::path(o.c.out) / "dataset.meta.json").string(), bounds, stage_seed,
                       report, ds.rows.size());
    write_genreport((fs::path(o.c.out) / "genreport.json").string(), report);
    std::cout << "dataset: " << ds.rows.size() << " rows from " << report.attempts
              << " attempts (" << report.failed << " failed, " << report.rejected_specs
              << " rejected)\n";
}

std::vector<std::pair<int, double>> schedule_pairs(const std::vector<double>& flat) {
    if (flat.empty() || flat.size() % 2 != 0)
        throw DataError("schedule must be (epochs, learning-rate) pairs");
    std::vector<std::pair<int, double>> out;
    for (std::size_t i = 0; i < flat.size(); i += 2) {
        const double e = flat[i];
        if (e <= 0 || e != std::floor(e) || flat[i + 1] <= 0)
            throw DataError("schedule needs positive integer epochs and positive rates");
        out.emplace_back(static_cast<int>(e), flat[i + 1]);
    }
    return out;
}

void run_train(const TrainOpts& o) {
    const Dataset ds = read_dataset_csv(o.data);
    const std::vector<std::string> holdout =
        o.holdout.empty() ? std::vector<std::string>{} : read_id_list(o.holdout);
    const auto [train_ds, val_ds] =
        split_dataset(ds, 1.0 - o.val_frac, Rng::substream(o.c.seed, "split"), holdout);

    TrainConfig cfg;
    cfg.layer_dims = o.layers;
    cfg.batch_size = o.batch;
    cfg.schedule = schedule_pairs(o.schedule);
    cfg.seed = Rng::substream(o.c.seed, "train");
    const TrainResult res = train(train_ds, val_ds, cfg);

    save_checkpoint((fs::path(o.c.out) / "model.json").string(), res.model);
    write_losses_csv((fs::path(o.c.out) / "losses.csv").string(), res.history);
    std::cout << "trained on " << train_ds.rows.size() << " rows, validated on "
              << val_ds.rows.size() << "; final val mse " << num(res.history.back().val_mse)
              << "\n";
}

void run_calibrate(const CalibrateOpts& o) {
    const Checkpoint ck = load_checkpoint(o.model);
    const Dataset ds = read_dataset_csv(o.data);
    const std::vector<std::string> holdout =
        o.holdout.empty() ? std::vector<std::string>{} : read_id_list(o.holdout);
    // val_frac > 0 carves the same validation split the trainer saw under the
    // same seed; 0 calibrates on the whole (holdout-stripped) file.
    const double train_frac = o.val_frac > 0 ? 1.0 - o.val_frac : 0.0;
    const Dataset cal =
        split_dataset(ds, train_frac, Rng::substream(o.c.seed, "split"), holdout).second;

    const ConformalCalibration calib = calibrate_conformal(ck.model, cal, o.level);
    save_checkpoint((fs::path(o.c.out) / "model.json").string(), ck.model, calib);

    ordered_json j;
    j["schema_version"] = 1;
    j["level"] = calib.level;
    j["rows"] = cal.rows.size();
    for (int t = 0; t < kTargetCount; ++t)
        j["delta"][kDatasetTargetNames[t]] = calib.delta(t);
    dump_json((fs::path(o.c.out) / "calibration.json").string(), j);
    std::cout << "calibrated on " << cal.rows.size() << " rows; interval radii";
    for (int t = 0; t < kTargetCount; ++t) std::cout << " " << num(calib.delta(t));
    std::cout << "\n";
}

void run_evaluate(const EvaluateOpts& o) {
    const Checkpoint ck = load_checkpoint(o.model);
    Dataset ds = read_dataset_csv(o.data);
    if (!o.holdout.empty()) {
        const std::vector<std::string> ids = read_id_list(o.holdout);
        const std::set<std::string> want(ids.begin(), ids.end());
        Dataset sub;
        for (const DataRow& r : ds.rows)
            if (want.count(r.fluid_id)) sub.rows.push_back(r);
        if (sub.rows.empty()) throw DataError("holdout ids match no rows of " + o.data);
        ds = std::move(sub);
    }

    const EvalResult ev = evaluate(ck.model, ds);
    const Eigen::MatrixXd targets = dataset_targets(ds);
    Eigen::VectorXd tstd = Eigen::VectorXd::Zero(kTargetCount);
    if (targets.rows() > 1)
        for (int t = 0; t < kTargetCount; ++t) {
            const double m = targets.col(t).mean();
            tstd(t) = std::sqrt((targets.col(t).array() - m).square().sum() /
                                double(targets.rows() - 1));
        }
    const bool calibrated = ck.calib.delta.size() == kTargetCount;
    Eigen::VectorXd cov;
    if (calibrated) cov = empirical_coverage(ck.model, ck.calib, ds);

    ordered_json j;
    j["schema_version"] = 1;
    j["rows"] = ds.rows.size();
    for (int t = 0; t < kTargetCount; ++t) {
        j["rmse"][kDatasetTargetNames[t]] = ev.rmse(t);
        j["target_std"][kDatasetTargetNames[t]] = tstd(t);
    }
    if (calibrated) {
        j["calibration_level"] = ck.calib.level;
        for (int t = 0; t < kTargetCount; ++t)
            j["coverage"][kDatasetTargetNames[t]] = cov(t);
    } else {
        j["coverage"] = nullptr;
    }
    dump_json((fs::path(o.c.out) / "eval.json").string(), j);

    std::cout << "evaluated " << ds.rows.size() << " rows\n";
    for (int t = 0; t < kTargetCount; ++t) {
        std::cout << "  " << kDatasetTargetNames[t] << ": rmse " << num(ev.rmse(t));
        if (calibrated) std::cout << ", coverage " << num(cov(t));
        std::cout << "\n";
    }
}

Shift parse_shift(const std::string& s) {
    if (s == "nominal") return Shift::kNominal;
    if (s == "best") return Shift::kBest;
    return Shift::kWorst;
}

ordered_json stream_summary(const Stream& s) {
    return ordered_json{{"flow_mol_s", s.flow}, {"x", {s.x[0], s.x[1], s.x[2]}}};
}

void run_simulate(const SimulateOpts& o) {
    if (o.mode == "surrogate" && o.model.empty())
        throw CLI::RequiredError("--model (surrogate mode)");
    const FluidLibrary lib = read_fluid_library(o.fluids);
    const Fluid& fl = find_fluid(lib, o.fluid);
    const ModelfluidParameters params = features_to_parameters(fl.features);
    const FlowsheetSpec spec = read_flowsheet_config(o.spec);

    FlowsheetState st;
    std::optional<FlowsheetState> best, worst;
    if (o.mode == "rigorous") {
        st = evaluate_rigorous(spec, params);
    } else if (o.mode == "oracle") {
        st = evaluate_with_predictor(spec, OraclePredictor(params));
    } else {
        const Checkpoint ck = load_checkpoint(o.model);
        const std::optional<ConformalCalibration> calib =
            ck.calib.delta.size() == kTargetCount ? std::optional(ck.calib) : std::nullopt;
        const Shift sh = parse_shift(o.shift);
        if (sh != Shift::kNominal && !calib)
            throw DataError("checkpoint " + o.model + " has no calibration; cannot shift");
        st = evaluate_surrogate(spec, params, ck.model, calib, sh);
        if (calib && sh == Shift::kNominal) {
            best = evaluate_surrogate(spec, params, ck.model, calib, Shift::kBest);
            worst = evaluate_surrogate(spec, params, ck.model, calib, Shift::kWorst);
        }
    }

    double residual_max = 0.0;
    for (const double r : st.residuals) residual_max = std::max(residual_max, std::abs(r));
    const double q_total = total_reboiler_duty(st);

    ordered_json j;
    j["schema_version"] = 1;
    j["fluid"] = fl.id;
    j["mode"] = o.mode;
    j["shift"] = o.shift;
    j["q_total_W"] = q_total;
    j["q_reboiler_W"] = st.q_reboiler;
    j["q_condenser_W"] = st.q_condenser;
    j["residual_max"] = residual_max;
    j["sweeps"] = st.sweeps;
    j["tear_residual"] = st.tear_residual;
    j["closure_mismatch"] = st.closure_mismatch;
    j["clipped"] = st.clipped;
    for (int c = 0; c < 3; ++c) {
        ordered_json p = stream_summary(st.products[c]);
        p["purity_component"] = spec.product_component[c] + 1;
        p["purity"] = st.products[c].x[spec.product_component[c]];
        j["products"].push_back(p);
    }
    j["recycle"] = stream_summary(st.recycle);
    if (best) {
        // best lowers the duty and raises the designated purity; worst is the
        // mirror image, so [worst, best] brackets each purity and
        // [best, worst] each duty
        j["intervals"]["q_total_W"] = {{"best", total_reboiler_duty(*best)},
                                       {"worst", total_reboiler_duty(*worst)}};
        for (int c = 0; c < 3; ++c) {
            const int pc = spec.product_component[c];
            j["intervals"]["purity"].push_back(
                {{"best", best->products[c].x[pc]}, {"worst", worst->products[c].x[pc]}});
        }
    }
    dump_json((fs::path(o.c.out) / "result.json").string(), j);

    std::cout << "fluid " << fl.id << ", mode " << o.mode << "\n";
    for (int c = 0; c < 3; ++c) {
        const int pc = spec.product_component[c];
        std::cout << "  product " << c + 1 << ": flow " << num(st.products[c].flow)
                  << " mol/s, x = (" << num(st.products[c].x[0]) << ", "
                  << num(st.products[c].x[1]) << ", " << num(st.products[c].x[2])
                  << "), purity x" << pc + 1 << " = " << num(st.products[c].x[pc]);
        if (best)
            std::cout << " in [" << num(worst->products[c].x[pc]) << ", "
                      << num(best->products[c].x[pc]) << "]";
        std::cout << "\n";
    }
    std::cout << "  reboiler duties (" << num(st.q_reboiler[0] / 1e3) << ", "
              << num(st.q_reboiler[1] / 1e3) << ", " << num(st.q_reboiler[2] / 1e3)
              << ") kW, total " << num(q_total / 1e3) << " kW";
    if (best)
        std::cout << " in [" << num(total_reboiler_duty(*best) / 1e3) << ", "
                  << num(total_reboiler_duty(*worst) / 1e3) << "] kW";
    std::cout << "\n  worst balance residual " << num(residual_max) << "\n";
}

void run_optimize(const OptimizeOpts& o) {
    bool wants_best_worst = false, wants_network = false;
    for (const std::string& m : o.modes) {
        if (m == "surrogate-best" || m == "surrogate-worst") wants_best_worst = true;
        if (m == "surrogate" && !o.oracle) wants_network = true;
    }
    if (o.oracle && wants_best_worst)
        throw DataError("--oracle-closure has no confidence intervals; drop best/worst modes");
    if ((wants_network || wants_best_worst) && o.model.empty())
        throw CLI::RequiredError("--model (network surrogate modes)");

    const FlowsheetSpec spec = read_flowsheet_config(o.flowsheet);
    const FluidLibrary lib = read_fluid_library(o.candidates);
    if (lib.empty()) throw DataError("no candidates in " + o.candidates);
    for (const Fluid& f : lib) check_id_pathsafe(f.id);

    Checkpoint ck;
    std::optional<ConformalCalibration> calib;
    if (wants_network || wants_best_worst) {
        ck = load_checkpoint(o.model);
        if (ck.calib.delta.size() == kTargetCount) calib = ck.calib;
        if (wants_best_worst && !calib)
            throw DataError("checkpoint " + o.model + " has no calibration; best/worst need it");
    }

    const fs::path plotdir = fs::path(o.c.out) / "plotdata";
    ensure_out_dir(plotdir.string());
    {
        csv::Writer manifest((fs::path(o.c.out) / "candidates.csv").string(),
                             {"candidate_id", "fluid_id"});
        for (std::size_t i = 0; i < lib.size(); ++i)
            manifest.row({std::to_string(i), lib[i].id});
    }

    for (std::size_t i = 0; i < lib.size(); ++i) {
        const Fluid& fl = lib[i];
        const ModelfluidParameters params = features_to_parameters(fl.features);
        const fs::path dir = fs::path(o.c.out) / fl.id;
        ensure_out_dir(dir.string());

        std::optional<Frontier> warm;
        if (!o.warm_from.empty()) {
            const fs::path wpath = fs::path(o.warm_from) / fl.id / "frontier.csv";
            if (fs::exists(wpath)) {
                warm = Frontier{};
                for (const Frontier& f : read_frontier_csv(wpath.string())) {
                    warm->mode = f.mode;
                    warm->points.insert(warm->points.end(), f.points.begin(), f.points.end());
                }
            } else {
                std::cout << fl.id << ": no warm-start frontier at " << wpath.string() << "\n";
            }
        }

        std::vector<Frontier> fronts;
        std::vector<int> ids;
        for (const std::string& m : o.modes) {
            OptProblem prob;
            prob.spec = spec;
            prob.params = params;
            if (wants_network || wants_best_worst) prob.model = &ck.model;
            prob.calib = calib;
            prob.oracle_surrogate = o.oracle && m == "surrogate";
            prob.x_min = o.x_min;
            prob.l_min_frac = o.l_min_frac;
            prob.eval_budget = o.budget;
            const std::uint64_t s = Rng::substream(o.c.seed, "opt|" + fl.id + "|" + m);
            const Frontier f = nq_curve(prob, opt_mode_from_name(m), o.eps, o.starts, s,
                                        warm ? &*warm : nullptr);
            int feasible = 0;
            for (const FrontierPoint& p : f.points) feasible += p.feasible ? 1 : 0;
            std::cout << fl.id << " " << m << (prob.oracle_surrogate ? " (oracle closure)" : "")
                      << ": " << feasible << "/" << f.points.size() << " feasible points\n";
            write_nq_csv((plotdir / ("nq-" + fl.id + "-" + m + ".csv")).string(), f);
            fronts.push_back(f);
            ids.push_back(static_cast<int>(i));
        }
        write_frontier_csv((dir / "frontier.csv").string(), fronts, ids);
    }
}

void run_rank(const RankOpts& o) {
    const auto scan = [](const std::string& dir) {
        std::vector<std::pair<std::string, std::string>> found;
        if (!fs::is_directory(dir)) throw DataError(dir + " is not a directory");
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_directory()) continue;
            const fs::path f = entry.path() / "frontier.csv";
            if (fs::exists(f)) found.emplace_back(entry.path().filename().string(), f.string());
        }
        std::sort(found.begin(), found.end());
        if (found.empty()) throw DataError("no <candidate>/frontier.csv below " + dir);
        return found;
    };
    const auto approx_files = scan(o.frontiers);
    const auto ref_files = scan(o.reference);
    if (approx_files.size() != ref_files.size())
        throw DataError("candidate sets differ between " + o.frontiers + " and " + o.reference);
    for (std::size_t i = 0; i < approx_files.size(); ++i)
        if (approx_files[i].first != ref_files[i].first)
            throw DataError("candidate '" + approx_files[i].first + "' has no counterpart in " +
                            o.reference);

    const auto pick = [](const std::string& path, const std::string& mode) {
        const std::vector<Frontier> fronts = read_frontier_csv(path);
        if (mode.empty()) return fronts.front();
        for (const Frontier& f : fronts)
            if (opt_mode_name(f.mode) == mode) return f;
        throw DataError("no " + mode + " frontier in " + path);
    };
    std::vector<Frontier> approx, ref;
    for (std::size_t i = 0; i < approx_files.size(); ++i) {
        approx.push_back(pick(approx_files[i].second, o.mode));
        ref.push_back(pick(ref_files[i].second, o.ref_mode));
    }

    const RankingResult ra = rank_candidates(approx);
    const RankingResult rr = rank_candidates(ref);
    const RankErrorResult err = ranking_error(ra, rr);
    write_ranking_csv((fs::path(o.c.out) / "ranking.csv").string(), ra, &err);
    {
        csv::Writer manifest((fs::path(o.c.out) / "candidates.csv").string(),
                             {"candidate_id", "name"});
        for (std::size_t i = 0; i < approx_files.size(); ++i)
            manifest.row({std::to_string(i), approx_files[i].first});
    }

    const double dnan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::array<double, 4>> metric_rows;
    for (std::size_t i = 0; i < approx.size(); ++i) {
        try {
            metric_rows.push_back({gd(approx[i], ref[i], o.normalize),
                                   igd(approx[i], ref[i], o.normalize),
                                   asd(approx[i], ref[i], o.normalize),
                                   hausdorff(approx[i], ref[i], o.normalize)});
        } catch (const EmptyFrontier&) {
            metric_rows.push_back({dnan, dnan, dnan, dnan});
        }
    }
    write_metrics_csv((fs::path(o.c.out) / "metrics.csv").string(), metric_rows);

    const fs::path plotdir = fs::path(o.c.out) / "plotdata";
    ensure_out_dir(plotdir.string());
    std::vector<double> gaps;
    for (std::size_t i = 0; i < approx.size(); ++i) {
        write_nq_csv((plotdir / ("nq-" + approx_files[i].first + "-approx.csv")).string(),
                     approx[i]);
        write_nq_csv((plotdir / ("nq-" + approx_files[i].first + "-reference.csv")).string(),
                     ref[i]);
        {
            // pointwise duty gap against the reference on the shared stage span
            std::vector<ObjectivePoint> pa = frontier_points(approx[i]);
            std::vector<ObjectivePoint> pb = frontier_points(ref[i]);
            if (pa.empty() || pb.empty()) continue;
            std::sort(pa.begin(), pa.end());
            std::sort(pb.begin(), pb.end());
            const double lo = std::max(pa.front()[0], pb.front()[0]);
            const double hi = std::min(pa.back()[0], pb.back()[0]);
            if (lo > hi) continue;
            std::set<double> grid;
            for (const auto& p : pa)
                if (p[0] >= lo && p[0] <= hi) grid.insert(p[0]);
            for (const auto& p : pb)
                if (p[0] >= lo && p[0] <= hi) grid.insert(p[0]);
            for (const double g : grid) {
                const double qa = interp_q(pa, g);
                const double qb = interp_q(pb, g);
                gaps.push_back(std::abs(qa - qb) / std::max(std::abs(qb), 1e-300));
            }
        }
    }
    {
        csv::Writer hist((plotdir / "error-hist.csv").string(),
                         {"kind", "bin_lo", "bin_hi", "count"});
        int emax = 0;
        for (const int e : err.error) emax = std::max(emax, e);
        for (int k = 0; k <= emax; ++k) {
            long count = 0;
            for (const int e : err.error) count += e == k ? 1 : 0;
            hist.row({"rank_error", std::to_string(k), std::to_string(k + 1),
                      std::to_string(count)});
        }
        const int nbins = 10;
        double gmax = 0.0;
        for (const double g : gaps) gmax = std::max(gmax, g);
        if (!gaps.empty() && gmax == 0.0) {
            hist.row({"q_rel_gap", "0", csv::fmt(1e-12), std::to_string(gaps.size())});
        } else if (!gaps.empty()) {
            for (int k = 0; k < nbins; ++k) {
                const double blo = gmax * k / nbins;
                const double bhi = gmax * (k + 1) / nbins;
                long count = 0;
                for (const double g : gaps)
                    if (g >= blo && (g < bhi || k == nbins - 1)) ++count;
                hist.row({"q_rel_gap", csv::fmt(blo), csv::fmt(bhi), std::to_string(count)});
            }
        }
    }

    std::cout << "ranking (best first):";
    for (const int id : ra.order) std::cout << " " << approx_files[static_cast<std::size_t>(id)].first;
    std::cout << "\nmean abs rank error vs reference: " << num(err.mean) << "\n";
    if (!ra.no_overlap.empty())
        std::cout << ra.no_overlap.size() << " candidate pairs had no comparable overlap\n";
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app(
        "surcol: ternary distillation flowsheets, from thermodynamics to "
        "surrogate-driven screening.\n"
        "Options can be set on the command line, via per-subcommand --config TOML "
        "files, or via SURCOL_* environment variables (e.g. SURCOL_SEED).");
    app.require_subcommand(1);
    app.set_version_flag("--version", "surcol 0.1.0");
    app.allow_config_extras(false);
    app.set_config("--config", "",
                   "TOML file with option defaults in a [subcommand] section; "
                   "command-line flags override it");

    std::map<const CLI::App*, std::function<void()>> runners;
    std::map<const CLI::App*, const std::string*> out_dirs;

    const auto mf = std::make_shared<MakeFluidsOpts>();
    {
        CLI::App* sub = app.add_subcommand(
            "make-fluids", "synthesize a library of random fluids that pass the check battery");
        add_common(sub, mf->c);
        sub->add_option("--count", mf->count, "fluids to produce")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->add_option("--max-attempts", mf->max_attempts,
                        "draw budget, 0 = 400 per requested fluid")
            ->capture_default_str();
        out_dirs[sub] = &mf->c.out;
        runners[sub] = [sub, mf] {
            ensure_out_dir(mf->c.out);
            write_snapshot(sub, mf->c.out);
            run_make_fluids(*mf);
        };
    }

    const auto cf = std::make_shared<CheckFluidsOpts>();
    {
        CLI::App* sub = app.add_subcommand(
            "check-fluids", "run the binary-VLE check battery over a fluid library");
        add_common(sub, cf->c);
        sub->add_option("--fluids", cf->fluids, "fluid library csv")->required();
        sub->add_option("--grid", cf->grid, "VLE grid points per binary edge")
            ->check(CLI::Range(11, 100001))
            ->capture_default_str();
        out_dirs[sub] = &cf->c.out;
        runners[sub] = [sub, cf] {
            ensure_out_dir(cf->c.out);
            write_snapshot(sub, cf->c.out);
            run_check_fluids(*cf);
        };
    }

    const auto gd_ = std::make_shared<GenDataOpts>();
    {
        CLI::App* sub = app.add_subcommand(
            "gen-data", "simulate random column specs per fluid into a training dataset");
        add_common(sub, gd_->c);
        sub->add_option("--fluids", gd_->fluids, "fluid library csv")->required();
        sub->add_option("--bounds", gd_->bounds, "TOML sampling bounds (pressures in bar)")
            ->capture_default_str();
        sub->add_option("--specs-per-fluid", gd_->specs_per_fluid,
                        "column specs per fluid; overrides the bounds file")
            ->capture_default_str();
        out_dirs[sub] = &gd_->c.out;
        runners[sub] = [sub, gd_] {
            ensure_out_dir(gd_->c.out);
            write_snapshot(sub, gd_->c.out);
            run_gen_data(*gd_);
        };
    }

    const auto tr = std::make_shared<TrainOpts>();
    {
        CLI::App* sub =
            app.add_subcommand("train", "fit the column surrogate network on a dataset");
        add_common(sub, tr->c);
        sub->add_option("--data", tr->data, "dataset csv")->required();
        sub->add_option("--val-frac", tr->val_frac, "validation fraction of the row split")
            ->check(CLI::Range(0.0, 0.9))
            ->capture_default_str();
        sub->add_option("--holdout-fluids", tr->holdout,
                        "file of fluid ids to exclude from training entirely")
            ->capture_default_str();
        sub->add_option("--layers", tr->layers, "network layer sizes, input to output")
            ->delimiter(',')
            ->capture_default_str();
        sub->add_option("--batch-size", tr->batch)->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->add_option("--schedule", tr->schedule,
                        "flattened (epochs, learning-rate) pairs, e.g. 800,1e-4,200,5e-5")
            ->delimiter(',')
            ->capture_default_str();
        out_dirs[sub] = &tr->c.out;
        runners[sub] = [sub, tr] {
            ensure_out_dir(tr->c.out);
            write_snapshot(sub, tr->c.out);
            run_train(*tr);
        };
    }

    const auto ca = std::make_shared<CalibrateOpts>();
    {
        CLI::App* sub = app.add_subcommand(
            "calibrate", "attach split-conformal interval radii to a trained checkpoint");
        add_common(sub, ca->c);
        sub->add_option("--data", ca->data, "dataset csv")->required();
        sub->add_option("--model", ca->model, "trained checkpoint json")->required();
        sub->add_option("--val-frac", ca->val_frac,
                        "calibrate on this validation fraction (same split as train); 0 = whole file")
            ->check(CLI::Range(0.0, 0.9))
            ->capture_default_str();
        sub->add_option("--holdout-fluids", ca->holdout, "file of fluid ids to strip first")
            ->capture_default_str();
        sub->add_option("--level", ca->level, "target coverage level")
            ->check(CLI::Range(0.5, 0.999))
            ->capture_default_str();
        out_dirs[sub] = &ca->c.out;
        runners[sub] = [sub, ca] {
            ensure_out_dir(ca->c.out);
            write_snapshot(sub, ca->c.out);
            run_calibrate(*ca);
        };
    }

    const auto ev = std::make_shared<EvaluateOpts>();
    {
        CLI::App* sub = app.add_subcommand(
            "evaluate", "per-target RMSE and interval coverage of a checkpoint on a dataset");
        add_common(sub, ev->c);
        sub->add_option("--data", ev->data, "dataset csv")->required();
        sub->add_option("--model", ev->model, "checkpoint json")->required();
        sub->add_option("--holdout-fluids", ev->holdout,
                        "file of fluid ids; evaluate only their rows")
            ->capture_default_str();
        out_dirs[sub] = &ev->c.out;
        runners[sub] = [sub, ev] {
            ensure_out_dir(ev->c.out);
            write_snapshot(sub, ev->c.out);
            run_evaluate(*ev);
        };
    }

    const auto si = std::make_shared<SimulateOpts>();
    {
        CLI::App* sub =
            app.add_subcommand("simulate", "evaluate one flowsheet, rigorous or surrogate");
        si->c.out = ".";
        add_common(sub, si->c, /*out_required=*/false);
        sub->add_option("--fluid", si->fluid, "fluid id within --fluids")->required();
        sub->add_option("--fluids", si->fluids, "fluid library csv")->required();
        sub->add_option("--spec", si->spec, "flowsheet TOML")->required();
        sub->add_option("--mode", si->mode, "rigorous | surrogate | oracle")
            ->check(CLI::IsMember({"rigorous", "surrogate", "oracle"}))
            ->capture_default_str();
        sub->add_option("--model", si->model, "checkpoint json (surrogate mode)")
            ->capture_default_str();
        sub->add_option("--shift", si->shift, "confidence shift for surrogate mode")
            ->check(CLI::IsMember({"nominal", "best", "worst"}))
            ->capture_default_str();
        out_dirs[sub] = &si->c.out;
        runners[sub] = [sub, si] {
            ensure_out_dir(si->c.out);
            write_snapshot(sub, si->c.out);
            run_simulate(*si);
        };
    }

    const auto op = std::make_shared<OptimizeOpts>();
    {
        CLI::App* sub = app.add_subcommand(
            "optimize", "trace NQ frontiers for every candidate fluid by epsilon constraint");
        add_common(sub, op->c);
        sub->add_option("--flowsheet", op->flowsheet, "flowsheet TOML")->required();
        sub->add_option("--candidates", op->candidates, "candidate fluid library csv")
            ->required();
        sub->add_option("--mode", op->modes,
                        "rigorous | surrogate | surrogate-best | surrogate-worst (repeatable)")
            ->delimiter(',')
            ->check(CLI::IsMember(
                {"rigorous", "surrogate", "surrogate-best", "surrogate-worst"}))
            ->capture_default_str();
        sub->add_option("--model", op->model, "checkpoint json (network surrogate modes)")
            ->capture_default_str();
        sub->add_option("--epsilon-grid", op->eps, "stage-count bounds, e.g. 21,27,33")
            ->delimiter(',')
            ->required();
        sub->add_option("--starts", op->starts, "continuous sub-solves per epsilon")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->add_option("--warm-from", op->warm_from,
                        "previous optimize output directory to warm-start from")
            ->capture_default_str();
        sub->add_option("--x-min", op->x_min, "purity floor per designated product")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
        sub->add_option("--l-min-frac", op->l_min_frac,
                        "product flow floor, fraction of the stoichiometric flow")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
        sub->add_option("--eval-budget", op->budget, "flowsheet evaluations per sub-solve")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->add_flag("--oracle-closure", op->oracle,
                      "close the surrogate mode on the rigorous column model (validation aid)");
        out_dirs[sub] = &op->c.out;
        runners[sub] = [sub, op] {
            ensure_out_dir(op->c.out);
            write_snapshot(sub, op->c.out);
            run_optimize(*op);
        };
    }

    const auto rk = std::make_shared<RankOpts>();
    {
        CLI::App* sub = app.add_subcommand(
            "rank", "Copeland-rank candidate frontiers and score them against a reference");
        add_common(sub, rk->c);
        sub->add_option("--frontiers", rk->frontiers,
                        "directory with <candidate>/frontier.csv entries")
            ->required();
        sub->add_option("--reference", rk->reference, "same layout, reference frontiers")
            ->required();
        sub->add_option("--mode", rk->mode,
                        "frontier mode to rank when files carry several (default: first)")
            ->capture_default_str();
        sub->add_option("--reference-mode", rk->ref_mode,
                        "mode picked from the reference files (default: first)")
            ->capture_default_str();
        sub->add_flag("--normalize", rk->normalize,
                      "min-max scale objectives before distance metrics");
        out_dirs[sub] = &rk->c.out;
        runners[sub] = [sub, rk] {
            ensure_out_dir(rk->c.out);
            write_snapshot(sub, rk->c.out);
            run_rank(*rk);
        };
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const CLI::App* active = app.get_subcommands().front();
    try {
        runners.at(active)();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        if (numerical_failure(e)) {
            std::cerr << "numerical failure: " << e.what() << "\n";
            const std::string* out = out_dirs.count(active) ? out_dirs.at(active) : nullptr;
            const std::string dir = out && !out->empty() ? *out : ".";
            try {
                write_diagnostics(dir, active->get_name(), e);
                std::cerr << "diagnostics: " << (fs::path(dir) / "diagnostics.json").string()
                          << "\n";
            } catch (const std::exception& d) {
                std::cerr << "(could not write diagnostics: " << d.what() << ")\n";
            }
            return 4;
        }
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace surcol
