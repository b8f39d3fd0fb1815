#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "surcol/csv.hpp"
#include "surcol/mlp.hpp"
#include "testutil.hpp"

using namespace surcol;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
    const fs::path d = fs::temp_directory_path() / "surcol-mlp-test";
    fs::create_directories(d);
    return d;
}

// Synthetic regression data: features on deliberately mixed scales, targets
// from a fixed linear map plus optional noise.
Dataset linear_dataset(int n, std::uint64_t seed, double noise) {
    Rng wrng(1234);  // one shared map across splits
    Eigen::MatrixXd w(kTargetCount, kFeatureCount);
    for (int r = 0; r < kTargetCount; ++r)
        for (int c = 0; c < kFeatureCount; ++c) w(r, c) = wrng.uniform(-1.0, 1.0);
    Rng rng(seed);
    Dataset ds;
    for (int i = 0; i < n; ++i) {
        DataRow row;
        row.fluid_id = "SYN";
        Eigen::VectorXd x(kFeatureCount);
        for (int k = 0; k < kFeatureCount; ++k) {
            const double scale = std::pow(10.0, k % 4);
            x[k] = rng.uniform(-scale, scale);
            row.features[k] = x[k];
        }
        const Eigen::VectorXd y = w * x;
        for (int t = 0; t < kTargetCount; ++t)
            row.targets[t] = y[t] / 10.0 + noise * rng.normal();
        ds.rows.push_back(row);
    }
    return ds;
}

MlpModel zero_model(const Eigen::VectorXd& target_mean) {
    MlpModel m;
    m.net.dims = {kFeatureCount, 4, kTargetCount};
    m.net.w = {Eigen::MatrixXd::Zero(4, kFeatureCount),
               Eigen::MatrixXd::Zero(kTargetCount, 4)};
    m.net.b = {Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(kTargetCount)};
    m.input_scaler.mean = Eigen::VectorXd::Zero(kFeatureCount);
    m.input_scaler.std = Eigen::VectorXd::Ones(kFeatureCount);
    m.target_scaler.mean = target_mean;
    m.target_scaler.std = Eigen::VectorXd::Ones(kTargetCount);
    return m;
}

}  // namespace

TEST_CASE("forward pass matches hand computation") {
    Net net;
    net.dims = {2, 2, 1};
    net.w.resize(2);
    net.b.resize(2);
    net.w[0] = Eigen::MatrixXd(2, 2);
    net.w[0] << 1.0, 2.0, -1.0, 0.5;
    net.b[0] = Eigen::VectorXd(2);
    net.b[0] << 0.5, -1.0;
    net.w[1] = Eigen::MatrixXd(1, 2);
    net.w[1] << 2.0, -3.0;
    net.b[1] = Eigen::VectorXd(1);
    net.b[1] << 0.25;

    Eigen::MatrixXd x(2, 2);
    x << 1.0, -2.0, 2.0, 1.0;
    const Eigen::MatrixXd out = net_forward(net, x);
    // row 0: pre-activations (-2.5, -3) clip to zero, output = bias
    CHECK(out(0, 0) == 0.25);
    // row 1: (4.5, -2.5) -> (4.5, 0) -> 2*4.5 + 0.25
    CHECK(out(1, 0) == 9.25);

    CHECK_THROWS_AS(net_forward(net, Eigen::MatrixXd::Zero(1, 3)), ShapeMismatch);
}

TEST_CASE("backpropagation matches central finite differences") {
    Rng rng(515);
    Net net = make_net({3, 4, 2}, 99);
    Eigen::MatrixXd x(8, 3), y(8, 2);
    for (Eigen::Index r = 0; r < 8; ++r) {
        for (int c = 0; c < 3; ++c) x(r, c) = rng.uniform(-2.0, 2.0);
        for (int c = 0; c < 2; ++c) y(r, c) = rng.uniform(-1.0, 1.0);
    }

    std::vector<Eigen::MatrixXd> gw;
    std::vector<Eigen::VectorXd> gb;
    net_loss_and_gradients(net, x, y, gw, gb);

    const double h = 1e-5;
    int checked = 0;
    while (checked < 100) {
        const int layer = static_cast<int>(rng.uniform_int(0, 1));
        const bool bias = rng.uniform() < 0.25;
        double* param;
        double analytic;
        if (bias) {
            const int i = static_cast<int>(rng.uniform_int(0, net.b[layer].size() - 1));
            param = &net.b[layer][i];
            analytic = gb[layer][i];
        } else {
            const int i = static_cast<int>(rng.uniform_int(0, net.w[layer].size() - 1));
            param = net.w[layer].data() + i;
            analytic = gw[layer].data()[i];
        }
        std::vector<Eigen::MatrixXd> dw;
        std::vector<Eigen::VectorXd> db;
        const double saved = *param;
        *param = saved + h;
        const double lp = net_loss_and_gradients(net, x, y, dw, db);
        *param = saved - h;
        const double lm = net_loss_and_gradients(net, x, y, dw, db);
        *param = saved;
        const double fd = (lp - lm) / (2.0 * h);
        CHECK(std::abs(analytic - fd) <=
              1e-6 * std::max({std::abs(analytic), std::abs(fd), 1e-4}));
        ++checked;
    }
}

TEST_CASE("scaler fitting and degenerate columns") {
    Eigen::MatrixXd x(4, 3);
    x << 1.0, 5.0, 2.0, 3.0, 5.0, 4.0, 5.0, 5.0, 6.0, 7.0, 5.0, 8.0;
    const Scaler s = fit_scaler(x);
    CHECK(s.mean[0] == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(s.mean[1] == 5.0);
    CHECK(s.std[0] == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
    CHECK(s.std[1] == 1.0);  // constant column
    CHECK(s.std[2] == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
    CHECK_THROWS_AS(fit_scaler(Eigen::MatrixXd(0, 2)), ShapeMismatch);
}

TEST_CASE("training fits a constant map quickly") {
    Rng rng(77);
    Dataset ds;
    for (int i = 0; i < 512; ++i) {
        DataRow row;
        row.fluid_id = "C";
        for (int k = 0; k < kFeatureCount; ++k) row.features[k] = rng.uniform(0.0, 5.0);
        row.targets = {0.2, 0.3, 0.1, 0.4, 1000.0};
        ds.rows.push_back(row);
    }
    TrainConfig cfg;
    cfg.layer_dims = {22, 8, 5};
    // small batches give enough optimizer steps per epoch; each learning-rate
    // drop needs enough travel to contract from the previous oscillation level
    cfg.batch_size = 4;
    cfg.schedule = {{20, 1e-2}, {10, 1e-3}, {10, 1e-4}, {10, 1e-5}};
    cfg.seed = 3;
    const TrainResult res = train(ds, ds, cfg);
    REQUIRE(res.history.size() == 50);
    CHECK(res.history.back().train_mse < 1e-6);

    const Eigen::VectorXd p = predict(res.model, Eigen::VectorXd(dataset_features(ds).row(0)));
    CHECK(std::abs(p[0] - 0.2) < 1e-3);
    CHECK(std::abs(p[4] - 1000.0) < 1.0);
}

TEST_CASE("training learns a linear synthetic map") {
    const Dataset all = linear_dataset(6000, 2025, 0.0);
    Dataset tr, va;
    for (std::size_t i = 0; i < all.rows.size(); ++i)
        (i < 5000 ? tr : va).rows.push_back(all.rows[i]);

    TrainConfig cfg;
    cfg.layer_dims = {22, 64, 5};
    cfg.schedule = {{300, 1e-3}, {100, 2e-4}};
    cfg.seed = 11;
    const TrainResult res = train(tr, va, cfg);
    REQUIRE(res.history.size() == 400);
    CHECK(res.history.back().val_mse < 1e-3);
    CHECK(res.history[49].train_mse < res.history[0].train_mse);

    // determinism: identical config and data reproduce the weights bit-exactly
    const TrainResult res2 = train(tr, va, cfg);
    for (std::size_t l = 0; l < res.model.net.w.size(); ++l) {
        CHECK(res.model.net.w[l] == res2.model.net.w[l]);
        CHECK(res.model.net.b[l] == res2.model.net.b[l]);
    }

    TrainConfig bad = cfg;
    bad.layer_dims = {21, 8, 5};
    CHECK_THROWS_AS(train(tr, va, bad), ShapeMismatch);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(tr, va, bad), InvalidSpec);
    CHECK_THROWS_AS(train(Dataset{}, va, cfg), ShapeMismatch);
}

TEST_CASE("diverging training reports the epoch") {
    const Dataset ds = linear_dataset(128, 4, 0.0);
    TrainConfig cfg;
    cfg.layer_dims = {22, 8, 5};
    cfg.schedule = {{20, 1e200}};
    try {
        train(ds, ds, cfg);
        FAIL("expected DivergedLoss");
    } catch (const DivergedLoss& e) {
        CHECK(e.epoch >= 1);
        CHECK(e.epoch <= 20);
    }
}

TEST_CASE("prediction is destandardized, pure, and batch-consistent") {
    const Dataset ds = linear_dataset(120, 9, 0.0);
    const Eigen::MatrixXd y = dataset_targets(ds);
    const MlpModel zero = zero_model(y.colwise().mean().transpose());
    const Eigen::VectorXd p = predict(zero, Eigen::VectorXd(dataset_features(ds).row(0)));
    for (int t = 0; t < kTargetCount; ++t) CHECK(p[t] == zero.target_scaler.mean[t]);

    TrainConfig cfg;
    cfg.layer_dims = {22, 16, 5};
    cfg.schedule = {{5, 1e-3}};
    const MlpModel model = train(ds, ds, cfg).model;
    const Eigen::MatrixXd x = dataset_features(ds);
    const Eigen::MatrixXd batch = predict(model, x);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const Eigen::VectorXd single = predict(model, Eigen::VectorXd(x.row(r)));
        for (int t = 0; t < kTargetCount; ++t) CHECK(batch(r, t) == single[t]);
    }
    CHECK_THROWS_AS(predict(model, Eigen::VectorXd(Eigen::VectorXd::Zero(21))), ShapeMismatch);
}

TEST_CASE("evaluating a model against its own predictions gives zero error") {
    Dataset ds = linear_dataset(60, 21, 0.0);
    TrainConfig cfg;
    cfg.layer_dims = {22, 8, 5};
    cfg.schedule = {{3, 1e-3}};
    const MlpModel model = train(ds, ds, cfg).model;
    const Eigen::MatrixXd p = predict(model, dataset_features(ds));
    for (std::size_t i = 0; i < ds.rows.size(); ++i)
        for (int t = 0; t < kTargetCount; ++t) ds.rows[i].targets[t] = p(i, t);
    const EvalResult ev = evaluate(model, ds);
    for (int t = 0; t < kTargetCount; ++t) CHECK(ev.rmse[t] == 0.0);
    CHECK(ev.residuals.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conformal radius is the expected order statistic") {
    Dataset val;
    for (int i = 0; i < 100; ++i) {
        DataRow row;
        row.fluid_id = "R";
        row.features.fill(0.0);
        const double mag = static_cast<double>(i + 1);
        for (int t = 0; t < kTargetCount; ++t) row.targets[t] = (i % 2 ? mag : -mag);
        val.rows.push_back(row);
    }
    const MlpModel zero = zero_model(Eigen::VectorXd::Zero(kTargetCount));
    const ConformalCalibration calib = calibrate_conformal(zero, val, 0.95);
    for (int t = 0; t < kTargetCount; ++t) CHECK(calib.delta[t] == 96.0);  // ceil(101*0.95)

    // rank clamps to the sample maximum at extreme levels
    const ConformalCalibration extreme = calibrate_conformal(zero, val, 0.999);
    for (int t = 0; t < kTargetCount; ++t) CHECK(extreme.delta[t] == 100.0);

    // zero residuals give zero radii
    Dataset zeros;
    for (int i = 0; i < 25; ++i) {
        DataRow row;
        row.fluid_id = "Z";
        row.features.fill(0.0);
        row.targets.fill(0.0);
        zeros.rows.push_back(row);
    }
    const ConformalCalibration tight = calibrate_conformal(zero, zeros, 0.95);
    for (int t = 0; t < kTargetCount; ++t) CHECK(tight.delta[t] == 0.0);

    Dataset few;
    few.rows.assign(val.rows.begin(), val.rows.begin() + 19);
    CHECK_THROWS_AS(calibrate_conformal(zero, few, 0.95), TooFewSamples);
    CHECK_THROWS_AS(calibrate_conformal(zero, val, 1.0), InvalidSpec);
}

TEST_CASE("split-conformal intervals cover at the nominal rate") {
    const Dataset tr = linear_dataset(600, 31, 0.05);
    const Dataset cal = linear_dataset(500, 32, 0.05);
    const Dataset test = linear_dataset(2000, 33, 0.05);

    TrainConfig cfg;
    cfg.layer_dims = {22, 32, 5};
    cfg.schedule = {{60, 1e-3}};
    cfg.seed = 8;
    const MlpModel model = train(tr, cal, cfg).model;
    const ConformalCalibration calib = calibrate_conformal(model, cal, 0.95);
    const Eigen::VectorXd cov = empirical_coverage(model, calib, test);
    for (int t = 0; t < kTargetCount; ++t) {
        CHECK(cov[t] >= 0.93);
        CHECK(cov[t] <= 0.97);
    }
}

TEST_CASE("checkpoint round trip preserves predictions bit-exactly") {
    const Dataset ds = linear_dataset(200, 41, 0.02);
    TrainConfig cfg;
    cfg.layer_dims = {22, 16, 8, 5};
    cfg.schedule = {{10, 1e-3}};
    const MlpModel model = train(ds, ds, cfg).model;
    const ConformalCalibration calib = calibrate_conformal(model, ds, 0.95);

    const fs::path path = tmpdir() / "model.json";
    save_checkpoint(path.string(), model, calib);
    const Checkpoint cp = load_checkpoint(path.string());
    CHECK(cp.calib.level == calib.level);
    CHECK(cp.calib.delta == calib.delta);

    Rng rng(5);
    for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd x(kFeatureCount);
        for (int i = 0; i < kFeatureCount; ++i) x[i] = rng.uniform(-100.0, 100.0);
        const Eigen::VectorXd a = predict(model, x);
        const Eigen::VectorXd b = predict(cp.model, x);
        CHECK(a == b);
    }

    // unknown top-level keys are tolerated
    {
        std::ifstream in(path);
        nlohmann::json j = nlohmann::json::parse(in);
        in.close();
        j["future_field"] = {{"x", 1}};
        std::ofstream out(tmpdir() / "extra.json");
        out << j.dump();
    }
    CHECK_NOTHROW(load_checkpoint((tmpdir() / "extra.json").string()));

    // corruption in all its forms
    CHECK_THROWS_AS(load_checkpoint((tmpdir() / "absent.json").string()), CheckpointInvalid);
    {
        std::ofstream out(tmpdir() / "trunc.json");
        std::ifstream in(path);
        std::string text((std::istreambuf_iterator<char>(in)), {});
        out << text.substr(0, text.size() / 2);
    }
    CHECK_THROWS_AS(load_checkpoint((tmpdir() / "trunc.json").string()), CheckpointInvalid);
    {
        std::ifstream in(path);
        nlohmann::json j = nlohmann::json::parse(in);
        in.close();
        j["biases"].erase(0);
        std::ofstream out(tmpdir() / "shape.json");
        out << j.dump();
    }
    CHECK_THROWS_AS(load_checkpoint((tmpdir() / "shape.json").string()), CheckpointInvalid);
    {
        std::ifstream in(path);
        nlohmann::json j = nlohmann::json::parse(in);
        in.close();
        j["input_scaler"]["std"][0] = 0.0;
        std::ofstream out(tmpdir() / "scale.json");
        out << j.dump();
    }
    CHECK_THROWS_AS(load_checkpoint((tmpdir() / "scale.json").string()), CheckpointInvalid);
}

TEST_CASE("loss history lands on disk") {
    std::vector<EpochLoss> hist = {{0.5, 0.6}, {0.25, 0.3}, {0.125, 0.2}};
    const fs::path path = tmpdir() / "losses.csv";
    write_losses_csv(path.string(), hist);
    const csv::Table t = csv::read_file(path.string());
    REQUIRE(t.rows.size() == 3);
    CHECK(t.header == std::vector<std::string>{"epoch", "train_mse", "val_mse"});
    CHECK(csv::to_int(t.rows[0][0]) == 1);
    CHECK(csv::to_int(t.rows[2][0]) == 3);
    CHECK(csv::to_double(t.rows[1][1]) == 0.25);
    CHECK(csv::to_double(t.rows[2][2]) == 0.2);
}
