#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "surcol/datagen.hpp"

namespace surcol {

// Raw feed-forward core operating in standardized space: rectifier on every
// layer but the last, linear output. Weights are (out x in), data matrices
// carry one sample per row.
struct Net {
    std::vector<int> dims;
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
};

Net make_net(const std::vector<int>& dims, std::uint64_t seed);
Eigen::MatrixXd net_forward(const Net& net, const Eigen::MatrixXd& x);

// Mean-squared-error loss over all entries plus its gradient with respect to
// every weight and bias. Gradient containers are resized as needed.
double net_loss_and_gradients(const Net& net, const Eigen::MatrixXd& x,
                              const Eigen::MatrixXd& y, std::vector<Eigen::MatrixXd>& gw,
                              std::vector<Eigen::VectorXd>& gb);

struct Scaler {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;  // zero-variance columns are stored as 1.0
};

Scaler fit_scaler(const Eigen::MatrixXd& x);

struct MlpModel {
    Net net;
    Scaler input_scaler;
    Scaler target_scaler;
};

struct TrainConfig {
    std::vector<int> layer_dims = {22, 256, 128, 64, 5};
    int batch_size = 64;
    std::vector<std::pair<int, double>> schedule = {{800, 1e-4}, {200, 5e-5}};
    std::uint64_t seed = 0;
};

struct EpochLoss {
    double train_mse = 0.0;  // minibatch average over the epoch, standardized
    double val_mse = 0.0;    // full validation pass after the epoch
};

struct TrainResult {
    MlpModel model;
    std::vector<EpochLoss> history;
};

Eigen::MatrixXd dataset_features(const Dataset& ds);
Eigen::MatrixXd dataset_targets(const Dataset& ds);

TrainResult train(const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg);

// Destandardized prediction; the batch form loops the single-row path so both
// agree exactly.
Eigen::VectorXd predict(const MlpModel& model, const Eigen::VectorXd& features);
Eigen::MatrixXd predict(const MlpModel& model, const Eigen::MatrixXd& features);

struct EvalResult {
    Eigen::VectorXd rmse;       // per target, natural units
    Eigen::MatrixXd residuals;  // rigorous minus surrogate, one row per sample
};

EvalResult evaluate(const MlpModel& model, const Dataset& test);

struct ConformalCalibration {
    double level = 0.95;
    Eigen::VectorXd delta;  // per-target interval radius, natural units
};

// Split-conformal radii: the ceil((n+1)*level)-th order statistic of absolute
// validation residuals per target. TooFewSamples below 20 rows.
ConformalCalibration calibrate_conformal(const MlpModel& model, const Dataset& val,
                                         double level = 0.95);

// Per-target fraction of rows whose true value lies in [pred - d, pred + d].
Eigen::VectorXd empirical_coverage(const MlpModel& model, const ConformalCalibration& calib,
                                   const Dataset& test);

void write_losses_csv(const std::string& path, const std::vector<EpochLoss>& history);

struct Checkpoint {
    MlpModel model;
    ConformalCalibration calib;  // delta empty when not calibrated
};

void save_checkpoint(const std::string& path, const MlpModel& model,
                     const ConformalCalibration& calib = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace surcol
