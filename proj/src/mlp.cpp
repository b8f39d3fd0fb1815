#include "surcol/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "surcol/csv.hpp"
#include "surcol/rng.hpp"

namespace surcol {

namespace {

void check_dims(const std::vector<int>& dims) {
    if (dims.size() < 2) throw ShapeMismatch("net: need at least input and output layers");
    for (const int d : dims)
        if (d < 1) throw ShapeMismatch("net: nonpositive layer width");
}

double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).squaredNorm() / (static_cast<double>(a.rows()) * a.cols());
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, const Scaler& s) {
    return (x.rowwise() - s.mean.transpose()).array().rowwise() /
           s.std.transpose().array();
}

}  // namespace

Net make_net(const std::vector<int>& dims, std::uint64_t seed) {
    check_dims(dims);
    Net net;
    net.dims = dims;
    Rng rng(Rng::substream(seed, "init"));
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int in = dims[l], out = dims[l + 1];
        const double limit = 1.0 / std::sqrt(static_cast<double>(in));
        Eigen::MatrixXd w(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) w(r, c) = rng.uniform(-limit, limit);
        net.w.push_back(std::move(w));
        net.b.emplace_back(Eigen::VectorXd::Zero(out));
    }
    return net;
}

Eigen::MatrixXd net_forward(const Net& net, const Eigen::MatrixXd& x) {
    if (x.cols() != net.dims.front()) throw ShapeMismatch("forward: input width mismatch");
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        a = (a * net.w[l].transpose()).rowwise() + net.b[l].transpose();
        if (l + 1 < net.w.size()) a = a.cwiseMax(0.0);
    }
    return a;
}

double net_loss_and_gradients(const Net& net, const Eigen::MatrixXd& x,
                              const Eigen::MatrixXd& y, std::vector<Eigen::MatrixXd>& gw,
                              std::vector<Eigen::VectorXd>& gb) {
    if (x.cols() != net.dims.front()) throw ShapeMismatch("loss: input width mismatch");
    if (y.cols() != net.dims.back() || y.rows() != x.rows())
        throw ShapeMismatch("loss: target shape mismatch");

    const std::size_t layers = net.w.size();
    std::vector<Eigen::MatrixXd> act(layers + 1);
    std::vector<Eigen::MatrixXd> pre(layers);
    act[0] = x;
    for (std::size_t l = 0; l < layers; ++l) {
        pre[l] = (act[l] * net.w[l].transpose()).rowwise() + net.b[l].transpose();
        act[l + 1] = l + 1 < layers ? pre[l].cwiseMax(0.0) : pre[l];
    }

    const double n_entries = static_cast<double>(x.rows()) * net.dims.back();
    const double loss = (act[layers] - y).squaredNorm() / n_entries;

    gw.resize(layers);
    gb.resize(layers);
    Eigen::MatrixXd delta = 2.0 / n_entries * (act[layers] - y);
    for (std::size_t l = layers; l-- > 0;) {
        gw[l] = delta.transpose() * act[l];
        gb[l] = delta.colwise().sum().transpose();
        if (l > 0)
            delta = (delta * net.w[l])
                        .cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    return loss;
}

Scaler fit_scaler(const Eigen::MatrixXd& x) {
    if (x.rows() == 0) throw ShapeMismatch("scaler: empty data");
    Scaler s;
    s.mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
    s.std = (centered.array().square().colwise().mean()).sqrt();
    for (Eigen::Index i = 0; i < s.std.size(); ++i)
        if (!(s.std[i] > 1e-12 * (1.0 + std::abs(s.mean[i])))) s.std[i] = 1.0;
    return s;
}

Eigen::MatrixXd dataset_features(const Dataset& ds) {
    Eigen::MatrixXd x(ds.rows.size(), kFeatureCount);
    for (std::size_t i = 0; i < ds.rows.size(); ++i)
        for (int k = 0; k < kFeatureCount; ++k) x(i, k) = ds.rows[i].features[k];
    return x;
}

Eigen::MatrixXd dataset_targets(const Dataset& ds) {
    Eigen::MatrixXd y(ds.rows.size(), kTargetCount);
    for (std::size_t i = 0; i < ds.rows.size(); ++i)
        for (int k = 0; k < kTargetCount; ++k) y(i, k) = ds.rows[i].targets[k];
    return y;
}

TrainResult train(const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg) {
    if (train_ds.rows.empty() || val_ds.rows.empty())
        throw ShapeMismatch("train: empty dataset");
    check_dims(cfg.layer_dims);
    if (cfg.layer_dims.front() != kFeatureCount || cfg.layer_dims.back() != kTargetCount)
        throw ShapeMismatch("train: network must map features to targets");
    if (cfg.batch_size < 1) throw InvalidSpec("train: batch_size must be positive");
    if (cfg.schedule.empty()) throw InvalidSpec("train: empty schedule");
    for (const auto& [epochs, lr] : cfg.schedule)
        if (epochs < 0 || !(lr > 0.0)) throw InvalidSpec("train: bad schedule entry");

    MlpModel model;
    model.input_scaler = fit_scaler(dataset_features(train_ds));
    model.target_scaler = fit_scaler(dataset_targets(train_ds));
    const Eigen::MatrixXd xs = standardize(dataset_features(train_ds), model.input_scaler);
    const Eigen::MatrixXd ys = standardize(dataset_targets(train_ds), model.target_scaler);
    const Eigen::MatrixXd xv = standardize(dataset_features(val_ds), model.input_scaler);
    const Eigen::MatrixXd yv = standardize(dataset_targets(val_ds), model.target_scaler);

    Net net = make_net(cfg.layer_dims, cfg.seed);
    const std::size_t layers = net.w.size();
    std::vector<Eigen::MatrixXd> gw, mw(layers), vw(layers);
    std::vector<Eigen::VectorXd> gb, mb(layers), vb(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        mw[l] = Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols());
        vw[l] = mw[l];
        mb[l] = Eigen::VectorXd::Zero(net.b[l].size());
        vb[l] = mb[l];
    }

    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
    long step = 0;
    const auto n = static_cast<std::int64_t>(train_ds.rows.size());
    std::vector<std::int64_t> perm(n);
    for (std::int64_t i = 0; i < n; ++i) perm[i] = i;

    Rng shuffle_rng(Rng::substream(cfg.seed, "shuffle"));
    TrainResult out;
    int epoch_index = 0;
    for (const auto& [epochs, lr] : cfg.schedule) {
        for (int e = 0; e < epochs; ++e) {
            ++epoch_index;
            for (std::int64_t i = n; i > 1; --i)
                std::swap(perm[i - 1], perm[shuffle_rng.uniform_int(0, i - 1)]);

            double loss_sum = 0.0;
            for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
                const std::int64_t rows = std::min<std::int64_t>(cfg.batch_size, n - start);
                Eigen::MatrixXd xb(rows, xs.cols()), yb(rows, ys.cols());
                for (std::int64_t r = 0; r < rows; ++r) {
                    xb.row(r) = xs.row(perm[start + r]);
                    yb.row(r) = ys.row(perm[start + r]);
                }
                const double loss = net_loss_and_gradients(net, xb, yb, gw, gb);
                if (!std::isfinite(loss))
                    throw DivergedLoss("training loss is not finite", epoch_index);
                loss_sum += loss * static_cast<double>(rows);

                ++step;
                const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
                for (std::size_t l = 0; l < layers; ++l) {
                    mw[l] = kBeta1 * mw[l] + (1.0 - kBeta1) * gw[l];
                    vw[l].array() = kBeta2 * vw[l].array() + (1.0 - kBeta2) * gw[l].array().square();
                    net.w[l].array() -=
                        lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + kAdamEps);
                    mb[l] = kBeta1 * mb[l] + (1.0 - kBeta1) * gb[l];
                    vb[l].array() = kBeta2 * vb[l].array() + (1.0 - kBeta2) * gb[l].array().square();
                    net.b[l].array() -=
                        lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + kAdamEps);
                }
            }

            EpochLoss entry;
            entry.train_mse = loss_sum / static_cast<double>(n);
            entry.val_mse = mse(net_forward(net, xv), yv);
            if (!std::isfinite(entry.val_mse))
                throw DivergedLoss("validation loss is not finite", epoch_index);
            out.history.push_back(entry);
        }
    }
    model.net = std::move(net);
    out.model = std::move(model);
    return out;
}

Eigen::VectorXd predict(const MlpModel& model, const Eigen::VectorXd& features) {
    if (features.size() != model.net.dims.front())
        throw ShapeMismatch("predict: input width mismatch");
    Eigen::VectorXd a =
        (features - model.input_scaler.mean).cwiseQuotient(model.input_scaler.std);
    for (std::size_t l = 0; l < model.net.w.size(); ++l) {
        a = model.net.w[l] * a + model.net.b[l];
        if (l + 1 < model.net.w.size()) a = a.cwiseMax(0.0);
    }
    return a.cwiseProduct(model.target_scaler.std) + model.target_scaler.mean;
}

Eigen::MatrixXd predict(const MlpModel& model, const Eigen::MatrixXd& features) {
    Eigen::MatrixXd out(features.rows(), model.net.dims.back());
    for (Eigen::Index r = 0; r < features.rows(); ++r)
        out.row(r) = predict(model, Eigen::VectorXd(features.row(r))).transpose();
    return out;
}

EvalResult evaluate(const MlpModel& model, const Dataset& test) {
    if (test.rows.empty()) throw ShapeMismatch("evaluate: empty dataset");
    const Eigen::MatrixXd y = dataset_targets(test);
    const Eigen::MatrixXd p = predict(model, dataset_features(test));
    EvalResult res;
    res.residuals = y - p;
    res.rmse = res.residuals.array().square().colwise().mean().sqrt();
    return res;
}

ConformalCalibration calibrate_conformal(const MlpModel& model, const Dataset& val,
                                         double level) {
    if (!(level > 0.0 && level < 1.0)) throw InvalidSpec("calibrate: level outside (0,1)");
    const auto n = static_cast<std::int64_t>(val.rows.size());
    if (n < 20) throw TooFewSamples("calibrate: need at least 20 validation rows");
    const Eigen::MatrixXd abs_res = evaluate(model, val).residuals.cwiseAbs();

    ConformalCalibration calib;
    calib.level = level;
    calib.delta.resize(abs_res.cols());
    const auto rank =
        std::min<std::int64_t>(n, static_cast<std::int64_t>(
                                      std::ceil((static_cast<double>(n) + 1.0) * level)));
    for (Eigen::Index t = 0; t < abs_res.cols(); ++t) {
        std::vector<double> v(abs_res.col(t).data(), abs_res.col(t).data() + n);
        std::nth_element(v.begin(), v.begin() + (rank - 1), v.end());
        calib.delta[t] = v[rank - 1];
    }
    return calib;
}

Eigen::VectorXd empirical_coverage(const MlpModel& model, const ConformalCalibration& calib,
                                   const Dataset& test) {
    const Eigen::MatrixXd abs_res = evaluate(model, test).residuals.cwiseAbs();
    if (calib.delta.size() != abs_res.cols())
        throw ShapeMismatch("coverage: calibration width mismatch");
    Eigen::VectorXd cov(abs_res.cols());
    for (Eigen::Index t = 0; t < abs_res.cols(); ++t)
        cov[t] = (abs_res.col(t).array() <= calib.delta[t]).cast<double>().mean();
    return cov;
}

void write_losses_csv(const std::string& path, const std::vector<EpochLoss>& history) {
    csv::Writer out(path, {"epoch", "train_mse", "val_mse"});
    for (std::size_t e = 0; e < history.size(); ++e)
        out.row({std::to_string(e + 1), csv::fmt(history[e].train_mse),
                 csv::fmt(history[e].val_mse)});
}

namespace {

nlohmann::ordered_json scaler_json(const Scaler& s) {
    return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
            {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

Scaler scaler_from_json(const nlohmann::json& j, int expect) {
    Scaler s;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto std_ = j.at("std").get<std::vector<double>>();
    if (static_cast<int>(mean.size()) != expect || static_cast<int>(std_.size()) != expect)
        throw CheckpointInvalid("checkpoint: scaler width mismatch");
    s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), expect);
    s.std = Eigen::Map<const Eigen::VectorXd>(std_.data(), expect);
    for (int i = 0; i < expect; ++i)
        if (!(std::isfinite(s.mean[i]) && s.std[i] > 0.0))
            throw CheckpointInvalid("checkpoint: bad scaler entries");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const MlpModel& model,
                     const ConformalCalibration& calib) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["layer_dims"] = model.net.dims;
    nlohmann::ordered_json weights = nlohmann::ordered_json::array();
    nlohmann::ordered_json biases = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < model.net.w.size(); ++l) {
        std::vector<double> flat;
        flat.reserve(model.net.w[l].size());
        for (Eigen::Index r = 0; r < model.net.w[l].rows(); ++r)
            for (Eigen::Index c = 0; c < model.net.w[l].cols(); ++c)
                flat.push_back(model.net.w[l](r, c));
        weights.push_back(flat);
        biases.push_back(std::vector<double>(model.net.b[l].data(),
                                             model.net.b[l].data() + model.net.b[l].size()));
    }
    j["weights"] = std::move(weights);
    j["biases"] = std::move(biases);
    j["input_scaler"] = scaler_json(model.input_scaler);
    j["target_scaler"] = scaler_json(model.target_scaler);
    if (calib.delta.size() > 0)
        j["calibration"] = {
            {"level", calib.level},
            {"delta",
             std::vector<double>(calib.delta.data(), calib.delta.data() + calib.delta.size())}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointInvalid("checkpoint: cannot open " + path);
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        if (j.at("schema_version").get<int>() != 1)
            throw CheckpointInvalid("checkpoint: unsupported schema version");
        Checkpoint cp;
        cp.model.net.dims = j.at("layer_dims").get<std::vector<int>>();
        check_dims(cp.model.net.dims);
        const auto& dims = cp.model.net.dims;
        const auto& weights = j.at("weights");
        const auto& biases = j.at("biases");
        if (weights.size() + 1 != dims.size() || biases.size() + 1 != dims.size())
            throw CheckpointInvalid("checkpoint: layer count mismatch");
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            const auto flat = weights[l].get<std::vector<double>>();
            const auto bias = biases[l].get<std::vector<double>>();
            const int rows = dims[l + 1], cols = dims[l];
            if (static_cast<int>(flat.size()) != rows * cols ||
                static_cast<int>(bias.size()) != rows)
                throw CheckpointInvalid("checkpoint: weight shape mismatch");
            Eigen::MatrixXd w(rows, cols);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) {
                    w(r, c) = flat[static_cast<std::size_t>(r) * cols + c];
                    if (!std::isfinite(w(r, c)))
                        throw CheckpointInvalid("checkpoint: non-finite weight");
                }
            cp.model.net.w.push_back(std::move(w));
            cp.model.net.b.push_back(Eigen::Map<const Eigen::VectorXd>(bias.data(), rows));
        }
        cp.model.input_scaler = scaler_from_json(j.at("input_scaler"), dims.front());
        cp.model.target_scaler = scaler_from_json(j.at("target_scaler"), dims.back());
        if (j.contains("calibration")) {
            const auto& jc = j.at("calibration");
            cp.calib.level = jc.at("level").get<double>();
            const auto delta = jc.at("delta").get<std::vector<double>>();
            if (static_cast<int>(delta.size()) != dims.back())
                throw CheckpointInvalid("checkpoint: calibration width mismatch");
            if (!(cp.calib.level > 0.0 && cp.calib.level < 1.0))
                throw CheckpointInvalid("checkpoint: bad confidence level");
            for (const double d : delta)
                if (!(d >= 0.0)) throw CheckpointInvalid("checkpoint: negative radius");
            cp.calib.delta = Eigen::Map<const Eigen::VectorXd>(delta.data(), delta.size());
        }
        return cp;
    } catch (const CheckpointInvalid&) {
        throw;
    } catch (const ShapeMismatch& e) {
        throw CheckpointInvalid(std::string("checkpoint: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointInvalid(std::string("checkpoint: ") + e.what());
    }
}

}  // namespace surcol
