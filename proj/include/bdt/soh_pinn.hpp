#pragma once

#include "bdt/features.hpp"
#include "bdt/mlp.hpp"

#include <random>
#include <string>
#include <vector>

namespace bdt {

struct PinnLossConfig {
    double lambda_mono = 1.0;
    double lambda_phys = 0.1;
    int n_colloc = 64;
    double b1 = 0.0, b2 = 0.0; // fade-law coefficients, least-squares fitted
    double q_nom = 2.0;
};

// SOH predictor: tanh MLP with a sigmoid output squashed to [0.5, 1.05].
struct SohModel {
    Mlp net; // sizes [d, 64, 64, 1], linear head
    Normalizer norm;
    PinnLossConfig cfg;
    int max_cycle = 1;
    double out_lo = 0.5, out_hi = 1.05;

    double forward(const std::vector<double>& z) const;
    double predict_row(const FeatureRow& row) const;

    void save(const std::string& path, const std::string& comment = "") const;
    static SohModel load(const std::string& path);
};

struct CollocPoint {
    Eigen::VectorXd x; // standardized features with resampled cycle_norm
    double n;          // de-normalized cycle index
};

// Training rows with resampled cycle positions, n uniform on [1, max_cycle].
std::vector<CollocPoint> sample_colloc(const std::vector<Eigen::VectorXd>& train_z,
                                       const SohModel& model, int count, std::mt19937_64& rng);

struct LossParts {
    double total = 0.0, data = 0.0, mono = 0.0, phys = 0.0;
};

// Composite loss: MSE + lambda_mono * monotonicity penalty + lambda_phys *
// fade-law residual at the collocation points. Accumulates gradients when
// grads is non-null.
LossParts pinn_loss(const SohModel& model, const std::vector<Eigen::VectorXd>& batch_z,
                    const std::vector<double>& batch_y, const std::vector<CollocPoint>& colloc,
                    LayerGrads* grads);

// Model input-derivative with respect to the standardized cycle_norm feature.
double cycle_derivative(const SohModel& model, const Eigen::VectorXd& z);

struct TrainLog {
    std::vector<double> epoch_loss;
};

struct SohTrainOptions {
    int epochs = 300;
    int batch_size = 64;
    double lr = 1e-3;
    PinnLossConfig loss;
};

// Fits the fade law, trains with Adam; deterministic per seed.
std::pair<SohModel, TrainLog> train_soh(const std::vector<FeatureRow>& train,
                                        const SohTrainOptions& opt, unsigned long long seed);

struct Prediction {
    std::string cell_id;
    int cycle;
    double soh_pred;
    std::optional<double> soh_true;
};

std::vector<Prediction> predict_soh(const SohModel& model, const std::vector<FeatureRow>& rows);

// Pooled and per-cell-track MAPE over predictions carrying labels.
double pooled_mape(const std::vector<Prediction>& preds);
std::map<std::string, double> per_track_mape(const std::vector<Prediction>& preds);

void write_predictions_csv(const std::string& path, const std::vector<Prediction>& preds,
                           const std::string& comment = "");

} // namespace bdt
