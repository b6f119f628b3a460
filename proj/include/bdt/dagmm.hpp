#pragma once

#include "bdt/features.hpp"
#include "bdt/mlp.hpp"

#include <string>
#include <vector>

namespace bdt {

struct GmmStats {
    Eigen::VectorXd phi;                // K mixture weights, sums to 1
    Eigen::MatrixXd mu;                 // K x 4 component means
    std::vector<Eigen::MatrixXd> sigma; // K covariance matrices (4x4), eps-regularized
    double eps = 1e-6;

    int components() const { return static_cast<int>(phi.size()); }
};

struct DagmmConfig {
    int K = 3;
    double eps = 1e-6;
    double lambda1 = 0.1;   // energy weight
    double lambda2 = 0.005; // covariance-diagonal penalty weight
    int epochs = 200;
    int batch_size = 128;
    double lr = 1e-3;
};

struct DagmmModel {
    Mlp encoder; // [d, 8, 2], linear code head
    Mlp decoder; // [2, 8, d], linear output
    Mlp estnet;  // [4, 10, K], linear logits (softmax applied outside)
    GmmStats stats;
    Normalizer norm;
    DagmmConfig cfg;
    std::vector<double> train_energy_sorted; // for percentile ranks

    void save(const std::string& path, const std::string& comment = "") const;
    static DagmmModel load(const std::string& path);
};

// z = [code(2), relative reconstruction distance, cosine similarity].
Eigen::VectorXd build_z(const DagmmModel& model, const Eigen::VectorXd& x);

// Responsibility-weighted mixture moments; starved components (sum gamma_k
// < 1e-8) are reset to the batch mean with unit covariance.
GmmStats gmm_update(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& gamma, double eps = 1e-6);

struct EnergyScore {
    double value = 0.0;      // nats
    Eigen::VectorXd gamma;   // per-component responsibilities, sums to 1
};

// E(z) = -log sum_k phi_k N(z; mu_k, Sigma_k), via Cholesky + log-sum-exp.
EnergyScore energy(const GmmStats& stats, const Eigen::VectorXd& z);

// Joint batch loss (reconstruction + lambda1 * mean energy under batch GMM
// stats + lambda2 * covariance penalty). Gradients flow through the GMM stats.
// Pass nullptr grads for a forward-only evaluation.
double dagmm_batch_loss(const DagmmModel& model, const std::vector<Eigen::VectorXd>& X,
                        const DagmmConfig& cfg, LayerGrads* enc_g, LayerGrads* dec_g,
                        LayerGrads* est_g, GmmStats* out_stats = nullptr);

std::pair<DagmmModel, std::vector<double>> train_dagmm(const std::vector<FeatureRow>& train,
                                                       const DagmmConfig& cfg,
                                                       unsigned long long seed);

struct UncertaintyRow {
    std::string cell_id;
    int cycle = 0;
    double energy = 0.0;
    double energy_percentile = 0.0; // 0..100 within the training distribution
};

std::vector<UncertaintyRow> score_dagmm(const DagmmModel& model,
                                        const std::vector<FeatureRow>& rows);
// Scores an already-standardized input vector.
double score_one(const DagmmModel& model, const Eigen::VectorXd& z_features);
double energy_percentile(const DagmmModel& model, double e);

void write_uncertainty_csv(const std::string& path, const std::vector<UncertaintyRow>& rows,
                           const std::string& comment = "");

} // namespace bdt
