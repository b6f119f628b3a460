#include "bdt/dagmm.hpp"

#include "bdt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

namespace bdt {

namespace {

constexpr int kZDim = 4;
constexpr double kLog2Pi = 1.8378770664093453;

struct ZParts {
    Eigen::VectorXd code;   // 2
    Eigen::VectorXd xhat;   // d
    Eigen::VectorXd z;      // 4
    Mlp::Trace enc_trace, dec_trace;
};

ZParts build_z_traced(const DagmmModel& m, const Eigen::VectorXd& x) {
    ZParts p;
    p.code = m.encoder.forward(x, &p.enc_trace);
    p.xhat = m.decoder.forward(p.code, &p.dec_trace);
    Eigen::VectorXd e = x - p.xhat;
    double nx = x.norm(), ne = e.norm(), nh = p.xhat.norm();
    double rd = nx > 0.0 ? ne / nx : ne;
    double cs = (nx > 0.0 && nh > 0.0) ? x.dot(p.xhat) / (nx * nh) : 0.0;
    p.z.resize(kZDim);
    p.z << p.code(0), p.code(1), rd, cs;
    return p;
}

// Cholesky with its log determinant; throws on non-PD input.
struct CompChol {
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::MatrixXd precision;
    double logdet = 0.0;
};

CompChol comp_chol(const Eigen::MatrixXd& sigma) {
    CompChol c;
    c.llt.compute(sigma);
    if (c.llt.info() != Eigen::Success)
        throw NumericalError("dagmm: covariance not positive definite after regularization");
    c.logdet = 0.0;
    for (int i = 0; i < sigma.rows(); ++i)
        c.logdet += 2.0 * std::log(c.llt.matrixL()(i, i));
    c.precision = c.llt.solve(Eigen::MatrixXd::Identity(sigma.rows(), sigma.cols()));
    return c;
}

} // namespace

Eigen::VectorXd build_z(const DagmmModel& model, const Eigen::VectorXd& x) {
    return build_z_traced(model, x).z;
}

GmmStats gmm_update(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& gamma, double eps) {
    const int N = static_cast<int>(Z.rows());
    const int K = static_cast<int>(gamma.cols());
    const int D = static_cast<int>(Z.cols());
    if (N < K) throw InputError("gmm_update: need at least K rows");
    if (gamma.rows() != N) throw InputError("gmm_update: Z/gamma row mismatch");

    GmmStats s;
    s.eps = eps;
    s.phi.resize(K);
    s.mu.resize(K, D);
    s.sigma.assign(K, Eigen::MatrixXd::Zero(D, D));
    Eigen::VectorXd batch_mean = Z.colwise().mean();

    for (int k = 0; k < K; ++k) {
        double G = gamma.col(k).sum();
        s.phi(k) = G / N;
        if (G < 1e-8) {
            std::cerr << "warning: gmm component " << k << " starved; reset to batch mean\n";
            s.mu.row(k) = batch_mean.transpose();
            s.sigma[k] = Eigen::MatrixXd::Identity(D, D);
            s.phi(k) = std::max(G / N, 1e-300); // keep sum(phi) = 1 up to roundoff
            continue;
        }
        s.mu.row(k) = (gamma.col(k).transpose() * Z) / G;
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(D, D);
        for (int i = 0; i < N; ++i) {
            Eigen::VectorXd d = Z.row(i).transpose() - s.mu.row(k).transpose();
            cov.noalias() += gamma(i, k) * d * d.transpose();
        }
        s.sigma[k] = cov / G + eps * Eigen::MatrixXd::Identity(D, D);
    }
    return s;
}

EnergyScore energy(const GmmStats& stats, const Eigen::VectorXd& z) {
    const int K = stats.components();
    if (K == 0) throw InputError("energy: empty mixture");
    Eigen::VectorXd logterm(K);
    for (int k = 0; k < K; ++k) {
        CompChol c = comp_chol(stats.sigma[k]);
        Eigen::VectorXd d = z - stats.mu.row(k).transpose();
        double quad = d.dot(c.llt.solve(d));
        logterm(k) = std::log(stats.phi(k)) - 0.5 * quad - 0.5 * (kZDim * kLog2Pi + c.logdet);
    }
    double m = logterm.maxCoeff();
    double lse = m + std::log((logterm.array() - m).exp().sum());
    EnergyScore out;
    out.value = -lse;
    out.gamma = (logterm.array() - lse).exp().matrix();
    if (!std::isfinite(out.value)) throw NumericalError("energy: non-finite result");
    return out;
}

double dagmm_batch_loss(const DagmmModel& model, const std::vector<Eigen::VectorXd>& X,
                        const DagmmConfig& cfg, LayerGrads* enc_g, LayerGrads* dec_g,
                        LayerGrads* est_g, GmmStats* out_stats) {
    const int N = static_cast<int>(X.size());
    const int K = cfg.K;
    if (N < K) throw InputError("dagmm: batch smaller than component count");

    std::vector<ZParts> parts(N);
    std::vector<Mlp::Trace> est_traces(N);
    Eigen::MatrixXd Z(N, kZDim), gamma(N, K);
    double recon = 0.0;
    for (int i = 0; i < N; ++i) {
        parts[i] = build_z_traced(model, X[i]);
        Z.row(i) = parts[i].z.transpose();
        recon += (X[i] - parts[i].xhat).squaredNorm() / N;
        Eigen::VectorXd logits = model.estnet.forward(parts[i].z, &est_traces[i]);
        Eigen::ArrayXd sh = logits.array() - logits.maxCoeff();
        Eigen::ArrayXd ex = sh.exp();
        gamma.row(i) = (ex / ex.sum()).matrix().transpose();
    }

    GmmStats stats = gmm_update(Z, gamma, cfg.eps);
    if (out_stats) *out_stats = stats;

    std::vector<CompChol> chol(K);
    for (int k = 0; k < K; ++k) chol[k] = comp_chol(stats.sigma[k]);

    // Mean energy and per-(i,k) responsibilities under the batch stats.
    Eigen::MatrixXd w(N, K);
    double mean_E = 0.0;
    for (int i = 0; i < N; ++i) {
        Eigen::VectorXd logterm(K);
        for (int k = 0; k < K; ++k) {
            Eigen::VectorXd d = Z.row(i).transpose() - stats.mu.row(k).transpose();
            logterm(k) = std::log(stats.phi(k)) - 0.5 * d.dot(chol[k].precision * d) -
                         0.5 * (kZDim * kLog2Pi + chol[k].logdet);
        }
        double m = logterm.maxCoeff();
        double lse = m + std::log((logterm.array() - m).exp().sum());
        mean_E += -lse / N;
        w.row(i) = (logterm.array() - lse).exp().matrix().transpose();
    }

    double cov_pen = 0.0;
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < kZDim; ++j) cov_pen += 1.0 / stats.sigma[k](j, j);

    double loss = recon + cfg.lambda1 * mean_E + cfg.lambda2 * cov_pen;
    if (!enc_g && !dec_g && !est_g) return loss;
    if (!(enc_g && dec_g && est_g))
        throw InputError("dagmm_batch_loss: provide all gradient buffers or none");

    // ---- adjoints w.r.t. the mixture statistics ----
    const double l1N = cfg.lambda1 / N;
    Eigen::VectorXd g_phi = Eigen::VectorXd::Zero(K);
    Eigen::MatrixXd g_mu = Eigen::MatrixXd::Zero(K, kZDim);
    std::vector<Eigen::MatrixXd> g_sigma(K, Eigen::MatrixXd::Zero(kZDim, kZDim));
    Eigen::MatrixXd g_z = Eigen::MatrixXd::Zero(N, kZDim); // direct energy path

    for (int k = 0; k < K; ++k) {
        const Eigen::MatrixXd& P = chol[k].precision;
        for (int i = 0; i < N; ++i) {
            double wik = w(i, k);
            Eigen::VectorXd d = Z.row(i).transpose() - stats.mu.row(k).transpose();
            Eigen::VectorXd Pd = P * d;
            g_phi(k) += -l1N * wik / stats.phi(k);
            g_mu.row(k) += (-l1N * wik) * Pd.transpose();
            g_sigma[k] += (-0.5 * l1N * wik) * (Pd * Pd.transpose() - P);
            g_z.row(i) += (l1N * wik) * Pd.transpose();
        }
        for (int j = 0; j < kZDim; ++j) {
            double s = stats.sigma[k](j, j);
            g_sigma[k](j, j) += -cfg.lambda2 / (s * s);
        }
    }

    // ---- stats -> (gamma, z) ----
    Eigen::MatrixXd g_gamma = Eigen::MatrixXd::Zero(N, K);
    for (int k = 0; k < K; ++k) {
        double G = gamma.col(k).sum();
        if (G < 1e-8) continue; // starved components were reset: constants
        // Sigma = M2 - mu mu^T + eps I, with M2 the gamma-weighted second moment.
        Eigen::MatrixXd M2 =
            stats.sigma[k] - cfg.eps * Eigen::MatrixXd::Identity(kZDim, kZDim) +
            stats.mu.row(k).transpose() * stats.mu.row(k);
        const Eigen::MatrixXd& A = g_sigma[k];
        Eigen::VectorXd gmu_total =
            g_mu.row(k).transpose() - 2.0 * A * stats.mu.row(k).transpose();
        for (int i = 0; i < N; ++i) {
            Eigen::VectorXd zi = Z.row(i).transpose();
            Eigen::VectorXd dmu = zi - stats.mu.row(k).transpose();
            double from_M2 = ((zi * zi.transpose() - M2).cwiseProduct(A)).sum() / G;
            double from_mu = gmu_total.dot(dmu) / G;
            g_gamma(i, k) += from_M2 + from_mu + g_phi(k) / N;
            g_z.row(i) += ((2.0 * gamma(i, k) / G) * (A * zi)).transpose() +
                          (gamma(i, k) / G) * gmu_total.transpose();
        }
    }

    // ---- per-sample backward ----
    for (int i = 0; i < N; ++i) {
        // softmax adjoint into estimation-net logits
        Eigen::VectorXd gi = g_gamma.row(i).transpose();
        Eigen::VectorXd gam = gamma.row(i).transpose();
        double dot = gi.dot(gam);
        Eigen::VectorXd g_logits = (gam.array() * (gi.array() - dot)).matrix();
        Eigen::VectorXd gz_est = model.estnet.backward(est_traces[i], g_logits, *est_g);

        Eigen::VectorXd gz = g_z.row(i).transpose() + gz_est;

        const Eigen::VectorXd& x = X[i];
        const Eigen::VectorXd& xhat = parts[i].xhat;
        Eigen::VectorXd e = x - xhat;
        double nx = x.norm(), nh = xhat.norm(), ne = e.norm();

        Eigen::VectorXd g_xhat = (-2.0 / N) * e; // reconstruction term
        if (ne > 0.0) {
            double denom = nx > 0.0 ? nx : 1.0;
            g_xhat += gz(2) * (-e / (ne * denom));
        }
        if (nx > 0.0 && nh > 0.0) {
            double cs = x.dot(xhat) / (nx * nh);
            g_xhat += gz(3) * (x / (nx * nh) - cs * xhat / (nh * nh));
        }

        Eigen::VectorXd g_code_dec = model.decoder.backward(parts[i].dec_trace, g_xhat, *dec_g);
        Eigen::VectorXd g_code = g_code_dec + gz.head(2);
        model.encoder.backward(parts[i].enc_trace, g_code, *enc_g);
    }
    return loss;
}

std::pair<DagmmModel, std::vector<double>> train_dagmm(const std::vector<FeatureRow>& train,
                                                       const DagmmConfig& cfg,
                                                       unsigned long long seed) {
    if (train.size() < 500)
        throw InputError("train_dagmm: need at least 500 rows, have " +
                         std::to_string(train.size()));

    DagmmModel m;
    m.cfg = cfg;
    m.norm = Normalizer::fit(train);
    const int d = m.norm.dim();
    m.encoder = Mlp::init({d, 8, 2}, Act::Linear, seed);
    m.decoder = Mlp::init({2, 8, d}, Act::Linear, seed ^ 0xa5a5a5a5ULL);
    m.estnet = Mlp::init({kZDim, 10, cfg.K}, Act::Linear, seed ^ 0x5a5a5a5aULL);

    std::vector<Eigen::VectorXd> Z;
    Z.reserve(train.size());
    for (const FeatureRow& r : train) {
        std::vector<double> z = m.norm.apply(r.f);
        Z.push_back(Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<long>(z.size())));
    }

    std::mt19937_64 rng(seed ^ 0x94d049bb133111ebULL);
    std::vector<size_t> order(Z.size());
    std::iota(order.begin(), order.end(), 0);
    Adam opt_enc(m.encoder, cfg.lr), opt_dec(m.decoder, cfg.lr), opt_est(m.estnet, cfg.lr);

    std::vector<double> epoch_losses;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double acc = 0.0;
        int batches = 0;
        for (size_t start = 0; start + cfg.K < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<Eigen::VectorXd> batch;
            for (size_t i = start; i < end; ++i) batch.push_back(Z[order[i]]);
            if (static_cast<int>(batch.size()) <= cfg.K) break;
            LayerGrads ge = m.encoder.zero_grads(), gd = m.decoder.zero_grads(),
                       gs = m.estnet.zero_grads();
            double loss = dagmm_batch_loss(m, batch, cfg, &ge, &gd, &gs);
            if (!std::isfinite(loss))
                throw NumericalError("train_dagmm: loss diverged at epoch " +
                                     std::to_string(epoch));
            opt_enc.step(m.encoder, ge);
            opt_dec.step(m.decoder, gd);
            opt_est.step(m.estnet, gs);
            acc += loss;
            ++batches;
        }
        epoch_losses.push_back(acc / batches);
    }

    // Final mixture statistics and training-energy distribution over the full set.
    Eigen::MatrixXd Zm(Z.size(), kZDim), gamma(Z.size(), cfg.K);
    for (size_t i = 0; i < Z.size(); ++i) {
        Eigen::VectorXd z = build_z(m, Z[i]);
        Zm.row(i) = z.transpose();
        Eigen::VectorXd logits = m.estnet.forward(z);
        Eigen::ArrayXd ex = (logits.array() - logits.maxCoeff()).exp();
        gamma.row(i) = (ex / ex.sum()).matrix().transpose();
    }
    m.stats = gmm_update(Zm, gamma, cfg.eps);
    m.train_energy_sorted.reserve(Z.size());
    for (long i = 0; i < Zm.rows(); ++i)
        m.train_energy_sorted.push_back(energy(m.stats, Zm.row(i).transpose()).value);
    std::sort(m.train_energy_sorted.begin(), m.train_energy_sorted.end());
    return {std::move(m), std::move(epoch_losses)};
}

double score_one(const DagmmModel& model, const Eigen::VectorXd& z_features) {
    return energy(model.stats, build_z(model, z_features)).value;
}

double energy_percentile(const DagmmModel& model, double e) {
    const auto& v = model.train_energy_sorted;
    if (v.empty()) throw InputError("dagmm: model has no training energy distribution");
    auto it = std::upper_bound(v.begin(), v.end(), e);
    return 100.0 * static_cast<double>(it - v.begin()) / static_cast<double>(v.size());
}

std::vector<UncertaintyRow> score_dagmm(const DagmmModel& model,
                                        const std::vector<FeatureRow>& rows) {
    std::vector<UncertaintyRow> out;
    out.reserve(rows.size());
    for (const FeatureRow& r : rows) {
        std::vector<double> z = model.norm.apply(r.f);
        double e = score_one(model,
                             Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<long>(z.size())));
        out.push_back({r.cell_id, r.cycle, e, energy_percentile(model, e)});
    }
    return out;
}

void write_uncertainty_csv(const std::string& path, const std::vector<UncertaintyRow>& rows,
                           const std::string& comment) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write uncertainty file: " + path);
    if (!comment.empty()) f << "# " << comment << "\n";
    f << "cell_id,cycle,energy,energy_percentile\n";
    char buf[80];
    for (const UncertaintyRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.8f,%.4f\n", r.cell_id.c_str(), r.cycle, r.energy,
                      r.energy_percentile);
        f << buf;
    }
}

void DagmmModel::save(const std::string& path, const std::string& comment) const {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write model file: " + path);
    f << "dagmm v1\n";
    if (!comment.empty()) f << "comment " << comment << "\n";
    f.precision(17);
    f << "config " << cfg.K << " " << cfg.eps << " " << cfg.lambda1 << " " << cfg.lambda2 << "\n";
    norm.save(f);
    encoder.save(f);
    decoder.save(f);
    estnet.save(f);
    f << "stats " << stats.components() << "\n";
    for (int k = 0; k < stats.components(); ++k) {
        f << stats.phi(k) << "\n";
        f << stats.mu.row(k) << "\n";
        for (int i = 0; i < kZDim; ++i) {
            for (int j = 0; j < kZDim; ++j) f << stats.sigma[k](i, j) << " ";
            f << "\n";
        }
    }
    f << "energies " << train_energy_sorted.size() << "\n";
    for (double e : train_energy_sorted) f << e << " ";
    f << "\n";
}

DagmmModel DagmmModel::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open model file: " + path);
    std::string tag, ver;
    f >> tag >> ver;
    if (tag != "dagmm" || ver != "v1") throw InputError("dagmm model: unrecognized format");
    DagmmModel m;
    std::string key;
    f >> key;
    if (key == "comment") {
        std::string rest;
        std::getline(f, rest);
        f >> key;
    }
    if (key != "config") throw InputError("dagmm model: corrupt file");
    f >> m.cfg.K >> m.cfg.eps >> m.cfg.lambda1 >> m.cfg.lambda2;
    m.norm = Normalizer::load(f);
    m.encoder = Mlp::load(f);
    m.decoder = Mlp::load(f);
    m.estnet = Mlp::load(f);
    int K = 0;
    f >> key >> K;
    if (key != "stats") throw InputError("dagmm model: corrupt stats");
    m.stats.eps = m.cfg.eps;
    m.stats.phi.resize(K);
    m.stats.mu.resize(K, kZDim);
    m.stats.sigma.assign(K, Eigen::MatrixXd(kZDim, kZDim));
    for (int k = 0; k < K; ++k) {
        f >> m.stats.phi(k);
        for (int j = 0; j < kZDim; ++j) f >> m.stats.mu(k, j);
        for (int i = 0; i < kZDim; ++i)
            for (int j = 0; j < kZDim; ++j) f >> m.stats.sigma[k](i, j);
    }
    size_t ne = 0;
    f >> key >> ne;
    if (key != "energies" || !f) throw InputError("dagmm model: corrupt energies");
    m.train_energy_sorted.resize(ne);
    for (size_t i = 0; i < ne; ++i) f >> m.train_energy_sorted[i];
    return m;
}

} // namespace bdt
