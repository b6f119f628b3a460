#include "bdt/soh_pinn.hpp"

#include "bdt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace bdt {

namespace {

constexpr int kCycleFeature = 12; // raw index of cycle_norm

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

int cycle_pos(const SohModel& m) {
    int pos = m.norm.position_of(kCycleFeature);
    if (pos < 0) throw InputError("soh model: cycle_norm feature was dropped by the normalizer");
    return pos;
}

} // namespace

double SohModel::forward(const std::vector<double>& z) const {
    Eigen::VectorXd x = to_vec(z);
    if (x.size() != net.in_dim()) throw InputError("soh forward: feature dimension mismatch");
    double u = net.forward(x)(0);
    return out_lo + (out_hi - out_lo) * logistic(u);
}

double SohModel::predict_row(const FeatureRow& row) const {
    return forward(norm.apply(row.f));
}

std::vector<CollocPoint> sample_colloc(const std::vector<Eigen::VectorXd>& train_z,
                                       const SohModel& model, int count, std::mt19937_64& rng) {
    if (train_z.empty()) throw InputError("sample_colloc: empty training set");
    int pos = cycle_pos(model);
    double mean_c = model.norm.mean_of(kCycleFeature);
    double std_c = model.norm.std_of(kCycleFeature);
    std::uniform_int_distribution<size_t> pick(0, train_z.size() - 1);
    std::uniform_real_distribution<double> unif(1.0 / model.max_cycle, 1.0);
    std::vector<CollocPoint> pts;
    pts.reserve(count);
    for (int i = 0; i < count; ++i) {
        CollocPoint p;
        p.x = train_z[pick(rng)];
        double u = unif(rng);
        p.n = u * model.max_cycle;
        p.x(pos) = (u - mean_c) / std_c;
        pts.push_back(std::move(p));
    }
    return pts;
}

double cycle_derivative(const SohModel& model, const Eigen::VectorXd& z) {
    int pos = cycle_pos(model);
    Eigen::VectorXd xdot = Eigen::VectorXd::Zero(z.size());
    xdot(pos) = 1.0;
    Mlp::TangentTrace tr;
    auto [y, ydot] = model.net.forward_tangent(z, xdot, tr);
    double sig = logistic(y(0));
    double s1 = (model.out_hi - model.out_lo) * sig * (1.0 - sig);
    // d f / d cycle_norm (chain through the z-scoring of the feature)
    return s1 * ydot(0) / model.norm.std_of(kCycleFeature);
}

LossParts pinn_loss(const SohModel& model, const std::vector<Eigen::VectorXd>& batch_z,
                    const std::vector<double>& batch_y, const std::vector<CollocPoint>& colloc,
                    LayerGrads* grads) {
    if (batch_z.empty() || batch_z.size() != batch_y.size())
        throw InputError("pinn_loss: empty or mismatched batch");
    const double span = model.out_hi - model.out_lo;
    const double N = static_cast<double>(batch_z.size());
    LossParts parts;

    for (size_t i = 0; i < batch_z.size(); ++i) {
        Mlp::Trace tr;
        double u = model.net.forward(batch_z[i], &tr)(0);
        double sig = logistic(u);
        double f = model.out_lo + span * sig;
        double err = f - batch_y[i];
        parts.data += err * err / N;
        if (grads) {
            double s1 = span * sig * (1.0 - sig);
            Eigen::VectorXd dy(1);
            dy(0) = (2.0 * err / N) * s1;
            model.net.backward(tr, dy, *grads);
        }
    }

    if (!colloc.empty() && (model.cfg.lambda_mono > 0.0 || model.cfg.lambda_phys > 0.0)) {
        int pos = cycle_pos(model);
        double std_c = model.norm.std_of(kCycleFeature);
        const double M = static_cast<double>(colloc.size());
        for (const CollocPoint& cp : colloc) {
            Eigen::VectorXd xdot = Eigen::VectorXd::Zero(cp.x.size());
            xdot(pos) = 1.0;
            Mlp::TangentTrace tr;
            auto [y, ydot] = model.net.forward_tangent(cp.x, xdot, tr);
            double sig = logistic(y(0));
            double s1 = span * sig * (1.0 - sig);
            double s2 = span * sig * (1.0 - sig) * (1.0 - 2.0 * sig);
            double fdot = s1 * ydot(0);          // d f / d standardized feature
            double g_cycle = fdot / std_c;       // d f / d cycle_norm
            double dfdn = g_cycle / model.max_cycle;

            double d_fdot = 0.0;
            if (g_cycle > 0.0) {
                parts.mono += g_cycle * g_cycle / M;
                d_fdot += model.cfg.lambda_mono * 2.0 * g_cycle / (std_c * M);
            }
            double fade_slope = (model.cfg.b1 / (2.0 * std::sqrt(cp.n)) + model.cfg.b2) /
                                model.cfg.q_nom;
            double resid = dfdn + fade_slope;
            parts.phys += resid * resid / M;
            d_fdot += model.cfg.lambda_phys * 2.0 * resid / (std_c * model.max_cycle * M);

            if (grads && d_fdot != 0.0) {
                Eigen::VectorXd dy(1), dydot(1);
                dy(0) = d_fdot * s2 * ydot(0); // through s1(u) in fdot = s1 * ydot
                dydot(0) = d_fdot * s1;
                model.net.backward_tangent(tr, dy, dydot, *grads);
            }
        }
    }

    parts.total = parts.data + model.cfg.lambda_mono * parts.mono +
                  model.cfg.lambda_phys * parts.phys;
    return parts;
}

namespace {

// Least squares for Q_nom*(1 - soh) ~ b1*sqrt(n) + b2*n over labeled rows.
void fit_fade_law(const std::vector<FeatureRow>& rows, PinnLossConfig& cfg) {
    double s11 = 0, s12 = 0, s22 = 0, r1 = 0, r2 = 0;
    long count = 0;
    for (const FeatureRow& r : rows) {
        if (!r.soh || r.cycle < 1) continue;
        double sn = std::sqrt(static_cast<double>(r.cycle));
        double n = static_cast<double>(r.cycle);
        double target = cfg.q_nom * (1.0 - *r.soh);
        s11 += sn * sn;
        s12 += sn * n;
        s22 += n * n;
        r1 += sn * target;
        r2 += n * target;
        ++count;
    }
    if (count < 2) throw InputError("fade-law fit: not enough labeled rows");
    double det = s11 * s22 - s12 * s12;
    if (std::abs(det) < 1e-12) {
        cfg.b1 = r1 / s11;
        cfg.b2 = 0.0;
        return;
    }
    cfg.b1 = (r1 * s22 - r2 * s12) / det;
    cfg.b2 = (s11 * r2 - s12 * r1) / det;
}

} // namespace

std::pair<SohModel, TrainLog> train_soh(const std::vector<FeatureRow>& train,
                                        const SohTrainOptions& opt, unsigned long long seed) {
    std::vector<const FeatureRow*> labeled;
    for (const FeatureRow& r : train)
        if (r.soh) labeled.push_back(&r);
    if (labeled.size() < 100)
        throw InputError("train_soh: need at least 100 labeled training rows, have " +
                         std::to_string(labeled.size()));

    SohModel model;
    model.norm = Normalizer::fit(train);
    model.cfg = opt.loss;
    model.max_cycle = 1;
    for (const FeatureRow* r : labeled) model.max_cycle = std::max(model.max_cycle, r->cycle);
    fit_fade_law(train, model.cfg);
    model.net = Mlp::init({model.norm.dim(), 64, 64, 1}, Act::Linear, seed);
    cycle_pos(model); // fail early if cycle_norm was dropped

    std::vector<Eigen::VectorXd> Z;
    std::vector<double> Y;
    Z.reserve(labeled.size());
    for (const FeatureRow* r : labeled) {
        Z.push_back(to_vec(model.norm.apply(r->f)));
        Y.push_back(*r->soh);
    }

    std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
    Adam opt_state(model.net, opt.lr);
    TrainLog log;
    std::vector<size_t> order(Z.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += opt.batch_size) {
            size_t end = std::min(order.size(), start + opt.batch_size);
            std::vector<Eigen::VectorXd> bz;
            std::vector<double> by;
            for (size_t i = start; i < end; ++i) {
                bz.push_back(Z[order[i]]);
                by.push_back(Y[order[i]]);
            }
            std::vector<CollocPoint> colloc =
                sample_colloc(Z, model, model.cfg.n_colloc, rng);
            LayerGrads grads = model.net.zero_grads();
            LossParts parts = pinn_loss(model, bz, by, colloc, &grads);
            if (!std::isfinite(parts.total))
                throw NumericalError("train_soh: loss diverged at epoch " + std::to_string(epoch));
            opt_state.step(model.net, grads);
            epoch_loss += parts.total;
            ++batches;
        }
        log.epoch_loss.push_back(epoch_loss / batches);
    }
    return {std::move(model), std::move(log)};
}

std::vector<Prediction> predict_soh(const SohModel& model, const std::vector<FeatureRow>& rows) {
    std::vector<Prediction> out;
    out.reserve(rows.size());
    for (const FeatureRow& r : rows)
        out.push_back({r.cell_id, r.cycle, model.predict_row(r), r.soh});
    return out;
}

double pooled_mape(const std::vector<Prediction>& preds) {
    double acc = 0.0;
    long n = 0;
    for (const Prediction& p : preds) {
        if (!p.soh_true) continue;
        acc += std::abs(p.soh_pred - *p.soh_true) / std::abs(*p.soh_true);
        ++n;
    }
    if (n == 0) throw InputError("mape: no labeled predictions");
    return 100.0 * acc / n;
}

std::map<std::string, double> per_track_mape(const std::vector<Prediction>& preds) {
    std::map<std::string, std::pair<double, long>> acc;
    for (const Prediction& p : preds) {
        if (!p.soh_true) continue;
        auto& [s, n] = acc[p.cell_id];
        s += std::abs(p.soh_pred - *p.soh_true) / std::abs(*p.soh_true);
        ++n;
    }
    std::map<std::string, double> out;
    for (auto& [id, sn] : acc) out[id] = 100.0 * sn.first / sn.second;
    return out;
}

void write_predictions_csv(const std::string& path, const std::vector<Prediction>& preds,
                           const std::string& comment) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write predictions file: " + path);
    if (!comment.empty()) f << "# " << comment << "\n";
    bool any_true = std::any_of(preds.begin(), preds.end(),
                                [](const Prediction& p) { return p.soh_true.has_value(); });
    f << (any_true ? "cell_id,cycle,soh_pred,soh_true\n" : "cell_id,cycle,soh_pred\n");
    char buf[64];
    for (const Prediction& p : preds) {
        f << p.cell_id << "," << p.cycle;
        std::snprintf(buf, sizeof(buf), ",%.8f", p.soh_pred);
        f << buf;
        if (any_true) {
            if (p.soh_true) {
                std::snprintf(buf, sizeof(buf), ",%.8f", *p.soh_true);
                f << buf;
            } else {
                f << ",";
            }
        }
        f << "\n";
    }
}

void SohModel::save(const std::string& path, const std::string& comment) const {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write model file: " + path);
    f << "sohmodel v1\n";
    if (!comment.empty()) f << "comment " << comment << "\n";
    f.precision(17);
    f << "bounds " << out_lo << " " << out_hi << "\n";
    f << "max_cycle " << max_cycle << "\n";
    f << "fade " << cfg.b1 << " " << cfg.b2 << " " << cfg.q_nom << "\n";
    f << "lambdas " << cfg.lambda_mono << " " << cfg.lambda_phys << " " << cfg.n_colloc << "\n";
    norm.save(f);
    net.save(f);
}

SohModel SohModel::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open model file: " + path);
    std::string tag, ver;
    f >> tag >> ver;
    if (tag != "sohmodel" || ver != "v1") throw InputError("soh model: unrecognized format");
    SohModel m;
    std::string key;
    f >> key;
    if (key == "comment") {
        std::string rest;
        std::getline(f, rest);
        f >> key;
    }
    if (key != "bounds") throw InputError("soh model: corrupt file");
    f >> m.out_lo >> m.out_hi;
    f >> key >> m.max_cycle;
    f >> key >> m.cfg.b1 >> m.cfg.b2 >> m.cfg.q_nom;
    f >> key >> m.cfg.lambda_mono >> m.cfg.lambda_phys >> m.cfg.n_colloc;
    m.norm = Normalizer::load(f);
    m.net = Mlp::load(f);
    return m;
}

} // namespace bdt
