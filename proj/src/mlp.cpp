#include "bdt/mlp.hpp"

#include "bdt/errors.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>

namespace bdt {

Mlp Mlp::init(const std::vector<int>& sizes, Act output_act, unsigned long long seed) {
    if (sizes.size() < 2) throw InputError("mlp: need at least input and output sizes");
    std::mt19937_64 rng(seed);
    Mlp net;
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        DenseLayer layer;
        int fan_in = sizes[l], fan_out = sizes[l + 1];
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> unif(-bound, bound);
        layer.W = Eigen::MatrixXd::NullaryExpr(fan_out, fan_in, [&]() { return unif(rng); });
        layer.b = Eigen::VectorXd::Zero(fan_out);
        layer.act = (l + 2 == sizes.size()) ? output_act : Act::Tanh;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x, Trace* trace) const {
    Eigen::VectorXd h = x;
    if (trace) {
        trace->h.clear();
        trace->a.clear();
        trace->h.push_back(h);
    }
    for (const DenseLayer& l : layers) {
        Eigen::VectorXd a = l.W * h + l.b;
        h = l.act == Act::Tanh ? a.array().tanh().matrix() : a;
        if (trace) {
            trace->a.push_back(std::move(a));
            trace->h.push_back(h);
        }
    }
    if (!h.allFinite()) throw NumericalError("mlp forward: non-finite activation");
    return h;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> Mlp::forward_tangent(const Eigen::VectorXd& x,
                                                                 const Eigen::VectorXd& xdot,
                                                                 TangentTrace& tr) const {
    tr.h.assign(1, x);
    tr.hd.assign(1, xdot);
    tr.a.clear();
    tr.ad.clear();
    Eigen::VectorXd h = x, hd = xdot;
    for (const DenseLayer& l : layers) {
        Eigen::VectorXd a = l.W * h + l.b;
        Eigen::VectorXd ad = l.W * hd;
        if (l.act == Act::Tanh) {
            h = a.array().tanh().matrix();
            hd = ((1.0 - h.array().square()) * ad.array()).matrix();
        } else {
            h = a;
            hd = ad;
        }
        tr.a.push_back(std::move(a));
        tr.ad.push_back(std::move(ad));
        tr.h.push_back(h);
        tr.hd.push_back(hd);
    }
    return {h, hd};
}

Eigen::VectorXd Mlp::backward(const Trace& tr, const Eigen::VectorXd& dy, LayerGrads& grads) const {
    Eigen::VectorXd gh = dy;
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        const DenseLayer& layer = layers[l];
        Eigen::VectorXd ga;
        if (layer.act == Act::Tanh) {
            const Eigen::VectorXd& h = tr.h[l + 1];
            ga = (gh.array() * (1.0 - h.array().square())).matrix();
        } else {
            ga = gh;
        }
        grads[l].W.noalias() += ga * tr.h[l].transpose();
        grads[l].b += ga;
        gh.noalias() = layer.W.transpose() * ga;
    }
    return gh;
}

void Mlp::backward_tangent(const TangentTrace& tr, const Eigen::VectorXd& dy,
                           const Eigen::VectorXd& dydot, LayerGrads& grads) const {
    Eigen::VectorXd gh = dy, ghd = dydot;
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        const DenseLayer& layer = layers[l];
        Eigen::VectorXd ga, gad;
        if (layer.act == Act::Tanh) {
            // h = tanh(a), hd = (1 - h^2) * ad
            const Eigen::VectorXd& h = tr.h[l + 1];
            const Eigen::VectorXd& ad = tr.ad[l];
            Eigen::ArrayXd s = 1.0 - h.array().square();
            ga = (gh.array() * s - 2.0 * ghd.array() * h.array() * s * ad.array()).matrix();
            gad = (ghd.array() * s).matrix();
        } else {
            ga = gh;
            gad = ghd;
        }
        grads[l].W.noalias() += ga * tr.h[l].transpose();
        grads[l].W.noalias() += gad * tr.hd[l].transpose();
        grads[l].b += ga;
        gh.noalias() = layer.W.transpose() * ga;
        ghd.noalias() = layer.W.transpose() * gad;
    }
}

LayerGrads Mlp::zero_grads() const {
    LayerGrads g;
    for (const DenseLayer& l : layers) {
        DenseLayer z;
        z.W = Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols());
        z.b = Eigen::VectorXd::Zero(l.b.size());
        z.act = l.act;
        g.push_back(std::move(z));
    }
    return g;
}

void Mlp::save(std::ostream& os) const {
    os << "mlp " << layers.size() << "\n";
    os.precision(17);
    for (const DenseLayer& l : layers) {
        os << l.W.rows() << " " << l.W.cols() << " " << (l.act == Act::Tanh ? "tanh" : "linear")
           << "\n";
        for (int i = 0; i < l.W.rows(); ++i) {
            for (int j = 0; j < l.W.cols(); ++j) os << l.W(i, j) << " ";
            os << "\n";
        }
        for (int i = 0; i < l.b.size(); ++i) os << l.b(i) << " ";
        os << "\n";
    }
}

Mlp Mlp::load(std::istream& is) {
    std::string tag;
    size_t n = 0;
    is >> tag >> n;
    if (tag != "mlp" || !is) throw InputError("mlp: bad stream header");
    Mlp net;
    for (size_t l = 0; l < n; ++l) {
        int rows, cols;
        std::string act;
        is >> rows >> cols >> act;
        if (!is || rows <= 0 || cols <= 0) throw InputError("mlp: corrupt layer header");
        DenseLayer layer;
        layer.act = act == "tanh" ? Act::Tanh : Act::Linear;
        layer.W.resize(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) is >> layer.W(i, j);
        layer.b.resize(rows);
        for (int i = 0; i < rows; ++i) is >> layer.b(i);
        if (!is) throw InputError("mlp: corrupt weights");
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Adam::Adam(const Mlp& net, double lr) : lr_(lr), m_(net.zero_grads()), v_(net.zero_grads()) {}

void Adam::step(Mlp& net, const LayerGrads& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t l = 0; l < net.layers.size(); ++l) {
        m_[l].W = beta1_ * m_[l].W + (1.0 - beta1_) * grads[l].W;
        v_[l].W = beta2_ * v_[l].W.array().matrix() +
                  (1.0 - beta2_) * grads[l].W.array().square().matrix();
        net.layers[l].W.array() -=
            lr_ * (m_[l].W.array() / bc1) / ((v_[l].W.array() / bc2).sqrt() + eps_);
        m_[l].b = beta1_ * m_[l].b + (1.0 - beta1_) * grads[l].b;
        v_[l].b = beta2_ * v_[l].b.array().matrix() +
                  (1.0 - beta2_) * grads[l].b.array().square().matrix();
        net.layers[l].b.array() -=
            lr_ * (m_[l].b.array() / bc1) / ((v_[l].b.array() / bc2).sqrt() + eps_);
    }
}

} // namespace bdt
