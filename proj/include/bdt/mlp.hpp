#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

namespace bdt {

enum class Act { Tanh, Linear };

struct DenseLayer {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;
    Act act = Act::Tanh;
};

using LayerGrads = std::vector<DenseLayer>; // same shapes, activation ignored

// Plain feed-forward network with hand-rolled reverse-mode gradients and a
// forward-tangent pass (plus its exact adjoint) for input-derivative penalties.
class Mlp {
public:
    std::vector<DenseLayer> layers;

    // Xavier-uniform initialization; deterministic per seed.
    static Mlp init(const std::vector<int>& sizes, Act output_act, unsigned long long seed);

    int in_dim() const { return static_cast<int>(layers.front().W.cols()); }
    int out_dim() const { return static_cast<int>(layers.back().W.rows()); }

    struct Trace {
        std::vector<Eigen::VectorXd> h; // h[0] = input, h[l+1] = activation of layer l
        std::vector<Eigen::VectorXd> a; // pre-activations
    };
    struct TangentTrace : Trace {
        std::vector<Eigen::VectorXd> hd; // input-direction tangents of h
        std::vector<Eigen::VectorXd> ad;
    };

    Eigen::VectorXd forward(const Eigen::VectorXd& x, Trace* trace = nullptr) const;

    // Propagates (x, xdot); returns (y, ydot) where ydot = J_net(x) * xdot.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> forward_tangent(const Eigen::VectorXd& x,
                                                                const Eigen::VectorXd& xdot,
                                                                TangentTrace& trace) const;

    // Accumulates dL/dW, dL/db into grads; returns dL/dx.
    Eigen::VectorXd backward(const Trace& trace, const Eigen::VectorXd& dy,
                             LayerGrads& grads) const;

    // Adjoint of forward_tangent: seeds (dL/dy, dL/dydot), accumulates weight
    // gradients including the paths through the tangent computation.
    void backward_tangent(const TangentTrace& trace, const Eigen::VectorXd& dy,
                          const Eigen::VectorXd& dydot, LayerGrads& grads) const;

    LayerGrads zero_grads() const;
    void save(std::ostream& os) const;
    static Mlp load(std::istream& is);
};

// First/second-moment adaptive SGD over a network's parameters.
class Adam {
public:
    explicit Adam(const Mlp& net, double lr = 1e-3);
    void step(Mlp& net, const LayerGrads& grads);

private:
    double lr_, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    LayerGrads m_, v_;
};

} // namespace bdt
