#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dignn/errors.hpp"
#include "dignn/rng.hpp"
#include "dignn/types.hpp"

namespace dignn {

enum class Activation { Identity, Relu, Tanh };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "unknown";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    throw InvalidArgument("unknown activation: " + s);
}

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;     // out
    Activation activation = Activation::Identity;
};

inline Matrix apply_activation(Activation act, const Matrix& pre) {
    switch (act) {
        case Activation::Identity: return pre;
        case Activation::Relu: return pre.cwiseMax(0.0);
        case Activation::Tanh: return pre.array().tanh().matrix();
    }
    return pre;
}

inline Matrix activation_grad_from_preact(Activation act, const Matrix& pre, const Matrix& d_out) {
    switch (act) {
        case Activation::Identity: return d_out;
        case Activation::Relu:
            return (pre.array() > 0.0).select(d_out, Matrix::Zero(d_out.rows(), d_out.cols()));
        case Activation::Tanh: {
            const Matrix th = pre.array().tanh().matrix();
            return (d_out.array() * (1.0 - th.array().square())).matrix();
        }
    }
    return d_out;
}

inline Matrix dense_forward(const DenseLayer& layer, const Matrix& x, Matrix* preact = nullptr) {
    if (x.cols() != layer.weights.cols()) {
        throw ShapeError("dense_forward: input width does not match layer");
    }
    Matrix pre = x * layer.weights.transpose();
    pre.rowwise() += layer.bias.transpose();
    if (preact != nullptr) *preact = pre;
    return apply_activation(layer.activation, pre);
}

struct DenseGrads {
    Matrix d_weights;
    Vector d_bias;
    Matrix d_input;
};

inline DenseGrads dense_backward(const DenseLayer& layer, const Matrix& input, const Matrix& preact,
                                 const Matrix& d_out) {
    const Matrix d_pre = activation_grad_from_preact(layer.activation, preact, d_out);
    DenseGrads g;
    g.d_weights = d_pre.transpose() * input;
    g.d_bias = d_pre.colwise().sum().transpose();
    g.d_input = d_pre * layer.weights;
    return g;
}

/// Per-feature batch normalization. Training mode normalizes with batch
/// statistics and folds them into the running averages; evaluation mode
/// uses the running statistics.
struct BatchNorm {
    Vector gamma;
    Vector beta;
    Vector running_mean;
    Vector running_var;
    double eps = 1e-5;
    double momentum = 0.1;
};

inline BatchNorm make_batch_norm(int dim) {
    BatchNorm bn;
    bn.gamma = Vector::Ones(dim);
    bn.beta = Vector::Zero(dim);
    bn.running_mean = Vector::Zero(dim);
    bn.running_var = Vector::Ones(dim);
    return bn;
}

struct BatchNormCache {
    Matrix input;
    Vector mean;
    Vector var;  // biased batch variance
    Matrix x_hat;
    bool training = false;
};

inline Matrix batch_norm_forward(BatchNorm& bn, const Matrix& x, bool training,
                                 BatchNormCache* cache) {
    if (x.cols() != bn.gamma.size()) throw ShapeError("batch_norm_forward: width mismatch");
    const auto n = static_cast<double>(x.rows());
    Vector mean, var;
    if (training) {
        mean = x.colwise().mean();
        var = (x.rowwise() - mean.transpose()).array().square().colwise().mean();
        bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * mean;
        const double unbias = (n > 1.0) ? n / (n - 1.0) : 1.0;
        bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbias * var;
    } else {
        mean = bn.running_mean;
        var = bn.running_var;
    }
    const Vector inv_std = (var.array() + bn.eps).rsqrt();
    Matrix x_hat = (x.rowwise() - mean.transpose()).array().rowwise() *
                   inv_std.transpose().array();
    Matrix out = (x_hat.array().rowwise() * bn.gamma.transpose().array()).matrix();
    out.rowwise() += bn.beta.transpose();
    if (cache != nullptr) {
        cache->input = x;
        cache->mean = mean;
        cache->var = var;
        cache->x_hat = x_hat;
        cache->training = training;
    }
    return out;
}

struct BatchNormGrads {
    Vector d_gamma;
    Vector d_beta;
    Matrix d_input;
};

inline BatchNormGrads batch_norm_backward(const BatchNorm& bn, const BatchNormCache& cache,
                                          const Matrix& d_out) {
    BatchNormGrads g;
    g.d_gamma = (d_out.array() * cache.x_hat.array()).colwise().sum().transpose();
    g.d_beta = d_out.colwise().sum().transpose();
    const Vector inv_std = (cache.var.array() + bn.eps).rsqrt();
    if (!cache.training) {
        g.d_input = (d_out.array().rowwise() * (bn.gamma.array() * inv_std.array()).transpose())
                        .matrix();
        return g;
    }
    // Batch statistics depend on the input, so their derivatives enter.
    const auto n = static_cast<double>(d_out.rows());
    const Matrix d_xhat =
        (d_out.array().rowwise() * bn.gamma.transpose().array()).matrix();
    const Vector sum_dxhat = d_xhat.colwise().sum().transpose();
    const Vector sum_dxhat_xhat = (d_xhat.array() * cache.x_hat.array()).colwise().sum().transpose();
    g.d_input =
        ((d_xhat * n).rowwise() - sum_dxhat.transpose()).array() -
        (cache.x_hat.array().rowwise() * sum_dxhat_xhat.transpose().array());
    g.d_input = (g.d_input.array().rowwise() * (inv_std.transpose().array() / n)).matrix();
    return g;
}

/// Inverted-dropout mask: entries are 0 or 1/(1-rate).
inline Matrix dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double rate) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidArgument("dropout rate must be in [0, 1)");
    Matrix mask(rows, cols);
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            mask(i, j) = (rng.uniform() < rate) ? 0.0 : scale;
        }
    }
    return mask;
}

inline Matrix row_softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        out.row(i) = e / e.sum();
    }
    return out;
}

/// Mean softmax cross-entropy over the masked rows.
inline double loss_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                                 const std::vector<std::uint8_t>& mask) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows() ||
        static_cast<Eigen::Index>(mask.size()) != logits.rows()) {
        throw ShapeError("loss_cross_entropy: labels and mask must match logits rows");
    }
    double loss = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= logits.cols()) {
            throw InvalidArgument("loss_cross_entropy: label out of range at row " +
                                  std::to_string(i));
        }
        const double m = logits.row(i).maxCoeff();
        const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        loss += lse - logits(i, y);
        ++count;
    }
    if (count == 0) throw DomainError("loss_cross_entropy: empty mask");
    return loss / count;
}

/// d(loss)/d(logits) = (softmax - onehot) / |mask| on masked rows.
inline Matrix loss_cross_entropy_grad(const Matrix& logits, const std::vector<int>& labels,
                                      const std::vector<std::uint8_t>& mask) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows() ||
        static_cast<Eigen::Index>(mask.size()) != logits.rows()) {
        throw ShapeError("loss_cross_entropy_grad: labels and mask must match logits rows");
    }
    int count = 0;
    for (std::uint8_t m : mask) count += (m != 0);
    if (count == 0) throw DomainError("loss_cross_entropy_grad: empty mask");
    Matrix grad = Matrix::Zero(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const double m = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        grad.row(i) = e / e.sum();
        grad(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
        grad.row(i) /= count;
    }
    return grad;
}

/// A flat view of one trainable array and its gradient.
struct ParamGradView {
    std::string group;
    double* param = nullptr;
    const double* grad = nullptr;
    Eigen::Index size = 0;
};

/// Adam with decoupled weight decay. Moment buffers are keyed by position
/// in the view list, which must stay stable across steps.
class AdamOptimizer {
public:
    AdamOptimizer(double lr, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<ParamGradView>& views) {
        if (m_.empty()) {
            for (const ParamGradView& v : views) {
                m_.emplace_back(Vector::Zero(v.size));
                v_.emplace_back(Vector::Zero(v.size));
            }
        }
        if (m_.size() != views.size()) {
            throw InvalidArgument("AdamOptimizer: parameter list changed between steps");
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t k = 0; k < views.size(); ++k) {
            ParamGradView& v = views[k];
            for (Eigen::Index i = 0; i < v.size; ++i) {
                const double g = v.grad[i];
                m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
                v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
                const double m_hat = m_[k][i] / bc1;
                const double v_hat = v_[k][i] / bc2;
                v.param[i] -= lr_ * weight_decay_ * v.param[i];
                v.param[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
            }
        }
    }

private:
    double lr_, weight_decay_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Vector> m_;
    std::vector<Vector> v_;
};

}  // namespace dignn
