#pragma once

#include "fpi/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fpi {

/// AdamW with decoupled weight decay: the decay term is applied directly to
/// the weights (scaled by lr), never folded into the gradient moments.
template <typename T>
class AdamW {
public:
    struct Options {
        double lr = 3e-4;
        double weight_decay = 5e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    AdamW(std::vector<Tensor<T>> params, Options opt) : params_(std::move(params)), opt_(opt) {
        if (opt_.lr <= 0) throw std::invalid_argument("AdamW: lr must be > 0");
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].numel(), T(0));
            v_[i].assign(params_[i].numel(), T(0));
        }
    }

    void set_lr(double lr) {
        if (lr <= 0) throw std::invalid_argument("AdamW: lr must be > 0");
        opt_.lr = lr;
    }
    double lr() const { return opt_.lr; }
    long step_count() const { return step_; }

    /// One update over all registered parameters. Parameters whose grad was
    /// never populated this step are treated as zero-gradient (weight decay
    /// still applies).
    void step() {
        ++step_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
        for (std::size_t p = 0; p < params_.size(); ++p) {
            auto& param = params_[p];
            auto val = param.value();
            const bool has_g = param.has_grad();
            auto& m = m_[p];
            auto& v = v_[p];
            for (std::size_t i = 0; i < val.size(); ++i) {
                double g = has_g ? static_cast<double>(param.grad()[i]) : 0.0;
                double mi = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g;
                double vi = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                double mhat = mi / bc1;
                double vhat = vi / bc2;
                double upd = opt_.lr * (mhat / (std::sqrt(vhat) + opt_.eps) +
                                        opt_.weight_decay * static_cast<double>(val[i]));
                val[i] = static_cast<T>(val[i] - upd);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

private:
    std::vector<Tensor<T>> params_;
    Options opt_;
    std::vector<std::vector<T>> m_, v_;
    long step_ = 0;
};

}  // namespace fpi
