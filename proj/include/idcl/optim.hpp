#pragma once

#include "idcl/autograd.hpp"

#include <cmath>
#include <vector>

namespace idcl {

/// Adam with bias correction.
class Adam {
public:
    Adam(std::vector<ag::Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            m_.push_back(Matrix::Zero(p.rows(), p.cols()));
            v_.push_back(Matrix::Zero(p.rows(), p.cols()));
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k];
            if (!p.has_grad()) continue;
            const Matrix& g = p.grad();
            m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
            v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseProduct(g);
            p.mutable_value().array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
        }
    }

    [[nodiscard]] long steps() const { return t_; }

private:
    std::vector<ag::Var> params_;
    std::vector<Matrix> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace idcl
