#pragma once

#include <vector>

#include "ccdl/layers.hpp"

namespace ccdl {

class Optimizer {
public:
    explicit Optimizer(std::vector<ParamView> params) : params_(std::move(params)) {}
    virtual ~Optimizer() = default;
    virtual void step() = 0;
    void zero_grad() {
        for (auto& p : params_) std::fill(p.g->begin(), p.g->end(), 0.f);
    }
    bool grads_finite() const {
        for (const auto& p : params_)
            for (float g : *p.g)
                if (!std::isfinite(g)) return false;
        return true;
    }

protected:
    std::vector<ParamView> params_;
};

class Sgd : public Optimizer {
public:
    Sgd(std::vector<ParamView> params, float lr, float momentum = 0.f, float weight_decay = 0.f)
        : Optimizer(std::move(params)), lr_(lr), momentum_(momentum), wd_(weight_decay) {
        if (momentum_ != 0.f) {
            vel_.resize(params_.size());
            for (size_t i = 0; i < params_.size(); ++i) vel_[i].assign(params_[i].w->size(), 0.f);
        }
    }

    void step() override {
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& w = *params_[i].w;
            auto& g = *params_[i].g;
            for (size_t j = 0; j < w.size(); ++j) {
                float grad = g[j] + wd_ * w[j];
                if (momentum_ != 0.f) {
                    vel_[i][j] = momentum_ * vel_[i][j] + grad;
                    grad = vel_[i][j];
                }
                w[j] -= lr_ * grad;
            }
        }
    }

    void set_lr(float lr) { lr_ = lr; }

private:
    float lr_, momentum_, wd_;
    std::vector<std::vector<float>> vel_;
};

class Adam : public Optimizer {
public:
    Adam(std::vector<ParamView> params, float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
        : Optimizer(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].w->size(), 0.f);
            v_[i].assign(params_[i].w->size(), 0.f);
        }
    }

    void step() override {
        ++t_;
        const float c1 = 1.f - std::pow(b1_, static_cast<float>(t_));
        const float c2 = 1.f - std::pow(b2_, static_cast<float>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& w = *params_[i].w;
            auto& g = *params_[i].g;
            for (size_t j = 0; j < w.size(); ++j) {
                m_[i][j] = b1_ * m_[i][j] + (1.f - b1_) * g[j];
                v_[i][j] = b2_ * v_[i][j] + (1.f - b2_) * g[j] * g[j];
                const float mh = m_[i][j] / c1;
                const float vh = v_[i][j] / c2;
                w[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
            }
        }
    }

private:
    float lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

}  // namespace ccdl
