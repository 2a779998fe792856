#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "aesfa/autograd.hpp"

namespace aesfa {

// Adam with bias correction. First/second moment buffers line up with the
// parameter registry order; a zero gradient therefore leaves a fresh
// parameter exactly unchanged (0/(0+eps) == 0).
template <typename T>
class Adam {
public:
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    Adam() = default;
    explicit Adam(double learning_rate) : lr(learning_rate) {}

    void attach(const std::vector<std::pair<std::string, Var<T>*>>& params) {
        m_.clear();
        v_.clear();
        step_count_ = 0;
        for (const auto& [name, p] : params) {
            m_.push_back(Tensor<T>::zeros(p->shape()));
            v_.push_back(Tensor<T>::zeros(p->shape()));
        }
    }

    int64_t step_count() const { return step_count_; }

    void step(const std::vector<std::pair<std::string, Var<T>*>>& params) {
        if (params.size() != m_.size()) throw InvalidArgument("adam: parameter registry changed size");
        ++step_count_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));
        for (size_t i = 0; i < params.size(); ++i) {
            Var<T>& p = *params[i].second;
            Tensor<T>& value = p.mutable_value();
            const Tensor<T>* g = p.has_grad() ? &p.grad() : nullptr;
            Tensor<T>& m = m_[i];
            Tensor<T>& v = v_[i];
            for (size_t j = 0; j < value.data.size(); ++j) {
                const double gj = g ? static_cast<double>(g->data[j]) : 0.0;
                const double mj = beta1 * static_cast<double>(m.data[j]) + (1.0 - beta1) * gj;
                const double vj = beta2 * static_cast<double>(v.data[j]) + (1.0 - beta2) * gj * gj;
                m.data[j] = static_cast<T>(mj);
                v.data[j] = static_cast<T>(vj);
                const double mhat = mj / bc1;
                const double vhat = vj / bc2;
                value.data[j] = static_cast<T>(static_cast<double>(value.data[j]) -
                                               lr * mhat / (std::sqrt(vhat) + epsilon));
            }
        }
    }

    void zero_grad(const std::vector<std::pair<std::string, Var<T>*>>& params) {
        for (const auto& [name, p] : params) p->zero_grad();
    }

    std::vector<Tensor<T>>& moment1() { return m_; }
    std::vector<Tensor<T>>& moment2() { return v_; }
    void set_step_count(int64_t s) { step_count_ = s; }

private:
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
    int64_t step_count_ = 0;
};

}  // namespace aesfa
