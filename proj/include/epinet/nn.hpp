#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "epinet/rng.hpp"

namespace epinet::nn {

/// Fully connected network with tanh hidden layers and a linear output.
/// Parameters live in one flat vector: per layer, the row-major weight
/// matrix (out x in) followed by the bias.
class Mlp
{
  public:
    Mlp() = default;
    explicit Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes))
    {
        if (sizes_.size() < 2) {
            throw std::invalid_argument("mlp: need input and output sizes");
        }
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            if (sizes_[l] == 0 || sizes_[l + 1] == 0) {
                throw std::invalid_argument("mlp: layer sizes must be positive");
            }
            n += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
        }
        params_.assign(n, 0.0);
    }

    const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
    std::size_t input_size() const noexcept { return sizes_.front(); }
    std::size_t output_size() const noexcept { return sizes_.back(); }
    std::size_t layers() const noexcept { return sizes_.size() - 1; }
    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::vector<double>& params() noexcept { return params_; }
    const std::vector<double>& params() const noexcept { return params_; }

    /// Scaled-normal initialisation: weights N(0, gain^2 / fan_in), the last
    /// layer scaled by `output_gain`; biases zero.
    void init(Rng& rng, double hidden_gain, double output_gain)
    {
        std::size_t off = 0;
        for (std::size_t l = 0; l < layers(); ++l) {
            const std::size_t in = sizes_[l];
            const std::size_t out = sizes_[l + 1];
            const double gain = (l + 1 == layers()) ? output_gain : hidden_gain;
            const double sd = gain / std::sqrt(static_cast<double>(in));
            for (std::size_t k = 0; k < in * out; ++k) {
                params_[off + k] = rng.normal(0.0, sd);
            }
            off += in * out;
            for (std::size_t k = 0; k < out; ++k) {
                params_[off + k] = 0.0;
            }
            off += out;
        }
    }

    /// Activations of every layer, kept for the backward pass.
    struct Cache {
        std::vector<std::vector<double>> act;
    };

    std::vector<double> forward(std::span<const double> x, Cache* cache = nullptr) const
    {
        if (x.size() != input_size()) {
            throw std::invalid_argument("mlp: input size mismatch");
        }
        std::vector<double> cur(x.begin(), x.end());
        if (cache != nullptr) {
            cache->act.assign(1, cur);
        }
        std::size_t off = 0;
        for (std::size_t l = 0; l < layers(); ++l) {
            const std::size_t in = sizes_[l];
            const std::size_t out = sizes_[l + 1];
            std::vector<double> next(out);
            const double* w = params_.data() + off;
            const double* b = w + in * out;
            for (std::size_t o = 0; o < out; ++o) {
                double z = b[o];
                const double* row = w + o * in;
                for (std::size_t i = 0; i < in; ++i) {
                    z += row[i] * cur[i];
                }
                next[o] = (l + 1 == layers()) ? z : std::tanh(z);
            }
            off += in * out + out;
            cur = std::move(next);
            if (cache != nullptr) {
                cache->act.push_back(cur);
            }
        }
        return cur;
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
    void backward(const Cache& cache, std::span<const double> grad_out, std::span<double> grad) const
    {
        if (grad.size() != params_.size() || grad_out.size() != output_size()) {
            throw std::invalid_argument("mlp: gradient size mismatch");
        }
        std::vector<std::size_t> offsets(layers());
        std::size_t off = 0;
        for (std::size_t l = 0; l < layers(); ++l) {
            offsets[l] = off;
            off += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
        }
        std::vector<double> delta(grad_out.begin(), grad_out.end());
        for (std::size_t l = layers(); l-- > 0;) {
            const std::size_t in = sizes_[l];
            const std::size_t out = sizes_[l + 1];
            if (l + 1 != layers()) {
                const auto& a = cache.act[l + 1];
                for (std::size_t o = 0; o < out; ++o) {
                    delta[o] *= 1.0 - a[o] * a[o];
                }
            }
            const auto& x = cache.act[l];
            const double* w = params_.data() + offsets[l];
            double* gw = grad.data() + offsets[l];
            double* gb = gw + in * out;
            std::vector<double> prev(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                if (d == 0.0) {
                    continue;
                }
                gb[o] += d;
                const double* row = w + o * in;
                double* grow = gw + o * in;
                for (std::size_t i = 0; i < in; ++i) {
                    grow[i] += d * x[i];
                    prev[i] += d * row[i];
                }
            }
            delta = std::move(prev);
        }
    }

  private:
    std::vector<std::size_t> sizes_;
    std::vector<double> params_;
};

/// Adam over a flat parameter vector (minimises).
class Adam
{
  public:
    Adam() = default;
    Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-5)
        : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps)
    {
    }

    void step(std::span<double> params, std::span<const double> grad, double lr)
    {
        if (params.size() != m_.size() || grad.size() != m_.size()) {
            throw std::invalid_argument("adam: size mismatch");
        }
        if (lr == 0.0) {
            return;
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
            v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
            const double mhat = m_[k] / c1;
            const double vhat = v_[k] / c2;
            params[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }

    long long steps() const noexcept { return t_; }
    const std::vector<double>& first_moment() const noexcept { return m_; }
    const std::vector<double>& second_moment() const noexcept { return v_; }
    void restore(std::vector<double> m, std::vector<double> v, long long t)
    {
        if (m.size() != m_.size() || v.size() != v_.size()) {
            throw std::invalid_argument("adam: restored state size mismatch");
        }
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = t;
    }

  private:
    std::vector<double> m_;
    std::vector<double> v_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-5;
    long long t_ = 0;
};

}  // namespace epinet::nn
