#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ccdl/rng.hpp"
#include "ccdl/tensor.hpp"

namespace ccdl {

// Named view into a parameter and its gradient accumulator.
struct ParamView {
    std::string name;
    std::vector<float>* w;
    std::vector<float>* g;
};

// Named view into non-trainable state (e.g. batchnorm running stats).
struct BufferView {
    std::string name;
    std::vector<float>* b;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, bool train) = 0;
    // Consumes the gradient w.r.t. this layer's output, accumulates parameter
    // gradients, returns the gradient w.r.t. the input.
    virtual Tensor backward(const Tensor& dy) = 0;
    virtual void init_params(Rng&) {}
    virtual std::vector<ParamView> params() { return {}; }
    virtual std::vector<BufferView> buffers() { return {}; }
    virtual std::string kind() const = 0;
};

// ---------------------------------------------------------------------------

class Linear : public Layer {
public:
    Linear(int in, int out, bool bias = true) : in_(in), out_(out), use_bias_(bias) {
        w_.assign(static_cast<size_t>(in) * out, 0.f);
        gw_.assign(w_.size(), 0.f);
        if (use_bias_) {
            b_.assign(static_cast<size_t>(out), 0.f);
            gb_.assign(b_.size(), 0.f);
        }
    }

    void init_params(Rng& rng) override {
        const float bound = 1.f / std::sqrt(static_cast<float>(in_));
        for (auto& x : w_) x = rng.uniform(-bound, bound);
        for (auto& x : b_) x = rng.uniform(-bound, bound);
    }

    Tensor forward(const Tensor& x, bool) override {
        check(x.stride0() == static_cast<size_t>(in_), "Linear: input size mismatch");
        x_ = x;
        const int n = x.batch();
        Tensor y({n, out_});
        y.mat(n, out_).noalias() = x.mat(n, in_) * CMapRM(w_.data(), out_, in_).transpose();
        if (use_bias_) y.mat(n, out_).rowwise() += CVecMap(b_.data(), out_).transpose();
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        const int n = dy.batch();
        MapRM(gw_.data(), out_, in_).noalias() += dy.mat(n, out_).transpose() * x_.mat(n, in_);
        if (use_bias_) VecMap(gb_.data(), out_) += dy.mat(n, out_).colwise().sum().transpose();
        Tensor dx(x_.shape);
        dx.mat(n, in_).noalias() = dy.mat(n, out_) * CMapRM(w_.data(), out_, in_);
        return dx;
    }

    std::vector<ParamView> params() override {
        std::vector<ParamView> p{{"weight", &w_, &gw_}};
        if (use_bias_) p.push_back({"bias", &b_, &gb_});
        return p;
    }
    std::string kind() const override { return "linear"; }

    int in_features() const { return in_; }
    int out_features() const { return out_; }

private:
    int in_, out_;
    bool use_bias_;
    std::vector<float> w_, b_, gw_, gb_;
    Tensor x_;
};

// ---------------------------------------------------------------------------

class Conv2d : public Layer {
public:
    Conv2d(int in_c, int out_c, int k, int stride = 1, int pad = 0, bool bias = true)
        : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad), use_bias_(bias) {
        w_.assign(static_cast<size_t>(out_c) * in_c * k * k, 0.f);
        gw_.assign(w_.size(), 0.f);
        if (use_bias_) {
            b_.assign(static_cast<size_t>(out_c), 0.f);
            gb_.assign(b_.size(), 0.f);
        }
    }

    void init_params(Rng& rng) override {
        const float bound = 1.f / std::sqrt(static_cast<float>(in_c_ * k_ * k_));
        for (auto& x : w_) x = rng.uniform(-bound, bound);
        for (auto& x : b_) x = rng.uniform(-bound, bound);
    }

    Tensor forward(const Tensor& x, bool) override {
        check(x.shape.size() == 4 && x.dim(1) == in_c_, "Conv2d: bad input shape");
        x_ = x;
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        oh_ = (h + 2 * pad_ - k_) / stride_ + 1;
        ow_ = (w + 2 * pad_ - k_) / stride_ + 1;
        const int kk = in_c_ * k_ * k_, p = oh_ * ow_;

        cols_.assign(static_cast<size_t>(n) * p * kk, 0.f);
        for (int i = 0; i < n; ++i) im2col(x.data() + i * x.stride0(), h, w, cols_.data() + static_cast<size_t>(i) * p * kk);

        Tensor y({n, out_c_, oh_, ow_});
        CMapRM wm(w_.data(), out_c_, kk);
        for (int i = 0; i < n; ++i) {
            CMapRM c(cols_.data() + static_cast<size_t>(i) * p * kk, p, kk);
            MapRM yo(y.data() + i * y.stride0(), out_c_, p);
            yo.noalias() = wm * c.transpose();
            if (use_bias_) yo.colwise() += CVecMap(b_.data(), out_c_);
        }
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        const int n = dy.dim(0), kk = in_c_ * k_ * k_, p = oh_ * ow_;
        const int h = x_.dim(2), w = x_.dim(3);
        Tensor dx(x_.shape);
        MapRM gwm(gw_.data(), out_c_, kk);
        CMapRM wm(w_.data(), out_c_, kk);
        MatRM dcols(p, kk);
        for (int i = 0; i < n; ++i) {
            CMapRM dyo(dy.data() + i * dy.stride0(), out_c_, p);
            CMapRM c(cols_.data() + static_cast<size_t>(i) * p * kk, p, kk);
            gwm.noalias() += dyo * c;
            if (use_bias_) VecMap(gb_.data(), out_c_) += dyo.rowwise().sum();
            dcols.noalias() = dyo.transpose() * wm;
            col2im(dcols.data(), h, w, dx.data() + i * dx.stride0());
        }
        return dx;
    }

    std::vector<ParamView> params() override {
        std::vector<ParamView> pv{{"weight", &w_, &gw_}};
        if (use_bias_) pv.push_back({"bias", &b_, &gb_});
        return pv;
    }
    std::string kind() const override { return "conv2d"; }

private:
    // Patch matrix is (oh*ow) x (in_c*k*k), row-major, one row per output pixel.
    void im2col(const float* x, int h, int w, float* cols) const {
        const int kk = in_c_ * k_ * k_;
        for (int oy = 0; oy < oh_; ++oy) {
            for (int ox = 0; ox < ow_; ++ox) {
                float* row = cols + (static_cast<size_t>(oy) * ow_ + ox) * kk;
                int r = 0;
                for (int c = 0; c < in_c_; ++c) {
                    const float* xc = x + static_cast<size_t>(c) * h * w;
                    for (int ky = 0; ky < k_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        for (int kx = 0; kx < k_; ++kx, ++r) {
                            const int ix = ox * stride_ - pad_ + kx;
                            row[r] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? xc[iy * w + ix] : 0.f;
                        }
                    }
                }
            }
        }
    }

    void col2im(const float* cols, int h, int w, float* dx) const {
        const int kk = in_c_ * k_ * k_;
        for (int oy = 0; oy < oh_; ++oy) {
            for (int ox = 0; ox < ow_; ++ox) {
                const float* row = cols + (static_cast<size_t>(oy) * ow_ + ox) * kk;
                int r = 0;
                for (int c = 0; c < in_c_; ++c) {
                    float* xc = dx + static_cast<size_t>(c) * h * w;
                    for (int ky = 0; ky < k_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        for (int kx = 0; kx < k_; ++kx, ++r) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (iy >= 0 && iy < h && ix >= 0 && ix < w) xc[iy * w + ix] += row[r];
                        }
                    }
                }
            }
        }
    }

    int in_c_, out_c_, k_, stride_, pad_;
    bool use_bias_;
    int oh_ = 0, ow_ = 0;
    std::vector<float> w_, b_, gw_, gb_;
    std::vector<float> cols_;
    Tensor x_;
};

// ---------------------------------------------------------------------------

class BatchNorm2d : public Layer {
public:
    explicit BatchNorm2d(int c, bool affine = true, float eps = 1e-5f, float momentum = 0.1f)
        : c_(c), affine_(affine), eps_(eps), momentum_(momentum) {
        if (affine_) {
            gamma_.assign(static_cast<size_t>(c), 1.f);
            beta_.assign(static_cast<size_t>(c), 0.f);
            ggamma_.assign(gamma_.size(), 0.f);
            gbeta_.assign(beta_.size(), 0.f);
        }
        run_mean_.assign(static_cast<size_t>(c), 0.f);
        run_var_.assign(static_cast<size_t>(c), 1.f);
    }

    Tensor forward(const Tensor& x, bool train) override {
        check(x.shape.size() == 4 && x.dim(1) == c_, "BatchNorm2d: bad input shape");
        train_ = train;
        const int n = x.dim(0), hw = x.dim(2) * x.dim(3);
        const size_t m = static_cast<size_t>(n) * hw;
        Tensor y(x.shape);
        xhat_ = Tensor(x.shape);
        invstd_.assign(static_cast<size_t>(c_), 0.f);

        for (int c = 0; c < c_; ++c) {
            float mean, var;
            if (train_) {
                double s = 0, s2 = 0;
                for (int i = 0; i < n; ++i) {
                    const float* p = x.data() + i * x.stride0() + static_cast<size_t>(c) * hw;
                    for (int j = 0; j < hw; ++j) {
                        s += p[j];
                        s2 += static_cast<double>(p[j]) * p[j];
                    }
                }
                mean = static_cast<float>(s / m);
                var = static_cast<float>(s2 / m - static_cast<double>(mean) * mean);
                if (var < 0.f) var = 0.f;
                run_mean_[c] = (1.f - momentum_) * run_mean_[c] + momentum_ * mean;
                // unbiased variance in the running estimate, as is conventional
                const float unbiased = m > 1 ? var * static_cast<float>(m) / (m - 1) : var;
                run_var_[c] = (1.f - momentum_) * run_var_[c] + momentum_ * unbiased;
            } else {
                mean = run_mean_[c];
                var = run_var_[c];
            }
            const float istd = 1.f / std::sqrt(var + eps_);
            invstd_[c] = istd;
            const float g = affine_ ? gamma_[c] : 1.f;
            const float b = affine_ ? beta_[c] : 0.f;
            for (int i = 0; i < n; ++i) {
                const float* p = x.data() + i * x.stride0() + static_cast<size_t>(c) * hw;
                float* xh = xhat_.data() + i * x.stride0() + static_cast<size_t>(c) * hw;
                float* q = y.data() + i * x.stride0() + static_cast<size_t>(c) * hw;
                for (int j = 0; j < hw; ++j) {
                    xh[j] = (p[j] - mean) * istd;
                    q[j] = g * xh[j] + b;
                }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        const int n = dy.dim(0), hw = dy.dim(2) * dy.dim(3);
        const float m = static_cast<float>(n) * hw;
        Tensor dx(dy.shape);
        for (int c = 0; c < c_; ++c) {
            const float g = affine_ ? gamma_[c] : 1.f;
            if (!train_) {
                const float k = g * invstd_[c];
                float dg = 0.f, db = 0.f;
                for (int i = 0; i < n; ++i) {
                    const float* d = dy.data() + i * dy.stride0() + static_cast<size_t>(c) * hw;
                    const float* xh = xhat_.data() + i * dy.stride0() + static_cast<size_t>(c) * hw;
                    float* o = dx.data() + i * dy.stride0() + static_cast<size_t>(c) * hw;
                    for (int j = 0; j < hw; ++j) {
                        o[j] = d[j] * k;
                        dg += d[j] * xh[j];
                        db += d[j];
                    }
                }
                if (affine_) {
                    ggamma_[c] += dg;
                    gbeta_[c] += db;
                }
                continue;
            }
            double sd = 0, sdx = 0;
            for (int i = 0; i < n; ++i) {
                const float* d = dy.data() + i * dy.stride0() + static_cast<size_t>(c) * hw;
                const float* xh = xhat_.data() + i * dy.stride0() + static_cast<size_t>(c) * hw;
                for (int j = 0; j < hw; ++j) {
                    sd += d[j];
                    sdx += static_cast<double>(d[j]) * xh[j];
                }
            }
            if (affine_) {
                ggamma_[c] += static_cast<float>(sdx);
                gbeta_[c] += static_cast<float>(sd);
            }
            const float k = g * invstd_[c] / m;
            const float mean_d = static_cast<float>(sd);
            const float mean_dx = static_cast<float>(sdx);
            for (int i = 0; i < n; ++i) {
                const float* d = dy.data() + i * dy.stride0() + static_cast<size_t>(c) * hw;
                const float* xh = xhat_.data() + i * dy.stride0() + static_cast<size_t>(c) * hw;
                float* o = dx.data() + i * dy.stride0() + static_cast<size_t>(c) * hw;
                for (int j = 0; j < hw; ++j) o[j] = k * (m * d[j] - mean_d - xh[j] * mean_dx);
            }
        }
        return dx;
    }

    std::vector<ParamView> params() override {
        if (!affine_) return {};
        return {{"gamma", &gamma_, &ggamma_}, {"beta", &beta_, &gbeta_}};
    }
    std::vector<BufferView> buffers() override { return {{"run_mean", &run_mean_}, {"run_var", &run_var_}}; }
    std::string kind() const override { return "batchnorm2d"; }

private:
    int c_;
    bool affine_;
    float eps_, momentum_;
    bool train_ = true;
    std::vector<float> gamma_, beta_, ggamma_, gbeta_;
    std::vector<float> run_mean_, run_var_;
    std::vector<float> invstd_;
    Tensor xhat_;
};

// ---------------------------------------------------------------------------

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        y_ = x;
        for (auto& v : y_.v) v = v > 0.f ? v : 0.f;
        return y_;
    }
    Tensor backward(const Tensor& dy) override {
        Tensor dx = dy;
        for (size_t i = 0; i < dx.v.size(); ++i)
            if (y_.v[i] <= 0.f) dx.v[i] = 0.f;
        return dx;
    }
    std::string kind() const override { return "relu"; }

private:
    Tensor y_;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
    Tensor forward(const Tensor& x, bool) override {
        x_ = x;
        Tensor y = x;
        for (auto& v : y.v) v = v > 0.f ? v : slope_ * v;
        return y;
    }
    Tensor backward(const Tensor& dy) override {
        Tensor dx = dy;
        for (size_t i = 0; i < dx.v.size(); ++i)
            if (x_.v[i] <= 0.f) dx.v[i] *= slope_;
        return dx;
    }
    std::string kind() const override { return "leakyrelu"; }

private:
    float slope_;
    Tensor x_;
};

class Tanh : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        y_ = x;
        for (auto& v : y_.v) v = std::tanh(v);
        return y_;
    }
    Tensor backward(const Tensor& dy) override {
        Tensor dx = dy;
        for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= 1.f - y_.v[i] * y_.v[i];
        return dx;
    }
    std::string kind() const override { return "tanh"; }

private:
    Tensor y_;
};

// ---------------------------------------------------------------------------

class MaxPool2d : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        check(h % 2 == 0 && w % 2 == 0, "MaxPool2d: size must be even");
        in_shape_ = x.shape;
        Tensor y({n, c, h / 2, w / 2});
        arg_.assign(y.numel(), 0);
        const int oh = h / 2, ow = w / 2;
        size_t o = 0;
        for (int i = 0; i < n; ++i) {
            for (int ch = 0; ch < c; ++ch) {
                const float* xc = x.data() + (static_cast<size_t>(i) * c + ch) * h * w;
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox, ++o) {
                        int best = (2 * oy) * w + 2 * ox;
                        for (int dy2 = 0; dy2 < 2; ++dy2)
                            for (int dx2 = 0; dx2 < 2; ++dx2) {
                                const int idx = (2 * oy + dy2) * w + 2 * ox + dx2;
                                if (xc[idx] > xc[best]) best = idx;
                            }
                        y.v[o] = xc[best];
                        arg_[o] = (static_cast<size_t>(i) * c + ch) * h * w + best;
                    }
                }
            }
        }
        return y;
    }
    Tensor backward(const Tensor& dy) override {
        Tensor dx(in_shape_);
        for (size_t o = 0; o < dy.v.size(); ++o) dx.v[arg_[o]] += dy.v[o];
        return dx;
    }
    std::string kind() const override { return "maxpool2d"; }

private:
    std::vector<int> in_shape_;
    std::vector<size_t> arg_;
};

// Global average pool over H x W, yields N x C.
class GlobalAvgPool : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        in_shape_ = x.shape;
        const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        Tensor y({n, c});
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch) {
                const float* p = x.data() + (static_cast<size_t>(i) * c + ch) * hw;
                float s = 0.f;
                for (int j = 0; j < hw; ++j) s += p[j];
                y.v[static_cast<size_t>(i) * c + ch] = s / hw;
            }
        return y;
    }
    Tensor backward(const Tensor& dy) override {
        Tensor dx(in_shape_);
        const int n = dx.dim(0), c = dx.dim(1), hw = dx.dim(2) * dx.dim(3);
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch) {
                const float g = dy.v[static_cast<size_t>(i) * c + ch] / hw;
                float* p = dx.data() + (static_cast<size_t>(i) * c + ch) * hw;
                for (int j = 0; j < hw; ++j) p[j] = g;
            }
        return dx;
    }
    std::string kind() const override { return "gavgpool"; }

private:
    std::vector<int> in_shape_;
};

class Upsample2x : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        in_shape_ = x.shape;
        Tensor y({n, c, 2 * h, 2 * w});
        for (int i = 0; i < n * c; ++i) {
            const float* xc = x.data() + static_cast<size_t>(i) * h * w;
            float* yc = y.data() + static_cast<size_t>(i) * 4 * h * w;
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix) {
                    const float v = xc[iy * w + ix];
                    float* q = yc + (2 * iy) * 2 * w + 2 * ix;
                    q[0] = v;
                    q[1] = v;
                    q[2 * w] = v;
                    q[2 * w + 1] = v;
                }
        }
        return y;
    }
    Tensor backward(const Tensor& dy) override {
        Tensor dx(in_shape_);
        const int h = in_shape_[2], w = in_shape_[3];
        const int nc = in_shape_[0] * in_shape_[1];
        for (int i = 0; i < nc; ++i) {
            float* xc = dx.data() + static_cast<size_t>(i) * h * w;
            const float* yc = dy.data() + static_cast<size_t>(i) * 4 * h * w;
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix) {
                    const float* q = yc + (2 * iy) * 2 * w + 2 * ix;
                    xc[iy * w + ix] = q[0] + q[1] + q[2 * w] + q[2 * w + 1];
                }
        }
        return dx;
    }
    std::string kind() const override { return "upsample2x"; }

private:
    std::vector<int> in_shape_;
};

// Reshapes each batch item to a fixed shape; pure view change.
class Reshape : public Layer {
public:
    explicit Reshape(std::vector<int> item_shape) : item_(std::move(item_shape)) {}
    Tensor forward(const Tensor& x, bool) override {
        in_shape_ = x.shape;
        Tensor y = x;
        y.shape = {x.batch()};
        y.shape.insert(y.shape.end(), item_.begin(), item_.end());
        check(y.numel() == x.numel(), "Reshape: element count mismatch");
        return y;
    }
    Tensor backward(const Tensor& dy) override {
        Tensor dx = dy;
        dx.shape = in_shape_;
        return dx;
    }
    std::string kind() const override { return "reshape"; }

private:
    std::vector<int> item_, in_shape_;
};

// ---------------------------------------------------------------------------

// Residual basic block: conv-bn-relu-conv-bn + (projection) shortcut, relu.
class BasicBlock : public Layer {
public:
    BasicBlock(int in_c, int out_c, int stride)
        : conv1_(in_c, out_c, 3, stride, 1, false),
          bn1_(out_c),
          conv2_(out_c, out_c, 3, 1, 1, false),
          bn2_(out_c),
          project_(in_c != out_c || stride != 1) {
        if (project_) {
            proj_conv_ = std::make_unique<Conv2d>(in_c, out_c, 1, stride, 0, false);
            proj_bn_ = std::make_unique<BatchNorm2d>(out_c);
        }
    }

    void init_params(Rng& rng) override {
        conv1_.init_params(rng);
        conv2_.init_params(rng);
        if (project_) proj_conv_->init_params(rng);
    }

    Tensor forward(const Tensor& x, bool train) override {
        Tensor h = bn1_.forward(conv1_.forward(x, train), train);
        h = relu1_.forward(h, train);
        h = bn2_.forward(conv2_.forward(h, train), train);
        Tensor s = project_ ? proj_bn_->forward(proj_conv_->forward(x, train), train) : x;
        check(same_shape(h, s), "BasicBlock: shortcut shape mismatch");
        for (size_t i = 0; i < h.v.size(); ++i) h.v[i] += s.v[i];
        return relu2_.forward(h, train);
    }

    Tensor backward(const Tensor& dy) override {
        Tensor d = relu2_.backward(dy);
        // d splits into the residual branch and the shortcut
        Tensor dmain = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(d)))));
        Tensor dshort = project_ ? proj_conv_->backward(proj_bn_->backward(d)) : d;
        for (size_t i = 0; i < dmain.v.size(); ++i) dmain.v[i] += dshort.v[i];
        return dmain;
    }

    std::vector<ParamView> params() override {
        std::vector<ParamView> out;
        auto add = [&](const std::string& prefix, Layer& l) {
            for (auto& p : l.params()) out.push_back({prefix + "." + p.name, p.w, p.g});
        };
        add("conv1", conv1_);
        add("bn1", bn1_);
        add("conv2", conv2_);
        add("bn2", bn2_);
        if (project_) {
            add("proj_conv", *proj_conv_);
            add("proj_bn", *proj_bn_);
        }
        return out;
    }
    std::vector<BufferView> buffers() override {
        std::vector<BufferView> out;
        auto add = [&](const std::string& prefix, Layer& l) {
            for (auto& b : l.buffers()) out.push_back({prefix + "." + b.name, b.b});
        };
        add("bn1", bn1_);
        add("bn2", bn2_);
        if (project_) add("proj_bn", *proj_bn_);
        return out;
    }
    std::string kind() const override { return "basicblock"; }

private:
    Conv2d conv1_;
    BatchNorm2d bn1_;
    Conv2d conv2_;
    BatchNorm2d bn2_;
    ReLU relu1_, relu2_;
    bool project_;
    std::unique_ptr<Conv2d> proj_conv_;
    std::unique_ptr<BatchNorm2d> proj_bn_;
};

// ---------------------------------------------------------------------------

// Gradients injected into intermediate activations during a backward pass,
// keyed by the index of the layer whose output they refer to.
using TapGrads = std::map<int, Tensor>;

class Sequential {
public:
    Sequential() = default;

    Sequential& add(std::unique_ptr<Layer> l) {
        layers_.push_back(std::move(l));
        return *this;
    }
    template <typename L, typename... Args>
    Sequential& emplace(Args&&... args) {
        layers_.push_back(std::make_unique<L>(std::forward<Args>(args)...));
        return *this;
    }

    size_t size() const { return layers_.size(); }
    Layer& at(size_t i) { return *layers_[i]; }

    void init_params(Rng& rng) {
        for (auto& l : layers_) l->init_params(rng);
    }

    Tensor forward(const Tensor& x, bool train, const std::vector<int>* tap_idx = nullptr,
                   std::vector<Tensor>* taps = nullptr) {
        Tensor h = x;
        size_t t = 0;
        for (size_t i = 0; i < layers_.size(); ++i) {
            h = layers_[i]->forward(h, train);
            if (tap_idx && t < tap_idx->size() && (*tap_idx)[t] == static_cast<int>(i)) {
                taps->push_back(h);
                ++t;
            }
        }
        return h;
    }

    // Backward from the top gradient, optionally adding tap gradients at the
    // layer outputs they were recorded from.
    Tensor backward(const Tensor& dy, const TapGrads* tap_grads = nullptr) {
        Tensor d = dy;
        for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
            if (tap_grads) {
                auto it = tap_grads->find(i);
                if (it != tap_grads->end()) {
                    check(same_shape(d, it->second), "tap gradient shape mismatch");
                    for (size_t j = 0; j < d.v.size(); ++j) d.v[j] += it->second.v[j];
                }
            }
            d = layers_[i]->backward(d);
        }
        return d;
    }

    std::vector<ParamView> params() {
        std::vector<ParamView> out;
        for (size_t i = 0; i < layers_.size(); ++i)
            for (auto& p : layers_[i]->params())
                out.push_back({std::to_string(i) + "." + layers_[i]->kind() + "." + p.name, p.w, p.g});
        return out;
    }
    std::vector<BufferView> buffers() {
        std::vector<BufferView> out;
        for (size_t i = 0; i < layers_.size(); ++i)
            for (auto& b : layers_[i]->buffers())
                out.push_back({std::to_string(i) + "." + layers_[i]->kind() + "." + b.name, b.b});
        return out;
    }

    void zero_grad() {
        for (auto& p : params()) std::fill(p.g->begin(), p.g->end(), 0.f);
    }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace ccdl
