#include <catch2/catch_amalgamated.hpp>

#include "ccdl/layers.hpp"
#include "ccdl/nets.hpp"
#include "ccdl/optim.hpp"

using namespace ccdl;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float scale = 1.f) {
    Tensor t(std::move(shape));
    for (auto& v : t.v) v = scale * rng.normal();
    return t;
}

// Scalar probe loss: sum(y * r) for a fixed random r, so dL/dy = r.
struct Probe {
    Tensor r;
    explicit Probe(const Tensor& y, Rng& rng) : r(y.shape) {
        for (auto& v : r.v) v = rng.normal();
    }
    double loss(const Tensor& y) const {
        double s = 0;
        for (size_t i = 0; i < y.v.size(); ++i) s += static_cast<double>(y.v[i]) * r.v[i];
        return s;
    }
};

// Central finite differences on each parameter and on the input, compared
// against the layer's analytic backward.
void gradcheck_layer(Layer& layer, const Tensor& x0, bool train, float tol = 2e-2f, int stride_check = 1,
                     float h = 1e-2f) {
    Rng rng(99);
    Tensor x = x0;
    for (auto& pv : layer.params()) std::fill(pv.g->begin(), pv.g->end(), 0.f);
    Tensor y = layer.forward(x, train);
    Probe probe(y, rng);
    Tensor dx = layer.backward(probe.r);
    std::vector<std::vector<float>> gsnap;
    for (auto& pv : layer.params()) gsnap.push_back(*pv.g);

    auto eval = [&](const Tensor& xin) { return probe.loss(layer.forward(xin, train)); };

    for (size_t i = 0; i < x.v.size(); i += static_cast<size_t>(stride_check)) {
        Tensor xp = x, xm = x;
        xp.v[i] += h;
        xm.v[i] -= h;
        const double num = (eval(xp) - eval(xm)) / (2.0 * h);
        const double ana = dx.v[i];
        const double denom = std::max({1.0, std::abs(num), std::abs(ana)});
        INFO("input grad at " << i << ": numeric " << num << " analytic " << ana);
        REQUIRE(std::abs(num - ana) / denom < tol);
    }

    auto params = layer.params();
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        for (size_t i = 0; i < p.w->size(); i += static_cast<size_t>(stride_check)) {
            const float keep = (*p.w)[i];
            (*p.w)[i] = keep + h;
            const double lp = eval(x);
            (*p.w)[i] = keep - h;
            const double lm = eval(x);
            (*p.w)[i] = keep;
            const double num = (lp - lm) / (2.0 * h);
            const double ana = gsnap[pi][i];
            const double denom = std::max({1.0, std::abs(num), std::abs(ana)});
            INFO(p.name << " grad at " << i << ": numeric " << num << " analytic " << ana);
            REQUIRE(std::abs(num - ana) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("linear matches finite differences", "[layers]") {
    Rng rng(1);
    Linear l(7, 5);
    l.init_params(rng);
    gradcheck_layer(l, random_tensor({4, 7}, rng), true);
}

TEST_CASE("conv2d matches finite differences", "[layers]") {
    Rng rng(2);
    SECTION("padded stride 1") {
        Conv2d c(2, 3, 3, 1, 1);
        c.init_params(rng);
        gradcheck_layer(c, random_tensor({2, 2, 6, 6}, rng), true);
    }
    SECTION("valid 5x5") {
        Conv2d c(1, 4, 5);
        c.init_params(rng);
        gradcheck_layer(c, random_tensor({2, 1, 8, 8}, rng), true);
    }
    SECTION("strided no bias") {
        Conv2d c(2, 2, 3, 2, 1, false);
        c.init_params(rng);
        gradcheck_layer(c, random_tensor({2, 2, 8, 8}, rng), true);
    }
}

TEST_CASE("batchnorm matches finite differences", "[layers]") {
    Rng rng(3);
    SECTION("train mode") {
        BatchNorm2d bn(3);
        Tensor x = random_tensor({4, 3, 3, 3}, rng, 2.f);
        gradcheck_layer(bn, x, true);
    }
    SECTION("eval mode uses running stats") {
        BatchNorm2d bn(3);
        // seed running stats away from identity
        bn.forward(random_tensor({8, 3, 3, 3}, rng, 1.5f), true);
        gradcheck_layer(bn, random_tensor({4, 3, 3, 3}, rng), false);
    }
    SECTION("non-affine") {
        BatchNorm2d bn(2, false);
        gradcheck_layer(bn, random_tensor({4, 2, 3, 3}, rng), true);
    }
}

TEST_CASE("activations and pooling match finite differences", "[layers]") {
    Rng rng(4);
    SECTION("relu") {
        ReLU r;
        gradcheck_layer(r, random_tensor({3, 10}, rng), true);
    }
    SECTION("leaky relu") {
        LeakyReLU r(0.2f);
        gradcheck_layer(r, random_tensor({3, 10}, rng), true);
    }
    SECTION("tanh") {
        Tanh t;
        gradcheck_layer(t, random_tensor({3, 10}, rng), true, 2e-2f);
    }
    SECTION("maxpool") {
        MaxPool2d p;
        gradcheck_layer(p, random_tensor({2, 2, 6, 6}, rng), true);
    }
    SECTION("global average pool") {
        GlobalAvgPool p;
        gradcheck_layer(p, random_tensor({2, 3, 4, 4}, rng), true);
    }
    SECTION("upsample2x") {
        Upsample2x u;
        gradcheck_layer(u, random_tensor({2, 2, 3, 3}, rng), true);
    }
}

TEST_CASE("basic residual block matches finite differences", "[layers]") {
    Rng rng(5);
    SECTION("identity shortcut") {
        BasicBlock b(4, 4, 1);
        b.init_params(rng);
        gradcheck_layer(b, random_tensor({2, 4, 6, 6}, rng), true, 3e-2f, 7, 3e-3f);
    }
    SECTION("projection shortcut") {
        BasicBlock b(3, 6, 2);
        b.init_params(rng);
        gradcheck_layer(b, random_tensor({2, 3, 6, 6}, rng), true, 3e-2f, 7, 3e-3f);
    }
}

TEST_CASE("sequential tap gradients inject where recorded", "[layers]") {
    Rng rng(6);
    Sequential seq;
    seq.emplace<Linear>(6, 5);
    seq.emplace<ReLU>();
    seq.emplace<Linear>(5, 4);
    seq.init_params(rng);

    Tensor x = random_tensor({3, 6}, rng);
    std::vector<int> tap_idx{1};
    std::vector<Tensor> taps;
    Tensor y = seq.forward(x, true, &tap_idx, &taps);
    REQUIRE(taps.size() == 1);

    // loss = sum(y * ry) + sum(tap * rt)
    Probe py(y, rng);
    Probe pt(taps[0], rng);
    TapGrads tg;
    tg[1] = pt.r;
    Tensor dx = seq.backward(py.r, &tg);

    const float h = 1e-2f;
    for (size_t i = 0; i < x.v.size(); ++i) {
        auto eval = [&](const Tensor& xin) {
            std::vector<Tensor> t2;
            Tensor y2 = seq.forward(xin, true, &tap_idx, &t2);
            return py.loss(y2) + pt.loss(t2[0]);
        };
        Tensor xp = x, xm = x;
        xp.v[i] += h;
        xm.v[i] -= h;
        const double num = (eval(xp) - eval(xm)) / (2.0 * h);
        REQUIRE(std::abs(num - dx.v[i]) / std::max(1.0, std::abs(num)) < 2e-2);
    }
}

TEST_CASE("forward is deterministic for identical weights and input", "[layers]") {
    Rng rng(7);
    Trunk t1 = make_trunk("resnet-s8", {1, 12, 12});
    Rng ra(42);
    t1.net.init_params(ra);
    Tensor x = random_tensor({2, 1, 12, 12}, rng);
    Tensor y1 = t1.net.forward(x, false);
    Tensor y2 = t1.net.forward(x, false);
    REQUIRE(y1.v == y2.v);
}

TEST_CASE("optimizers take the expected step", "[optim]") {
    std::vector<float> w{1.f, -2.f}, g{0.5f, 0.25f};
    SECTION("plain sgd") {
        Sgd opt({{"w", &w, &g}}, 0.1f);
        opt.step();
        REQUIRE(w[0] == Catch::Approx(1.f - 0.1f * 0.5f));
        REQUIRE(w[1] == Catch::Approx(-2.f - 0.1f * 0.25f));
    }
    SECTION("adam first step moves by ~lr in grad sign") {
        Adam opt({{"w", &w, &g}}, 0.01f);
        opt.step();
        REQUIRE(w[0] == Catch::Approx(1.f - 0.01f).margin(1e-4));
        REQUIRE(w[1] == Catch::Approx(-2.f - 0.01f).margin(1e-4));
    }
}
