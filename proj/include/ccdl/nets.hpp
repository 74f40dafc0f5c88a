#pragma once

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ccdl/io.hpp"
#include "ccdl/layers.hpp"
#include "ccdl/optim.hpp"
#include "ccdl/rng.hpp"
#include "ccdl/tensor.hpp"

namespace ccdl {

struct TapPoint {
    std::string name;
    int layer_index;
};

// Feature extractor with named tap points and a known output dimension.
struct Trunk {
    Sequential net;
    std::string arch_id;
    std::vector<int> in_shape;  // {c, h, w}
    int feat_dim = 0;
    std::vector<TapPoint> taps;

    std::vector<int> tap_indices() const {
        std::vector<int> idx;
        for (const auto& t : taps) idx.push_back(t.layer_index);
        return idx;
    }
};

// Supported classifier trunks. "lenet" is the 28x28 convnet with three conv
// blocks and an 84-unit embedding; "resnet-s" is a four-basic-block residual
// net with global average pooling (append a width to override the default
// base of 16 channels, e.g. "resnet-s8").
inline Trunk make_trunk(const std::string& arch_id, const std::vector<int>& in_shape) {
    check(in_shape.size() == 3, "make_trunk: in_shape must be {c,h,w}");
    const int c = in_shape[0], h = in_shape[1], w = in_shape[2];
    Trunk t;
    t.arch_id = arch_id;
    t.in_shape = in_shape;
    if (arch_id == "lenet") {
        t.net.emplace<Conv2d>(c, 6, 5, 1, 2);
        t.net.emplace<ReLU>();
        t.net.emplace<MaxPool2d>();
        t.net.emplace<Conv2d>(6, 16, 5);
        t.net.emplace<ReLU>();
        t.net.emplace<MaxPool2d>();
        t.net.emplace<Conv2d>(16, 120, 5);
        t.net.emplace<ReLU>();
        const int s1 = h / 2;          // after pool1 (conv1 keeps size)
        const int s2 = (s1 - 4) / 2;   // conv2 5x5 valid, pool2
        const int s3 = s2 - 4;         // conv3 5x5 valid
        check(s3 >= 1, "lenet: input too small");
        t.net.emplace<Linear>(120 * s3 * s3, 84);
        t.net.emplace<ReLU>();
        t.feat_dim = 84;
        t.taps = {{"conv1", 2}, {"conv2", 5}, {"conv3", 7}, {"fc", 9}};
    } else if (arch_id.rfind("resnet-s", 0) == 0) {
        int base = 16;
        if (arch_id.size() > 8) base = std::stoi(arch_id.substr(8));
        check(base >= 2, "resnet-s: base width too small");
        t.net.emplace<Conv2d>(c, base, 3, 1, 1, false);
        t.net.emplace<BatchNorm2d>(base);
        t.net.emplace<ReLU>();
        t.net.emplace<BasicBlock>(base, base, 1);
        t.net.emplace<BasicBlock>(base, 2 * base, 2);
        t.net.emplace<BasicBlock>(2 * base, 4 * base, 2);
        t.net.emplace<BasicBlock>(4 * base, 4 * base, 1);
        t.net.emplace<GlobalAvgPool>();
        t.feat_dim = 4 * base;
        t.taps = {{"stem", 2}, {"block1", 3}, {"block2", 4}, {"block3", 5}, {"block4", 6}, {"pool", 7}};
    } else {
        throw ConfigError("unknown architecture: " + arch_id);
    }
    return t;
}

// ---------------------------------------------------------------------------

// Image generator: latent vector -> image in [-1,1], final Tanh. Width of the
// intermediate conv stack is configurable; 128 matches the reference stack.
class GeneratorNet {
public:
    GeneratorNet(int latent_dim, std::vector<int> image_shape, int base_channels = 128)
        : latent_dim_(latent_dim), image_shape_(std::move(image_shape)), base_(base_channels) {
        const int ch = image_shape_[0], s = image_shape_[1];
        check(image_shape_[1] == image_shape_[2], "generator: square images only");
        check(s % 4 == 0, "generator: image size must be divisible by 4");
        const int s0 = s / 4;
        net_.emplace<Linear>(latent_dim_, base_ * s0 * s0);
        net_.emplace<Reshape>(std::vector<int>{base_, s0, s0});
        net_.emplace<BatchNorm2d>(base_);
        net_.emplace<Upsample2x>();
        net_.emplace<Conv2d>(base_, base_, 3, 1, 1);
        net_.emplace<BatchNorm2d>(base_);
        net_.emplace<LeakyReLU>(0.2f);
        net_.emplace<Upsample2x>();
        net_.emplace<Conv2d>(base_, base_ / 2, 3, 1, 1);
        net_.emplace<BatchNorm2d>(base_ / 2);
        net_.emplace<LeakyReLU>(0.2f);
        net_.emplace<Conv2d>(base_ / 2, ch, 3, 1, 1);
        net_.emplace<Tanh>();
    }

    void init_params(Rng& rng) { net_.init_params(rng); }

    int latent_dim() const { return latent_dim_; }
    const std::vector<int>& image_shape() const { return image_shape_; }
    int base_channels() const { return base_; }
    size_t image_numel() const { return Tensor::numel_of(image_shape_); }

    Tensor forward(const Tensor& z, bool train) {
        check(z.shape.size() == 2 && z.dim(1) == latent_dim_, "generator: latent dimension mismatch");
        check(z.finite(), "generator: non-finite latent input");
        return net_.forward(z, train);
    }

    // Chains an upstream gradient at the output image into parameter grads.
    void backward(const Tensor& d_image) { net_.backward(d_image); }

    Sequential& net() { return net_; }

    Tensor sample_latent(int n, Rng& rng) const {
        Tensor z({n, latent_dim_});
        for (auto& v : z.v) v = rng.normal();
        return z;
    }

    void save(std::ostream& os) {
        io::put_str(os, "ccdl-gen");
        io::put_i32(os, latent_dim_);
        io::put_i32(os, base_);
        io::put_u32(os, static_cast<uint32_t>(image_shape_.size()));
        for (int d : image_shape_) io::put_i32(os, d);
        auto ps = net_.params();
        auto bs = net_.buffers();
        io::put_u32(os, static_cast<uint32_t>(ps.size()));
        for (auto& p : ps) {
            io::put_str(os, p.name);
            io::put_floats(os, *p.w);
        }
        io::put_u32(os, static_cast<uint32_t>(bs.size()));
        for (auto& b : bs) {
            io::put_str(os, b.name);
            io::put_floats(os, *b.b);
        }
    }

    static GeneratorNet load(std::istream& is) {
        check(io::get_str(is) == "ccdl-gen", "not a generator checkpoint");
        const int latent = io::get_i32(is);
        const int base = io::get_i32(is);
        const uint32_t nd = io::get_u32(is);
        std::vector<int> shape(nd);
        for (auto& d : shape) d = io::get_i32(is);
        GeneratorNet g(latent, shape, base);
        const uint32_t np = io::get_u32(is);
        auto ps = g.net_.params();
        check(np == ps.size(), "generator checkpoint: parameter count mismatch");
        for (uint32_t i = 0; i < np; ++i) {
            const std::string name = io::get_str(is);
            check(name == ps[i].name, "generator checkpoint: parameter order mismatch");
            *ps[i].w = io::get_floats(is);
        }
        const uint32_t nb = io::get_u32(is);
        auto bs = g.net_.buffers();
        check(nb == bs.size(), "generator checkpoint: buffer count mismatch");
        for (uint32_t i = 0; i < nb; ++i) {
            io::get_str(is);
            *bs[i].b = io::get_floats(is);
        }
        return g;
    }

private:
    int latent_dim_;
    std::vector<int> image_shape_;
    int base_;
    Sequential net_;
};

// ---------------------------------------------------------------------------

// Shared trunk plus one linear head per learned task. A single-head instance
// doubles as a plain classifier (teacher training uses it that way).
class MultiHeadClassifier {
public:
    MultiHeadClassifier(const std::string& arch_id, const std::vector<int>& in_shape)
        : trunk_(make_trunk(arch_id, in_shape)) {}

    void init_params(Rng& rng) { trunk_.net.init_params(rng); }

    const std::string& arch_id() const { return trunk_.arch_id; }
    const std::vector<int>& in_shape() const { return trunk_.in_shape; }
    int feat_dim() const { return trunk_.feat_dim; }
    int num_heads() const { return static_cast<int>(heads_.size()); }
    int head_classes(int task_id) const { return head(task_id).out_features(); }
    const std::vector<TapPoint>& tap_points() const { return trunk_.taps; }

    // task ids are 1-based and must be added in order
    void add_head(int num_classes, Rng& rng) {
        auto h = std::make_unique<Linear>(trunk_.feat_dim, num_classes);
        h->init_params(rng);
        heads_.push_back(std::move(h));
    }

    bool has_head(int task_id) const { return task_id >= 1 && task_id <= num_heads(); }

    Linear& head(int task_id) {
        check(has_head(task_id), "missing head for task " + std::to_string(task_id));
        return *heads_[static_cast<size_t>(task_id - 1)];
    }
    const Linear& head(int task_id) const {
        check(has_head(task_id), "missing head for task " + std::to_string(task_id));
        return *heads_[static_cast<size_t>(task_id - 1)];
    }

    // Trunk features; optionally records tap activations in trunk order.
    Tensor features(const Tensor& x, bool train, std::vector<Tensor>* taps = nullptr) {
        if (taps) {
            auto idx = trunk_.tap_indices();
            return trunk_.net.forward(x, train, &idx, taps);
        }
        return trunk_.net.forward(x, train);
    }

    Tensor forward(const Tensor& x, int task_id, bool train = false) {
        Tensor f = features(x, train);
        return head(task_id).forward(f, train);
    }

    // One activation tensor per registered tap, in trunk order; heads excluded.
    std::vector<std::pair<std::string, Tensor>> feature_taps(const Tensor& x, bool train = false) {
        std::vector<Tensor> taps;
        features(x, train, &taps);
        std::vector<std::pair<std::string, Tensor>> out;
        for (size_t i = 0; i < taps.size(); ++i) out.emplace_back(trunk_.taps[i].name, std::move(taps[i]));
        return out;
    }

    Sequential& trunk_net() { return trunk_.net; }

    std::vector<ParamView> trunk_params() { return trunk_.net.params(); }
    std::vector<ParamView> head_params(int task_id) {
        std::vector<ParamView> out;
        for (auto& p : head(task_id).params())
            out.push_back({"head" + std::to_string(task_id) + "." + p.name, p.w, p.g});
        return out;
    }
    std::vector<ParamView> all_params() {
        auto out = trunk_params();
        for (int t = 1; t <= num_heads(); ++t)
            for (auto& p : head_params(t)) out.push_back(p);
        return out;
    }

    void zero_grad() {
        for (auto& p : all_params()) std::fill(p.g->begin(), p.g->end(), 0.f);
    }

    uint64_t param_hash() {
        uint64_t h = 1469598103934665603ull;
        for (auto& p : all_params()) h = fnv1a(p.w->data(), p.w->size() * 4, h);
        for (auto& b : trunk_.net.buffers()) h = fnv1a(b.b->data(), b.b->size() * 4, h);
        return h;
    }

    // ----- checkpoint -----

    struct Meta {
        int task_id = 0;
        float val_accuracy = 0.f;
        std::string dataset;
        uint64_t seed = 0;
    };
    Meta meta;

    void save(std::ostream& os) {
        io::put_str(os, "ccdl-net");
        io::put_str(os, trunk_.arch_id);
        io::put_u32(os, 3);
        for (int d : trunk_.in_shape) io::put_i32(os, d);
        io::put_u32(os, static_cast<uint32_t>(heads_.size()));
        for (auto& h : heads_) io::put_i32(os, h->out_features());
        io::put_i32(os, meta.task_id);
        io::put_f32(os, meta.val_accuracy);
        io::put_str(os, meta.dataset);
        io::put_u64(os, meta.seed);
        auto dump = [&](std::vector<ParamView> ps) {
            io::put_u32(os, static_cast<uint32_t>(ps.size()));
            for (auto& p : ps) {
                io::put_str(os, p.name);
                io::put_floats(os, *p.w);
            }
        };
        dump(all_params());
        auto bs = trunk_.net.buffers();
        io::put_u32(os, static_cast<uint32_t>(bs.size()));
        for (auto& b : bs) {
            io::put_str(os, b.name);
            io::put_floats(os, *b.b);
        }
    }

    static MultiHeadClassifier load(std::istream& is) {
        check(io::get_str(is) == "ccdl-net", "not a classifier checkpoint");
        const std::string arch = io::get_str(is);
        const uint32_t nd = io::get_u32(is);
        std::vector<int> shape(nd);
        for (auto& d : shape) d = io::get_i32(is);
        MultiHeadClassifier m(arch, shape);
        const uint32_t nh = io::get_u32(is);
        Rng dummy(0);
        for (uint32_t i = 0; i < nh; ++i) m.add_head(io::get_i32(is), dummy);
        m.meta.task_id = io::get_i32(is);
        m.meta.val_accuracy = io::get_f32(is);
        m.meta.dataset = io::get_str(is);
        m.meta.seed = io::get_u64(is);
        auto ps = m.all_params();
        const uint32_t np = io::get_u32(is);
        check(np == ps.size(), "classifier checkpoint: parameter count mismatch");
        for (uint32_t i = 0; i < np; ++i) {
            const std::string name = io::get_str(is);
            check(name == ps[i].name, "classifier checkpoint: parameter order mismatch at " + name);
            *ps[i].w = io::get_floats(is);
        }
        auto bs = m.trunk_.net.buffers();
        const uint32_t nb = io::get_u32(is);
        check(nb == bs.size(), "classifier checkpoint: buffer count mismatch");
        for (uint32_t i = 0; i < nb; ++i) {
            io::get_str(is);
            *bs[i].b = io::get_floats(is);
        }
        return m;
    }

    void save_file(const std::string& path) {
        io::fs::create_directories(io::fs::path(path).parent_path());
        std::ofstream os(path, std::ios::binary);
        check(bool(os), "cannot write " + path);
        save(os);
    }
    static MultiHeadClassifier load_file(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        check(bool(is), "cannot read " + path);
        return load(is);
    }

    MultiHeadClassifier clone() {
        std::stringstream ss;
        save(ss);
        return load(ss);
    }

private:
    Trunk trunk_;
    std::vector<std::unique_ptr<Linear>> heads_;
};

// -------- small math helpers shared by training and evaluation --------

inline void softmax_rows(Tensor& logits) {
    const int n = logits.batch(), c = static_cast<int>(logits.stride0());
    for (int i = 0; i < n; ++i) {
        float* p = logits.data() + static_cast<size_t>(i) * c;
        float mx = p[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, p[j]);
        float s = 0.f;
        for (int j = 0; j < c; ++j) {
            p[j] = std::exp(p[j] - mx);
            s += p[j];
        }
        for (int j = 0; j < c; ++j) p[j] /= s;
    }
}

inline int argmax_row(const float* p, int c) {
    int best = 0;
    for (int j = 1; j < c; ++j)
        if (p[j] > p[best]) best = j;
    return best;
}

// Mean cross-entropy over the batch; fills d_logits with its gradient.
inline double cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels, Tensor* d_logits = nullptr) {
    const int n = logits.batch(), c = static_cast<int>(logits.stride0());
    Tensor probs = logits;
    softmax_rows(probs);
    double loss = 0;
    if (d_logits) *d_logits = Tensor(logits.shape);
    for (int i = 0; i < n; ++i) {
        const float* p = probs.data() + static_cast<size_t>(i) * c;
        const int y = labels[static_cast<size_t>(i)];
        loss -= std::log(std::max(p[y], 1e-12f));
        if (d_logits) {
            float* d = d_logits->data() + static_cast<size_t>(i) * c;
            for (int j = 0; j < c; ++j) d[j] = (p[j] - (j == y ? 1.f : 0.f)) / n;
        }
    }
    return loss / n;
}

}  // namespace ccdl
