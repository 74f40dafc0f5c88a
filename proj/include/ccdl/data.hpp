#pragma once

#include <algorithm>
#include <cstdlib>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ccdl/io.hpp"
#include "ccdl/rng.hpp"
#include "ccdl/tensor.hpp"
#include "json.hpp"

namespace ccdl {

struct Samples {
    Tensor images;  // N x C x H x W, values in [-1,1]
    std::vector<int> labels;

    int size() const { return images.empty() ? 0 : images.batch(); }
};

struct TaskSpec {
    int task_id = 0;  // 1-based
    std::vector<int> class_labels;  // global class ids, in local-index order
    std::vector<int> image_shape;   // {c, h, w}
    Samples train, valid, test;
    std::string dataset;

    int num_classes() const { return static_cast<int>(class_labels.size()); }
    int local_label(int global) const {
        for (size_t i = 0; i < class_labels.size(); ++i)
            if (class_labels[i] == global) return static_cast<int>(i);
        throw Error("label " + std::to_string(global) + " not in task " + std::to_string(task_id));
    }

    nlohmann::json manifest(uint64_t seed) const {
        return {{"task_id", task_id},
                {"dataset", dataset},
                {"classes", class_labels},
                {"image_shape", image_shape},
                {"train", train.size()},
                {"valid", valid.size()},
                {"test", test.size()},
                {"seed", seed}};
    }
};

struct TaskStream {
    std::vector<TaskSpec> tasks;
    std::string dataset;
    uint64_t seed = 0;

    int num_tasks() const { return static_cast<int>(tasks.size()); }
    const TaskSpec& task(int k) const { return tasks[static_cast<size_t>(k - 1)]; }  // 1-based
};

// ---------------------------------------------------------------------------
// Raw dataset loading. Images come out already normalized to [-1,1].

struct RawDataset {
    std::string name;
    int num_classes = 0;
    std::vector<int> image_shape;
    Samples train, test;
};

inline std::string data_root() {
    if (const char* env = std::getenv("CCDL_DATA_ROOT")) return env;
    return "data";
}

namespace detail {

inline uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline Samples read_idx_pair(const std::string& img_path, const std::string& lbl_path) {
    auto ib = io::read_maybe_gz(img_path);
    auto lb = io::read_maybe_gz(lbl_path);
    check(ib.size() >= 16 && be32(ib.data()) == 2051, "bad IDX image file: " + img_path);
    check(lb.size() >= 8 && be32(lb.data()) == 2049, "bad IDX label file: " + lbl_path);
    const int n = static_cast<int>(be32(ib.data() + 4));
    const int h = static_cast<int>(be32(ib.data() + 8));
    const int w = static_cast<int>(be32(ib.data() + 12));
    check(static_cast<int>(be32(lb.data() + 4)) == n, "IDX image/label count mismatch");
    check(ib.size() == 16 + static_cast<size_t>(n) * h * w, "IDX image file truncated");
    Samples s;
    s.images = Tensor({n, 1, h, w});
    s.labels.resize(static_cast<size_t>(n));
    for (size_t i = 0; i < static_cast<size_t>(n) * h * w; ++i)
        s.images.v[i] = static_cast<float>(ib[16 + i]) / 255.f * 2.f - 1.f;
    for (int i = 0; i < n; ++i) s.labels[static_cast<size_t>(i)] = lb[8 + static_cast<size_t>(i)];
    return s;
}

inline void read_cifar_batch(const std::string& path, Samples& out) {
    auto b = io::read_maybe_gz(path);
    const size_t rec = 3073;
    check(b.size() % rec == 0, "bad CIFAR batch: " + path);
    const int n = static_cast<int>(b.size() / rec);
    const int base = out.size();
    Tensor more({base + n, 3, 32, 32});
    if (base) std::copy(out.images.v.begin(), out.images.v.end(), more.v.begin());
    for (int i = 0; i < n; ++i) {
        const uint8_t* r = b.data() + static_cast<size_t>(i) * rec;
        out.labels.push_back(r[0]);
        float* dst = more.data() + static_cast<size_t>(base + i) * 3072;
        for (int j = 0; j < 3072; ++j) dst[j] = static_cast<float>(r[1 + j]) / 255.f * 2.f - 1.f;
    }
    out.images = std::move(more);
}

// Smooth per-class template plus shift and noise; quick to learn, non-trivial.
inline Samples synth_samples(int classes, int per_class, int hw, uint64_t content_seed) {
    Samples s;
    s.images = Tensor({classes * per_class, 1, hw, hw});
    s.labels.resize(static_cast<size_t>(classes) * per_class);
    for (int c = 0; c < classes; ++c) {
        Rng base_rng(splitmix64(0xABCDu + c));
        std::vector<float> base(static_cast<size_t>(hw) * hw);
        for (auto& v : base) v = base_rng.normal();
        // two box blurs to give the template spatial structure
        for (int pass = 0; pass < 2; ++pass) {
            std::vector<float> t = base;
            for (int y = 0; y < hw; ++y)
                for (int x = 0; x < hw; ++x) {
                    float acc = 0;
                    int cnt = 0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            int yy = y + dy, xx = x + dx;
                            if (yy >= 0 && yy < hw && xx >= 0 && xx < hw) {
                                acc += t[static_cast<size_t>(yy) * hw + xx];
                                ++cnt;
                            }
                        }
                    base[static_cast<size_t>(y) * hw + x] = acc / cnt;
                }
        }
        float mx = 1e-6f;
        for (float v : base) mx = std::max(mx, std::abs(v));
        for (auto& v : base) v = v / mx * 0.8f;

        Rng rng(splitmix64(content_seed ^ (0x1234u + c)));
        for (int i = 0; i < per_class; ++i) {
            const int idx = c * per_class + i;
            s.labels[static_cast<size_t>(idx)] = c;
            const int dx = static_cast<int>(rng.index(5)) - 2;
            const int dy = static_cast<int>(rng.index(5)) - 2;
            float* dst = s.images.data() + static_cast<size_t>(idx) * hw * hw;
            for (int y = 0; y < hw; ++y)
                for (int x = 0; x < hw; ++x) {
                    const int sy = y - dy, sx = x - dx;
                    float v = (sy >= 0 && sy < hw && sx >= 0 && sx < hw) ? base[static_cast<size_t>(sy) * hw + sx] : 0.f;
                    v += 0.25f * rng.normal();
                    dst[static_cast<size_t>(y) * hw + x] = std::clamp(v, -1.f, 1.f);
                }
        }
    }
    return s;
}

}  // namespace detail

inline RawDataset load_dataset(const std::string& name, const std::string& root = data_root()) {
    RawDataset d;
    d.name = name;
    if (name == "mnist") {
        const std::string dir = root + "/mnist/";
        d.train = detail::read_idx_pair(dir + "train-images-idx3-ubyte.gz", dir + "train-labels-idx1-ubyte.gz");
        d.test = detail::read_idx_pair(dir + "t10k-images-idx3-ubyte.gz", dir + "t10k-labels-idx1-ubyte.gz");
        d.num_classes = 10;
        d.image_shape = {1, 28, 28};
    } else if (name == "cifar10") {
        const std::string dir = root + "/cifar10/";
        for (int i = 1; i <= 5; ++i) {
            const std::string p = dir + "data_batch_" + std::to_string(i) + ".bin";
            if (io::fs::exists(p)) detail::read_cifar_batch(p, d.train);
        }
        check(d.train.size() > 0, "no CIFAR10 train batches under " + dir);
        detail::read_cifar_batch(dir + "test_batch.bin", d.test);
        d.num_classes = 10;
        d.image_shape = {3, 32, 32};
    } else if (name == "synthetic-8-class") {
        d.train = detail::synth_samples(8, 200, 12, 1);
        d.test = detail::synth_samples(8, 50, 12, 2);
        d.num_classes = 8;
        d.image_shape = {1, 12, 12};
    } else {
        throw ConfigError("unknown dataset: " + name);
    }
    return d;
}

// ---------------------------------------------------------------------------

struct SplitOptions {
    bool shuffle_classes = false;  // seed-driven class order permutation
    float valid_fraction = 0.1f;
    std::string root = data_root();
};

// Carves a dataset into `num_tasks` class-disjoint tasks with locally
// remapped labels. Even class split; any remainder goes to the last task.
inline TaskStream split_into_tasks(const std::string& dataset_name, int num_tasks, uint64_t seed,
                                   const SplitOptions& opt = {}) {
    RawDataset d = load_dataset(dataset_name, opt.root);
    check(num_tasks >= 1, "num_tasks must be >= 1");
    check(num_tasks <= d.num_classes,
          "num_tasks " + std::to_string(num_tasks) + " exceeds class count " + std::to_string(d.num_classes));

    std::vector<int> order(static_cast<size_t>(d.num_classes));
    std::iota(order.begin(), order.end(), 0);
    if (opt.shuffle_classes) {
        Rng r = Rng(seed).fork(0x5C1A55);
        r.shuffle(order.begin(), order.end());
    }

    const int per = d.num_classes / num_tasks;
    TaskStream stream;
    stream.dataset = dataset_name;
    stream.seed = seed;

    // index samples by class once
    std::map<int, std::vector<int>> train_by_class, test_by_class;
    for (int i = 0; i < d.train.size(); ++i) train_by_class[d.train.labels[static_cast<size_t>(i)]].push_back(i);
    for (int i = 0; i < d.test.size(); ++i) test_by_class[d.test.labels[static_cast<size_t>(i)]].push_back(i);

    const size_t item = Tensor::numel_of(d.image_shape);
    int next = 0;
    for (int k = 1; k <= num_tasks; ++k) {
        TaskSpec t;
        t.task_id = k;
        t.dataset = dataset_name;
        t.image_shape = d.image_shape;
        const int take = (k == num_tasks) ? d.num_classes - next : per;
        for (int j = 0; j < take; ++j) t.class_labels.push_back(order[static_cast<size_t>(next + j)]);
        next += take;

        auto gather = [&](const Samples& src, const std::vector<int>& idx, Samples& dst) {
            const int start = dst.size();
            Tensor grown(t.image_shape);
            grown.shape.insert(grown.shape.begin(), start + static_cast<int>(idx.size()));
            grown.v.resize(static_cast<size_t>(grown.shape[0]) * item);
            if (start) std::copy(dst.images.v.begin(), dst.images.v.end(), grown.v.begin());
            for (size_t i = 0; i < idx.size(); ++i) {
                const float* s = src.images.data() + static_cast<size_t>(idx[i]) * item;
                std::copy(s, s + item, grown.v.begin() + (static_cast<size_t>(start) + i) * item);
                dst.labels.push_back(t.local_label(src.labels[static_cast<size_t>(idx[i])]));
            }
            dst.images = std::move(grown);
        };

        for (int g : t.class_labels) {
            auto& tr = train_by_class[g];
            const int n_valid = static_cast<int>(std::floor(opt.valid_fraction * static_cast<float>(tr.size())));
            std::vector<int> tr_part(tr.begin(), tr.end() - n_valid);
            std::vector<int> va_part(tr.end() - n_valid, tr.end());
            gather(d.train, tr_part, t.train);
            gather(d.train, va_part, t.valid);
            gather(d.test, test_by_class[g], t.test);
        }
        stream.tasks.push_back(std::move(t));
    }
    return stream;
}

// Class-stratified subset of a task's train split; deterministic per seed.
inline Samples sample_fraction(const TaskSpec& task, double fraction, uint64_t seed) {
    check(fraction > 0.0 && fraction <= 1.0, "fraction must be in (0,1]");
    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < task.train.size(); ++i) by_class[task.train.labels[static_cast<size_t>(i)]].push_back(i);

    Rng rng = Rng(seed).fork(0xF7AC + static_cast<uint64_t>(task.task_id));
    std::vector<int> chosen;
    for (auto& [cls, idx] : by_class) {
        int take = static_cast<int>(std::lround(fraction * static_cast<double>(idx.size())));
        take = std::clamp(take, 1, static_cast<int>(idx.size()));
        std::vector<int> pool = idx;
        rng.shuffle(pool.begin(), pool.end());
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + take);
    }
    std::sort(chosen.begin(), chosen.end());

    const size_t item = task.train.images.stride0();
    Samples out;
    out.images = Tensor(task.image_shape);
    out.images.shape.insert(out.images.shape.begin(), static_cast<int>(chosen.size()));
    out.images.v.resize(chosen.size() * item);
    for (size_t i = 0; i < chosen.size(); ++i) {
        const float* s = task.train.images.data() + static_cast<size_t>(chosen[i]) * item;
        std::copy(s, s + item, out.images.v.begin() + i * item);
        out.labels.push_back(task.train.labels[static_cast<size_t>(chosen[i])]);
    }
    return out;
}

// Writes stream manifests for reproducibility.
inline void write_manifest(const TaskStream& stream, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& t : stream.tasks) j.push_back(t.manifest(stream.seed));
    io::write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Test fixture: emits procedurally generated color images in the standard
// CIFAR-10 binary batch layout so the real loader path can be exercised when
// the actual dataset is not on disk.

inline void write_cifar10_standin(const std::string& dir, int per_class_train, int per_class_test,
                                  uint64_t seed = 7) {
    io::fs::create_directories(dir);
    auto paint = [&](int cls, Rng& rng, uint8_t* px) {
        // class identity = hue pair + stripe frequency; sample identity = phase/noise
        const float hue = static_cast<float>(cls) / 10.f;
        const int freq = 1 + cls % 5;
        const float phase = rng.uniform(0.f, 6.283f);
        const bool vertical = cls % 2 == 0;
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x) {
                    const float t = vertical ? x : y;
                    float v = 0.5f + 0.35f * std::sin(phase + freq * t * 0.4f + ch * (1.f + hue));
                    v += 0.25f * hue * ((ch == cls % 3) ? 1.f : -0.5f);
                    v += 0.08f * rng.normal();
                    px[ch * 1024 + y * 32 + x] = static_cast<uint8_t>(std::clamp(v, 0.f, 1.f) * 255.f);
                }
    };
    auto write_batch = [&](const std::string& path, int per_class, uint64_t tag) {
        std::ofstream os(path, std::ios::binary);
        check(bool(os), "cannot write " + path);
        Rng rng(splitmix64(seed ^ tag));
        std::vector<uint8_t> rec(3073);
        for (int i = 0; i < per_class; ++i)
            for (int c = 0; c < 10; ++c) {
                rec[0] = static_cast<uint8_t>(c);
                paint(c, rng, rec.data() + 1);
                os.write(reinterpret_cast<const char*>(rec.data()), 3073);
            }
    };
    write_batch(dir + "/data_batch_1.bin", per_class_train, 0x7261);
    write_batch(dir + "/test_batch.bin", per_class_test, 0x7465);
}

}  // namespace ccdl
