#pragma once

#include <Eigen/Core>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "ccdl/common.hpp"

namespace ccdl {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
using VecMap = Eigen::Map<Eigen::VectorXf>;
using CVecMap = Eigen::Map<const Eigen::VectorXf>;

// Dense float tensor, row-major, NCHW for images and N x F for matrices.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(numel_of(shape), 0.f) {}
    Tensor(std::vector<int> s, float fill) : shape(std::move(s)), v(numel_of(shape), fill) {}

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) n *= static_cast<size_t>(d);
        return n;
    }

    size_t numel() const { return v.size(); }
    bool empty() const { return v.empty(); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int batch() const { return shape.empty() ? 0 : shape[0]; }
    // elements per batch item
    size_t stride0() const { return batch() ? numel() / static_cast<size_t>(batch()) : 0; }

    float* data() { return v.data(); }
    const float* data() const { return v.data(); }

    MapRM mat(int rows, int cols) { return MapRM(v.data(), rows, cols); }
    CMapRM mat(int rows, int cols) const { return CMapRM(v.data(), rows, cols); }
    // batch-major view: N x (numel/N)
    MapRM rows() { return mat(batch(), static_cast<int>(stride0())); }
    CMapRM rows() const { return mat(batch(), static_cast<int>(stride0())); }

    void zero() { std::fill(v.begin(), v.end(), 0.f); }

    bool finite() const {
        for (float x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    Tensor slice_batch(int from, int count) const {
        Tensor out(shape);
        out.shape[0] = count;
        out.v.assign(v.begin() + static_cast<long>(from * stride0()),
                     v.begin() + static_cast<long>((from + count) * stride0()));
        return out;
    }

    static Tensor concat_batch(const Tensor& a, const Tensor& b) {
        if (a.empty()) return b;
        if (b.empty()) return a;
        check(a.stride0() == b.stride0(), "concat_batch: item sizes differ");
        Tensor out = a;
        out.shape[0] = a.batch() + b.batch();
        out.v.insert(out.v.end(), b.v.begin(), b.v.end());
        return out;
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace ccdl
