#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace refseg {

enum class Dtype : uint8_t { f32 = 0, u8 = 1 };

inline constexpr size_t kMaxTensorRank = 4;

/// Dense row-major array with up to 4 axes. Immutable shape, mutable payload.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<uint32_t> dims) : dims_(std::move(dims)) {
        if (dims_.empty() || dims_.size() > kMaxTensorRank)
            throw std::invalid_argument("tensor rank must be in [1, 4], got " +
                                        std::to_string(dims_.size()));
        data_.assign(element_count(dims_), T{});
    }

    static TensorT full(std::vector<uint32_t> dims, T value) {
        TensorT t(std::move(dims));
        for (auto& v : t.data_) v = value;
        return t;
    }

    static size_t element_count(const std::vector<uint32_t>& dims) {
        size_t n = 1;
        for (uint32_t d : dims) {
            size_t next = n * static_cast<size_t>(d);
            if (d != 0 && next / d != n)
                throw std::overflow_error("tensor dims overflow");
            n = next;
        }
        return n;
    }

    const std::vector<uint32_t>& dims() const { return dims_; }
    size_t rank() const { return dims_.size(); }
    size_t size() const { return data_.size(); }
    uint32_t dim(size_t i) const { return dims_.at(i); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> flat() { return data_; }
    std::span<const T> flat() const { return data_; }

    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    T& operator()(uint32_t i, uint32_t j) {
        return data_[static_cast<size_t>(i) * dims_[1] + j];
    }
    const T& operator()(uint32_t i, uint32_t j) const {
        return data_[static_cast<size_t>(i) * dims_[1] + j];
    }
    T& operator()(uint32_t c, uint32_t i, uint32_t j) {
        return data_[(static_cast<size_t>(c) * dims_[1] + i) * dims_[2] + j];
    }
    const T& operator()(uint32_t c, uint32_t i, uint32_t j) const {
        return data_[(static_cast<size_t>(c) * dims_[1] + i) * dims_[2] + j];
    }

    /// Pointer to the start of plane c of a rank-3 tensor.
    T* plane(uint32_t c) { return data_.data() + static_cast<size_t>(c) * dims_[1] * dims_[2]; }
    const T* plane(uint32_t c) const {
        return data_.data() + static_cast<size_t>(c) * dims_[1] * dims_[2];
    }

    bool same_shape(const TensorT& other) const { return dims_ == other.dims_; }

    friend bool operator==(const TensorT& a, const TensorT& b) {
        return a.dims_ == b.dims_ && a.data_ == b.data_;
    }

private:
    std::vector<uint32_t> dims_;
    std::vector<T> data_;
};

using TensorF = TensorT<float>;
using TensorU8 = TensorT<uint8_t>;

inline std::string shape_string(const std::vector<uint32_t>& dims) {
    std::string s = "(";
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + ")";
}

}  // namespace refseg
