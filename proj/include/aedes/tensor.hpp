#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "aedes/errors.hpp"

namespace aedes {

using Shape = std::vector<std::size_t>;

enum class Precision { f32, f64 };

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Dense row-major tensor. The last axis varies fastest; images are laid out
/// (height, width, channels) and batches prepend a batch axis.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

    BasicTensor(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (element_count(shape_) != data_.size()) {
            throw DimensionError("tensor shape " + to_string(shape_) + " holds " +
                                 std::to_string(element_count(shape_)) + " elements but " +
                                 std::to_string(data_.size()) + " values were supplied");
        }
    }

    /// Row-major matrix literal, mostly for tests.
    static BasicTensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<T> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("ragged matrix literal");
            data.insert(data.end(), row.begin(), row.end());
        }
        return BasicTensor({r, c}, std::move(data));
    }

    static BasicTensor identity(std::size_t n) {
        BasicTensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = T{1};
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::size_t flat_index(std::span<const std::size_t> index) const {
        if (index.size() != shape_.size()) {
            throw DimensionError("index rank " + std::to_string(index.size()) +
                                 " does not match tensor shape " + to_string(shape_));
        }
        std::size_t flat = 0;
        for (std::size_t a = 0; a < shape_.size(); ++a) {
            if (index[a] >= shape_[a]) throw DimensionError("index out of range for " + to_string(shape_));
            flat = flat * shape_[a] + index[a];
        }
        return flat;
    }

    std::vector<std::size_t> unflatten(std::size_t flat) const {
        if (flat >= data_.size()) throw DimensionError("flat index out of range for " + to_string(shape_));
        std::vector<std::size_t> index(shape_.size());
        for (std::size_t a = shape_.size(); a-- > 0;) {
            index[a] = flat % shape_[a];
            flat /= shape_[a];
        }
        return index;
    }

    T& at(std::initializer_list<std::size_t> index) {
        return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
    }
    const T& at(std::initializer_list<std::size_t> index) const {
        return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
    }

    /// Same data, new shape. The element count must not change.
    BasicTensor reshaped(Shape shape) const& {
        check_reshape(shape);
        return BasicTensor(std::move(shape), data_);
    }
    BasicTensor reshaped(Shape shape) && {
        check_reshape(shape);
        return BasicTensor(std::move(shape), std::move(data_));
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return BasicTensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    void check_reshape(const Shape& shape) const {
        if (element_count(shape) != data_.size()) {
            throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T, typename F>
BasicTensor<T> map_unary(const BasicTensor<T>& t, F&& f) {
    BasicTensor<T> out(t.shape());
    std::transform(t.data().begin(), t.data().end(), out.data().begin(), std::forward<F>(f));
    return out;
}

/// Matrix product of [m x k] and [k x n]. Rows of the result are computed in
/// parallel; each element is accumulated in a fixed order, so the result does
/// not depend on the thread count.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// a^T * b for a [k x m], b [k x n].
template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// a * b^T for a [m x k], b [n x k].
template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

}  // namespace aedes
