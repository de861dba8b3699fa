#include "aedes/tensor.hpp"

#include <cstdint>

namespace aedes {

std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

namespace {

template <typename T>
void require_matrix(const BasicTensor<T>& t, const char* name) {
    if (t.rank() != 2) {
        throw DimensionError(std::string("matmul operand ") + name + " must be a matrix, got " +
                             to_string(t.shape()));
    }
}

// C[m x n] = A[m x k] * B[k x n]; rows of C are independent.
template <typename T>
void gemm_rows(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
        T* crow = c + static_cast<std::size_t>(i) * n;
        const T* arow = a + static_cast<std::size_t>(i) * k;
        for (std::size_t j = 0; j < n; ++j) crow[j] = T{0};
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T{0}) continue;
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_matrix(a, "a");
    require_matrix(b, "b");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul inner dimensions disagree: " + to_string(a.shape()) + " x " +
                             to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    BasicTensor<T> c({m, n});
    gemm_rows(m, k, n, a.data().data(), b.data().data(), c.data().data());
    return c;
}

template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_matrix(a, "a");
    require_matrix(b, "b");
    if (a.dim(0) != b.dim(0)) {
        throw DimensionError("matmul_tn reduction dimensions disagree: " + to_string(a.shape()) +
                             "^T x " + to_string(b.shape()));
    }
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    BasicTensor<T> c({m, n});
    const T* ap = a.data().data();
    const T* bp = b.data().data();
    T* cp = c.data().data();
    // Blocks of output rows per thread; the reduction over k always runs in
    // ascending order for every element.
    constexpr std::int64_t block = 8;
    const std::int64_t blocks = (static_cast<std::int64_t>(m) + block - 1) / block;
#pragma omp parallel for schedule(static)
    for (std::int64_t blk = 0; blk < blocks; ++blk) {
        const std::size_t i0 = static_cast<std::size_t>(blk * block);
        const std::size_t i1 = std::min(m, i0 + static_cast<std::size_t>(block));
        for (std::size_t p = 0; p < k; ++p) {
            const T* arow = ap + p * m;
            const T* brow = bp + p * n;
            for (std::size_t i = i0; i < i1; ++i) {
                const T av = arow[i];
                if (av == T{0}) continue;
                T* crow = cp + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
    require_matrix(a, "a");
    const std::size_t r = a.dim(0), c = a.dim(1);
    BasicTensor<T> t({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t[j * r + i] = a[i * c + j];
    return t;
}

template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_matrix(a, "a");
    require_matrix(b, "b");
    if (a.dim(1) != b.dim(1)) {
        throw DimensionError("matmul_nt inner dimensions disagree: " + to_string(a.shape()) + " x " +
                             to_string(b.shape()) + "^T");
    }
    return matmul(a, transpose(b));
}

template BasicTensor<float> matmul(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> matmul(const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> matmul_tn(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> matmul_tn(const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> matmul_nt(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> matmul_nt(const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> transpose(const BasicTensor<float>&);
template BasicTensor<double> transpose(const BasicTensor<double>&);

}  // namespace aedes
