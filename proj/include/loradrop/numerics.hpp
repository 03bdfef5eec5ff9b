// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "loradrop/error.hpp"

namespace loradrop {

#if defined(LORADROP_DOUBLE)
using Real = double;
#else
using Real = float;
#endif

// Multiply-accumulate tally. Always passed explicitly; a null pointer means
// counting is disabled.
struct OpCounter {
    std::uint64_t macs = 0;

    void add(std::uint64_t n) noexcept { macs += n; }
};

inline void credit(OpCounter* counter, std::uint64_t n) noexcept {
    if (counter != nullptr) counter->add(n);
}

class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t dim, Real fill = Real(0)) : data_(dim, fill) {}
    explicit Vector(std::vector<Real> data) : data_(std::move(data)) {}
    Vector(std::initializer_list<Real> values) : data_(values) {}

    std::size_t dim() const noexcept { return data_.size(); }
    Real& operator[](std::size_t i) noexcept { return data_[i]; }
    Real operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<Real> span() noexcept { return data_; }
    std::span<const Real> span() const noexcept { return data_; }
    const std::vector<Real>& values() const noexcept { return data_; }
    std::vector<Real>& values() noexcept { return data_; }

    bool operator==(const Vector&) const = default;

private:
    std::vector<Real> data_;
};

// Row-major dense matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0))
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);
    // Nested-list construction, mainly for tests: {{1, 2}, {3, 4}}.
    Matrix(std::initializer_list<std::initializer_list<Real>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const Real> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    const std::vector<Real>& values() const noexcept { return data_; }
    std::vector<Real>& values() noexcept { return data_; }

    Matrix transposed() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Real> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b, OpCounter* counter = nullptr);

// y = M x; credits rows*cols MACs.
Vector matvec(const Matrix& m, std::span<const Real> x, OpCounter* counter = nullptr);
inline Vector matvec(const Matrix& m, const Vector& x, OpCounter* counter = nullptr) {
    return matvec(m, x.span(), counter);
}

double dot(std::span<const Real> u, std::span<const Real> v);
double l2_norm(std::span<const Real> u);
double frobenius_norm(const Matrix& m);
Matrix subtract(const Matrix& a, const Matrix& b);

// Cosine similarity clamped to [-1, 1]. One zero operand yields 0; two zero
// operands raise kUndefinedSimilarity.
double cosine(std::span<const Real> u, std::span<const Real> v);
inline double cosine(const Vector& u, const Vector& v) { return cosine(u.span(), v.span()); }

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues are returned in descending order, eigenvectors as columns.
struct SymmetricEigen {
    std::vector<double> values;
    std::vector<double> vectors;  // n x n, row-major, column j pairs with values[j]
    std::size_t n = 0;
    int sweeps = 0;
};

SymmetricEigen jacobi_eigen(std::vector<double> sym, std::size_t n, int max_sweeps = 100);

struct LowRankFactors {
    Matrix B;  // rows(W) x r
    Matrix A;  // r x cols(W)
};

// Best rank-r Frobenius approximation W ~ B A, computed from the eigenvectors
// of W^T W: A = V_r^T and B = W V_r.
LowRankFactors truncated_svd(const Matrix& w, std::size_t rank);

// xoshiro256** seeded through splitmix64. Output is identical on every
// platform; the real-valued helpers avoid <random> distributions, whose
// algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64() noexcept;
    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    // Standard normal via Box-Muller; caches the second variate.
    double normal() noexcept;
    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) noexcept;

private:
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Matrix random_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace loradrop
