// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#include "loradrop/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace loradrop {

const char* error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::kShape: return "shape error";
        case ErrorCode::kParameter: return "parameter error";
        case ErrorCode::kInput: return "input error";
        case ErrorCode::kNumeric: return "numeric error";
        case ErrorCode::kUndefinedSimilarity: return "undefined similarity";
        case ErrorCode::kRankDeficient: return "rank-deficient";
        case ErrorCode::kSpec: return "spec error";
        case ErrorCode::kIo: return "I/O error";
        case ErrorCode::kConfig: return "config error";
    }
    return "unknown error";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorCode::kShape,
            "matrix data length " + std::to_string(data_.size()) + " != " + std::to_string(rows_) +
                "x" + std::to_string(cols_));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<Real>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        require(r.size() == cols_, ErrorCode::kShape, "ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = Real(1);
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b, OpCounter* counter) {
    require(a.cols() == b.rows(), ErrorCode::kShape,
            "matmul: a.cols=" + std::to_string(a.cols()) + " != b.rows=" + std::to_string(b.rows()));
    Matrix out(a.rows(), b.cols());
    std::vector<double> acc(b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) acc[j] += aik * static_cast<double>(brow[j]);
        }
        for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = static_cast<Real>(acc[j]);
    }
    credit(counter, static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
    return out;
}

Vector matvec(const Matrix& m, std::span<const Real> x, OpCounter* counter) {
    require(m.cols() == x.size(), ErrorCode::kShape,
            "matvec: cols=" + std::to_string(m.cols()) + " != dim=" + std::to_string(x.size()));
    Vector y(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) y[r] = static_cast<Real>(dot(m.row(r), x));
    credit(counter, static_cast<std::uint64_t>(m.rows()) * m.cols());
    return y;
}

double dot(std::span<const Real> u, std::span<const Real> v) {
    require(u.size() == v.size(), ErrorCode::kShape, "dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    return s;
}

double l2_norm(std::span<const Real> u) { return std::sqrt(dot(u, u)); }

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (Real v : m.values()) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::kShape, "subtract: shape mismatch");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
    return out;
}

double cosine(std::span<const Real> u, std::span<const Real> v) {
    require(u.size() == v.size(), ErrorCode::kShape, "cosine: dimension mismatch");
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    if (nu == 0.0 && nv == 0.0) fail(ErrorCode::kUndefinedSimilarity, "cosine: both vectors have zero norm");
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, int max_sweeps) {
    require(a.size() == n * n, ErrorCode::kShape, "jacobi_eigen: expected n*n entries");
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * n + c]; };
    double total = 0.0;
    for (double x : a) total += x * x;
    const double tol = 1e-30 * std::max(total, 1e-300);

    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        if (off <= tol) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (apq == 0.0) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = at(k, p);
                    const double akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = at(p, k);
                    const double aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p];
                    const double vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if (sweep == max_sweeps)
        fail(ErrorCode::kNumeric, "jacobi_eigen: no convergence after " + std::to_string(max_sweeps) + " sweeps");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });

    SymmetricEigen out;
    out.n = n;
    out.sweeps = sweep;
    out.values.resize(n);
    out.vectors.resize(n * n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a[order[j] * n + order[j]];
        for (std::size_t k = 0; k < n; ++k) out.vectors[k * n + j] = v[k * n + order[j]];
    }
    return out;
}

LowRankFactors truncated_svd(const Matrix& w, std::size_t rank) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    require(rank >= 1 && rank <= n, ErrorCode::kParameter,
            "truncated_svd: rank " + std::to_string(rank) + " outside [1, " + std::to_string(n) + "]");

    std::vector<double> gram(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < m; ++r) s += static_cast<double>(w(r, i)) * w(r, j);
            gram[i * n + j] = s;
            gram[j * n + i] = s;
        }
    const SymmetricEigen eig = jacobi_eigen(std::move(gram), n);

    LowRankFactors f{Matrix(m, rank), Matrix(rank, n)};
    for (std::size_t j = 0; j < rank; ++j)
        for (std::size_t c = 0; c < n; ++c) f.A(j, c) = static_cast<Real>(eig.vectors[c * n + j]);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < rank; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < n; ++c) s += static_cast<double>(w(r, c)) * eig.vectors[c * n + j];
            f.B(r, j) = static_cast<Real>(s);
        }
    return f;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
    // Lemire-style rejection keeps the result unbiased.
    if (bound == 0) return 0;
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x >= threshold) return x % bound;
    }
}

Matrix random_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (Real& v : m.values()) v = static_cast<Real>(stddev * rng.normal());
    return m;
}

}  // namespace loradrop
