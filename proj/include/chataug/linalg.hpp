#pragma once

// Minimal dense symmetric eigensolvers: cyclic Jacobi for full spectra on
// small matrices, power iteration with deflation for the leading pairs of
// larger ones. Both are deterministic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace chataug {

/// Square symmetric matrix, row-major.
struct SymMatrix {
    std::size_t n = 0;
    std::vector<double> a;  // n*n entries

    explicit SymMatrix(std::size_t size = 0) : n(size), a(size * size, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
    double at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

struct EigenPairs {
    std::vector<double> values;                // descending
    std::vector<std::vector<double>> vectors;  // vectors[k] is the unit eigenvector of values[k]
};

/// Cyclic Jacobi rotation method. Converges quadratically; fine for the
/// matrix sizes the analytics paths feed it (hundreds of rows).
inline EigenPairs jacobi_eigen(SymMatrix m, int max_sweeps = 64) {
    const std::size_t n = m.n;
    if (n == 0) throw std::invalid_argument("jacobi_eigen: empty matrix");
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    auto off_norm_sq = [&] {
        double s = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) s += m.at(p, q) * m.at(p, q);
        return s;
    };
    double total_sq = 0.0;
    for (double x : m.a) total_sq += x * x;
    const double stop = 1e-28 * (total_sq + 1e-300);

    for (int sweep = 0; sweep < max_sweeps && off_norm_sq() > stop; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                double t;
                if (std::abs(theta) > 1e12) {
                    t = 1.0 / (2.0 * theta);
                } else {
                    t = (theta >= 0 ? 1.0 : -1.0) /
                        (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                const double app = m.at(p, p), aqq = m.at(q, q);
                m.at(p, p) = app - t * apq;
                m.at(q, q) = aqq + t * apq;
                m.at(p, q) = 0.0;
                m.at(q, p) = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    const double aip = m.at(i, p), aiq = m.at(i, q);
                    m.at(i, p) = aip - s * (aiq + tau * aip);
                    m.at(p, i) = m.at(i, p);
                    m.at(i, q) = aiq + s * (aip - tau * aiq);
                    m.at(q, i) = m.at(i, q);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v[i * n + p], viq = v[i * n + q];
                    v[i * n + p] = vip - s * (viq + tau * vip);
                    v[i * n + q] = viq + s * (vip - tau * viq);
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return m.at(x, x) > m.at(y, y); });

    EigenPairs out;
    out.values.reserve(n);
    out.vectors.reserve(n);
    for (std::size_t k : order) {
        out.values.push_back(m.at(k, k));
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = v[i * n + k];
        out.vectors.push_back(std::move(col));
    }
    return out;
}

namespace detail {

/// Deterministic pseudo-random start vector (splitmix64 over the index).
inline double start_component(std::uint64_t i) {
    std::uint64_t z = (i + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) / 9007199254740992.0 - 0.5;
}

}  // namespace detail

/// Leading k eigenpairs of a symmetric positive semi-definite matrix via
/// power iteration with deflation. Assumes PSD (true for Gram matrices);
/// iterates until the residual is tiny relative to the eigenvalue.
inline EigenPairs top_eigenpairs_psd(const SymMatrix& m, std::size_t k, int max_iter = 20000) {
    const std::size_t n = m.n;
    if (n == 0) throw std::invalid_argument("top_eigenpairs_psd: empty matrix");
    k = std::min(k, n);
    EigenPairs out;

    std::vector<double> w(n);
    auto matvec = [&](const std::vector<double>& x, std::vector<double>& y) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            const double* row = m.a.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
            y[i] = s;
        }
        // deflate previously found components
        for (std::size_t c = 0; c < out.vectors.size(); ++c) {
            const auto& u = out.vectors[c];
            double proj = 0.0;
            for (std::size_t j = 0; j < n; ++j) proj += u[j] * x[j];
            proj *= out.values[c];
            for (std::size_t j = 0; j < n; ++j) y[j] -= proj * u[j];
        }
    };
    auto orthogonalize = [&](std::vector<double>& x) {
        for (const auto& u : out.vectors) {
            double proj = 0.0;
            for (std::size_t j = 0; j < n; ++j) proj += u[j] * x[j];
            for (std::size_t j = 0; j < n; ++j) x[j] -= proj * u[j];
        }
    };

    auto normalize = [&](std::vector<double>& x) {
        double norm = 0.0;
        for (double y : x) norm += y * y;
        norm = std::sqrt(norm);
        if (norm < 1e-300) return false;
        for (double& y : x) y /= norm;
        return true;
    };

    for (std::size_t comp = 0; comp < k; ++comp) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = detail::start_component(i + comp * n);
        orthogonalize(x);
        double lambda = 0.0;
        if (!normalize(x)) {
            out.values.push_back(0.0);
            out.vectors.push_back(std::move(x));
            continue;
        }
        for (int it = 0; it < max_iter; ++it) {
            matvec(x, w);
            lambda = 0.0;
            for (std::size_t i = 0; i < n; ++i) lambda += x[i] * w[i];
            double resid = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = w[i] - lambda * x[i];
                resid += r * r;
            }
            if (it % 50 == 49) orthogonalize(w);
            if (!normalize(w)) {  // iterate fell into the null space: eigenvalue 0
                lambda = 0.0;
                break;
            }
            x.swap(w);
            if (resid <= 1e-24 * std::max(lambda * lambda, 1e-30)) break;
        }
        out.values.push_back(std::max(lambda, 0.0));
        out.vectors.push_back(x);
    }
    return out;
}

}  // namespace chataug
