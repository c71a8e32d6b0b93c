#pragma once

#include <cmath>
#include <vector>

#include "graphonomy/rng.hpp"
#include "graphonomy/tensor.hpp"

namespace graphonomy::test {

inline num::Tensor<double> random_tensor(num::Shape shape, rng::Stream& stream, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> data(static_cast<std::size_t>(num::shape_numel(shape)));
    for (auto& v : data) v = stream.uniform(lo, hi);
    return num::Tensor<double>::from(std::move(shape), std::move(data));
}

// Naive reference matmul kept independent of the library path.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                        int m, int k, int p) {
    std::vector<double> c(static_cast<std::size_t>(m) * static_cast<std::size_t>(p), 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j) {
            double acc = 0;
            for (int l = 0; l < k; ++l)
                acc += a[static_cast<std::size_t>(i * k + l)] * b[static_cast<std::size_t>(l * p + j)];
            c[static_cast<std::size_t>(i * p + j)] = acc;
        }
    return c;
}

// Jacobi eigenvalue iteration for small symmetric matrices; independent
// spectral oracle for adjacency checks.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a[static_cast<std::size_t>(i * n + j)] *
                                                   a[static_cast<std::size_t>(i * n + j)];
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<std::size_t>(p * n + q)];
                if (std::abs(apq) < 1e-18) continue;
                const double app = a[static_cast<std::size_t>(p * n + p)];
                const double aqq = a[static_cast<std::size_t>(q * n + q)];
                const double theta = 0.5 * std::atan2(2 * apq, aqq - app);
                const double c = std::cos(theta), s = std::sin(theta);
                for (int k = 0; k < n; ++k) {
                    const double akp = a[static_cast<std::size_t>(k * n + p)];
                    const double akq = a[static_cast<std::size_t>(k * n + q)];
                    a[static_cast<std::size_t>(k * n + p)] = c * akp - s * akq;
                    a[static_cast<std::size_t>(k * n + q)] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[static_cast<std::size_t>(p * n + k)];
                    const double aqk = a[static_cast<std::size_t>(q * n + k)];
                    a[static_cast<std::size_t>(p * n + k)] = c * apk - s * aqk;
                    a[static_cast<std::size_t>(q * n + k)] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i * n + i)];
    return eig;
}

} // namespace graphonomy::test
