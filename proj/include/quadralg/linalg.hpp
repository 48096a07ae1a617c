#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <vector>

#include "quadralg/phase.hpp"
#include "quadralg/sampling.hpp"

namespace quadralg {

using MatrixC = Eigen::MatrixXcd;
using VectorC = Eigen::VectorXcd;

// Rows are accepted sample points, columns the observables.
struct EvaluationMatrix {
    MatrixC values;
    std::size_t requested = 0;
    std::size_t accepted = 0;
    std::size_t rejected_draws = 0;
};

inline EvaluationMatrix evaluation_matrix(const std::vector<Observable>& obs, const DomainBox& box, std::size_t rows,
                                          std::uint64_t stream, unsigned threads = 1, int max_attempts = 16) {
    ObservableSet set(obs);
    std::vector<std::vector<Complex>> out(rows);
    std::vector<int> draws(rows, 0);
    std::vector<char> ok(rows, 0);
    parallel_for(rows, threads, [&](std::size_t k) {
        std::vector<Complex> scratch, coeffs, vals(obs.size());
        for (int attempt = 0; attempt < max_attempts; ++attempt) {
            RandomStream rng(box.seed, stream, k, static_cast<std::uint64_t>(attempt));
            auto pt = draw_point(box, set.symbols(), rng);
            ++draws[k];
            if (set.eval(pt, vals, scratch, coeffs, box.cap)) {
                ok[k] = 1;
                out[k] = vals;
                return;
            }
        }
    });
    EvaluationMatrix em;
    em.requested = rows;
    for (std::size_t k = 0; k < rows; ++k) {
        em.rejected_draws += static_cast<std::size_t>(draws[k] - (ok[k] ? 1 : 0));
        if (ok[k]) ++em.accepted;
    }
    em.values.resize(static_cast<Eigen::Index>(em.accepted), static_cast<Eigen::Index>(obs.size()));
    Eigen::Index r = 0;
    for (std::size_t k = 0; k < rows; ++k) {
        if (!ok[k]) continue;
        for (std::size_t j = 0; j < obs.size(); ++j) em.values(r, static_cast<Eigen::Index>(j)) = out[k][j];
        ++r;
    }
    return em;
}

// Unit-norm columns; returns the scale factors (zero columns keep scale 1).
inline Eigen::VectorXd normalize_columns(MatrixC& m) {
    Eigen::VectorXd s(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double n = m.col(j).norm();
        s(j) = n > 0 ? n : 1.0;
        m.col(j) /= s(j);
    }
    return s;
}

struct RankResult {
    std::size_t rank = 0;
    std::vector<double> singular_values;  // relative to the largest
};

inline RankResult numerical_rank(MatrixC m, double threshold = 1e-8) {
    RankResult r;
    if (m.cols() == 0 || m.rows() == 0) return r;
    normalize_columns(m);
    Eigen::JacobiSVD<MatrixC> svd(m);
    const auto& sv = svd.singularValues();
    double top = sv.size() ? sv(0) : 0.0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
        double rel = top > 0 ? sv(k) / top : 0.0;
        r.singular_values.push_back(rel);
        if (rel > threshold) ++r.rank;
    }
    return r;
}

}  // namespace quadralg
