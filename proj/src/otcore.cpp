#include "ctxot/otcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ctxot {

FeatureSet FeatureSet::from_tensor(Tensor v, double norm_tol) {
    if (v.rank() != 2) {
        throw DimensionError("feature set: expected [count, dim], got shape " +
                             shape_str(v.shape()));
    }
    size_t n = v.shape()[0], d = v.shape()[1];
    if (n < 1 || d < 1) throw DimensionError("feature set: count and dim must be >= 1");
    const double* p = v.data();
    for (size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (size_t k = 0; k < d; ++k) {
            double x = p[i * d + k];
            if (!std::isfinite(x)) {
                throw FormatError("feature set: non-finite value in row " + std::to_string(i));
            }
            sq += x * x;
        }
        double norm = std::sqrt(sq);
        if (norm != 0.0 && std::abs(norm - 1.0) > norm_tol) {
            throw InputError("feature set: row " + std::to_string(i) + " has norm " +
                             std::to_string(norm) + ", expected 1 or exactly 0");
        }
    }
    return FeatureSet{std::move(v)};
}

FeatureSet FeatureSet::from_raw(size_t n, size_t d, std::vector<double> data) {
    if (n < 1 || d < 1) throw DimensionError("feature set: count and dim must be >= 1");
    if (data.size() != n * d) {
        throw DimensionError("feature set: expected " + std::to_string(n * d) + " values, got " +
                             std::to_string(data.size()));
    }
    for (size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (size_t k = 0; k < d; ++k) sq += data[i * d + k] * data[i * d + k];
        double norm = std::sqrt(sq) + 1e-12;
        for (size_t k = 0; k < d; ++k) data[i * d + k] /= norm;
    }
    return from_tensor(Tensor(Shape{n, d}, std::move(data)));
}

CostMatrix cost_matrix(const FeatureSet& a, const FeatureSet& b, CostKind kind, double h) {
    if (a.count() != b.count()) {
        throw DimensionError("cost_matrix: set sizes differ (" + std::to_string(a.count()) +
                             " vs " + std::to_string(b.count()) + ")");
    }
    if (a.dim() != b.dim()) {
        throw DimensionError("cost_matrix: feature dims differ (" + std::to_string(a.dim()) +
                             " vs " + std::to_string(b.dim()) + ")");
    }
    if (kind == CostKind::Exponential && h <= 0.0) {
        throw ArgumentError("cost_matrix: bandwidth must be positive");
    }
    size_t n = a.count(), d = a.dim();
    CostMatrix cm;
    cm.n = n;
    cm.kind = kind;
    cm.bandwidth = (kind == CostKind::Exponential) ? h : 0.0;
    cm.c.resize(n * n);
    const double* pa = a.values.data();
    const double* pb = b.values.data();
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double sq = 0.0;
            for (size_t k = 0; k < d; ++k) {
                double diff = pa[i * d + k] - pb[j * d + k];
                sq += diff * diff;
            }
            cm.c[i * n + j] = (kind == CostKind::Exponential) ? std::exp(sq / h) : sq;
        }
    }
    return cm;
}

std::pair<double, TransportPlan> emd_exact(const CostMatrix& cost) {
    size_t n = cost.n;
    if (n < 1 || cost.c.size() != n * n) {
        throw DimensionError("emd_exact: cost matrix is not square");
    }
    if (n > 8) {
        throw CapacityError("emd_exact: N = " + std::to_string(n) +
                            " exceeds the exact-solver limit of 8; use rem_distance");
    }
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<size_t> best_perm = perm;
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) total += cost.at(i, perm[i]);
        // strict '<' keeps the lexicographically smallest optimal permutation
        if (total < best) {
            best = total;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    TransportPlan plan;
    plan.n = n;
    plan.f.assign(n * n, 0.0);
    double w = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) plan.f[i * n + best_perm[i]] = w;
    return {best / static_cast<double>(n), plan};
}

namespace {

double side_row(const CostMatrix& cost) {  // (1/N) sum_i min_j C_ij
    size_t n = cost.n;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double m = cost.at(i, 0);
        for (size_t j = 1; j < n; ++j) m = std::min(m, cost.at(i, j));
        acc += m;
    }
    return acc / static_cast<double>(n);
}

double side_col(const CostMatrix& cost) {  // (1/N) sum_j min_i C_ij
    size_t n = cost.n;
    double acc = 0.0;
    for (size_t j = 0; j < n; ++j) {
        double m = cost.at(0, j);
        for (size_t i = 1; i < n; ++i) m = std::min(m, cost.at(i, j));
        acc += m;
    }
    return acc / static_cast<double>(n);
}

}  // namespace

double rem_distance(const CostMatrix& cost) {
    if (cost.n < 1 || cost.c.size() != cost.n * cost.n) {
        throw DimensionError("rem_distance: cost matrix is not square");
    }
    return std::max(side_row(cost), side_col(cost));
}

double one_sided_cost(const CostMatrix& cost) {
    if (cost.n < 1 || cost.c.size() != cost.n * cost.n) {
        throw DimensionError("one_sided_cost: cost matrix is not square");
    }
    return side_col(cost);
}

Tensor contextual_cost(const Tensor& y_feats, const Tensor& fy_feats, double h) {
    if (y_feats.rank() != 2 || fy_feats.rank() != 2) {
        throw DimensionError("contextual_cost: expected [count, dim] feature tensors");
    }
    if (y_feats.shape() != fy_feats.shape()) {
        throw DimensionError("contextual_cost: feature shapes differ (" +
                             shape_str(y_feats.shape()) + " vs " + shape_str(fy_feats.shape()) +
                             ")");
    }
    if (h <= 0.0) throw ArgumentError("contextual_cost: bandwidth must be positive");
    size_t n = y_feats.shape()[0];

    // |a_i - b_j|^2 via the Gram expansion; the clamp removes the tiny
    // negative residue it can leave where vectors coincide.
    Tensor gram = matmul(y_feats, transpose2d(fy_feats));              // [N,N]
    Tensor row_sq = sum_axis(square(y_feats), 1);                      // [N] over i
    Tensor col_sq = sum_axis(square(fy_feats), 1);                     // [N] over j
    Tensor dist_sq = clamp_nonneg(
        sub(add(expand_axis(row_sq, 1, n), expand_axis(col_sq, 0, n)), scale(gram, 2.0)));
    Tensor costs = ctxot::exp(div_scalar(dist_sq, h));
    Tensor col_min = min_axis(costs, 0);  // min over i for each column j
    return mean(col_min);
}

Tensor contextual_cost(const FeatureSet& y_feats, const FeatureSet& fy_feats, double h) {
    return contextual_cost(y_feats.values, fy_feats.values, h);
}

}  // namespace ctxot
