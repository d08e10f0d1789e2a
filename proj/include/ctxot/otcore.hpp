#pragma once

#include <utility>
#include <vector>

#include "ctxot/tensor.hpp"

namespace ctxot {

enum class CostKind { SquaredEuclidean, Exponential };

// N unit-length D-dimensional feature vectors from one image. The value
// tensor may be tape-connected, which is how the transport cost reaches
// the generator during training. Rows must have Euclidean norm 1 (1e-6),
// except all-zero rows, which are the guarded form of dead activations.
struct FeatureSet {
    Tensor values;  // [N, D]

    size_t count() const { return values.shape()[0]; }
    size_t dim() const { return values.shape()[1]; }

    // Validates shape, finiteness, and row norms.
    static FeatureSet from_tensor(Tensor v, double norm_tol = 1e-6);
    // Normalizes each row to unit length first (detached input helper).
    static FeatureSet from_raw(size_t n, size_t d, std::vector<double> data);
};

struct CostMatrix {
    size_t n = 0;
    CostKind kind = CostKind::SquaredEuclidean;
    double bandwidth = 0.0;  // h, exponential kind only
    std::vector<double> c;   // n*n, row-major; c[i*n + j]

    double at(size_t i, size_t j) const { return c[i * n + j]; }
};

struct TransportPlan {
    size_t n = 0;
    std::vector<double> f;  // n*n, row-major; rows and columns sum to 1/n

    double at(size_t i, size_t j) const { return f[i * n + j]; }
};

// Pairwise costs with rows indexing `a` and columns indexing `b`.
// Squared-euclidean: |a_i - b_j|^2. Exponential: exp(|a_i - b_j|^2 / h).
CostMatrix cost_matrix(const FeatureSet& a, const FeatureSet& b, CostKind kind, double h = 0.5);

// Exact earth mover's distance for uniform 1/N marginals. A vertex of the
// feasible polytope is a permutation scaled by 1/N, so exhaustive search
// over permutations is exact. Restricted to N <= 8; ties return the
// lexicographically smallest permutation.
std::pair<double, TransportPlan> emd_exact(const CostMatrix& cost);

// max{ (1/N) sum_i min_j C_ij, (1/N) sum_j min_i C_ij } - a lower bound
// of the exact distance obtained by dropping one marginal constraint.
double rem_distance(const CostMatrix& cost);

// The column-side relaxation alone: (1/N) sum_j min_i C_ij.
double one_sided_cost(const CostMatrix& cost);

// Differentiable transport cost between two feature sets: builds the
// exponential cost matrix at bandwidth h and returns the column-side
// relaxed value as a scalar tensor. Gradient flows only through the
// argmin entries (lowest index on ties).
Tensor contextual_cost(const FeatureSet& y_feats, const FeatureSet& fy_feats, double h);
Tensor contextual_cost(const Tensor& y_feats, const Tensor& fy_feats, double h);

}  // namespace ctxot
