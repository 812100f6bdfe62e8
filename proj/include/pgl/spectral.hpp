#pragma once

#include <cstdint>
#include <vector>

#include "pgl/fractal.hpp"

namespace pgl {

/// Eigenpairs of a symmetric matrix, eigenvalues ascending; column k of
/// `vectors` belongs to values(k).
struct SymmetricEigen {
    Eigen::VectorXd values;
    RowMatrix vectors;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `tolerance`. Throws InvalidArgument for a non-square or asymmetric input.
SymmetricEigen jacobi_eigen(const RowMatrix& a, double tolerance = 1e-10, std::size_t max_sweeps = 100);

/// I - D^{-1/2} S D^{-1/2}; nodes with zero degree get an identity row.
RowMatrix normalized_laplacian(const RowMatrix& similarity);

struct KMeansResult {
    std::vector<int> labels;
    RowMatrix centers;
    double inertia = 0.0;
};

/// Lloyd iterations from k-means++ seeds, best of `restarts` by inertia.
KMeansResult kmeans(const RowMatrix& points, std::size_t k, std::size_t restarts, std::uint64_t seed);

/// Normalized spectral clustering: the k eigenvectors of L_sym with the
/// smallest eigenvalues, rows scaled to unit length, then k-means.
/// Requires a symmetric, non-negative S and 2 <= k <= N.
std::vector<int> spectral_clustering(const RowMatrix& similarity, std::size_t k, std::uint64_t seed,
                                     std::size_t restarts = 20);

/// k in [2, min(k_max, N-1)] maximizing lambda_{k+1} - lambda_k of L_sym (1-based
/// eigenvalue order); the smallest such k wins ties.
std::size_t eigengap_cluster_count(const RowMatrix& similarity, std::size_t k_max);

/// Renumbers labels to 0..k-1 in order of first appearance.
std::vector<int> canonical_labels(const std::vector<int>& labels);

}  // namespace pgl
