#include "pgl/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "pgl/errors.hpp"

namespace pgl {

namespace {

void require_symmetric(const RowMatrix& a, const char* who) {
    if (a.rows() != a.cols()) throw InvalidArgument(std::string(who) + ": matrix is not square");
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > 1e-12 * scale)
                throw InvalidArgument(std::string(who) + ": matrix is not symmetric");
}

double off_diagonal_norm(const RowMatrix& a) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

double squared_distance(const RowMatrix& points, Eigen::Index i, const RowMatrix& centers, Eigen::Index c) {
    return (points.row(i) - centers.row(c)).squaredNorm();
}

KMeansResult lloyd(const RowMatrix& points, std::size_t k, Rng& rng) {
    const auto n = points.rows();
    const auto kk = static_cast<Eigen::Index>(k);
    RowMatrix centers(kk, points.cols());

    // k-means++ seeding
    std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    Eigen::Index first = static_cast<Eigen::Index>(uniform_int(rng, 0, n - 1));
    centers.row(0) = points.row(first);
    for (Eigen::Index c = 1; c < kk; ++c) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(points, i, centers, c - 1));
            total += nearest[i];
        }
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double u = uniform01(rng) * total;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (u < nearest[i]) {
                    pick = i;
                    break;
                }
                u -= nearest[i];
            }
            // Rounding can land on an already-chosen point; take the farthest instead.
            if (nearest[pick] == 0.0)
                pick = static_cast<Eigen::Index>(std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
        } else {
            pick = static_cast<Eigen::Index>(uniform_int(rng, 0, n - 1));
        }
        centers.row(c) = points.row(pick);
    }

    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(points, i, centers, 0);
            for (Eigen::Index c = 1; c < kk; ++c) {
                const double d = squared_distance(points, i, centers, c);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            if (labels[i] != best) {
                labels[i] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        RowMatrix sums = RowMatrix::Zero(kk, points.cols());
        std::vector<std::size_t> counts(k, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(labels[i]) += points.row(i);
            ++counts[labels[i]];
        }
        for (Eigen::Index c = 0; c < kk; ++c) {
            if (counts[c] > 0) {
                centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
                continue;
            }
            // Empty cluster: move its center to the point worst served by its own center.
            Eigen::Index far = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d = squared_distance(points, i, centers, labels[i]);
                if (counts[labels[i]] > 1 && d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            --counts[labels[far]];
            labels[far] = static_cast<int>(c);
            counts[c] = 1;
            centers.row(c) = points.row(far);
            changed = true;
        }
    }

    KMeansResult result{labels, centers, 0.0};
    for (Eigen::Index i = 0; i < n; ++i) result.inertia += squared_distance(points, i, centers, labels[i]);
    return result;
}

}  // namespace

SymmetricEigen jacobi_eigen(const RowMatrix& input, double tolerance, std::size_t max_sweeps) {
    require_symmetric(input, "jacobi_eigen");
    const auto n = input.rows();
    RowMatrix a = input;
    RowMatrix v = RowMatrix::Identity(n, n);
    for (std::size_t sweep = 0; sweep < max_sweeps && off_diagonal_norm(a) > tolerance; ++sweep) {
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) < a(y, y); });
    SymmetricEigen out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = a(order[k], order[k]);
        out.vectors.col(k) = v.col(order[k]);
    }
    return out;
}

RowMatrix normalized_laplacian(const RowMatrix& s) {
    const auto n = s.rows();
    Eigen::VectorXd inv_sqrt = s.rowwise().sum();
    for (Eigen::Index i = 0; i < n; ++i) inv_sqrt(i) = inv_sqrt(i) > 0.0 ? 1.0 / std::sqrt(inv_sqrt(i)) : 0.0;
    // D^{+1/2} (D - S) D^{+1/2}: an isolated node gets a zero row, so it is a
    // component of its own in the null space.
    RowMatrix l = -(inv_sqrt.asDiagonal() * s * inv_sqrt.asDiagonal());
    for (Eigen::Index i = 0; i < n; ++i)
        if (inv_sqrt(i) > 0.0) l(i, i) += 1.0;
    // Exact symmetry for the eigensolver.
    return (0.5 * (l + l.transpose())).eval();
}

KMeansResult kmeans(const RowMatrix& points, std::size_t k, std::size_t restarts, std::uint64_t seed) {
    if (k == 0 || static_cast<Eigen::Index>(k) > points.rows()) throw InvalidArgument("kmeans: k out of range");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
        auto rng = make_rng(seed, "kmeans.restart", r);
        auto result = lloyd(points, k, rng);
        if (result.inertia < best.inertia) best = std::move(result);
    }
    return best;
}

std::vector<int> spectral_clustering(const RowMatrix& s, std::size_t k, std::uint64_t seed, std::size_t restarts) {
    require_symmetric(s, "spectral_clustering");
    if ((s.array() < 0.0).any()) throw InvalidArgument("spectral_clustering: similarity must be non-negative");
    const auto n = static_cast<std::size_t>(s.rows());
    if (k < 2 || k > n)
        throw InvalidArgument("spectral_clustering: k=" + std::to_string(k) + " outside [2, " + std::to_string(n) + "]");
    const auto eig = jacobi_eigen(normalized_laplacian(s));
    RowMatrix u = eig.vectors.leftCols(static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        const double norm = u.row(i).norm();
        if (norm > 1e-12) u.row(i) /= norm;
    }
    return canonical_labels(kmeans(u, k, restarts, seed).labels);
}

std::size_t eigengap_cluster_count(const RowMatrix& s, std::size_t k_max) {
    const auto n = static_cast<std::size_t>(s.rows());
    if (n < 3) return std::min<std::size_t>(n, 2);
    const auto eig = jacobi_eigen(normalized_laplacian(s));
    const auto upper = std::min(k_max, n - 1);
    std::size_t best_k = 2;
    double best_gap = -1.0;
    for (std::size_t k = 2; k <= upper; ++k) {
        const double gap = eig.values(static_cast<Eigen::Index>(k)) - eig.values(static_cast<Eigen::Index>(k - 1));
        if (gap > best_gap + 1e-12) {
            best_gap = gap;
            best_k = k;
        }
    }
    return best_k;
}

std::vector<int> canonical_labels(const std::vector<int>& labels) {
    std::unordered_map<int, int> remap;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) {
        auto [it, fresh] = remap.try_emplace(l, static_cast<int>(remap.size()));
        out.push_back(it->second);
    }
    return out;
}

}  // namespace pgl
