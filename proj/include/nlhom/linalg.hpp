#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nlhom/errors.hpp"
#include "nlhom/types.hpp"

namespace nlhom {

using LinearMap = std::function<void(const Field& in, Field& out)>;

struct CgOptions {
    double tolerance = 1e-10;
    int max_iterations = 0; ///< 0 selects 50 * sqrt(dimension)
    bool throw_on_failure = true;
};

struct CgResult {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
    std::vector<double> history;
};

/// Preconditioned conjugate gradients for an operator that is SPD in the inner product <x, W y>.
/// `weight` holds the diagonal of W (empty for Euclidean); `precond` applies the inverse preconditioner.
/// The residual is measured in the W norm relative to the W norm of the right-hand side.
inline CgResult conjugate_gradient(const LinearMap& op, const Field& rhs, Field& x, const Field& weight,
                                   const LinearMap& precond, const CgOptions& options = {})
{
    const Eigen::Index n = rhs.size();
    auto wdot = [&](const Field& a, const Field& b) {
        return weight.size() == 0 ? a.dot(b) : (a.array() * weight.array() * b.array()).sum();
    };
    CgResult result;
    const double bnorm = std::sqrt(wdot(rhs, rhs));
    if (x.size() != n)
        x = Field::Zero(n);
    if (bnorm == 0.0) {
        x.setZero();
        result.converged = true;
        return result;
    }
    const int cap = options.max_iterations > 0
                        ? options.max_iterations
                        : std::max(10, static_cast<int>(50.0 * std::sqrt(static_cast<double>(n))));

    Field ax(n), r(n), z(n), p(n), ap(n);
    op(x, ax);
    r = rhs - ax;
    if (precond)
        precond(r, z);
    else
        z = r;
    p = z;
    double rz = wdot(r, z);
    double rel = std::sqrt(wdot(r, r)) / bnorm;
    result.history.push_back(rel);
    while (rel > options.tolerance && result.iterations < cap) {
        op(p, ap);
        const double pap = wdot(p, ap);
        if (!(pap > 0.0))
            break;
        const double alpha = rz / pap;
        x += alpha * p;
        r -= alpha * ap;
        if (precond)
            precond(r, z);
        else
            z = r;
        const double rz_new = wdot(r, z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
        ++result.iterations;
        rel = std::sqrt(wdot(r, r)) / bnorm;
        result.history.push_back(rel);
    }
    result.relative_residual = rel;
    result.converged = rel <= options.tolerance;
    if (!result.converged && options.throw_on_failure)
        throw SolverError("conjugate gradients stopped at relative residual " + std::to_string(rel) + " after " +
                              std::to_string(result.iterations) + " iterations",
                          result.history);
    return result;
}

/// Largest eigenvalue of an operator self-adjoint in the W inner product, by power iteration
/// from a deterministic pseudo-random start restricted by `mask` (entries with mask 0 stay 0).
inline double power_iteration(const LinearMap& op, Eigen::Index n, const Field& weight, const Field& mask,
                              int steps = 100, unsigned seed = 12345)
{
    auto wdot = [&](const Field& a, const Field& b) {
        return weight.size() == 0 ? a.dot(b) : (a.array() * weight.array() * b.array()).sum();
    };
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Field x(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i)
        x[i] = dist(rng);
    if (mask.size() == n)
        x.array() *= mask.array();
    double norm = std::sqrt(wdot(x, x));
    if (norm == 0.0)
        return 0.0;
    x /= norm;
    double lambda = 0.0;
    for (int s = 0; s < steps; ++s) {
        op(x, y);
        if (mask.size() == n)
            y.array() *= mask.array();
        lambda = wdot(x, y);
        norm = std::sqrt(wdot(y, y));
        if (norm == 0.0)
            return 0.0;
        x = y / norm;
    }
    // Rayleigh quotient of the last iterate together with the norm growth bounds lambda_max from below.
    return std::max(lambda, norm);
}

struct LanczosResult {
    double largest = 0.0;
    Field vector;
    int steps = 0;
    bool converged = false;
};

/// Largest eigenvalue of the generalized problem M y = mu B y, given applications of M and B^{-1}
/// (`solve_b`) and of B (`apply_b`); both SPD on the masked subspace.  Full reorthogonalization.
inline LanczosResult lanczos_largest(const LinearMap& apply_m, const LinearMap& solve_b, const LinearMap& apply_b,
                                     Eigen::Index n, const Field& mask, int max_steps = 200, double tol = 1e-10,
                                     unsigned seed = 2024)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<Field> q;
    std::vector<Field> bq;
    std::vector<double> alpha, beta;

    Field v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = dist(rng);
    if (mask.size() == n)
        v.array() *= mask.array();
    Field bv(n);
    apply_b(v, bv);
    double nrm = std::sqrt(v.dot(bv));
    if (nrm == 0.0)
        throw SolverError("Lanczos start vector vanished on the free subspace", {});
    v /= nrm;
    bv /= nrm;

    LanczosResult result;
    Field w(n), mv(n);
    for (int k = 0; k < std::min<Eigen::Index>(max_steps, n); ++k) {
        q.push_back(v);
        bq.push_back(bv);
        apply_m(v, mv);
        solve_b(mv, w);
        if (mask.size() == n)
            w.array() *= mask.array();
        // Operator B^{-1} M is self-adjoint in the B inner product.
        const double a = w.dot(bq.back());
        alpha.push_back(a);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < q.size(); ++j)
                w -= w.dot(bq[j]) * q[j];
        }
        Field bw(n);
        apply_b(w, bw);
        const double b = std::sqrt(std::max(0.0, w.dot(bw)));

        const int m = static_cast<int>(alpha.size());
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) {
            t(i, i) = alpha[i];
            if (i + 1 < m)
                t(i, i + 1) = t(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
        const double top = es.eigenvalues()(m - 1);
        const double resid = b * std::abs(es.eigenvectors()(m - 1, m - 1));
        result.steps = m;
        result.largest = top;
        if (resid <= tol * std::abs(top) || b <= 1e-14 * std::abs(top)) {
            result.converged = true;
            Field y = Field::Zero(n);
            for (int i = 0; i < m; ++i)
                y += es.eigenvectors()(i, m - 1) * q[i];
            result.vector = y;
            return result;
        }
        beta.push_back(b);
        v = w / b;
        bv = bw / b;
    }
    throw SolverError("Lanczos iteration did not converge", {});
}

} // namespace nlhom
