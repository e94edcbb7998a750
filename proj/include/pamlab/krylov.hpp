#pragma once

// Action of the matrix exponential exp(t H) v for the symmetric Anderson
// Hamiltonian, by Lanczos projection with adaptive substeps.
//
// The spectrum is shifted by s = max xi >= λ_1 so that H - s is negative
// semidefinite; the result is returned as exp(log_scale) * w to survive
// exponents far beyond the double range.

#include "pamlab/errors.hpp"
#include "pamlab/lattice.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace pamlab {

struct KrylovConfig {
    int subspace = 30;
    /// Substeps satisfy ||H - s||_1 * dt <= step_norm_limit.
    double step_norm_limit = 20.0;
    double tol = 1e-12;
};

struct KrylovResult {
    std::vector<double> w;
    double log_scale = 0.0;
    /// Accumulated relative error estimate.
    double error_estimate = 0.0;
    int steps = 0;
};

inline KrylovResult krylov_expm_action(const HamiltonianOperator& H, double t, std::span<const double> v,
                                       const KrylovConfig& cfg = {})
{
    if (!(t >= 0.0)) throw ConfigError("krylov_expm_action: t must be >= 0");
    if (v.size() != H.size()) throw ConfigError("krylov_expm_action: vector size does not match operator");

    const auto n = static_cast<Eigen::Index>(H.size());
    const double shift = H.field().max_value();
    const double anorm = std::max(H.norm1(shift), 1e-300);
    const Eigen::Index m_max = std::min<Eigen::Index>(n, cfg.subspace);

    KrylovResult res;
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(v.data(), n);
    double beta0 = w.norm();
    if (beta0 == 0.0 || t == 0.0) {
        res.w.assign(v.begin(), v.end());
        return res;
    }
    w /= beta0;
    double log_scale = std::log(beta0) + t * shift;

    Eigen::MatrixXd V(n, m_max + 1);
    Eigen::VectorXd z(n);
    double done = 0.0;
    double tau = std::min(t, cfg.step_norm_limit / anorm);

    while (done < t) {
        tau = std::min(tau, t - done);
        // Lanczos basis for (H - s) started at w.
        V.col(0) = w;
        std::vector<double> alpha, beta;
        Eigen::Index k = 0;
        double h_next = 0.0;
        for (Eigen::Index j = 0; j < m_max; ++j) {
            H.apply(std::span<const double>(V.col(j).data(), static_cast<std::size_t>(n)),
                    std::span<double>(z.data(), static_cast<std::size_t>(n)));
            z -= shift * V.col(j);
            const double a = V.col(j).dot(z);
            alpha.push_back(a);
            for (int pass = 0; pass < 2; ++pass) {
                const Eigen::VectorXd proj = V.leftCols(j + 1).transpose() * z;
                z.noalias() -= V.leftCols(j + 1) * proj;
            }
            k = j + 1;
            h_next = z.norm();
            if (h_next <= 1e-14 * anorm) {
                h_next = 0.0;  // invariant subspace: projection is exact
                break;
            }
            if (j + 1 < m_max) {
                beta.push_back(h_next);
                V.col(j + 1) = z / h_next;
            }
        }
        if (k == n) h_next = 0.0;

        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
        for (Eigen::Index i = 0; i < k; ++i) {
            T(i, i) = alpha[static_cast<std::size_t>(i)];
            if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        const Eigen::VectorXd q0 = es.eigenvectors().row(0).transpose();

        // Shrink tau until the a posteriori error bound fits the step budget;
        // the basis does not depend on tau.
        for (;;) {
            const double top = es.eigenvalues().maxCoeff();
            const Eigen::VectorXd y =
                es.eigenvectors() * ((es.eigenvalues().array() - top) * tau).exp().matrix().cwiseProduct(q0);
            const double ynorm = y.norm();
            if (!(ynorm > 0.0)) throw NumericalError("krylov_expm_action: vanishing projection at time", done);
            const double err = h_next * std::abs(y[k - 1]) / std::max(ynorm, 1e-300);
            const double budget = cfg.tol * std::max(tau / t, 1e-3);
            if (err <= budget || h_next == 0.0) {
                w = V.leftCols(k) * (y / ynorm);
                log_scale += std::log(ynorm) + top * tau;
                res.error_estimate += err;
                done += tau;
                ++res.steps;
                if (err < 0.1 * budget) tau *= 1.5;
                break;
            }
            tau *= 0.5;
            if (tau < 1e-12 * t) {
                throw NumericalError("krylov_expm_action: step size underflow at time", done);
            }
        }
        tau = std::min(tau, cfg.step_norm_limit / anorm);
        if (h_next == 0.0) tau = t - done;  // exact propagation in the invariant subspace
    }

    res.w.assign(w.data(), w.data() + n);
    res.log_scale = log_scale;
    return res;
}

} // namespace pamlab
