#pragma once

#include <cmath>
#include <sstream>

#include "lurk/common.hpp"
#include "lurk/kernel.hpp"

namespace lurk {

// Cholesky factorization of R + eta*I (+ jitter when needed).
struct GPFactorization {
    Index n = 0;
    Matrix chol_lower;   // L with L L^T = R + eta I + jitter I
    double eta = 0.0;    // nugget ratio sigma^2 / tau^2
    double jitter = 0.0; // diagonal boost that made the factorization succeed
    double log_det = 0.0;
};

// Jitter policy: start at 1e-10*n, escalate x10 while <= 1e-6, then give up.
// Replicated design rows make R exactly singular at eta = 0, so the escalation
// path is exercised in normal use, not just on pathological inputs.
inline GPFactorization factorize(const Matrix& R, double eta) {
    require(R.rows() == R.cols() && R.rows() >= 1, "factorize: R must be square");
    require(std::isfinite(eta) && eta >= 0.0, "factorize: eta must be nonnegative");
    const Index n = R.rows();

    GPFactorization fact;
    fact.n = n;
    fact.eta = eta;

    Matrix A = R;
    A.diagonal().array() += eta;

    double jitter = 0.0;
    while (true) {
        Matrix B = A;
        if (jitter > 0.0) B.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(B);
        if (llt.info() == Eigen::Success) {
            fact.chol_lower = llt.matrixL();
            fact.jitter = jitter;
            fact.log_det = 2.0 * fact.chol_lower.diagonal().array().log().sum();
            return fact;
        }
        const double next = (jitter == 0.0) ? 1e-10 * static_cast<double>(n) : jitter * 10.0;
        if (next > 1e-6) {
            std::ostringstream msg;
            msg << "factorize: Cholesky of R + eta*I failed for eta=" << eta
                << " even with jitter " << jitter << " (max 1e-6); matrix is singular";
            throw std::runtime_error(msg.str());
        }
        jitter = next;
    }
}

// L^{-1} M by forward substitution.
inline Matrix whiten(const GPFactorization& fact, const Matrix& M) {
    require(M.rows() == fact.n, "whiten: row count must match factorization");
    return fact.chol_lower.triangularView<Eigen::Lower>().solve(M);
}

inline Vector whiten(const GPFactorization& fact, const Vector& v) {
    require(v.size() == fact.n, "whiten: length must match factorization");
    return fact.chol_lower.triangularView<Eigen::Lower>().solve(v);
}

// (R + eta I)^{-1} v via the two triangular solves.
inline Vector solve_spd(const GPFactorization& fact, const Vector& v) {
    Vector w = whiten(fact, v);
    return fact.chol_lower.transpose().triangularView<Eigen::Upper>().solve(w);
}

// Posterior predictive state for f at fixed hyperparameters:
//   fhat(q)  = mu_hat + r(q)' alpha,      alpha = (R + eta I)^{-1} (y - U e)
//   s^2(q)   = tau2_hat { 1 - r(q)' (R + eta I)^{-1} r(q) }
struct GPPredictor {
    GPFactorization factorization;
    Matrix train_design;  // n x (p+1), time in the last column
    KernelSpec kernel;
    Vector alpha;
    double mu_hat = 0.0;
    double tau2_hat = 1.0;

    static GPPredictor make(GPFactorization fact, Matrix design, KernelSpec spec,
                            const Vector& shock_adjusted_residual, double mu_hat, double tau2_hat) {
        require(design.rows() == fact.n, "GPPredictor: design rows must match factorization");
        require(shock_adjusted_residual.size() == fact.n, "GPPredictor: residual length mismatch");
        require(tau2_hat > 0.0, "GPPredictor: tau2_hat must be positive");
        GPPredictor pred;
        pred.factorization = std::move(fact);
        pred.train_design = std::move(design);
        pred.kernel = std::move(spec);
        pred.alpha = solve_spd(pred.factorization, shock_adjusted_residual);
        pred.mu_hat = mu_hat;
        pred.tau2_hat = tau2_hat;
        return pred;
    }
};

inline double predict_mean(const GPPredictor& pred, const Vector& query) {
    const Vector r = corr_vector(pred.train_design, query, pred.kernel);
    return pred.mu_hat + r.dot(pred.alpha);
}

inline double predict_var(const GPPredictor& pred, const Vector& query) {
    const Vector r = corr_vector(pred.train_design, query, pred.kernel);
    const Vector w = whiten(pred.factorization, r);
    double v = pred.tau2_hat * (1.0 - w.squaredNorm());
    if (v < 0.0) {
        require(v > -1e-10 * pred.tau2_hat, "predict_var: variance below clamp tolerance");
        v = 0.0;
    }
    return std::min(v, pred.tau2_hat);
}

}  // namespace lurk
