#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "lurk/common.hpp"
#include "lurk/dataset.hpp"
#include "lurk/gp.hpp"
#include "lurk/kernel.hpp"
#include "lurk/nelder_mead.hpp"
#include "lurk/sparse_changes.hpp"

namespace lurk {

// phi = (mu, tau2, nu, sigma2, theta) plus the derived ratios
// eta = sigma2/tau2 and lambda = 2*sqrt(2)*tau2/nu. nu is +inf when the
// selected lambda is exactly zero (nothing penalized).
struct Hyperparameters {
    double mu = 0.0;
    double tau2 = 1.0;
    double nu = 1.0;
    double sigma2 = 0.0;
    KernelSpec theta;
    double eta = 0.0;
    double lambda = 0.0;

    void validate() const {
        require(tau2 > 0.0, "Hyperparameters: tau2 must be positive");
        require(sigma2 >= 0.0 && eta >= 0.0 && lambda >= 0.0,
                "Hyperparameters: sigma2, eta, lambda must be nonnegative");
        theta.validate();
        require(std::abs(eta * tau2 - sigma2) <= 1e-10 * std::max(1.0, sigma2),
                "Hyperparameters: eta*tau2 != sigma2");
        if (std::isfinite(nu))
            require(std::abs(lambda * nu - 2.0 * std::sqrt(2.0) * tau2) <=
                        1e-10 * std::max(1.0, tau2),
                    "Hyperparameters: lambda*nu != 2*sqrt(2)*tau2");
    }
};

struct FitConfig {
    double tol = 1e-4;            // max relative change in (theta, eta, delta)
    int max_outer = 50;
    int k_folds = 10;
    int lambda_grid_size = 100;
    std::uint64_t seed = 0;
    double theta_min = 1e-2, theta_max = 1e4;
    double eta_min = 1e-8, eta_max = 10.0;
    int optimizer_restarts = 3;   // multistarts, incumbent included
    bool one_se_rule = false;
    int likelihood_constant = 3;  // the printed 3n, or 1 for a plain n profile
    bool disable_shocks = false;  // mu-only baseline without the delta term
    int nm_max_evals_per_dim = 70;

    void validate() const {
        require(tol > 0.0 && max_outer >= 1, "FitConfig: tol/max_outer invalid");
        require(k_folds >= 2 && lambda_grid_size >= 2, "FitConfig: folds/grid invalid");
        require(theta_min > 0.0 && theta_min < theta_max, "FitConfig: theta bounds unordered");
        require(eta_min > 0.0 && eta_min < eta_max, "FitConfig: eta bounds unordered");
        require(optimizer_restarts >= 1, "FitConfig: need at least one optimizer start");
        require(likelihood_constant == 3 || likelihood_constant == 1,
                "FitConfig: likelihood_constant must be 3 (as printed) or 1");
    }
};

// Everything the estimator computes is canonicalized to time order, so the
// result depends only on the (x, t, y) content, never on row storage order.
struct FitResult {
    Hyperparameters hyper;
    ChangeCoefficients coeffs;  // e_tail indexed in time order
    Vector delta;               // U e shock part, time-ordered
    GPPredictor predictor;      // trained on the time-ordered design
    CvCurve cv_curve;           // from the final outer iteration
    std::vector<double> trace;  // profile objective at each accepted iterate
    bool converged = false;
    int iterations = 0;
    Dataset data;
    FitConfig config;
};

// tau2 of the plug-in update: (quad + lambda * sum|e_i|) / (c*n), floored so
// log(tau2) stays finite on exactly-interpolated data.
inline double tau2_update(double quad, double lambda, double l1, Index n,
                          int likelihood_constant = 3) {
    require(quad >= 0.0 && lambda >= 0.0 && l1 >= 0.0 && n >= 1, "tau2_update: invalid inputs");
    const double t = (quad + lambda * l1) / (static_cast<double>(likelihood_constant) * n);
    return std::max(t, 1e-12);
}

namespace detail {

inline std::vector<Index> identity_order(Index n) {
    std::vector<Index> v(n);
    std::iota(v.begin(), v.end(), Index{0});
    return v;
}

inline Matrix time_ordered_design(const Dataset& data) {
    const Matrix d = data.design();
    Matrix out(d.rows(), d.cols());
    for (Index r = 0; r < d.rows(); ++r) out.row(r) = d.row(data.time_order()[r]);
    return out;
}

struct ProfileParts {
    GPFactorization fact;
    double quad = 0.0;
    double tau2 = 0.0;
    double objective = 0.0;
};

inline ProfileParts profile_parts(const PairwiseSqDists& dists, const KernelSpec& theta,
                                  double eta, const Vector& resid, double lambda, double l1,
                                  int likelihood_constant) {
    ProfileParts parts;
    parts.fact = factorize(corr_matrix_from_sqdists(dists, theta), eta);
    parts.quad = whiten(parts.fact, resid).squaredNorm();
    parts.tau2 = tau2_update(parts.quad, lambda, l1, resid.size(), likelihood_constant);
    parts.objective = static_cast<double>(likelihood_constant) * resid.size() *
                          std::log(parts.tau2) +
                      parts.fact.log_det;
    return parts;
}

// Shock-adjusted residual in time order.
inline Vector time_ordered_residual(const Dataset& data, const ChangeCoefficients& coeffs) {
    const Vector y = data.to_time_order(data.y());
    const Vector delta = apply_U(coeffs, identity_order(data.n()));
    return y - Vector::Constant(data.n(), coeffs.mu) - delta;
}

}  // namespace detail

// Profile objective of the (theta, eta) search: c*n*log(tau2_hat) + log|R + eta I|
// with (e, lambda) held fixed and tau2_hat recomputed from the plug-in update.
inline double profile_objective(const KernelSpec& theta, double eta, const Dataset& data,
                                const ChangeCoefficients& coeffs, double lambda,
                                int likelihood_constant = 3) {
    require(coeffs.n() == data.n(), "profile_objective: coefficient count mismatch");
    const Vector resid = detail::time_ordered_residual(data, coeffs);
    return detail::profile_parts(PairwiseSqDists::build(detail::time_ordered_design(data)),
                                 theta, eta, resid, lambda, coeffs.l1_tail(),
                                 likelihood_constant)
        .objective;
}

// Rebuilds the predictor (and the time-ordered delta) for given point
// estimates; fit() finalization and fit.json reloads share this path so both
// produce identical bits.
inline std::pair<Vector, GPPredictor> rebuild_predictor(const Dataset& data,
                                                        const Hyperparameters& hyper,
                                                        const ChangeCoefficients& coeffs) {
    const Matrix design = detail::time_ordered_design(data);
    const Vector delta = apply_U(coeffs, detail::identity_order(data.n()));
    const Vector resid = detail::time_ordered_residual(data, coeffs);
    GPFactorization fact =
        factorize(corr_matrix_from_sqdists(PairwiseSqDists::build(design), hyper.theta),
                  hyper.eta);
    GPPredictor pred = GPPredictor::make(std::move(fact), design, hyper.theta, resid,
                                         hyper.mu, hyper.tau2);
    return {delta, std::move(pred)};
}

namespace detail {

// Latin-hypercube starts over the log-bounds box.
inline std::vector<Vector> space_filling_starts(int count, const Vector& lo, const Vector& hi,
                                                std::mt19937_64& rng) {
    std::vector<Vector> pts;
    if (count <= 0) return pts;
    const Index d = lo.size();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix u(count, d);
    for (Index k = 0; k < d; ++k) {
        std::vector<int> strata(count);
        std::iota(strata.begin(), strata.end(), 0);
        std::shuffle(strata.begin(), strata.end(), rng);
        for (int i = 0; i < count; ++i)
            u(i, k) = (strata[i] + unif(rng)) / static_cast<double>(count);
    }
    for (int i = 0; i < count; ++i) {
        Vector v(d);
        for (Index k = 0; k < d; ++k) v[k] = lo[k] + (hi[k] - lo[k]) * u(i, k);
        pts.push_back(v);
    }
    return pts;
}

}  // namespace detail

// The empirical-Bayes estimation loop. Each profile-objective evaluation at a
// candidate (theta, eta) re-selects lambda by CV on the fixed folds and
// re-solves the lasso under that whitening before applying the tau2 plug-in:
// with the penalty coefficients frozen instead, the search degenerates into
// pure log-det minimization (the lambda*l1 offset swamps the quadratic form)
// and (theta_t, eta) collapse into their lower bounds. Fixing the folds makes
// the nested objective deterministic.
inline FitResult fit(const Dataset& data, const FitConfig& config) {
    config.validate();
    const Index n = data.n();
    const Index p = data.p();
    require(n >= 10, "fit: need at least 10 observations (CV folds degenerate below that)");

    const Matrix design = detail::time_ordered_design(data);
    const Vector y = data.to_time_order(data.y());
    const PairwiseSqDists dists = PairwiseSqDists::build(design);
    const Matrix U = build_U(detail::identity_order(n));  // plain lower-triangular ones
    const FoldAssignment folds = make_folds(n, config.k_folds, config.seed);
    std::mt19937_64 start_rng(config.seed ^ 0x9e3779b97f4a7c15ull);

    const Index d = p + 2;  // log theta_x, log theta_t, log eta
    Vector lo(d), hi(d);
    lo.head(p + 1).setConstant(std::log(config.theta_min));
    hi.head(p + 1).setConstant(std::log(config.theta_max));
    lo[d - 1] = std::log(config.eta_min);
    hi[d - 1] = std::log(config.eta_max);

    KernelSpec theta;
    theta.theta_x = Vector::Ones(p);
    theta.theta_t = 1.0;
    double eta = 0.01;

    FitResult res;
    res.data = data;
    res.config = config;

    struct InnerFit {
        double lambda = 0.0;
        CvCurve curve;
        ChangeCoefficients coeffs;
        double quad = 0.0;
        double tau2 = 0.0;
        double objective = 0.0;
        GPFactorization fact;
    };

    Vector warm_b = Vector::Zero(n);  // carried across objective evaluations

    auto inner_solve = [&](const KernelSpec& th, double et, bool strict) {
        InnerFit inner;
        const Matrix R = corr_matrix_from_sqdists(dists, th);
        inner.fact = factorize(R, et);
        const Matrix W = whiten(inner.fact, U);
        const Vector z = whiten(inner.fact, y);
        Vector b;
        if (config.disable_shocks) {
            const double g = W.col(0).squaredNorm();
            b = Vector::Zero(n);
            b[0] = g > 0.0 ? W.col(0).dot(z) / g : 0.0;
        } else {
            CvResult cv = select_lambda_cv(R, et, U, y, folds, config.lambda_grid_size,
                                           config.one_se_rule);
            inner.lambda = cv.lambda_hat;
            inner.curve = std::move(cv.curve);
            if (strict) {
                b = lasso_solve(W, z, inner.lambda).full();
            } else {
                detail::LassoWorkspace ws(W, z, false);
                ws.warm_start(warm_b);
                ws.best_effort = true;
                ws.max_sweeps = 500;
                ws.kkt_rel_tol = 1e-9;
                ws.solve(inner.lambda);
                b = ws.b;
            }
            warm_b = b;
        }
        inner.coeffs.mu = b[0];
        inner.coeffs.e_tail = b.tail(n - 1);
        inner.quad = (z - W * b).squaredNorm();
        inner.tau2 = tau2_update(inner.quad, inner.lambda, inner.coeffs.l1_tail(), n,
                                 config.likelihood_constant);
        inner.objective = static_cast<double>(config.likelihood_constant) * n *
                              std::log(inner.tau2) +
                          inner.fact.log_det;
        return inner;
    };

    auto objective = [&](const Vector& v) {
        KernelSpec cand;
        cand.theta_x = v.head(p).array().exp();
        cand.theta_t = std::exp(v[p]);
        try {
            return inner_solve(cand, std::exp(v[d - 1]), false).objective;
        } catch (const std::runtime_error&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    InnerFit accepted;
    Vector delta_prev = Vector::Zero(n);
    Vector log_prev(d);
    double obj_prev = std::numeric_limits<double>::infinity();
    bool have_prev = false;
    bool converged = false;
    int iter = 0;

    for (iter = 1; iter <= config.max_outer; ++iter) {
        Vector incumbent(d);
        incumbent.head(p) = theta.theta_x.array().log();
        incumbent[p] = std::log(theta.theta_t);
        incumbent[d - 1] = std::log(eta);

        // Multistart on the first pass; later passes only polish locally.
        NelderMeadOptions nm_opt;
        std::vector<Vector> starts = {incumbent};
        if (iter == 1) {
            nm_opt.max_evals = config.nm_max_evals_per_dim * static_cast<int>(d);
            for (Vector& v : detail::space_filling_starts(config.optimizer_restarts - 1, lo,
                                                          hi, start_rng))
                starts.push_back(std::move(v));
        } else {
            nm_opt.max_evals = 20 * static_cast<int>(d);
            nm_opt.initial_step_frac = 0.02;
        }

        NelderMeadResult best;
        best.value = std::numeric_limits<double>::infinity();
        for (const Vector& s : starts) {
            NelderMeadResult r = nelder_mead(objective, s, lo, hi, nm_opt);
            if (r.value < best.value) best = r;
        }

        // The objective is the same deterministic function every pass; keep
        // the incumbent unless the polish actually improved it.
        if (have_prev && best.value >= obj_prev - 1e-6 * std::abs(obj_prev)) {
            best.x = log_prev;
        }

        theta.theta_x = best.x.head(p).array().exp();
        theta.theta_t = std::exp(best.x[p]);
        eta = std::exp(best.x[d - 1]);

        accepted = inner_solve(theta, eta, true);
        res.trace.push_back(accepted.objective);
        const Vector delta = apply_U(accepted.coeffs, detail::identity_order(n));

        if (std::getenv("LURK_TRACE")) {
            Index nnz = 0;
            for (Index j = 0; j < accepted.coeffs.e_tail.size(); ++j)
                if (accepted.coeffs.e_tail[j] != 0.0) ++nnz;
            fprintf(stderr,
                    "[fit] it=%d lmax=%.3g lambda=%.4g nnz=%ld mu=%.4g l1=%.4g quad=%.4g "
                    "pen=%.4g theta_t=%.4g theta_x0=%.4g eta=%.4g obj=%.6g\n",
                    iter, accepted.curve.lambda_max, accepted.lambda,
                    static_cast<long>(nnz), accepted.coeffs.mu, accepted.coeffs.l1_tail(),
                    accepted.quad, accepted.lambda * accepted.coeffs.l1_tail(),
                    theta.theta_t, p > 0 ? theta.theta_x[0] : 0.0, eta, accepted.objective);
        }

        double change = std::numeric_limits<double>::infinity();
        if (have_prev) {
            change = (best.x - log_prev).lpNorm<Eigen::Infinity>();
            const double dchange = (delta - delta_prev).lpNorm<Eigen::Infinity>() /
                                   (1.0 + delta_prev.lpNorm<Eigen::Infinity>());
            change = std::max(change, dchange);
        }
        delta_prev = delta;
        log_prev = best.x;
        obj_prev = accepted.objective;
        have_prev = true;
        if (change < config.tol) {
            converged = true;
            break;
        }
    }

    res.hyper.mu = accepted.coeffs.mu;
    res.hyper.tau2 = accepted.tau2;
    res.hyper.lambda = accepted.lambda;
    res.hyper.nu = accepted.lambda > 0.0
                       ? 2.0 * std::sqrt(2.0) * accepted.tau2 / accepted.lambda
                       : std::numeric_limits<double>::infinity();
    res.hyper.eta = eta;
    res.hyper.sigma2 = eta * accepted.tau2;
    res.hyper.theta = theta;
    res.coeffs = accepted.coeffs;
    res.cv_curve = accepted.curve;
    res.delta = apply_U(accepted.coeffs, detail::identity_order(n));
    const Vector resid_final = detail::time_ordered_residual(data, accepted.coeffs);
    res.predictor = GPPredictor::make(std::move(accepted.fact), design, theta, resid_final,
                                      accepted.coeffs.mu, accepted.tau2);
    res.converged = converged;
    res.iterations = std::min(iter, config.max_outer);
    return res;
}

}  // namespace lurk
