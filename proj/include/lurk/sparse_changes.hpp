#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "lurk/common.hpp"
#include "lurk/gp.hpp"

namespace lurk {

// Coefficients of the cumulative-change expansion delta = U e.
// The first column of U is all ones and carries mu (e_1 itself is pinned to
// zero: a free e_1 would be unidentifiable from mu). e_tail holds e_2..e_n,
// indexed in time order, and is the part the lasso penalizes.
struct ChangeCoefficients {
    double mu = 0.0;
    Vector e_tail;  // length n-1

    Index n() const { return e_tail.size() + 1; }

    double l1_tail() const { return e_tail.lpNorm<1>(); }

    // Full coefficient vector (mu, e_2, ..., e_n) as the lasso sees it.
    Vector full() const {
        Vector b(n());
        b[0] = mu;
        b.tail(e_tail.size()) = e_tail;
        return b;
    }
};

// Shock part of U e in dataset order: observation i receives the cumulative
// sum of e_2..e_j where j is its time rank. mu is reported separately.
inline Vector apply_U(const ChangeCoefficients& coeffs, const std::vector<Index>& time_order) {
    const Index n = coeffs.n();
    require(static_cast<Index>(time_order.size()) == n, "apply_U: time_order length mismatch");
    Vector delta(n);
    double cum = 0.0;
    for (Index rank = 0; rank < n; ++rank) {
        if (rank >= 1) cum += coeffs.e_tail[rank - 1];
        delta[time_order[rank]] = cum;
    }
    return delta;
}

// Dense U in dataset order (column 0 = ones for mu; column j = indicator of
// time rank > j). Materialized only where the whitened lasso design needs it.
inline Matrix build_U(const std::vector<Index>& time_order) {
    const Index n = static_cast<Index>(time_order.size());
    Matrix U = Matrix::Zero(n, n);
    U.col(0).setOnes();
    for (Index rank = 0; rank < n; ++rank)
        for (Index j = 1; j <= rank; ++j) U(time_order[rank], j) = 1.0;
    return U;
}

// ---------------------------------------------------------------------------
// Whitened lasso: minimize (1/2)||z - W b||^2 + (lambda/2) sum_{j>=1} |b_j|,
// scaled so the minimizer matches the GLS objective
// (y - U e)'(R + eta I)^{-1}(y - U e) + lambda sum_{i>=2} |e_i| exactly.
// Coordinate descent with covariance updates.
// ---------------------------------------------------------------------------

namespace detail {

inline double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

// Shared path state: gram matrix and covariance vector are computed once per
// (design, response) and reused across a whole lambda path with warm starts.
// Tolerances are relative to the gradient scale ||W'z||_inf: whitening can
// amplify magnitudes by 1/sqrt(eta), where absolute thresholds would sit
// below the roundoff floor.
struct LassoWorkspace {
    Matrix gram;        // W'W
    Vector cov;         // W'z
    Vector grad_resid;  // W'(z - W b) maintained incrementally
    Vector b;
    double scale;       // gradient magnitude reference
    bool penalize_first = false;
    int max_sweeps = 4000;
    double kkt_rel_tol = 1e-10;
    bool best_effort = false;  // path mode: accept the sweep cap, never throw

    LassoWorkspace(const Matrix& design, const Vector& response, bool penalize_first_col)
        : gram(design.transpose() * design),
          cov(design.transpose() * response),
          grad_resid(cov),
          b(Vector::Zero(design.cols())),
          scale(std::max(1.0, cov.lpNorm<Eigen::Infinity>())),
          penalize_first(penalize_first_col) {}

    bool penalized(Index j) const { return penalize_first || j > 0; }

    void warm_start(const Vector& b0) {
        require(b0.size() == b.size(), "warm_start: size mismatch");
        b = b0;
        grad_resid = cov - gram * b;
    }

    double kkt_residual(double lambda) const {
        const double half = 0.5 * lambda;
        double worst = 0.0;
        for (Index j = 0; j < b.size(); ++j) {
            if (gram(j, j) <= 0.0) continue;
            double viol;
            if (!penalized(j))
                viol = std::abs(grad_resid[j]);
            else if (b[j] == 0.0)
                viol = std::max(0.0, std::abs(grad_resid[j]) - half);
            else
                viol = std::abs(grad_resid[j] - half * (b[j] > 0.0 ? 1.0 : -1.0));
            worst = std::max(worst, viol);
        }
        return worst;
    }

    void sweep(double lambda, const std::vector<Index>& coords) {
        const double half = 0.5 * lambda;
        for (Index j : coords) {
            const double gjj = gram(j, j);
            if (gjj <= 0.0) continue;
            const double old = b[j];
            const double s = grad_resid[j] + gjj * old;
            const double next = penalized(j) ? soft_threshold(s, half) / gjj : s / gjj;
            if (next != old) {
                grad_resid.noalias() -= gram.col(j) * (next - old);
                b[j] = next;
            }
        }
    }

    // Solve at one lambda, warm-started from the current b.
    void solve(double lambda) {
        const double tol = kkt_rel_tol * scale;
        std::vector<Index> all(b.size());
        std::iota(all.begin(), all.end(), Index{0});
        for (int it = 0; it < max_sweeps; ++it) {
            // Active-set sweeps between full passes keep path solves cheap.
            sweep(lambda, all);
            std::vector<Index> active;
            for (Index j = 0; j < b.size(); ++j)
                if (b[j] != 0.0) active.push_back(j);
            for (int inner = 0; inner < 200 && kkt_active(lambda, active) > tol; ++inner)
                sweep(lambda, active);
            if (kkt_residual(lambda) <= tol) return;
        }
        if (best_effort) return;
        std::ostringstream msg;
        msg << "lasso_solve: no convergence after " << max_sweeps
            << " sweeps; KKT residual " << kkt_residual(lambda)
            << " (duality-gap scale " << kkt_residual(lambda) * b.lpNorm<1>() << ")";
        throw std::runtime_error(msg.str());
    }

  private:
    double kkt_active(double lambda, const std::vector<Index>& coords) const {
        const double half = 0.5 * lambda;
        double worst = 0.0;
        for (Index j : coords) {
            double viol;
            if (!penalized(j))
                viol = std::abs(grad_resid[j]);
            else if (b[j] == 0.0)
                viol = std::max(0.0, std::abs(grad_resid[j]) - half);
            else
                viol = std::abs(grad_resid[j] - half * (b[j] > 0.0 ? 1.0 : -1.0));
            worst = std::max(worst, viol);
        }
        return worst;
    }
};

}  // namespace detail

inline ChangeCoefficients lasso_solve(const Matrix& design, const Vector& response, double lambda,
                                      bool penalize_first = false) {
    require(design.rows() == response.size(), "lasso_solve: design/response size mismatch");
    require(design.cols() >= 1, "lasso_solve: need at least one column");
    require(std::isfinite(lambda) && lambda >= 0.0, "lasso_solve: lambda must be nonnegative");
    detail::LassoWorkspace ws(design, response, penalize_first);
    ws.solve(lambda);
    ChangeCoefficients out;
    out.mu = ws.b[0];
    out.e_tail = ws.b.tail(ws.b.size() - 1);
    return out;
}

// Smallest lambda at which every penalized coefficient is exactly zero.
inline double lambda_max(const Matrix& design, const Vector& response, bool penalize_first = false) {
    require(design.rows() == response.size(), "lambda_max: design/response size mismatch");
    Vector resid = response;
    Index first_pen = 0;
    if (!penalize_first) {
        const double g = design.col(0).squaredNorm();
        if (g > 0.0) resid -= design.col(0) * (design.col(0).dot(response) / g);
        first_pen = 1;
    }
    double m = 0.0;
    for (Index j = first_pen; j < design.cols(); ++j)
        m = std::max(m, std::abs(design.col(j).dot(resid)));
    return 2.0 * m;
}

// ---------------------------------------------------------------------------
// Cross-validated lambda selection on folds fixed outside the optimization
// loop.
// ---------------------------------------------------------------------------

struct FoldAssignment {
    std::vector<int> fold_of;  // length n, values in [0, k)
    int k = 0;
    std::uint64_t seed = 0;
};

inline FoldAssignment make_folds(Index n, int k, std::uint64_t seed) {
    require(k >= 2, "make_folds: need at least 2 folds");
    require(static_cast<Index>(k) <= n, "make_folds: more folds than observations");
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    FoldAssignment folds;
    folds.k = k;
    folds.seed = seed;
    folds.fold_of.assign(n, 0);
    for (Index i = 0; i < n; ++i) folds.fold_of[perm[i]] = static_cast<int>(i % k);
    return folds;
}

struct CvCurve {
    Vector lambda;    // descending grid
    Vector mean_err;  // mean held-out squared error per grid point
    Vector se;        // standard error of the per-fold means
    double lambda_max = 0.0;
};

struct CvResult {
    double lambda_hat = 0.0;
    CvCurve curve;
};

// Cross-validated lambda: hold out observations, refit the penalized GLS on
// the rest, and score the full GP + shock prediction of the held-out rows in
// raw response units. (Scoring held-out rows of the whitened system instead
// is unstable: small nuggets amplify a few directions until the CV error is
// all leverage, and the selected lambda collapses toward zero.) The grid is
// log-spaced from lambda_max down to 1e-4 * lambda_max; argmin ties break
// toward the larger (sparser) lambda.
inline CvResult select_lambda_cv(const Matrix& R, double eta, const Matrix& U, const Vector& y,
                                 const FoldAssignment& folds, int grid_size,
                                 bool one_se_rule = false) {
    const Index n = y.size();
    require(R.rows() == n && R.cols() == n, "select_lambda_cv: R size mismatch");
    require(U.rows() == n, "select_lambda_cv: U size mismatch");
    require(static_cast<Index>(folds.fold_of.size()) == n, "select_lambda_cv: fold size mismatch");
    require(grid_size >= 2, "select_lambda_cv: grid_size must be >= 2");

    CvResult res;
    // Path endpoint in Eq.-(9) units, from the full-data whitened problem.
    {
        const GPFactorization fact = factorize(R, eta);
        res.curve.lambda_max = lambda_max(whiten(fact, U), whiten(fact, y));
    }
    const double lmax = res.curve.lambda_max;
    if (lmax <= 0.0) {
        // Response is orthogonal to every penalized column: nothing to tune.
        res.curve.lambda = Vector::Zero(1);
        res.curve.mean_err = Vector::Zero(1);
        res.curve.se = Vector::Zero(1);
        res.lambda_hat = 0.0;
        return res;
    }

    Vector grid(grid_size);
    const double lo = std::log(1e-4 * lmax), hi = std::log(lmax);
    for (int g = 0; g < grid_size; ++g)
        grid[g] = std::exp(hi + (lo - hi) * static_cast<double>(g) / (grid_size - 1));

    Matrix fold_mean_err = Matrix::Zero(grid_size, folds.k);
    Vector total_err = Vector::Zero(grid_size);
    for (int f = 0; f < folds.k; ++f) {
        std::vector<Index> train, test;
        for (Index i = 0; i < n; ++i)
            (folds.fold_of[i] == f ? test : train).push_back(i);
        const Index nt = static_cast<Index>(train.size());
        const Index ns = static_cast<Index>(test.size());
        Matrix Rtt(nt, nt), Rts(nt, ns), Ut(nt, U.cols()), Us(ns, U.cols());
        Vector yt(nt), ys(ns);
        for (Index a = 0; a < nt; ++a) {
            yt[a] = y[train[a]];
            Ut.row(a) = U.row(train[a]);
            for (Index b = 0; b < nt; ++b) Rtt(a, b) = R(train[a], train[b]);
            for (Index b = 0; b < ns; ++b) Rts(a, b) = R(train[a], test[b]);
        }
        for (Index a = 0; a < ns; ++a) {
            ys[a] = y[test[a]];
            Us.row(a) = U.row(test[a]);
        }
        GPFactorization ft = factorize(Rtt, eta);
        const Matrix Wt = whiten(ft, Ut);
        const Vector zt = whiten(ft, yt);
        // (Rtt + eta I)^{-1} Rts, for the GP part of the held-out prediction.
        const Matrix Pt =
            ft.chol_lower.transpose().triangularView<Eigen::Upper>().solve(whiten(ft, Rts));

        detail::LassoWorkspace ws(Wt, zt, false);
        // Model selection tolerates loose solves; exact KKT polishing is for
        // the final full-data fit.
        ws.best_effort = true;
        ws.max_sweeps = 200;
        ws.kkt_rel_tol = 1e-8;
        for (int g = 0; g < grid_size; ++g) {
            ws.solve(grid[g]);
            const Vector pred = Us * ws.b + Pt.transpose() * (yt - Ut * ws.b);
            const double err = (ys - pred).squaredNorm();
            total_err[g] += err;
            fold_mean_err(g, f) = err / static_cast<double>(ns);
        }
    }

    res.curve.lambda = grid;
    res.curve.mean_err = total_err / static_cast<double>(n);
    res.curve.se = Vector::Zero(grid_size);
    for (int g = 0; g < grid_size; ++g) {
        const double m = fold_mean_err.row(g).mean();
        double var = 0.0;
        for (int f = 0; f < folds.k; ++f) {
            const double d = fold_mean_err(g, f) - m;
            var += d * d;
        }
        var /= std::max(1, folds.k - 1);
        res.curve.se[g] = std::sqrt(var / folds.k);
    }

    int best = 0;
    for (int g = 1; g < grid_size; ++g)
        if (res.curve.mean_err[g] < res.curve.mean_err[best]) best = g;
    if (one_se_rule) {
        const double cutoff = res.curve.mean_err[best] + res.curve.se[best];
        for (int g = 0; g <= best; ++g)
            if (res.curve.mean_err[g] <= cutoff) {
                best = g;
                break;
            }
    }
    res.lambda_hat = grid[best];
    return res;
}

}  // namespace lurk
