#pragma once

#include <cmath>
#include <vector>

#include "lurk/common.hpp"

namespace lurk {

// Product squared-exponential correlation over (x, t).
// R((x,t),(x',t')) = exp{-sum_k theta_x[k] (x_k - x'_k)^2} * exp{-theta_t (t - t')^2}
//
// theta are inverse squared lengthscales; the time coordinate is always the
// last column of a design matrix.
struct KernelSpec {
    Vector theta_x;  // length p, p == 0 means time-only model
    double theta_t = 1.0;

    Index p() const { return theta_x.size(); }
    Index dim() const { return theta_x.size() + 1; }

    void validate() const {
        for (Index k = 0; k < theta_x.size(); ++k)
            require(std::isfinite(theta_x[k]) && theta_x[k] > 0.0,
                    "KernelSpec: theta_x components must be positive and finite");
        require(std::isfinite(theta_t) && theta_t > 0.0,
                "KernelSpec: theta_t must be positive and finite");
    }

    // All p+1 rates as one vector, time last.
    Vector stacked() const {
        Vector th(dim());
        th.head(p()) = theta_x;
        th[p()] = theta_t;
        return th;
    }
};

// Standard normal CDF through the complementary error function; full relative
// precision in the tails, which the d_x weights need.
inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

inline double corr(const Vector& a, const Vector& b, const KernelSpec& spec) {
    spec.validate();
    require(a.size() == spec.dim() && b.size() == spec.dim(),
            "corr: point dimension must equal p+1");
    double s = 0.0;
    for (Index k = 0; k < spec.p(); ++k) {
        const double d = a[k] - b[k];
        s += spec.theta_x[k] * d * d;
    }
    const double dt = a[spec.p()] - b[spec.p()];
    s += spec.theta_t * dt * dt;
    return std::exp(-s);
}

// Per-dimension squared-difference matrices, computed once per design so the
// correlation matrix can be rebuilt cheaply for many theta values.
struct PairwiseSqDists {
    std::vector<Matrix> per_dim;  // p+1 matrices, time last
    Index n = 0;

    static PairwiseSqDists build(const Matrix& design) {
        PairwiseSqDists out;
        out.n = design.rows();
        out.per_dim.reserve(design.cols());
        for (Index k = 0; k < design.cols(); ++k) {
            const Vector c = design.col(k);
            Matrix d = c.replicate(1, out.n) - c.transpose().replicate(out.n, 1);
            out.per_dim.push_back(d.array().square().matrix());
        }
        return out;
    }
};

inline Matrix corr_matrix_from_sqdists(const PairwiseSqDists& dists, const KernelSpec& spec) {
    spec.validate();
    require(static_cast<Index>(dists.per_dim.size()) == spec.dim(),
            "corr_matrix: design dimension must equal p+1");
    const Vector th = spec.stacked();
    Matrix s = Matrix::Zero(dists.n, dists.n);
    for (Index k = 0; k < spec.dim(); ++k) s.noalias() += th[k] * dists.per_dim[k];
    return (-s.array()).exp().matrix();
}

inline Matrix corr_matrix(const Matrix& design, const KernelSpec& spec) {
    require(design.rows() >= 1, "corr_matrix: need at least one design point");
    return corr_matrix_from_sqdists(PairwiseSqDists::build(design), spec);
}

// Correlation vector r(query) against all rows of a training design.
inline Vector corr_vector(const Matrix& design, const Vector& query, const KernelSpec& spec) {
    spec.validate();
    require(query.size() == spec.dim() && design.cols() == spec.dim(),
            "corr_vector: dimension mismatch");
    const Vector th = spec.stacked();
    Vector r(design.rows());
    for (Index i = 0; i < design.rows(); ++i) {
        double s = 0.0;
        for (Index k = 0; k < spec.dim(); ++k) {
            const double d = design(i, k) - query[k];
            s += th[k] * d * d;
        }
        r[i] = std::exp(-s);
    }
    return r;
}

// One factor of the analytic marginalization weight:
// \int_0^1 exp{-theta (u - x)^2} du, for x in [0,1].
inline double unit_interval_se_integral(double theta, double x) {
    const double root = std::sqrt(2.0 * theta);
    return std::sqrt(M_PI / theta) *
           (normal_cdf(root * (1.0 - x)) - normal_cdf(-root * x));
}

// d_x weights of the gradual-effect formula:
// (d_x)_i = prod_k sqrt(pi/theta_k) { Phi(sqrt(2 theta_k)(1-x_ik)) - Phi(-sqrt(2 theta_k) x_ik) }
// which equals \int_{[0,1]^p} R_x(x - x_i) dx. X must already be scaled to [0,1]^p.
inline Vector dx_weights(const Matrix& X, const Vector& theta_x) {
    require(X.cols() == theta_x.size(), "dx_weights: X columns must match theta_x length");
    for (Index k = 0; k < theta_x.size(); ++k)
        require(std::isfinite(theta_x[k]) && theta_x[k] > 0.0, "dx_weights: theta_x must be positive");
    require((X.array() >= 0.0).all() && (X.array() <= 1.0).all(),
            "dx_weights: inputs must be scaled into [0,1]; scaling is the caller's job");
    Vector d = Vector::Ones(X.rows());
    for (Index i = 0; i < X.rows(); ++i)
        for (Index k = 0; k < X.cols(); ++k)
            d[i] *= unit_interval_se_integral(theta_x[k], X(i, k));
    return d;
}

}  // namespace lurk
