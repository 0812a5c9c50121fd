#pragma once

#include <cmath>
#include <vector>

#include "lurk/common.hpp"
#include "lurk/estimator.hpp"

namespace lurk {

struct ChangePoint {
    Index time_index = 0;  // 1-based position in time order (always >= 2)
    double time_raw = 0.0;
    double jump = 0.0;     // e_i, exactly as the lasso left it
};

struct EffectCurves {
    Vector t_grid;                          // scaled [0,1]
    Vector gradual;                         // g(t) on t_grid
    Vector sudden_times;                    // delta in time order
    std::vector<ChangePoint> change_points; // exact nonzeros of e_tail
};

// Gradual effect g(t) = mu_hat + (r(t) .* d_x)' (R + eta I)^{-1} (y - U e):
// the posterior mean with the known inputs integrated out uniformly over
// [0,1]^p. With p = 0 the weights are an empty product, i.e. all ones.
inline Vector gradual_effect(const FitResult& fit, const Vector& t_grid) {
    require((t_grid.array() >= 0.0).all() && (t_grid.array() <= 1.0).all(),
            "gradual_effect: t_grid must lie in [0,1] (scaled time)");
    const Matrix& design = fit.predictor.train_design;  // time-ordered
    const Index p = fit.data.p();
    const Index n = design.rows();
    const Vector dxw = p > 0 ? dx_weights(design.leftCols(p), fit.hyper.theta.theta_x)
                             : Vector::Ones(n);
    const Vector weighted = dxw.cwiseProduct(fit.predictor.alpha);
    const double theta_t = fit.hyper.theta.theta_t;
    Vector g(t_grid.size());
    for (Index j = 0; j < t_grid.size(); ++j) {
        double acc = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double dt = t_grid[j] - design(i, p);
            acc += std::exp(-theta_t * dt * dt) * weighted[i];
        }
        g[j] = fit.hyper.mu + acc;
    }
    return g;
}

// delta over time plus the jump list, in original time units.
inline EffectCurves sudden_series(const FitResult& fit) {
    EffectCurves out;
    out.sudden_times = fit.delta;
    const Index p = fit.data.p();
    for (Index j = 0; j < fit.coeffs.e_tail.size(); ++j) {
        if (fit.coeffs.e_tail[j] != 0.0) {
            ChangePoint cp;
            cp.time_index = j + 2;  // e_tail[0] is e_2
            cp.time_raw = fit.data.raw_t(fit.predictor.train_design(j + 1, p));
            cp.jump = fit.coeffs.e_tail[j];
            out.change_points.push_back(cp);
        }
    }
    return out;
}

struct PredictionCurve {
    Vector mean;
    Vector sd;
};

// Posterior mean and sd of f over a grid of x rows at a fixed (scaled) time.
inline PredictionCurve prediction_curve(const FitResult& fit, const Matrix& x_grid,
                                        double t_fixed) {
    const Index p = fit.data.p();
    require(x_grid.cols() == p, "prediction_curve: grid dimension must equal p");
    PredictionCurve out;
    out.mean.resize(x_grid.rows());
    out.sd.resize(x_grid.rows());
    Vector q(p + 1);
    for (Index i = 0; i < x_grid.rows(); ++i) {
        q.head(p) = x_grid.row(i);
        q[p] = t_fixed;
        out.mean[i] = predict_mean(fit.predictor, q);
        out.sd[i] = std::sqrt(predict_var(fit.predictor, q));
    }
    return out;
}

inline PredictionCurve prediction_curve(const FitResult& fit, const Vector& x_grid,
                                        double t_fixed) {
    require(fit.data.p() == 1, "prediction_curve: vector grid is for p = 1");
    Matrix g(x_grid.size(), 1);
    g.col(0) = x_grid;
    return prediction_curve(fit, g, t_fixed);
}

// Input-output slice with time integrated out uniformly, the mirror image of
// gradual_effect: fhat(x) = mu_hat + (r_x(x) .* d_t)' alpha.
inline Vector prediction_marginal_t(const FitResult& fit, const Matrix& x_grid) {
    const Matrix& design = fit.predictor.train_design;  // time-ordered
    const Index p = fit.data.p();
    const Index n = design.rows();
    require(x_grid.cols() == p, "prediction_marginal_t: grid dimension must equal p");
    const Vector dtw =
        dx_weights(design.col(p), Vector::Constant(1, fit.hyper.theta.theta_t));
    const Vector weighted = dtw.cwiseProduct(fit.predictor.alpha);
    Vector out(x_grid.rows());
    for (Index j = 0; j < x_grid.rows(); ++j) {
        double acc = 0.0;
        for (Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (Index k = 0; k < p; ++k) {
                const double d = x_grid(j, k) - design(i, k);
                s += fit.hyper.theta.theta_x[k] * d * d;
            }
            acc += std::exp(-s) * weighted[i];
        }
        out[j] = fit.hyper.mu + acc;
    }
    return out;
}

// Clusters adjacent nonzero jumps and keeps the ones that dominate: cluster
// magnitude at least `frac` of the largest and at least `floor_abs`. Used by
// the change-point reports and the benchmark scoring.
struct DominantChange {
    Index time_index = 0;  // 1-based position of the cluster's largest jump
    double total_jump = 0.0;
};

inline std::vector<DominantChange> dominant_changes(const std::vector<ChangePoint>& points,
                                                    double frac = 0.25,
                                                    double floor_abs = 0.0) {
    std::vector<DominantChange> clusters;
    for (size_t i = 0; i < points.size();) {
        DominantChange c;
        c.time_index = points[i].time_index;
        double biggest = 0.0;
        size_t j = i;
        for (; j < points.size(); ++j) {
            if (j > i && points[j].time_index > points[j - 1].time_index + 1) break;
            c.total_jump += points[j].jump;
            if (std::abs(points[j].jump) > biggest) {
                biggest = std::abs(points[j].jump);
                c.time_index = points[j].time_index;
            }
        }
        clusters.push_back(c);
        i = j;
    }
    double top = 0.0;
    for (const auto& c : clusters) top = std::max(top, std::abs(c.total_jump));
    std::vector<DominantChange> keep;
    for (const auto& c : clusters)
        if (std::abs(c.total_jump) >= std::max(frac * top, floor_abs)) keep.push_back(c);
    return keep;
}

}  // namespace lurk
