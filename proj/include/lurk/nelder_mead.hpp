#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "lurk/common.hpp"

namespace lurk {

struct NelderMeadOptions {
    int max_evals = 400;
    double ftol_rel = 1e-8;
    double xtol_abs = 1e-7;
    double initial_step_frac = 0.08;  // simplex edge as a fraction of box width
};

struct NelderMeadResult {
    Vector x;
    double value = 0.0;
    int evals = 0;
};

// Box-constrained Nelder-Mead; vertices are clamped into [lo, hi]. Fully
// deterministic for a given start.
inline NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f,
                                    const Vector& start, const Vector& lo, const Vector& hi,
                                    const NelderMeadOptions& opt = {}) {
    const Index d = start.size();
    require(lo.size() == d && hi.size() == d, "nelder_mead: bound dimension mismatch");
    for (Index k = 0; k < d; ++k) require(lo[k] < hi[k], "nelder_mead: bounds must be ordered");

    auto clamp = [&](Vector v) {
        for (Index k = 0; k < d; ++k) v[k] = std::clamp(v[k], lo[k], hi[k]);
        return v;
    };

    int evals = 0;
    auto eval = [&](const Vector& v) {
        ++evals;
        return f(v);
    };

    std::vector<Vector> xs(d + 1);
    std::vector<double> fs(d + 1);
    xs[0] = clamp(start);
    fs[0] = eval(xs[0]);
    for (Index k = 0; k < d; ++k) {
        Vector v = xs[0];
        double step = opt.initial_step_frac * (hi[k] - lo[k]);
        if (v[k] + step > hi[k]) step = -step;
        v[k] += step;
        xs[k + 1] = clamp(v);
        fs[k + 1] = eval(xs[k + 1]);
    }

    auto order = [&]() {
        std::vector<size_t> idx(d + 1);
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return fs[a] < fs[b]; });
        std::vector<Vector> xs2(d + 1);
        std::vector<double> fs2(d + 1);
        for (size_t r = 0; r <= static_cast<size_t>(d); ++r) {
            xs2[r] = xs[idx[r]];
            fs2[r] = fs[idx[r]];
        }
        xs.swap(xs2);
        fs.swap(fs2);
    };

    while (evals < opt.max_evals) {
        order();
        const double fbest = fs[0], fworst = fs[d];
        double spread = 0.0;
        for (size_t i = 1; i <= static_cast<size_t>(d); ++i)
            spread = std::max(spread, (xs[i] - xs[0]).lpNorm<Eigen::Infinity>());
        if (std::abs(fworst - fbest) <= opt.ftol_rel * (std::abs(fbest) + 1e-12) &&
            spread <= opt.xtol_abs)
            break;

        Vector centroid = Vector::Zero(d);
        for (size_t i = 0; i < static_cast<size_t>(d); ++i) centroid += xs[i];
        centroid /= static_cast<double>(d);

        const Vector refl = clamp(centroid + (centroid - xs[d]));
        const double frefl = eval(refl);
        if (frefl < fs[0]) {
            const Vector expa = clamp(centroid + 2.0 * (centroid - xs[d]));
            const double fexpa = eval(expa);
            if (fexpa < frefl) {
                xs[d] = expa;
                fs[d] = fexpa;
            } else {
                xs[d] = refl;
                fs[d] = frefl;
            }
        } else if (frefl < fs[d - 1]) {
            xs[d] = refl;
            fs[d] = frefl;
        } else {
            const bool outside = frefl < fs[d];
            const Vector base = outside ? refl : xs[d];
            const Vector contr = clamp(centroid + 0.5 * (base - centroid));
            const double fcontr = eval(contr);
            if (fcontr < std::min(frefl, fs[d])) {
                xs[d] = contr;
                fs[d] = fcontr;
            } else {
                for (size_t i = 1; i <= static_cast<size_t>(d); ++i) {
                    xs[i] = clamp(xs[0] + 0.5 * (xs[i] - xs[0]));
                    fs[i] = eval(xs[i]);
                }
            }
        }
    }
    order();
    return {xs[0], fs[0], evals};
}

}  // namespace lurk
