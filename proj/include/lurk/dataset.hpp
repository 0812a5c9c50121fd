#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "lurk/common.hpp"

namespace lurk {

// Experiment table: inputs scaled to [0,1]^p, observation times scaled to
// [0,1], responses as given. Scaling metadata is retained so reports can map
// back to raw units. Rows keep their storage order; time_order sorts them.
class Dataset {
  public:
    Dataset() = default;

    // X and t in raw units; min-max scaling is applied per column.
    Dataset(Matrix X_raw, Vector t_raw, Vector y) {
        const Index n = y.size();
        require(n >= 1, "Dataset: need at least one observation");
        require(t_raw.size() == n, "Dataset: t length must match y");
        require(X_raw.rows() == n || X_raw.size() == 0, "Dataset: X rows must match y");
        require(X_raw.allFinite() && t_raw.allFinite() && y.allFinite(),
                "Dataset: inputs must be finite");

        const Index p = X_raw.size() == 0 ? 0 : X_raw.cols();
        x_min_ = Vector(p);
        x_range_ = Vector(p);
        X_ = Matrix(n, p);
        for (Index k = 0; k < p; ++k) {
            x_min_[k] = X_raw.col(k).minCoeff();
            x_range_[k] = X_raw.col(k).maxCoeff() - x_min_[k];
            if (x_range_[k] > 0.0)
                X_.col(k) = (X_raw.col(k).array() - x_min_[k]) / x_range_[k];
            else
                X_.col(k).setConstant(0.5);  // degenerate constant column
        }

        t_min_ = t_raw.minCoeff();
        t_range_ = t_raw.maxCoeff() - t_min_;
        require(t_range_ > 0.0 || n == 1, "Dataset: all observation times are identical");
        t_ = t_range_ > 0.0 ? Vector(((t_raw.array() - t_min_) / t_range_).matrix())
                            : Vector::Zero(n);
        y_ = std::move(y);

        time_order_.resize(n);
        std::iota(time_order_.begin(), time_order_.end(), Index{0});
        std::stable_sort(time_order_.begin(), time_order_.end(),
                         [&](Index a, Index b) { return t_[a] < t_[b]; });
        for (Index r = 0; r + 1 < n; ++r) {
            if (t_[time_order_[r]] == t_[time_order_[r + 1]]) {
                std::ostringstream msg;
                msg << "Dataset: duplicate observation time at rows " << time_order_[r]
                    << " and " << time_order_[r + 1] << " (times must be distinct)";
                throw std::invalid_argument(msg.str());
            }
        }
        rank_of_.resize(n);
        for (Index r = 0; r < n; ++r) rank_of_[time_order_[r]] = r;
    }

    Index n() const { return y_.size(); }
    Index p() const { return X_.cols(); }

    const Matrix& X() const { return X_; }    // scaled inputs
    const Vector& t() const { return t_; }    // scaled times
    const Vector& y() const { return y_; }
    const std::vector<Index>& time_order() const { return time_order_; }
    Index time_rank(Index i) const { return rank_of_[i]; }

    // n x (p+1) kernel design, time in the last column.
    Matrix design() const {
        Matrix d(n(), p() + 1);
        if (p() > 0) d.leftCols(p()) = X_;
        d.col(p()) = t_;
        return d;
    }

    const Vector& x_min() const { return x_min_; }
    const Vector& x_range() const { return x_range_; }
    double t_min() const { return t_min_; }
    double t_range() const { return t_range_; }

    double raw_t(double t01) const { return t_min_ + t01 * t_range_; }
    double raw_x(Index dim, double x01) const { return x_min_[dim] + x01 * x_range_[dim]; }
    double scaled_x(Index dim, double raw) const {
        return x_range_[dim] > 0.0 ? (raw - x_min_[dim]) / x_range_[dim] : 0.5;
    }

    // Gathers v (dataset order) into time order.
    Vector to_time_order(const Vector& v) const {
        Vector out(v.size());
        for (Index r = 0; r < v.size(); ++r) out[r] = v[time_order_[r]];
        return out;
    }

  private:
    Matrix X_;
    Vector t_, y_;
    Vector x_min_, x_range_;
    double t_min_ = 0.0, t_range_ = 1.0;
    std::vector<Index> time_order_;
    std::vector<Index> rank_of_;
};

}  // namespace lurk
