#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rtkgssm/solution.hpp"

namespace rtkgssm {

/// Per-epoch ENU error of a solution against truth, in a frame anchored at the
/// first truth point. Only epochs with a truth point within half an interval
/// appear.
struct ErrorSeries {
    std::vector<int> epoch;  ///< index into the solution
    std::vector<double> t;
    std::vector<Eigen::Vector3d> enu;
    std::vector<FixStatus> fix;

    std::size_t size() const { return t.size(); }
};

struct MethodMetrics {
    double h_rmse_m = 0.0;
    double v_rmse_m = 0.0;
    double max_up_m = 0.0;  ///< largest |up error|
    int n_epochs = 0;
};

/// Throws ValidationError when no epoch overlaps the truth.
ErrorSeries error_series(const Solution& solution, std::span<const TruthPoint> truth, double sampling_interval_s);

MethodMetrics compute_metrics(const ErrorSeries& errors);
MethodMetrics compute_metrics(const Solution& solution, std::span<const TruthPoint> truth, double sampling_interval_s);

/// RMS of epoch-to-epoch differences of the up error, taken only between
/// consecutive solution epochs that both satisfy `include`.
template <class Pred>
double up_roughness(const ErrorSeries& errors, Pred include);

/// RMS of the up error over epochs that satisfy `include`.
template <class Pred>
double up_rmse(const ErrorSeries& errors, Pred include);

/// `{"method": {"h_rmse_m", "v_rmse_m", "max_up_m", "n_epochs"}, ...}`
std::string metrics_json(const std::map<std::string, MethodMetrics>& metrics);

template <class Pred>
double up_roughness(const ErrorSeries& errors, Pred include) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 1; i < errors.size(); ++i) {
        if (errors.epoch[i] != errors.epoch[i - 1] + 1) continue;
        if (!include(errors.epoch[i]) || !include(errors.epoch[i - 1])) continue;
        const double d = errors.enu[i].z() - errors.enu[i - 1].z();
        sum += d * d;
        ++count;
    }
    return count ? std::sqrt(sum / count) : 0.0;
}

template <class Pred>
double up_rmse(const ErrorSeries& errors, Pred include) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!include(errors.epoch[i])) continue;
        sum += errors.enu[i].z() * errors.enu[i].z();
        ++count;
    }
    return count ? std::sqrt(sum / count) : 0.0;
}

}  // namespace rtkgssm
