#include "rtkgssm/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "rtkgssm/errors.hpp"
#include "rtkgssm/geodesy.hpp"

namespace rtkgssm {

ErrorSeries error_series(const Solution& solution, std::span<const TruthPoint> truth, double sampling_interval_s) {
    if (truth.empty()) throw ValidationError("metrics: truth series is empty");
    std::vector<TruthPoint> sorted(truth.begin(), truth.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    const EnuFrame frame(sorted.front().pos);

    // Sort epochs by time so the result does not depend on row order.
    std::vector<int> order(solution.epochs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return solution.epochs[a].t < solution.epochs[b].t; });

    ErrorSeries out;
    for (int i : order) {
        const SolutionEpoch& e = solution.epochs[i];
        const auto j = nearest_truth(sorted, e.t, 0.5 * sampling_interval_s);
        if (!j) continue;
        out.epoch.push_back(i);
        out.t.push_back(e.t);
        out.enu.push_back(frame.delta_to_enu(e.pos - sorted[*j].pos));
        out.fix.push_back(e.fix);
    }
    if (out.size() == 0) throw ValidationError("metrics: no solution epoch overlaps the truth");
    return out;
}

MethodMetrics compute_metrics(const ErrorSeries& errors) {
    MethodMetrics m;
    double h = 0.0, v = 0.0;
    for (const auto& e : errors.enu) {
        h += e.x() * e.x() + e.y() * e.y();
        v += e.z() * e.z();
        m.max_up_m = std::max(m.max_up_m, std::abs(e.z()));
    }
    m.n_epochs = static_cast<int>(errors.size());
    if (m.n_epochs > 0) {
        m.h_rmse_m = std::sqrt(h / m.n_epochs);
        m.v_rmse_m = std::sqrt(v / m.n_epochs);
    }
    return m;
}

MethodMetrics compute_metrics(const Solution& solution, std::span<const TruthPoint> truth, double sampling_interval_s) {
    return compute_metrics(error_series(solution, truth, sampling_interval_s));
}

std::string metrics_json(const std::map<std::string, MethodMetrics>& metrics) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [method, m] : metrics) {
        j[method] = {{"h_rmse_m", m.h_rmse_m}, {"v_rmse_m", m.v_rmse_m}, {"max_up_m", m.max_up_m},
                     {"n_epochs", m.n_epochs}};
    }
    return j.dump(2) + "\n";
}

}  // namespace rtkgssm
