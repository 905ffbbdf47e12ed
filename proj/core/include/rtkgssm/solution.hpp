#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rtkgssm {

enum class FixStatus { Float, Fixed, None };

std::string_view fix_status_name(FixStatus s);
FixStatus parse_fix_status(std::string_view s);

struct SolutionEpoch {
    double t = 0.0;
    Eigen::Vector3d pos = Eigen::Vector3d::Zero();
    FixStatus fix = FixStatus::Float;
    int n_dd = 0;          ///< double-difference rows used at this epoch
    bool flagged = false;  ///< skipped update, covariance fallback or similar
};

/// One estimator's position series. `method` is one of fwd, bwd, fbkf, gssm.
struct Solution {
    std::string method;
    std::vector<SolutionEpoch> epochs;
};

struct TruthPoint {
    double t = 0.0;
    Eigen::Vector3d pos = Eigen::Vector3d::Zero();
};

/// A parsed solution CSV row.
struct SolutionRow {
    double t = 0.0;
    std::string method;
    Eigen::Vector3d pos = Eigen::Vector3d::Zero();
    std::optional<Eigen::Vector3d> enu_err;
    FixStatus fix = FixStatus::Float;
    int n_dd = 0;
};

/// Writes `t,method,x,y,z,east_err,north_err,up_err,fix_status,n_dd`, one row per
/// epoch per solution. ENU error columns are empty unless truth is given; the ENU
/// frame is anchored at the first truth point and epochs are matched to the
/// nearest truth time within half the sampling interval.
void write_solution(const std::filesystem::path& path, std::span<const Solution> solutions,
                    std::span<const TruthPoint> truth = {}, double sampling_interval_s = 1.0);
std::vector<SolutionRow> read_solution(const std::filesystem::path& path);

void write_truth(const std::filesystem::path& path, std::span<const TruthPoint> truth);
std::vector<TruthPoint> read_truth(const std::filesystem::path& path);

/// Index of the truth point nearest to `t` within `tolerance`, if any. `truth` must
/// be sorted by time.
std::optional<std::size_t> nearest_truth(std::span<const TruthPoint> truth, double t, double tolerance);

}  // namespace rtkgssm
