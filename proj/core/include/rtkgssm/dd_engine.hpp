#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rtkgssm/types.hpp"

namespace rtkgssm {

/// Satellites usable for double differencing on one band at one epoch.
/// `sats[0]` is the reference; the rest follow in lexicographic id order.
struct BandLayout {
    Band band = Band::L1;
    std::vector<std::string> sats;
};

/// Common satellites with a record on `band` at both stations. Returns the one
/// with the highest rover elevation; ties go to the smaller id.
/// Throws GeometryError with fewer than two common satellites.
std::string select_reference(std::span<const SatObs> rover, std::span<const SatObs> base, Band band);

/// Per-band layouts for every band with at least two common satellites, in
/// L1, L2, L5 order. Independent of any position estimate.
std::vector<BandLayout> dd_layout(const ObservationEpoch& epoch);

/// Single-difference to double-difference map, (m-1) x m: column 0 is +1,
/// row i has -1 in column i+1.
Eigen::MatrixXd diff_matrix(int m);

/// Unit line-of-sight rows from `receiver` to each satellite.
Eigen::MatrixXd los_matrix(const Eigen::Vector3d& receiver, std::span<const Eigen::Vector3d> sat_positions);

/// One band's slice of the double-difference model.
struct BandBlock {
    Band band = Band::L1;
    double wavelength = 0.0;
    std::vector<std::string> sats;  ///< reference first
    Eigen::MatrixXd los;            ///< E, m x 3
    Eigen::MatrixXd diff;           ///< D, (m-1) x m
    Eigen::VectorXd carrier_sd_var; ///< diagonal of the single-difference carrier covariance, m^2
    Eigen::VectorXd code_sd_var;
    int carrier_row = 0;  ///< first row of this block's carrier rows in Y
    int code_row = 0;

    int pairs() const { return static_cast<int>(sats.size()) - 1; }
};

/// Bias mapping of one double-difference carrier row: the row observes
/// wavelength * (B[ref_index] - B[other_index]) in the block's satellite order.
struct CarrierRow {
    int row = 0;
    int block = 0;
    Band band = Band::L1;
    int ref_index = 0;
    int other_index = 0;
    double wavelength = 0.0;
};

/// Linearized double-difference measurement model of one epoch.
///
/// Rows are ordered carrier L1, L2, L5 then code L1, L2, L5, absent bands
/// skipped. `y` holds observed-minus-computed values in meters evaluated at the
/// linearization position; carrier rows still contain wavelength times the
/// double-difference ambiguity.
struct DdSystem {
    double t = 0.0;
    Eigen::Vector3d linearization = Eigen::Vector3d::Zero();
    std::vector<BandBlock> blocks;
    Eigen::VectorXd y;
    Eigen::MatrixXd h_pos;  ///< -D E per block row
    Eigen::MatrixXd r_dd;   ///< D R_sd D^T per block, block diagonal
    std::vector<CarrierRow> carrier_rows;

    int rows() const { return static_cast<int>(y.size()); }
    int carrier_count() const { return static_cast<int>(carrier_rows.size()); }
    bool empty() const { return blocks.empty(); }
    const std::string& ref_id(const CarrierRow& r) const { return blocks[r.block].sats[r.ref_index]; }
    const std::string& other_id(const CarrierRow& r) const { return blocks[r.block].sats[r.other_index]; }
};

/// Builds the double-difference system at `linearization`. Throws
/// GeometryError when no band has two common satellites.
DdSystem build_dd_system(const ObservationEpoch& epoch, const Eigen::Vector3d& linearization,
                         const SessionConfig& config);

/// Same as build_dd_system but returns an empty system instead of throwing.
DdSystem try_build_dd_system(const ObservationEpoch& epoch, const Eigen::Vector3d& linearization,
                             const SessionConfig& config);

/// Iterated weighted least-squares fix from double-difference code only.
/// Throws GeometryError if fewer than three code rows are available.
Eigen::Vector3d code_position_fix(const ObservationEpoch& epoch, const Eigen::Vector3d& guess,
                                  const SessionConfig& config, int iterations = 8);

}  // namespace rtkgssm
