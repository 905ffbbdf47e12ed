#include "rtkgssm/dd_engine.hpp"

#include <algorithm>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "rtkgssm/errors.hpp"

namespace rtkgssm {

namespace {

struct Common {
    const SatObs* rover;
    const SatObs* base;
};

std::vector<Common> common_sats(std::span<const SatObs> rover, std::span<const SatObs> base, Band band) {
    std::vector<Common> out;
    for (const auto& r : rover) {
        if (!r.band(band)) continue;
        auto it = std::find_if(base.begin(), base.end(), [&](const SatObs& b) { return b.id == r.id; });
        if (it != base.end() && it->band(band)) out.push_back({&r, &*it});
    }
    return out;
}

const Common* reference_of(const std::vector<Common>& common) {
    const Common* best = nullptr;
    for (const auto& c : common) {
        if (!best || c.rover->elevation_rad > best->rover->elevation_rad ||
            (c.rover->elevation_rad == best->rover->elevation_rad && c.rover->id < best->rover->id)) {
            best = &c;
        }
    }
    return best;
}

}  // namespace

std::string select_reference(std::span<const SatObs> rover, std::span<const SatObs> base, Band band) {
    auto common = common_sats(rover, base, band);
    if (common.size() < 2) {
        throw GeometryError("band " + std::string(band_name(band)) + ": fewer than 2 common satellites");
    }
    return reference_of(common)->rover->id;
}

std::vector<BandLayout> dd_layout(const ObservationEpoch& epoch) {
    std::vector<BandLayout> out;
    for (Band band : kAllBands) {
        auto common = common_sats(epoch.rover, epoch.base, band);
        if (common.size() < 2) continue;
        BandLayout layout{band, {}};
        const std::string ref = reference_of(common)->rover->id;
        layout.sats.push_back(ref);
        std::vector<std::string> others;
        for (const auto& c : common) {
            if (c.rover->id != ref) others.push_back(c.rover->id);
        }
        std::sort(others.begin(), others.end());
        layout.sats.insert(layout.sats.end(), others.begin(), others.end());
        out.push_back(std::move(layout));
    }
    return out;
}

Eigen::MatrixXd diff_matrix(int m) {
    if (m < 2) throw GeometryError("diff_matrix needs at least 2 satellites, got " + std::to_string(m));
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m - 1, m);
    d.col(0).setOnes();
    for (int i = 0; i < m - 1; ++i) d(i, i + 1) = -1.0;
    return d;
}

Eigen::MatrixXd los_matrix(const Eigen::Vector3d& receiver, std::span<const Eigen::Vector3d> sat_positions) {
    Eigen::MatrixXd e(static_cast<Eigen::Index>(sat_positions.size()), 3);
    for (std::size_t i = 0; i < sat_positions.size(); ++i) {
        const Eigen::Vector3d d = sat_positions[i] - receiver;
        const double n = d.norm();
        if (!(n > 1e-6)) throw GeometryError("receiver coincides with a satellite position");
        e.row(static_cast<Eigen::Index>(i)) = (d / n).transpose();
    }
    return e;
}

DdSystem build_dd_system(const ObservationEpoch& epoch, const Eigen::Vector3d& lin, const SessionConfig& config) {
    DdSystem sys = try_build_dd_system(epoch, lin, config);
    if (sys.empty()) {
        throw GeometryError("epoch t=" + std::to_string(epoch.t) + ": no band with 2 common satellites");
    }
    return sys;
}

DdSystem try_build_dd_system(const ObservationEpoch& epoch, const Eigen::Vector3d& lin, const SessionConfig& config) {
    DdSystem sys;
    sys.t = epoch.t;
    sys.linearization = lin;
    const auto layouts = dd_layout(epoch);
    if (layouts.empty()) return sys;

    int n_dd = 0;
    for (const auto& l : layouts) n_dd += static_cast<int>(l.sats.size()) - 1;
    sys.y.resize(2 * n_dd);
    sys.h_pos.resize(2 * n_dd, 3);
    sys.r_dd = Eigen::MatrixXd::Zero(2 * n_dd, 2 * n_dd);

    const Eigen::Vector3d& base_pos = config.base_pos_ecef;
    int row = 0;
    for (const auto& layout : layouts) {
        const int m = static_cast<int>(layout.sats.size());
        BandBlock blk;
        blk.band = layout.band;
        blk.wavelength = config.wavelength(layout.band);
        blk.sats = layout.sats;
        blk.diff = diff_matrix(m);
        blk.carrier_sd_var.resize(m);
        blk.code_sd_var.resize(m);

        std::vector<Eigen::Vector3d> sat_pos(m);
        for (int j = 0; j < m; ++j) {
            const SatObs* r = epoch.find_rover(layout.sats[j]);
            sat_pos[j] = r->pos_ecef;
            const double sc = config.noise.carrier_std(r->elevation_rad);
            const double sp = config.noise.code_std(r->elevation_rad);
            blk.carrier_sd_var(j) = sc * sc;
            blk.code_sd_var(j) = sp * sp;
        }
        blk.los = los_matrix(lin, sat_pos);
        blk.carrier_row = row;
        sys.blocks.push_back(std::move(blk));
        row += m - 1;
    }
    for (auto& blk : sys.blocks) {
        blk.code_row = row;
        row += blk.pairs();
    }

    for (std::size_t bi = 0; bi < sys.blocks.size(); ++bi) {
        const BandBlock& blk = sys.blocks[bi];
        const int m = static_cast<int>(blk.sats.size());
        const int p = m - 1;
        Eigen::VectorXd sd_carrier(m), sd_code(m), sd_pred(m);
        for (int j = 0; j < m; ++j) {
            const SatObs* r = epoch.find_rover(blk.sats[j]);
            const SatObs* b = epoch.find_base(blk.sats[j]);
            const BandObs& ro = *r->band(blk.band);
            const BandObs& bo = *b->band(blk.band);
            sd_carrier(j) = blk.wavelength * (ro.carrier_cycles - bo.carrier_cycles);
            sd_code(j) = ro.pseudorange_m - bo.pseudorange_m;
            sd_pred(j) = (r->pos_ecef - lin).norm() - (b->pos_ecef - base_pos).norm();
        }
        const Eigen::MatrixXd de = blk.diff * blk.los;
        sys.y.segment(blk.carrier_row, p) = blk.diff * (sd_carrier - sd_pred);
        sys.y.segment(blk.code_row, p) = blk.diff * (sd_code - sd_pred);
        sys.h_pos.middleRows(blk.carrier_row, p) = -de;
        sys.h_pos.middleRows(blk.code_row, p) = -de;
        sys.r_dd.block(blk.carrier_row, blk.carrier_row, p, p) =
            blk.diff * blk.carrier_sd_var.asDiagonal() * blk.diff.transpose();
        sys.r_dd.block(blk.code_row, blk.code_row, p, p) =
            blk.diff * blk.code_sd_var.asDiagonal() * blk.diff.transpose();
        for (int i = 0; i < p; ++i) {
            sys.carrier_rows.push_back({blk.carrier_row + i, static_cast<int>(bi), blk.band, 0, i + 1, blk.wavelength});
        }
    }
    return sys;
}

Eigen::Vector3d code_position_fix(const ObservationEpoch& epoch, const Eigen::Vector3d& guess,
                                  const SessionConfig& config, int iterations) {
    Eigen::Vector3d x = guess;
    for (int it = 0; it < iterations; ++it) {
        const DdSystem sys = build_dd_system(epoch, x, config);
        int n_code = 0;
        for (const auto& b : sys.blocks) n_code += b.pairs();
        if (n_code < 3) throw GeometryError("code fix needs at least 3 double differences");
        const int r0 = sys.blocks.front().code_row;
        const Eigen::MatrixXd h = sys.h_pos.middleRows(r0, n_code);
        const Eigen::VectorXd y = sys.y.segment(r0, n_code);
        const Eigen::LLT<Eigen::MatrixXd> rl(sys.r_dd.block(r0, r0, n_code, n_code));
        const Eigen::MatrixXd wh = rl.matrixL().solve(h);
        const Eigen::VectorXd wy = rl.matrixL().solve(y);
        const Eigen::Matrix3d n = wh.transpose() * wh;
        Eigen::FullPivLU<Eigen::Matrix3d> lu(n);
        if (lu.rank() < 3) throw GeometryError("code fix geometry is rank deficient");
        const Eigen::Vector3d dx = lu.solve(wh.transpose() * wy);
        x += dx;
        if (dx.norm() < 1e-9) break;
    }
    return x;
}

}  // namespace rtkgssm
