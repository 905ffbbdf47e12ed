#include "rtkgssm/ambiguity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <tuple>

#include "rtkgssm/errors.hpp"

namespace rtkgssm {

namespace {

using PairKey = std::tuple<Band, std::string, std::string>;

bool lock_lost(const ObservationEpoch& e, const std::string& id, Band band) {
    for (const SatObs* s : {e.find_rover(id), e.find_base(id)}) {
        if (s && s->band(band) && s->band(band)->lock_lost) return true;
    }
    return false;
}

}  // namespace

std::vector<AmbiguityArc> track_arcs(std::span<const ObservationEpoch> epochs, std::span<const DdSystem> dd_systems) {
    std::vector<AmbiguityArc> arcs;
    std::map<PairKey, std::size_t> open;  // arcs alive at the previous epoch
    std::array<std::string, 3> prev_ref;

    const std::size_t n = std::min(epochs.size(), dd_systems.size());
    for (std::size_t k = 0; k < n; ++k) {
        const int ki = static_cast<int>(k);
        const DdSystem& dd = dd_systems[k];
        std::map<PairKey, std::size_t> next;
        std::array<std::string, 3> ref_now;

        for (const auto& blk : dd.blocks) {
            const std::string& ref = blk.sats.front();
            ref_now[band_index(blk.band)] = ref;
            const bool ref_changed = prev_ref[band_index(blk.band)] != ref;
            const bool ref_slip = lock_lost(epochs[k], ref, blk.band);
            for (std::size_t j = 1; j < blk.sats.size(); ++j) {
                const std::string& other = blk.sats[j];
                PairKey key{blk.band, ref, other};
                auto it = open.find(key);
                const bool continues = it != open.end() && !ref_changed && !ref_slip &&
                                       !lock_lost(epochs[k], other, blk.band);
                if (continues) {
                    arcs[it->second].end = ki;
                    next.emplace(key, it->second);
                } else {
                    AmbiguityArc arc;
                    arc.band = blk.band;
                    arc.ref = ref;
                    arc.other = other;
                    arc.start = ki;
                    arc.end = ki;
                    next.emplace(key, arcs.size());
                    arcs.push_back(std::move(arc));
                }
            }
        }
        open = std::move(next);
        prev_ref = ref_now;
    }

    std::stable_sort(arcs.begin(), arcs.end(), [](const AmbiguityArc& a, const AmbiguityArc& b) {
        return std::tie(a.start, a.band, a.other) < std::tie(b.start, b.band, b.other);
    });
    for (std::size_t i = 0; i < arcs.size(); ++i) arcs[i].id = static_cast<int>(i);
    return arcs;
}

RowArcMap map_rows_to_arcs(std::span<const AmbiguityArc> arcs, std::span<const DdSystem> dd_systems) {
    std::map<PairKey, std::vector<int>> by_key;
    for (std::size_t i = 0; i < arcs.size(); ++i) {
        by_key[{arcs[i].band, arcs[i].ref, arcs[i].other}].push_back(static_cast<int>(i));
    }
    RowArcMap out(dd_systems.size());
    for (std::size_t k = 0; k < dd_systems.size(); ++k) {
        const DdSystem& dd = dd_systems[k];
        out[k].reserve(dd.carrier_rows.size());
        for (const auto& row : dd.carrier_rows) {
            const std::string& ref = dd.ref_id(row);
            const std::string& other = dd.other_id(row);
            int found = -1;
            if (auto it = by_key.find({row.band, ref, other}); it != by_key.end()) {
                for (int a : it->second) {
                    if (arcs[a].covers(static_cast<int>(k))) {
                        found = a;
                        break;
                    }
                }
            }
            if (found < 0) {
                throw AssemblyError("epoch " + std::to_string(k) + ": no ambiguity arc covers " +
                                    std::string(band_name(row.band)) + " pair " + ref + "-" + other);
            }
            out[k].push_back(found);
        }
    }
    return out;
}

AmbiguityArc try_fix(const AmbiguityArc& arc, const FixOptions& options) {
    AmbiguityArc out = arc;
    out.fixed.reset();
    if (!std::isfinite(arc.float_cycles) || !(arc.variance > 0.0)) return out;

    const double nearest = std::round(arc.float_cycles);
    const double d1 = std::abs(arc.float_cycles - nearest);
    const double d2 = 1.0 - d1;  // distance to the second-nearest integer
    const double ratio = d1 > 0.0 ? (d2 * d2) / (d1 * d1) : std::numeric_limits<double>::infinity();
    const double sigma = std::sqrt(arc.variance);

    if (ratio >= options.ratio_threshold && std::isfinite(options.ratio_threshold) && d1 <= options.max_fraction &&
        d1 <= 4.0 * sigma && sigma <= options.max_sigma) {
        out.fixed = static_cast<long long>(nearest);
    }
    return out;
}

AmbiguityArc try_fix(const AmbiguityArc& arc, double ratio_threshold) {
    FixOptions opt;
    opt.ratio_threshold = ratio_threshold;
    return try_fix(arc, opt);
}

std::vector<bool> fixed_epochs(std::span<const AmbiguityArc> arcs, const RowArcMap& rows) {
    std::vector<bool> out(rows.size(), false);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out[k] = !rows[k].empty() &&
                 std::all_of(rows[k].begin(), rows[k].end(), [&](int a) { return arcs[a].is_fixed(); });
    }
    return out;
}

void write_arcs_csv(const std::filesystem::path& path, std::span<const AmbiguityArc> arcs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "arc_id,band,ref,other,start,end,float,fixed\n";
    char buf[64];
    for (const auto& a : arcs) {
        std::snprintf(buf, sizeof buf, "%.6f", a.float_cycles);
        out << a.id << ',' << band_name(a.band) << ',' << a.ref << ',' << a.other << ',' << a.start << ',' << a.end
            << ',' << buf << ',';
        if (a.fixed) out << *a.fixed;
        out << '\n';
    }
}

}  // namespace rtkgssm
