#include "rtkgssm/solution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rtkgssm/errors.hpp"
#include "rtkgssm/geodesy.hpp"

namespace rtkgssm {

namespace {

std::string fmt_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_double(const std::string& s, const std::filesystem::path& path, int line) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
    }
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path, std::size_t min_cols) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    std::vector<std::vector<std::string>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() < min_cols) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(min_cols) + " columns");
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace

std::string_view fix_status_name(FixStatus s) {
    switch (s) {
        case FixStatus::Fixed: return "fixed";
        case FixStatus::Float: return "float";
        case FixStatus::None: return "none";
    }
    return "none";
}

FixStatus parse_fix_status(std::string_view s) {
    if (s == "fixed") return FixStatus::Fixed;
    if (s == "float") return FixStatus::Float;
    if (s == "none") return FixStatus::None;
    throw ParseError("unknown fix status '" + std::string(s) + "'");
}

std::optional<std::size_t> nearest_truth(std::span<const TruthPoint> truth, double t, double tolerance) {
    if (truth.empty()) return std::nullopt;
    auto it = std::lower_bound(truth.begin(), truth.end(), t,
                               [](const TruthPoint& p, double v) { return p.t < v; });
    std::optional<std::size_t> best;
    double best_dt = tolerance;
    auto consider = [&](auto pos) {
        if (pos < truth.begin() || pos >= truth.end()) return;
        const double dt = std::abs(pos->t - t);
        if (dt <= best_dt) {
            best_dt = dt;
            best = static_cast<std::size_t>(pos - truth.begin());
        }
    };
    consider(it);
    if (it != truth.begin()) consider(it - 1);
    return best;
}

void write_solution(const std::filesystem::path& path, std::span<const Solution> solutions,
                    std::span<const TruthPoint> truth, double sampling_interval_s) {
    bool any = false;
    for (const auto& s : solutions) any = any || !s.epochs.empty();
    if (!any) throw Error("write_solution: empty solution series");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    std::optional<EnuFrame> frame;
    if (!truth.empty()) frame.emplace(truth.front().pos);

    out << "t,method,x,y,z,east_err,north_err,up_err,fix_status,n_dd\n";
    for (const auto& sol : solutions) {
        for (const auto& e : sol.epochs) {
            out << fmt_fixed(e.t, 9) << ',' << sol.method << ',' << fmt_fixed(e.pos.x(), 10) << ','
                << fmt_fixed(e.pos.y(), 10) << ',' << fmt_fixed(e.pos.z(), 10) << ',';
            std::optional<std::size_t> idx;
            if (frame) idx = nearest_truth(truth, e.t, 0.5 * sampling_interval_s);
            if (idx) {
                const Eigen::Vector3d err = frame->delta_to_enu(e.pos - truth[*idx].pos);
                out << fmt_fixed(err.x(), 10) << ',' << fmt_fixed(err.y(), 10) << ',' << fmt_fixed(err.z(), 10);
            } else {
                out << ",,";
            }
            out << ',' << fix_status_name(e.fix) << ',' << e.n_dd << '\n';
        }
    }
    if (!out) throw Error("I/O failure writing " + path.string());
}

std::vector<SolutionRow> read_solution(const std::filesystem::path& path) {
    std::vector<SolutionRow> rows;
    int lineno = 1;
    for (const auto& c : read_rows(path, 10)) {
        ++lineno;
        SolutionRow r;
        r.t = to_double(c[0], path, lineno);
        r.method = c[1];
        r.pos = {to_double(c[2], path, lineno), to_double(c[3], path, lineno), to_double(c[4], path, lineno)};
        if (!c[5].empty()) {
            r.enu_err = Eigen::Vector3d(to_double(c[5], path, lineno), to_double(c[6], path, lineno),
                                        to_double(c[7], path, lineno));
        }
        r.fix = parse_fix_status(c[8]);
        r.n_dd = static_cast<int>(to_double(c[9], path, lineno));
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_truth(const std::filesystem::path& path, std::span<const TruthPoint> truth) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "t,x,y,z\n";
    for (const auto& p : truth) {
        out << fmt_fixed(p.t, 9) << ',' << fmt_fixed(p.pos.x(), 10) << ',' << fmt_fixed(p.pos.y(), 10) << ','
            << fmt_fixed(p.pos.z(), 10) << '\n';
    }
    if (!out) throw Error("I/O failure writing " + path.string());
}

std::vector<TruthPoint> read_truth(const std::filesystem::path& path) {
    std::vector<TruthPoint> truth;
    int lineno = 1;
    for (const auto& c : read_rows(path, 4)) {
        ++lineno;
        truth.push_back({to_double(c[0], path, lineno),
                         {to_double(c[1], path, lineno), to_double(c[2], path, lineno), to_double(c[3], path, lineno)}});
    }
    std::sort(truth.begin(), truth.end(), [](const TruthPoint& a, const TruthPoint& b) { return a.t < b.t; });
    return truth;
}

}  // namespace rtkgssm
