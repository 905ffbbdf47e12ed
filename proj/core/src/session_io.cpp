#include "rtkgssm/session_io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rtkgssm/errors.hpp"

namespace rtkgssm {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
    throw ParseError("session schema: field '" + path + "': " + what);
}

const json& require(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) schema_error(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) schema_error(path + "/" + key, "missing");
    return *it;
}

double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) schema_error(path, "expected a number");
    return j.get<double>();
}

double number_field(const json& obj, const char* key, const std::string& path) {
    return get_number(require(obj, key, path), path + "/" + key);
}

double number_or(const json& obj, const char* key, double fallback, const std::string& path) {
    auto it = obj.find(key);
    return it == obj.end() ? fallback : get_number(*it, path + "/" + key);
}

Eigen::Vector3d vec3_field(const json& obj, const char* key, const std::string& path) {
    const json& j = require(obj, key, path);
    const std::string p = path + "/" + key;
    if (!j.is_array() || j.size() != 3) schema_error(p, "expected an array of 3 numbers");
    return {get_number(j[0], p + "/0"), get_number(j[1], p + "/1"), get_number(j[2], p + "/2")};
}

std::array<std::optional<BandObs>, 3> parse_bands(const json& bands, const std::string& path) {
    std::array<std::optional<BandObs>, 3> out;
    if (!bands.is_object()) schema_error(path, "expected an object keyed by band name");
    for (const auto& [name, rec] : bands.items()) {
        const std::string p = path + "/" + name;
        auto band = parse_band(name);
        if (!band) schema_error(p, "unknown band (expected L1, L2 or L5)");
        BandObs obs;
        obs.carrier_cycles = number_field(rec, "cp_cycles", p);
        obs.pseudorange_m = number_field(rec, "pr_m", p);
        if (auto it = rec.find("lli"); it != rec.end()) {
            if (!it->is_boolean()) schema_error(p + "/lli", "expected a boolean");
            obs.lock_lost = it->get<bool>();
        }
        out[band_index(*band)] = obs;
    }
    return out;
}

SessionConfig parse_config(const json& cfg) {
    const std::string p = "/config";
    if (!cfg.is_object()) schema_error(p, "expected an object");
    SessionConfig c;
    c.base_pos_ecef = vec3_field(cfg, "base_pos_ecef", p);
    c.rover_initial_guess = vec3_field(cfg, "rover_initial_guess", p);
    c.sampling_interval_s = number_field(cfg, "sampling_interval_s", p);

    if (auto it = cfg.find("noise"); it != cfg.end()) {
        const std::string np = p + "/noise";
        if (!it->is_object()) schema_error(np, "expected an object");
        c.noise.code_a_m = number_or(*it, "code_a_m", c.noise.code_a_m, np);
        c.noise.code_b_m = number_or(*it, "code_b_m", c.noise.code_b_m, np);
        c.noise.carrier_a_m = number_or(*it, "carrier_a_m", c.noise.carrier_a_m, np);
        c.noise.carrier_b_m = number_or(*it, "carrier_b_m", c.noise.carrier_b_m, np);
        c.process.vel_psd = number_or(*it, "vel_psd", c.process.vel_psd, np);
        c.process.pos_psd = number_or(*it, "pos_psd", c.process.pos_psd, np);
    }
    if (auto it = cfg.find("filter"); it != cfg.end()) {
        const std::string fp = p + "/filter";
        if (!it->is_object()) schema_error(fp, "expected an object");
        c.filter.init_pos_std_m = number_or(*it, "init_pos_std_m", c.filter.init_pos_std_m, fp);
        c.filter.init_vel_std_mps = number_or(*it, "init_vel_std_mps", c.filter.init_vel_std_mps, fp);
        c.filter.bias_init_std_cycles = number_or(*it, "bias_init_std_cycles", c.filter.bias_init_std_cycles, fp);
        c.filter.gate_probability = number_or(*it, "gate_probability", c.filter.gate_probability, fp);
    }
    if (auto it = cfg.find("gssm"); it != cfg.end()) {
        const std::string gp = p + "/gssm";
        if (!it->is_object()) schema_error(gp, "expected an object");
        if (auto mi = it->find("max_iters"); mi != it->end()) {
            if (!mi->is_number_integer()) schema_error(gp + "/max_iters", "expected an integer");
            c.gssm_max_iters = mi->get<int>();
        }
        c.gssm_tol_m = number_or(*it, "tol_m", c.gssm_tol_m, gp);
    }
    if (auto it = cfg.find("bands"); it != cfg.end()) {
        const std::string bp = p + "/bands";
        if (!it->is_object()) schema_error(bp, "expected an object");
        for (const auto& [name, rec] : it->items()) {
            auto band = parse_band(name);
            if (!band) schema_error(bp + "/" + name, "unknown band (expected L1, L2 or L5)");
            c.band_frequency_hz[band_index(*band)] = number_field(rec, "freq_hz", bp + "/" + name);
        }
    }
    return c;
}

ObservationEpoch parse_epoch(const json& e, const std::string& p) {
    ObservationEpoch epoch;
    epoch.t = number_field(e, "t", p);
    const json& sats = require(e, "sats", p);
    if (!sats.is_array()) schema_error(p + "/sats", "expected an array");
    for (std::size_t i = 0; i < sats.size(); ++i) {
        const json& s = sats[i];
        const std::string sp = p + "/sats/" + std::to_string(i);
        const json& id = require(s, "id", sp);
        if (!id.is_string()) schema_error(sp + "/id", "expected a string");

        SatObs rover;
        rover.id = id.get<std::string>();
        rover.pos_ecef = vec3_field(s, "pos_ecef", sp);
        rover.elevation_rad = number_field(s, "elev_rad", sp);
        if (auto it = s.find("bands"); it != s.end()) rover.bands = parse_bands(*it, sp + "/bands");
        if (rover.band_count() > 0) epoch.rover.push_back(rover);

        if (auto it = s.find("base"); it != s.end()) {
            const std::string bp = sp + "/base";
            SatObs base;
            base.id = rover.id;
            base.pos_ecef = it->contains("pos_ecef") ? vec3_field(*it, "pos_ecef", bp) : rover.pos_ecef;
            base.elevation_rad = number_or(*it, "elev_rad", rover.elevation_rad, bp);
            if (auto bit = it->find("bands"); bit != it->end()) base.bands = parse_bands(*bit, bp + "/bands");
            if (base.band_count() > 0) epoch.base.push_back(base);
        }
    }
    return epoch;
}

int line_of_offset(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

void check_sat(const SatObs& s, const std::string& where) {
    if (!(s.elevation_rad > 0.0 && s.elevation_rad <= std::numbers::pi / 2)) {
        throw ValidationError(where + ": elevation " + std::to_string(s.elevation_rad) + " outside (0, pi/2]");
    }
    const double r = s.pos_ecef.norm();
    if (!(r >= 2.0e7 && r <= 4.5e7)) {
        throw ValidationError(where + ": satellite position norm " + std::to_string(r) + " m outside [2e7, 4.5e7]");
    }
    for (Band b : kAllBands) {
        const auto& o = s.band(b);
        if (!o) continue;
        if (!(o->pseudorange_m > 0.0) || !std::isfinite(o->carrier_cycles)) {
            throw ValidationError(where + " " + std::string(band_name(b)) + ": pseudorange must be positive and finite");
        }
    }
}

ordered_json bands_json(const SatObs& s) {
    ordered_json out = ordered_json::object();
    for (Band b : kAllBands) {
        const auto& o = s.band(b);
        if (!o) continue;
        out[std::string(band_name(b))] = {{"cp_cycles", o->carrier_cycles}, {"pr_m", o->pseudorange_m},
                                          {"lli", o->lock_lost}};
    }
    return out;
}

ordered_json vec_json(const Eigen::Vector3d& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

}  // namespace

void validate_session(const Session& session) {
    session.config.validate();
    if (session.epochs.empty()) throw ValidationError("no epochs");
    for (std::size_t k = 0; k < session.epochs.size(); ++k) {
        const auto& e = session.epochs[k];
        const std::string where = "epoch " + std::to_string(k) + " (t=" + std::to_string(e.t) + ")";
        if (!std::isfinite(e.t)) throw ValidationError(where + ": non-finite time");
        if (k > 0 && !(e.t > session.epochs[k - 1].t)) {
            throw ValidationError(where + ": times must be strictly increasing");
        }
        for (const auto* list : {&e.rover, &e.base}) {
            std::set<std::string> seen;
            const char* station = list == &e.rover ? "rover" : "base";
            for (const auto& s : *list) {
                if (!seen.insert(s.id).second) {
                    throw ValidationError(where + ": duplicate satellite " + s.id + " at " + station);
                }
                check_sat(s, where + " " + station + " " + s.id);
            }
        }
    }
}

Session parse_session_text(std::string_view text) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& ex) {
        throw ParseError("session JSON syntax error at line " + std::to_string(line_of_offset(text, ex.byte)) +
                         ": " + ex.what());
    }
    if (!root.is_object()) schema_error("", "top level must be an object");
    Session session;
    session.config = parse_config(require(root, "config", ""));
    const json& epochs = require(root, "epochs", "");
    if (!epochs.is_array()) schema_error("/epochs", "expected an array");
    if (epochs.empty()) throw ValidationError("no epochs");
    session.epochs.reserve(epochs.size());
    for (std::size_t k = 0; k < epochs.size(); ++k) {
        session.epochs.push_back(parse_epoch(epochs[k], "/epochs/" + std::to_string(k)));
    }
    validate_session(session);
    return session;
}

Session parse_session(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open session file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_session_text(buf.str());
}

std::string session_to_json(const Session& session) {
    const auto& c = session.config;
    ordered_json cfg;
    cfg["base_pos_ecef"] = vec_json(c.base_pos_ecef);
    cfg["rover_initial_guess"] = vec_json(c.rover_initial_guess);
    cfg["sampling_interval_s"] = c.sampling_interval_s;
    cfg["noise"] = {{"code_a_m", c.noise.code_a_m},       {"code_b_m", c.noise.code_b_m},
                    {"carrier_a_m", c.noise.carrier_a_m}, {"carrier_b_m", c.noise.carrier_b_m},
                    {"vel_psd", c.process.vel_psd},       {"pos_psd", c.process.pos_psd}};
    cfg["filter"] = {{"init_pos_std_m", c.filter.init_pos_std_m},
                     {"init_vel_std_mps", c.filter.init_vel_std_mps},
                     {"bias_init_std_cycles", c.filter.bias_init_std_cycles},
                     {"gate_probability", c.filter.gate_probability}};
    cfg["gssm"] = {{"max_iters", c.gssm_max_iters}, {"tol_m", c.gssm_tol_m}};
    ordered_json bands = ordered_json::object();
    for (Band b : kAllBands) bands[std::string(band_name(b))] = {{"freq_hz", c.band_frequency_hz[band_index(b)]}};
    cfg["bands"] = bands;

    ordered_json epochs = ordered_json::array();
    for (const auto& e : session.epochs) {
        // Union of satellite ids, rover order first.
        std::vector<std::string> ids;
        for (const auto& s : e.rover) ids.push_back(s.id);
        for (const auto& s : e.base) {
            if (!e.find_rover(s.id)) ids.push_back(s.id);
        }
        ordered_json sats = ordered_json::array();
        for (const auto& id : ids) {
            const SatObs* r = e.find_rover(id);
            const SatObs* b = e.find_base(id);
            const SatObs& primary = r ? *r : *b;
            ordered_json s;
            s["id"] = id;
            s["pos_ecef"] = vec_json(primary.pos_ecef);
            s["elev_rad"] = primary.elevation_rad;
            s["bands"] = r ? bands_json(*r) : ordered_json::object();
            if (b) {
                ordered_json base;
                if (b->pos_ecef != primary.pos_ecef) base["pos_ecef"] = vec_json(b->pos_ecef);
                base["elev_rad"] = b->elevation_rad;
                base["bands"] = bands_json(*b);
                s["base"] = base;
            }
            sats.push_back(std::move(s));
        }
        epochs.push_back({{"t", e.t}, {"sats", std::move(sats)}});
    }
    ordered_json root;
    root["config"] = std::move(cfg);
    root["epochs"] = std::move(epochs);
    return root.dump(1) + "\n";
}

void write_session(const std::filesystem::path& path, const Session& session) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write session file " + path.string());
    out << session_to_json(session);
    if (!out) throw Error("I/O failure writing " + path.string());
}

}  // namespace rtkgssm
