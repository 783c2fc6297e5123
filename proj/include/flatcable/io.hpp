#pragma once

// JSON / CSV interchange layer: parameter and scenario files, planned
// trajectory and simulation-log CSV, marker CSV, metric and fit reports.
// JSON objects are schema-checked strictly (unknown keys rejected).

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flatcable/errors.hpp"
#include "flatcable/feedback.hpp"
#include "flatcable/planner.hpp"
#include "flatcable/primitives.hpp"
#include "flatcable/quadrotor.hpp"
#include "flatcable/simulator.hpp"
#include "flatcable/sysid.hpp"

namespace flatcable::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Generic helpers
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failure: " + path);
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failure: " + path);
}

inline json parse_json(const std::string& text, const std::string& what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw SchemaError(what + ": malformed JSON");
    return j;
}

inline json load_json_file(const std::string& path) {
    return parse_json(read_text_file(path), path);
}

// 64-bit FNV-1a content hash, reported as hex for provenance stamping.
inline std::string fnv1a_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

namespace detail {

inline void expect_object(const json& j, const std::string& what) {
    if (!j.is_object()) throw SchemaError(what + ": expected a JSON object");
}

// Strict key check: everything present must be known, everything required
// must be present.
inline void check_keys(const json& j, const std::string& what,
                       const std::set<std::string>& required,
                       const std::set<std::string>& optional = {}) {
    expect_object(j, what);
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!required.count(key) && !optional.count(key))
            throw SchemaError(what + ": unknown key \"" + key + "\"");
    }
    for (const auto& key : required)
        if (!j.contains(key))
            throw SchemaError(what + ": missing key \"" + key + "\"");
}

inline double get_number(const json& j, const std::string& what,
                         const std::string& key) {
    if (!j.at(key).is_number())
        throw SchemaError(what + ": \"" + key + "\" must be a number");
    return j.at(key).get<double>();
}

inline double get_number_or(const json& j, const std::string& what,
                            const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    return get_number(j, what, key);
}

inline int get_int(const json& j, const std::string& what,
                   const std::string& key) {
    if (!j.at(key).is_number_integer())
        throw SchemaError(what + ": \"" + key + "\" must be an integer");
    return j.at(key).get<int>();
}

inline std::vector<double> get_number_array(const json& j, const std::string& what,
                                            const std::string& key) {
    const json& a = j.at(key);
    if (!a.is_array()) throw SchemaError(what + ": \"" + key + "\" must be an array");
    std::vector<double> out;
    for (const auto& v : a) {
        if (!v.is_number())
            throw SchemaError(what + ": \"" + key + "\" must contain numbers only");
        out.push_back(v.get<double>());
    }
    return out;
}

inline Eigen::Vector3d get_vec3(const json& j, const std::string& what,
                                const std::string& key) {
    const auto a = get_number_array(j, what, key);
    if (a.size() != 3)
        throw SchemaError(what + ": \"" + key + "\" must have 3 entries");
    return {a[0], a[1], a[2]};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Cable / quadrotor parameters
// ---------------------------------------------------------------------------

inline json to_json(const CableParams& p) {
    return json{{"n", p.n}, {"k", p.k},       {"l0", p.l0},
                {"mass", p.mass}, {"c", p.c}, {"g", p.g}};
}

inline CableParams cable_params_from_json(const json& j) {
    detail::check_keys(j, "cable params", {"n", "k", "l0", "mass", "c"},
                       {"g", "note"});
    CableParams p;
    p.n = detail::get_int(j, "cable params", "n");
    p.k = detail::get_number_array(j, "cable params", "k");
    p.l0 = detail::get_number_array(j, "cable params", "l0");
    p.mass = detail::get_number_array(j, "cable params", "mass");
    p.c = detail::get_number_array(j, "cable params", "c");
    p.g = detail::get_number_or(j, "cable params", "g", 9.81);
    // k/l0 files may list only segments 1..n-1 (no ground anchor); prepend a
    // placeholder entry for segment 0
    if (static_cast<int>(p.k.size()) == p.n - 1) p.k.insert(p.k.begin(), 1.0);
    if (static_cast<int>(p.l0.size()) == p.n - 1) p.l0.insert(p.l0.begin(), 1.0);
    // mass/c files list the movable points 1..n; prepend the unused slot 0
    if (static_cast<int>(p.mass.size()) == p.n) p.mass.insert(p.mass.begin(), 0.0);
    if (static_cast<int>(p.c.size()) == p.n) p.c.insert(p.c.begin(), 0.0);
    return p;
}

inline json to_json(const QuadParams& q) {
    json J = json::array();
    for (int r = 0; r < 3; ++r)
        J.push_back({q.J(r, 0), q.J(r, 1), q.J(r, 2)});
    return json{{"m_R", q.m_R}, {"J", J}, {"f_max", q.f_max}, {"attach", q.attach}};
}

inline QuadParams quad_params_from_json(const json& j) {
    detail::check_keys(j, "quad params", {"m_R", "J", "f_max"}, {"attach", "note"});
    QuadParams q;
    q.m_R = detail::get_number(j, "quad params", "m_R");
    q.f_max = detail::get_number(j, "quad params", "f_max");
    q.attach = j.contains("attach") ? detail::get_int(j, "quad params", "attach") : 0;
    const json& J = j.at("J");
    if (!J.is_array() || J.size() != 3)
        throw SchemaError("quad params: \"J\" must be a 3x3 array of arrays");
    for (int r = 0; r < 3; ++r) {
        if (!J[r].is_array() || J[r].size() != 3)
            throw SchemaError("quad params: \"J\" must be a 3x3 array of arrays");
        for (int c = 0; c < 3; ++c) {
            if (!J[r][c].is_number())
                throw SchemaError("quad params: \"J\" entries must be numbers");
            q.J(r, c) = J[r][c].get<double>();
        }
    }
    return q;
}

// ---------------------------------------------------------------------------
// Flat-output signal specifications
// ---------------------------------------------------------------------------

inline SignalPtr signal_from_json(const json& j);

namespace detail {

inline SignalPtr polynomial_from_json(const json& j) {
    check_keys(j, "polynomial", {"primitive", "coeffs"}, {"t0"});
    return std::make_shared<Polynomial>(get_number_array(j, "polynomial", "coeffs"),
                                        get_number_or(j, "polynomial", "t0", 0.0));
}

inline SignalPtr sinusoid_from_json(const json& j) {
    check_keys(j, "sinusoid", {"primitive", "amplitude", "omega"},
               {"phase", "offset"});
    return std::make_shared<Sinusoid>(get_number(j, "sinusoid", "amplitude"),
                                      get_number(j, "sinusoid", "omega"),
                                      get_number_or(j, "sinusoid", "phase", 0.0),
                                      get_number_or(j, "sinusoid", "offset", 0.0));
}

inline SignalPtr gaussian_exp_from_json(const json& j) {
    check_keys(j, "gaussian_exp", {"primitive", "x0", "xa", "t0", "cx"});
    return std::make_shared<GaussianExp>(
        get_number(j, "gaussian_exp", "x0"), get_number(j, "gaussian_exp", "xa"),
        get_number(j, "gaussian_exp", "t0"), get_number(j, "gaussian_exp", "cx"));
}

inline SignalPtr sum_from_json(const json& j) {
    check_keys(j, "sum", {"primitive", "terms"});
    if (!j.at("terms").is_array() || j.at("terms").empty())
        throw SchemaError("sum: \"terms\" must be a non-empty array");
    std::vector<SignalPtr> terms;
    for (const auto& term : j.at("terms")) terms.push_back(signal_from_json(term));
    return std::make_shared<Sum>(std::move(terms));
}

inline SignalPtr constant_from_json(const json& j) {
    check_keys(j, "constant", {"primitive", "value"});
    return std::make_shared<Polynomial>(
        std::vector<double>{get_number(j, "constant", "value")});
}

}  // namespace detail

inline SignalPtr signal_from_json(const json& j) {
    detail::expect_object(j, "signal");
    if (!j.contains("primitive") || !j.at("primitive").is_string())
        throw SchemaError("signal: missing \"primitive\" string");
    const std::string kind = j.at("primitive").get<std::string>();
    if (kind == "polynomial") return detail::polynomial_from_json(j);
    if (kind == "sinusoid") return detail::sinusoid_from_json(j);
    if (kind == "gaussian_exp") return detail::gaussian_exp_from_json(j);
    if (kind == "sum") return detail::sum_from_json(j);
    if (kind == "constant") return detail::constant_from_json(j);
    throw SchemaError("signal: unknown primitive \"" + kind + "\"");
}

inline VectorSignal vector_signal_from_json(const json& j) {
    detail::check_keys(j, "position channel signals", {"x", "y", "z"});
    return {signal_from_json(j.at("x")), signal_from_json(j.at("y")),
            signal_from_json(j.at("z"))};
}

// Channel targets: "p<i>" carries {"x","y","z"} signal specs, "yaw<j>"
// carries one signal description under "signal".
inline FlatOutputs flat_outputs_from_json(const json& j) {
    detail::check_keys(j, "flat outputs", {"channels"}, {"pair_index"});
    FlatOutputs flat;
    if (j.contains("pair_index"))
        flat.pair_index = detail::get_int(j, "flat outputs", "pair_index");
    if (!j.at("channels").is_array())
        throw SchemaError("flat outputs: \"channels\" must be an array");
    for (const auto& ch : j.at("channels")) {
        detail::expect_object(ch, "flat channel");
        if (!ch.contains("target") || !ch.at("target").is_string())
            throw SchemaError("flat channel: missing \"target\" string");
        const std::string target = ch.at("target").get<std::string>();
        auto parse_index = [&](size_t prefix_len) {
            try {
                size_t used = 0;
                const int idx = std::stoi(target.substr(prefix_len), &used);
                if (used != target.size() - prefix_len || idx < 1)
                    throw std::invalid_argument("");
                return idx;
            } catch (const std::exception&) {
                throw SchemaError("flat channel: bad target \"" + target + "\"");
            }
        };
        if (target.rfind("yaw", 0) == 0) {
            detail::check_keys(ch, "yaw channel", {"target", "signal"});
            const int idx = parse_index(3);
            if (flat.yaws.count(idx))
                throw SchemaError("flat channel: duplicate target \"" + target + "\"");
            flat.yaws[idx] = signal_from_json(ch.at("signal"));
        } else if (target.rfind("p", 0) == 0) {
            detail::check_keys(ch, "position channel", {"target", "x", "y", "z"});
            const int idx = parse_index(1);
            if (flat.positions.count(idx))
                throw SchemaError("flat channel: duplicate target \"" + target + "\"");
            json axes = ch;
            axes.erase("target");
            flat.positions[idx] = vector_signal_from_json(axes);
        } else {
            throw SchemaError("flat channel: bad target \"" + target + "\"");
        }
    }
    return flat;
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

enum class SimMode { Tracked, BoundaryDriven, ClosedLoop };

inline SimMode sim_mode_from_string(const std::string& s) {
    if (s == "tracked") return SimMode::Tracked;
    if (s == "boundary_driven") return SimMode::BoundaryDriven;
    if (s == "closed_loop") return SimMode::ClosedLoop;
    throw SchemaError("sim config: unknown mode \"" + s + "\"");
}

inline const char* to_string(SimMode m) {
    switch (m) {
        case SimMode::Tracked: return "tracked";
        case SimMode::BoundaryDriven: return "boundary_driven";
        default: return "closed_loop";
    }
}

struct Scenario {
    std::string name;
    Topology topo;
    CableParams params;
    std::map<int, QuadParams> quads;
    FlatOutputs flat;

    SimConfig sim;
    SimMode mode = SimMode::Tracked;
    double plan_rate = 100.0;

    ControllerGains controller;
    GainConfig feedback;
    bool has_feedback = false;
    double k_scale = 1.0;  // plant stiffness perturbation for paired runs
    std::map<int, Eigen::Vector3d> initial_offsets;  // mass index -> shift

    std::string config_hash, params_hash;

    // Plant-side parameters (model parameters with the perturbation applied).
    CableParams plant_params() const {
        CableParams p = params;
        for (int s = 1; s < p.n; ++s) p.k[s] *= k_scale;
        return p;
    }
};

inline Scenario scenario_from_json(const json& j) {
    detail::check_keys(j, "scenario",
                       {"class", "n", "robots", "cable", "quads", "flat_outputs"},
                       {"name", "note", "sim", "controller", "feedback",
                        "perturbation", "initial_offsets", "plan_rate"});
    Scenario sc;
    if (j.contains("name")) {
        if (!j.at("name").is_string())
            throw SchemaError("scenario: \"name\" must be a string");
        sc.name = j.at("name").get<std::string>();
    }

    const std::string cls = j.at("class").is_string()
                                ? j.at("class").get<std::string>()
                                : throw SchemaError("scenario: \"class\" must be a string");
    if (cls == "a") sc.topo.cls = SystemClass::A;
    else if (cls == "b") sc.topo.cls = SystemClass::B;
    else if (cls == "c") sc.topo.cls = SystemClass::C;
    else throw SchemaError("scenario: class must be \"a\", \"b\", or \"c\"");

    sc.topo.n = detail::get_int(j, "scenario", "n");
    for (const auto& r : j.at("robots")) {
        if (!r.is_number_integer())
            throw SchemaError("scenario: \"robots\" must contain integers");
        sc.topo.robots.push_back(r.get<int>());
    }
    sc.topo.validate();

    sc.params = cable_params_from_json(j.at("cable"));
    sc.params.validate(sc.topo);

    detail::expect_object(j.at("quads"), "scenario quads");
    for (const auto& [key, qj] : j.at("quads").items()) {
        int idx = 0;
        try {
            idx = std::stoi(key);
        } catch (const std::exception&) {
            throw SchemaError("scenario quads: keys must be robot indices");
        }
        QuadParams q = quad_params_from_json(qj);
        q.attach = idx;
        sc.quads[idx] = q;
    }
    for (int r : sc.topo.robots)
        if (!sc.quads.count(r))
            throw SchemaError("scenario quads: missing robot " + std::to_string(r));
    if (sc.quads.size() != sc.topo.robots.size())
        throw SchemaError("scenario quads: extra entries beyond the robot set");

    sc.flat = flat_outputs_from_json(j.at("flat_outputs"));

    if (j.contains("sim")) {
        const json& s = j.at("sim");
        detail::check_keys(s, "sim config", {},
                           {"dt", "duration", "mode", "v_max", "log_every"});
        sc.sim.dt = detail::get_number_or(s, "sim config", "dt", sc.sim.dt);
        sc.sim.duration =
            detail::get_number_or(s, "sim config", "duration", sc.sim.duration);
        sc.sim.v_max = detail::get_number_or(s, "sim config", "v_max", sc.sim.v_max);
        if (s.contains("log_every"))
            sc.sim.log_every = detail::get_int(s, "sim config", "log_every");
        if (s.contains("mode")) {
            if (!s.at("mode").is_string())
                throw SchemaError("sim config: \"mode\" must be a string");
            sc.mode = sim_mode_from_string(s.at("mode").get<std::string>());
        }
        sc.sim.validate();
    }
    if (j.contains("plan_rate")) {
        sc.plan_rate = detail::get_number(j, "scenario", "plan_rate");
        if (sc.plan_rate <= 0.0)
            throw SchemaError("scenario: plan_rate must be positive");
    }

    if (j.contains("controller")) {
        const json& c = j.at("controller");
        detail::check_keys(c, "controller", {}, {"kp", "kv", "kR", "komega"});
        sc.controller.kp = detail::get_number_or(c, "controller", "kp", sc.controller.kp);
        sc.controller.kv = detail::get_number_or(c, "controller", "kv", sc.controller.kv);
        sc.controller.kR = detail::get_number_or(c, "controller", "kR", sc.controller.kR);
        sc.controller.komega =
            detail::get_number_or(c, "controller", "komega", sc.controller.komega);
    }

    if (j.contains("feedback")) {
        const json& f = j.at("feedback");
        detail::check_keys(f, "feedback", {}, {"KI", "rate", "clamp"});
        if (f.contains("KI")) sc.feedback.KI = detail::get_vec3(f, "feedback", "KI");
        sc.feedback.rate = detail::get_number_or(f, "feedback", "rate", sc.feedback.rate);
        sc.feedback.clamp =
            detail::get_number_or(f, "feedback", "clamp", sc.feedback.clamp);
        sc.feedback.validate();
        sc.has_feedback = true;
    }

    if (j.contains("perturbation")) {
        const json& p = j.at("perturbation");
        detail::check_keys(p, "perturbation", {"k_scale"});
        sc.k_scale = detail::get_number(p, "perturbation", "k_scale");
        if (sc.k_scale <= 0.0)
            throw SchemaError("perturbation: k_scale must be positive");
    }

    if (j.contains("initial_offsets")) {
        detail::expect_object(j.at("initial_offsets"), "initial offsets");
        for (const auto& [key, off] : j.at("initial_offsets").items()) {
            int idx = 0;
            try {
                idx = std::stoi(key);
            } catch (const std::exception&) {
                throw SchemaError("initial offsets: keys must be mass indices");
            }
            if (idx < 1 || idx > sc.topo.n)
                throw SchemaError("initial offsets: index out of range");
            if (!off.is_array() || off.size() != 3)
                throw SchemaError("initial offsets: values must be 3-vectors");
            sc.initial_offsets[idx] =
                Eigen::Vector3d(off[0].get<double>(), off[1].get<double>(),
                                off[2].get<double>());
        }
    }

    sc.config_hash = fnv1a_hash(j.dump());
    sc.params_hash = fnv1a_hash(to_json(sc.params).dump());
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    return scenario_from_json(load_json_file(path));
}

// ---------------------------------------------------------------------------
// Planned trajectory CSV
// ---------------------------------------------------------------------------
//
// Layout (one row per sample):
//   t,
//   p{i}x,p{i}y,p{i}z, v{i}..., a{i}...        for each mass i = 1..n,
//   s{s}x,s{s}y,s{s}z                          for each segment s,
//   yaw{j}, f{j}, w{j}x..z, R{j}11..R{j}33     for each robot j.
// Comment lines starting with '#' carry provenance hashes.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline void append_vec3(std::ostream& os, const Eigen::Vector3d& v) {
    os << ',' << v.x() << ',' << v.y() << ',' << v.z();
}

}  // namespace detail

inline void write_plan_csv(std::ostream& os, const PlannedTrajectory& plan,
                           const std::string& config_hash = "",
                           const std::string& params_hash = "") {
    const Topology& topo = plan.topo;
    os << std::setprecision(17);
    if (!config_hash.empty()) os << "# config_hash=" << config_hash << '\n';
    if (!params_hash.empty()) os << "# params_hash=" << params_hash << '\n';
    os << "# class=" << to_string(topo.cls) << " n=" << topo.n << " robots=";
    for (size_t r = 0; r < topo.robots.size(); ++r)
        os << (r ? ";" : "") << topo.robots[r];
    os << " rate=" << plan.rate << " depth=" << plan.depth << '\n';

    os << "t";
    for (int i = 1; i <= topo.n; ++i)
        for (const char* q : {"p", "v", "a"})
            os << ',' << q << i << 'x' << ',' << q << i << 'y' << ',' << q << i << 'z';
    for (int s = topo.first_segment(); s <= topo.n - 1; ++s)
        os << ",s" << s << 'x' << ",s" << s << 'y' << ",s" << s << 'z';
    for (int j : topo.robots) {
        os << ",yaw" << j << ",f" << j << ",w" << j << 'x' << ",w" << j << 'y'
           << ",w" << j << 'z';
        for (int r = 1; r <= 3; ++r)
            for (int c = 1; c <= 3; ++c) os << ",R" << j << r << c;
    }
    os << '\n';

    for (const PlanSample& s : plan.samples) {
        os << s.t;
        for (int i = 1; i <= topo.n; ++i) {
            detail::append_vec3(os, s.p[i]);
            detail::append_vec3(os, s.v[i]);
            detail::append_vec3(os, s.a[i]);
        }
        for (int seg = topo.first_segment(); seg <= topo.n - 1; ++seg)
            detail::append_vec3(os, s.seg_force[seg]);
        for (int j : topo.robots) {
            const RobotPlanSample& r = s.robots.at(j);
            os << ',' << r.yaw << ',' << r.f;
            detail::append_vec3(os, r.omega);
            for (int rr = 0; rr < 3; ++rr)
                for (int cc = 0; cc < 3; ++cc) os << ',' << r.R(rr, cc);
        }
        os << '\n';
    }
}

inline void write_plan_csv(const std::string& path, const PlannedTrajectory& plan,
                           const std::string& config_hash = "",
                           const std::string& params_hash = "") {
    std::ostringstream ss;
    write_plan_csv(ss, plan, config_hash, params_hash);
    write_text_file(path, ss.str());
}

inline PlannedTrajectory read_plan_csv(const std::string& path,
                                       const Topology& topo) {
    std::istringstream in(read_text_file(path));
    PlannedTrajectory plan;
    plan.topo = topo;
    const int n = topo.n;
    const int n_seg = n - topo.first_segment();
    const size_t expected =
        1 + 9 * static_cast<size_t>(n) + 3 * static_cast<size_t>(n_seg) +
        14 * topo.robots.size();

    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {  // header row
            header_seen = true;
            if (detail::split_csv_line(line).size() != expected)
                throw SchemaError("plan csv: column count does not match topology");
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != expected)
            throw SchemaError("plan csv: row has wrong column count");
        std::vector<double> vals;
        vals.reserve(cells.size());
        for (const auto& c : cells) {
            try {
                vals.push_back(std::stod(c));
            } catch (const std::exception&) {
                throw SchemaError("plan csv: non-numeric cell \"" + c + "\"");
            }
        }
        size_t at = 0;
        auto take3 = [&]() {
            Eigen::Vector3d v(vals[at], vals[at + 1], vals[at + 2]);
            at += 3;
            return v;
        };
        PlanSample s;
        s.t = vals[at++];
        s.p.resize(n + 1);
        s.v.resize(n + 1);
        s.a.resize(n + 1);
        s.seg_force.assign(n, Eigen::Vector3d::Zero());
        for (int i = 1; i <= n; ++i) {
            s.p[i] = take3();
            s.v[i] = take3();
            s.a[i] = take3();
        }
        for (int seg = topo.first_segment(); seg <= n - 1; ++seg)
            s.seg_force[seg] = take3();
        for (int j : topo.robots) {
            RobotPlanSample r;
            r.yaw = vals[at++];
            r.f = vals[at++];
            r.omega = take3();
            for (int rr = 0; rr < 3; ++rr)
                for (int cc = 0; cc < 3; ++cc) r.R(rr, cc) = vals[at++];
            r.p = s.p[j];
            r.v = s.v[j];
            r.a = s.a[j];
            s.robots[j] = r;
        }
        plan.samples.push_back(std::move(s));
    }
    if (plan.samples.empty()) throw SchemaError("plan csv: no data rows");
    if (plan.samples.size() >= 2)
        plan.rate = 1.0 / (plan.samples[1].t - plan.samples[0].t);
    return plan;
}

// ---------------------------------------------------------------------------
// Simulation log CSV
// ---------------------------------------------------------------------------
//
// Layout: t, p{i}x..z and v{i}x..z per mass, s{s}x..z per segment,
// f{j} and tau{j}x..z per robot, ref{i}x..z per mass (when references exist).

inline void write_simlog_csv(std::ostream& os, const SimLog& log) {
    const Topology& topo = log.topo;
    os << std::setprecision(17);
    if (!log.config_hash.empty()) os << "# config_hash=" << log.config_hash << '\n';
    if (!log.params_hash.empty()) os << "# params_hash=" << log.params_hash << '\n';
    os << "# class=" << to_string(topo.cls) << " n=" << topo.n
       << " clamp_events=" << log.clamp_events << '\n';

    const bool with_inputs = !log.rows.empty() && !log.rows.front().inputs.empty();
    const bool with_refs = !log.rows.empty() && !log.rows.front().ref_pos.empty();

    os << "t";
    for (int i = 1; i <= topo.n; ++i)
        for (const char* q : {"p", "v"})
            os << ',' << q << i << 'x' << ',' << q << i << 'y' << ',' << q << i << 'z';
    for (int s = topo.first_segment(); s <= topo.n - 1; ++s)
        os << ",s" << s << 'x' << ",s" << s << 'y' << ",s" << s << 'z';
    if (with_inputs)
        for (int j : topo.robots)
            os << ",f" << j << ",tau" << j << 'x' << ",tau" << j << 'y' << ",tau"
               << j << 'z';
    if (with_refs)
        for (int i = 1; i <= topo.n; ++i)
            os << ",ref" << i << 'x' << ",ref" << i << 'y' << ",ref" << i << 'z';
    os << '\n';

    for (const SimLogRow& row : log.rows) {
        os << row.t;
        for (int i = 1; i <= topo.n; ++i) {
            detail::append_vec3(os, row.state.masses[i].p);
            detail::append_vec3(os, row.state.masses[i].v);
        }
        for (int s = topo.first_segment(); s <= topo.n - 1; ++s)
            detail::append_vec3(os, row.seg_force[s]);
        if (with_inputs)
            for (int j : topo.robots) {
                const QuadInput& u = row.inputs.at(j);
                os << ',' << u.f;
                detail::append_vec3(os, u.tau);
            }
        if (with_refs)
            for (int i = 1; i <= topo.n; ++i)
                detail::append_vec3(os, row.ref_pos.at(i));
        os << '\n';
    }
}

inline void write_simlog_csv(const std::string& path, const SimLog& log) {
    std::ostringstream ss;
    write_simlog_csv(ss, log);
    write_text_file(path, ss.str());
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline json metrics_to_json(const std::map<int, OutputErrorStats>& stats) {
    json out = json::object();
    for (const auto& [i, st] : stats)
        out[std::to_string(i)] = {{"mean", st.mean}, {"max", st.max}};
    return out;
}

inline std::map<int, OutputErrorStats> metrics_from_json(const json& j) {
    detail::expect_object(j, "metrics");
    std::map<int, OutputErrorStats> out;
    for (const auto& [key, v] : j.items()) {
        detail::check_keys(v, "metrics entry", {"mean", "max"});
        int idx = 0;
        try {
            idx = std::stoi(key);
        } catch (const std::exception&) {
            throw SchemaError("metrics: keys must be output indices");
        }
        out[idx] = {detail::get_number(v, "metrics", "mean"),
                    detail::get_number(v, "metrics", "max")};
    }
    return out;
}

// Published-average fixture: named test columns, each mapping output index
// (as string) to the tabulated mean error.
struct PublishedAverages {
    // test name -> column name -> output index -> mean error [m]
    std::map<std::string, std::map<std::string, std::map<int, double>>> tables;
};

inline PublishedAverages published_averages_from_json(const json& j) {
    detail::expect_object(j, "published averages");
    PublishedAverages out;
    for (const auto& [test, cols] : j.items()) {
        detail::expect_object(cols, "published averages test");
        for (const auto& [col, entries] : cols.items()) {
            detail::expect_object(entries, "published averages column");
            for (const auto& [idx, v] : entries.items()) {
                if (!v.is_number())
                    throw SchemaError("published averages: values must be numbers");
                int i = 0;
                try {
                    i = std::stoi(idx);
                } catch (const std::exception&) {
                    throw SchemaError("published averages: keys must be indices");
                }
                out.tables[test][col][i] = v.get<double>();
            }
        }
    }
    if (out.tables.empty()) throw SchemaError("published averages: empty document");
    return out;
}

// ---------------------------------------------------------------------------
// Marker CSV (t, p1x, p1y, p1z, ..., pNx, pNy, pNz)
// ---------------------------------------------------------------------------

inline RawSamples read_marker_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    bool header_seen = false;
    int n = 0;
    RawSamples raw;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto cells = detail::split_csv_line(line);
        if (!header_seen) {
            header_seen = true;
            if (cells.size() < 4 || (cells.size() - 1) % 3 != 0 || cells[0] != "t")
                throw SchemaError("marker csv: header must be t,p1x,p1y,p1z,...");
            n = static_cast<int>((cells.size() - 1) / 3);
            for (int i = 1; i <= n; ++i) {
                const std::string base = "p" + std::to_string(i);
                if (cells[1 + 3 * (i - 1)] != base + "x" ||
                    cells[2 + 3 * (i - 1)] != base + "y" ||
                    cells[3 + 3 * (i - 1)] != base + "z")
                    throw SchemaError("marker csv: header must be t,p1x,p1y,p1z,...");
            }
            continue;
        }
        if (cells.size() != static_cast<size_t>(1 + 3 * n))
            throw SchemaError("marker csv: row has wrong column count");
        std::vector<double> vals;
        for (const auto& c : cells) {
            if (c.empty() || c == "nan") {  // dropped marker
                vals.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            try {
                vals.push_back(std::stod(c));
            } catch (const std::exception&) {
                throw SchemaError("marker csv: non-numeric cell \"" + c + "\"");
            }
        }
        raw.t.push_back(vals[0]);
        std::vector<Eigen::Vector3d> row(n + 1, Eigen::Vector3d::Zero());
        for (int i = 1; i <= n; ++i)
            row[i] = {vals[1 + 3 * (i - 1)], vals[2 + 3 * (i - 1)],
                      vals[3 + 3 * (i - 1)]};
        raw.pos.push_back(std::move(row));
    }
    if (raw.t.empty()) throw SchemaError("marker csv: no data rows");
    return raw;
}

inline void write_marker_csv(std::ostream& os, const RawSamples& raw) {
    if (raw.pos.empty()) throw SchemaError("marker csv: nothing to write");
    const int n = static_cast<int>(raw.pos.front().size()) - 1;
    os << std::setprecision(17) << "t";
    for (int i = 1; i <= n; ++i)
        os << ",p" << i << 'x' << ",p" << i << 'y' << ",p" << i << 'z';
    os << '\n';
    for (size_t r = 0; r < raw.t.size(); ++r) {
        os << raw.t[r];
        for (int i = 1; i <= n; ++i) detail::append_vec3(os, raw.pos[r][i]);
        os << '\n';
    }
}

inline void write_marker_csv(const std::string& path, const RawSamples& raw) {
    std::ostringstream ss;
    write_marker_csv(ss, raw);
    write_text_file(path, ss.str());
}

// ---------------------------------------------------------------------------
// Identification reports
// ---------------------------------------------------------------------------

inline json fit_report_to_json(const FitReport& r) {
    json stages = json::array();
    for (const StageReport& s : r.stages)
        stages.push_back({{"lambda", s.lambda},
                          {"cost_start", s.cost_start},
                          {"cost_end", s.cost_end},
                          {"iterations", s.iterations}});
    json per_mass = json::object();
    for (const auto& [i, e] : r.mean_pos_error) per_mass[std::to_string(i)] = e;
    return json{{"theta", {{"k", r.theta.k}, {"c", r.theta.c}}},
                {"stages", stages},
                {"mean_pos_error", per_mass},
                {"mean_coord_error", r.mean_coord_error},
                {"c_sensitivity", r.c_sensitivity},
                {"filled_gaps", r.filled_gaps}};
}

}  // namespace flatcable::io
