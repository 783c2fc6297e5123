// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails.  Thresholds mirror the project requirements; each check
// is self-contained and runs against the shipped fixture files.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "flatcable/io.hpp"

#ifndef FIXTURE_DIR
#define FIXTURE_DIR "fixtures"
#endif

namespace {

using namespace flatcable;
using Eigen::Vector3d;

const std::string fx = FIXTURE_DIR;
bool any_failed = false;

void report(int id, bool ok, const std::string& label,
            const std::string& detail) {
    if (!ok) any_failed = true;
    std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id,
                label.c_str(), detail.c_str());
    std::fflush(stdout);
}

double seconds_since(
    const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// 4-slot planner sample cache: the RK4 stages revisit the same stamps.
class CachedPlanner {
  public:
    explicit CachedPlanner(const FlatnessPlanner& p) : planner_(p) {}
    const PlanSample& at(double t) {
        for (auto& [stamp, sample] : cache_)
            if (stamp == t) return sample;
        slot_ = (slot_ + 1) % cache_.size();
        cache_[slot_] = {t, planner_.eval(t)};
        return cache_[slot_].second;
    }

  private:
    const FlatnessPlanner& planner_;
    std::array<std::pair<double, PlanSample>, 4> cache_{
        {{-1.0, {}}, {-1.0, {}}, {-1.0, {}}, {-1.0, {}}}};
    size_t slot_ = 0;
};

SystemState initial_state(const io::Scenario& sc,
                          const FlatnessPlanner& planner) {
    SystemState st = state_from_sample(planner.eval(0.0), sc.topo);
    for (const auto& [i, off] : sc.initial_offsets) {
        st.masses[i].p += off;
        auto q = st.quads.find(i);
        if (q != st.quads.end()) q->second.p += off;
    }
    return st;
}

std::vector<int> output_indices(const io::Scenario& sc) {
    std::vector<int> out;
    for (const auto& [i, sig] : sc.flat.positions) {
        (void)sig;
        out.push_back(i);
    }
    return out;
}

struct TrackedRun {
    PlannedTrajectory plan;
    SimLog log;
};

TrackedRun run_tracked_fixture(const io::Scenario& sc) {
    FlatnessPlanner planner(sc.topo, sc.params, sc.quads, sc.flat);
    TrackedRun r;
    r.plan = planner.plan(0.0, sc.sim.duration, sc.plan_rate);
    CachedPlanner cache(planner);
    auto refs = [&](double t) {
        return tracked_refs_from_sample(cache.at(t), sc.topo);
    };
    r.log = simulate_tracked(sc.topo, sc.params, sc.quads, refs,
                             initial_state(sc, planner), sc.sim, sc.controller);
    return r;
}

double mean_error_from(const SimLog& log, int output, double t_from) {
    double sum = 0.0;
    int count = 0;
    for (const auto& row : log.rows) {
        if (row.t < t_from) continue;
        sum += (row.state.masses[output].p - row.ref_pos.at(output)).norm();
        ++count;
    }
    return count ? sum / count : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const io::Scenario sc = io::load_scenario(fx + "/a1_circle.json");
    const TrackedRun r = run_tracked_fixture(sc);
    const auto stats = output_error_metrics(r.log, output_indices(sc));
    double worst_mean = 0.0;
    for (const auto& [i, st] : stats) worst_mean = std::max(worst_mean, st.mean);
    const double wall = seconds_since(t0);
    const bool ok = worst_mean < 0.01 && r.plan.max_residual < 1e-6 &&
                    wall < 30.0;
    report(1, ok, "ground-tethered circle round trip",
           "mean error " + fmt(worst_mean) + " m, residual " +
               fmt(r.plan.max_residual) + ", " + fmt(wall) + " s");
}

void criterion_2() {
    const auto t0 = std::chrono::steady_clock::now();
    const io::Scenario sc = io::load_scenario(fx + "/b_polynomial.json");
    const TrackedRun r = run_tracked_fixture(sc);
    const auto stats = output_error_metrics(r.log, output_indices(sc));
    double worst_mean = 0.0;
    for (const auto& [i, st] : stats) worst_mean = std::max(worst_mean, st.mean);
    // the run starts with robot 5 displaced; its error must settle
    const double settled = mean_error_from(r.log, 5, 0.75 * sc.sim.duration);
    const double wall = seconds_since(t0);
    const bool ok = worst_mean < 0.01 && r.plan.max_residual < 1e-6 &&
                    settled < 0.02 && wall < 30.0;
    report(2, ok, "two-robot polynomial transfer with initial offset",
           "mean error " + fmt(worst_mean) + " m, settled offset " +
               fmt(settled) + " m, residual " + fmt(r.plan.max_residual) +
               ", " + fmt(wall) + " s");
}

void criterion_3() {
    Topology topo;
    topo.cls = SystemClass::C;
    topo.n = 6;
    topo.robots = {1, 6};
    const CableParams params =
        io::cable_params_from_json(io::load_json_file(fx + "/table1.json"));
    const QuadParams quad =
        io::quad_params_from_json(io::load_json_file(fx + "/crazyflie.json"));
    std::map<int, QuadParams> quads = {{1, quad}, {6, quad}};

    // hold the robot ends, read a consistent static pair off the sag curve
    const auto hang =
        static_equilibrium(topo, params, {{1, {0, 0, 1.0}}, {6, {1.05, 0, 1.0}}});
    const Vector3d c3 = hang[3], c4 = hang[4];
    FlatOutputs flat;
    flat.pair_index = 3;
    flat.positions[3] = VectorSignal::constant(c3);
    flat.positions[4] = VectorSignal::constant(c4);
    flat.yaws[1] = std::make_shared<Polynomial>(std::vector<double>{0.0});
    flat.yaws[6] = std::make_shared<Polynomial>(std::vector<double>{0.0});

    FlatnessPlanner planner(topo, params, quads, flat);
    const PlanSample s = planner.eval(0.0);
    double worst = 0.0;
    for (int i = 1; i <= topo.n; ++i)
        worst = std::max(worst, (s.p[i] - hang[i]).norm());
    for (int i = 1; i <= topo.n; ++i)
        worst = std::max(worst, s.v[i].norm());
    report(3, worst <= 1e-6, "static pair-held plan matches equilibrium",
           "max deviation " + fmt(worst) + " m");
}

void criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    Topology topo;
    topo.cls = SystemClass::C;
    topo.n = 6;
    topo.robots = {1, 6};
    const CableParams truth =
        io::cable_params_from_json(io::load_json_file(fx + "/table1.json"));

    const auto eq = static_equilibrium(topo, truth, {{1, {0, 0, 1.0}},
                                                     {6, {0.82, 0, 1.0}}});
    auto boundary = [&](int i, double t) {
        const double s = (i == 1) ? 1.0 : -1.0;
        const double w1 = 1.3, w2 = 2.1, w3 = 0.7;
        MassState b;
        b.p = eq[i] + Vector3d(0.06 * (1 - std::cos(w1 * t)),
                               0.05 * (1 - std::cos(w2 * t)) * s,
                               0.04 * (1 - std::cos(w3 * t)));
        b.v = Vector3d(0.06 * w1 * std::sin(w1 * t),
                       0.05 * w2 * std::sin(w2 * t) * s,
                       0.04 * w3 * std::sin(w3 * t));
        return b;
    };
    std::vector<MassState> init(7);
    for (int i = 1; i <= 6; ++i) init[i] = {eq[i], Vector3d::Zero()};
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.duration = 120.0;
    cfg.log_every = 10;
    const SimLog truth_log =
        simulate_boundary_driven(topo, truth, {1, 6}, boundary, init, cfg);

    RawSamples raw;
    for (const auto& row : truth_log.rows) {
        raw.t.push_back(row.t);
        std::vector<Vector3d> pos(7, Vector3d::Zero());
        for (int i = 1; i <= 6; ++i) pos[i] = row.state.masses[i].p;
        raw.pos.push_back(pos);
    }

    MocapDataset data = preprocess(raw, {1, 6}, 0.007);
    // rest lengths are measured on the bench, not fitted
    for (int s = 1; s <= 5; ++s) data.l0[s] = truth.l0[s];

    ThetaVector theta0;
    theta0.k.assign(5, 10.0);
    theta0.c = 0.01;
    const FitReport fit = identify(data, theta0);

    double worst_k_rel = 0.0;
    for (int s = 1; s <= 5; ++s)
        worst_k_rel = std::max(
            worst_k_rel, std::abs(fit.theta.k[s - 1] - truth.k[s]) / truth.k[s]);
    const double c_rel = std::abs(fit.theta.c - truth.c[1]) / truth.c[1];
    const double wall = seconds_since(t0);
    const bool ok = worst_k_rel < 0.05 && c_rel < 0.10 &&
                    fit.mean_coord_error < 0.02 && wall < 600.0;
    report(4, ok, "parameter identification from boundary-driven data",
           "worst k error " + fmt(100 * worst_k_rel) + "%, c error " +
               fmt(100 * c_rel) + "%, fit " + fmt(fit.mean_coord_error) +
               " m, " + fmt(wall) + " s");
}

void criterion_5() {
    io::Scenario sc = io::load_scenario(fx + "/c1_closedloop.json");
    bool ok = true;
    std::string detail;
    for (double scale : {0.7, 1.3}) {
        sc.k_scale = scale;
        const CableParams plant = sc.plant_params();
        FlatnessPlanner planner(sc.topo, sc.params, sc.quads, sc.flat);
        const SystemState init = initial_state(sc, planner);

        IntegralReplanner rep(planner, sc.feedback);
        const SimLog closed = simulate_closed_loop(sc.topo, plant, sc.quads, rep,
                                                   init, sc.sim, sc.controller);
        CachedPlanner cache(planner);
        auto refs = [&](double t) {
            return tracked_refs_from_sample(cache.at(t), sc.topo);
        };
        const SimLog open = simulate_tracked(sc.topo, plant, sc.quads, refs,
                                             init, sc.sim, sc.controller);

        const double t_from = 0.75 * sc.sim.duration;
        for (int i : output_indices(sc)) {
            const double ec = mean_error_from(closed, i, t_from);
            const double eo = mean_error_from(open, i, t_from);
            if (!(eo >= 2.0 * ec)) ok = false;
            detail += "k x" + fmt(scale) + " e" + std::to_string(i) +
                      " ratio " + fmt(eo / ec) + "; ";
        }
    }
    report(5, ok, "integral feedback halves mismatch error", detail);
}

void criterion_6() {
    bool ok = true;
    std::string detail;
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    // action equals reaction on every segment
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Vector3d a(u(rng), u(rng), u(rng));
        const Vector3d b = a + Vector3d(0.3 + std::abs(u(rng)), u(rng), u(rng));
        const double k = 1.0 + 14.0 * std::abs(u(rng));
        const double l0 = 0.05 + 0.3 * std::abs(u(rng));
        worst = std::max(
            worst,
            (spring_force(a, b, k, l0) + spring_force(b, a, k, l0)).norm());
    }
    if (worst > 1e-12) ok = false;
    detail += "third law " + fmt(worst) + "; ";

    // spring force is the negative gradient of the stored energy
    worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Vector3d a(u(rng), u(rng), u(rng));
        const Vector3d b = a + Vector3d(0.4, 0.1 * u(rng), 0.1 * u(rng));
        const double k = 12.0, l0 = 0.19, h = 1e-6;
        const Vector3d f = spring_force(a, b, k, l0);
        for (int ax = 0; ax < 3; ++ax) {
            Vector3d ap = a, am = a;
            ap[ax] += h;
            am[ax] -= h;
            const double fd = -(spring_energy(ap, b, k, l0) -
                                spring_energy(am, b, k, l0)) /
                              (2 * h);
            worst = std::max(worst, std::abs(fd - f[ax]) /
                                        std::max(1.0, std::abs(f[ax])));
        }
    }
    if (worst > 1e-6) ok = false;
    detail += "spring gradient " + fmt(worst) + "; ";

    // jet derivatives agree with finite differences through order 4
    {
        const Product sig(std::make_shared<Sinusoid>(0.7, 2.3, 0.4, 0.1),
                          std::make_shared<GaussianExp>(1.0, 0.8, 1.5, 0.9));
        worst = 0.0;
        const double h = 1e-5;
        for (double t : {0.3, 1.1, 2.4}) {
            for (int d = 1; d <= 4; ++d) {
                const double fd =
                    (sig.eval(t + h, d - 1)[d - 1] -
                     sig.eval(t - h, d - 1)[d - 1]) /
                    (2 * h);
                const double an = sig.eval(t, d)[d];
                worst = std::max(worst,
                                 std::abs(fd - an) / std::max(1.0, std::abs(an)));
            }
        }
        if (worst > 1e-4) ok = false;
        detail += "jet FD " + fmt(worst) + "; ";
    }

    const CableParams params =
        io::cable_params_from_json(io::load_json_file(fx + "/table1.json"));
    Topology topo;
    topo.cls = SystemClass::C;
    topo.n = 6;
    topo.robots = {1, 6};

    // fixed boundary does no work: damped energy never increases
    {
        const auto eq = static_equilibrium(topo, params, {{1, {0, 0, 1.0}},
                                                          {6, {1.05, 0, 1.0}}});
        std::vector<MassState> init(7);
        for (int i = 1; i <= 6; ++i) init[i].p = eq[i];
        init[3].p += Vector3d(0.01, 0.02, -0.01);
        init[4].v = {0.0, 0.1, 0.0};
        SimConfig cfg;
        cfg.dt = 1e-3;
        cfg.duration = 2.0;
        const SimLog log = simulate_boundary_driven(
            topo, params, {1, 6},
            [&](int i, double) { return MassState{eq[i], Vector3d::Zero()}; },
            init, cfg);
        double prev = std::numeric_limits<double>::infinity();
        double max_rise = 0.0;
        for (const auto& row : log.rows) {
            const double E =
                mechanical_energy(row.state, topo, params, {2, 3, 4, 5});
            max_rise = std::max(max_rise, E - prev);
            prev = E;
        }
        if (max_rise > 1e-12) ok = false;
        detail += "energy rise " + fmt(max_rise) + "; ";
    }

    // fourth-order step-size convergence on a short driven chain
    {
        Topology small;
        small.cls = SystemClass::B;
        small.n = 3;
        small.robots = {3};
        CableParams cp;
        cp.n = 3;
        cp.k = {1.0, 11.312, 5.411};
        cp.l0 = {1.0, 0.1950, 0.1942};
        cp.mass = {0.0, 7e-3 / 6, 7e-3 / 6, 7e-3 / 6};
        cp.c = {0.0, 0.002, 0.002, 0.002};
        const BoundarySignal boundary = [](int, double t) {
            MassState b;
            b.p = {0.05 * std::sin(3.0 * t), 0.0, 1.0 + 0.02 * std::sin(2.0 * t)};
            b.v = {0.15 * std::cos(3.0 * t), 0.0, 0.04 * std::cos(2.0 * t)};
            return b;
        };
        std::vector<MassState> init(4);
        init[1].p = {0, 0, 1.0 - 2 * 0.20};
        init[2].p = {0, 0, 1.0 - 0.20};
        auto final_pos = [&](double dt) {
            SimConfig cfg;
            cfg.dt = dt;
            cfg.duration = 0.4;
            cfg.log_every = 1;
            return simulate_boundary_driven(small, cp, {3}, boundary, init, cfg)
                .rows.back()
                .state.masses[1]
                .p;
        };
        const Vector3d ref = final_pos(1.25e-5);
        const double e1 = (final_pos(4e-4) - ref).norm();
        const double e2 = (final_pos(2e-4) - ref).norm();
        const double ratio = e1 / e2;
        if (!(ratio > 10.0 && ratio < 24.0)) ok = false;  // 16 for order 4
        detail += "step halving ratio " + fmt(ratio) + "; ";
    }

    // repeated runs are byte-identical
    {
        const io::Scenario sc = io::load_scenario(fx + "/a1_circle.json");
        FlatnessPlanner planner(sc.topo, sc.params, sc.quads, sc.flat);
        auto run_once = [&] {
            CachedPlanner cache(planner);
            auto refs = [&](double t) {
                return tracked_refs_from_sample(cache.at(t), sc.topo);
            };
            SimConfig cfg = sc.sim;
            cfg.duration = 1.0;
            std::ostringstream ss;
            io::write_simlog_csv(
                ss, simulate_tracked(sc.topo, sc.params, sc.quads, refs,
                                     state_from_sample(planner.eval(0.0), sc.topo),
                                     cfg, sc.controller));
            return ss.str();
        };
        const bool same = run_once() == run_once();
        if (!same) ok = false;
        detail += std::string("determinism ") + (same ? "exact" : "BROKEN");
    }

    report(6, ok, "physics and integrator invariants", detail);
}

void criterion_7() {
    Topology topo;
    topo.cls = SystemClass::C;
    topo.n = 2;
    topo.robots = {1, 2};
    const Vector3d offset(0.03, 0.0, 0.04);
    SimLog log;
    log.topo = topo;
    for (int s = 0; s < 40; ++s) {
        SimLogRow row;
        row.t = 0.01 * s;
        row.state.masses.resize(3);
        for (int i = 1; i <= 2; ++i) {
            const Vector3d ref(0.1 * i, -0.2 * s * i, 0.05 * s);
            row.ref_pos[i] = ref;
            row.state.masses[i].p = ref + offset;
        }
        log.rows.push_back(row);
    }
    const auto stats = output_error_metrics(log, {1, 2});
    bool ok = true;
    for (int i = 1; i <= 2; ++i) {
        if (std::abs(stats.at(i).mean - 0.05) > 1e-15) ok = false;
        if (std::abs(stats.at(i).max - 0.05) > 1e-15) ok = false;
    }

    const auto pub =
        io::published_averages_from_json(io::load_json_file(fx + "/table2.json"));
    const auto& a = pub.tables.at("test_a");
    const auto& b = pub.tables.at("test_b");
    const bool verbatim =
        a.at("narrow_slow").at(3) == 0.044 && a.at("narrow_slow").at(4) == 0.038 &&
        a.at("narrow_fast").at(3) == 0.071 && a.at("narrow_fast").at(4) == 0.057 &&
        a.at("wide_slow").at(3) == 0.037 && a.at("wide_slow").at(4) == 0.029 &&
        a.at("wide_fast").at(3) == 0.050 && a.at("wide_fast").at(4) == 0.041 &&
        b.at("narrow").at(3) == 0.030 && b.at("narrow").at(4) == 0.014 &&
        b.at("wide").at(3) == 0.027 && b.at("wide").at(4) == 0.021;
    if (!verbatim) ok = false;

    report(7, ok, "metric fidelity and published-average fixture",
           std::string("offset mean ") + fmt(stats.at(1).mean) +
               " m, fixture " + (verbatim ? "verbatim" : "MISMATCH"));
}

}  // namespace

int main() {
    using Criterion = void (*)();
    const Criterion criteria[] = {criterion_1, criterion_2, criterion_3,
                                  criterion_4, criterion_5, criterion_6,
                                  criterion_7};
    int id = 0;
    for (Criterion c : criteria) {
        ++id;
        try {
            c();
        } catch (const std::exception& e) {
            report(id, false, "unexpected exception", e.what());
        }
    }
    return any_failed ? 1 : 0;
}
