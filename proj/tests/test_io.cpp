#include <doctest.h>

#include <cmath>
#include <sstream>

#include "flatcable/io.hpp"

using namespace flatcable;
using io::json;
using Eigen::Vector3d;

#ifndef FIXTURE_DIR
#define FIXTURE_DIR "fixtures"
#endif

namespace {
const std::string fx = FIXTURE_DIR;
}

TEST_CASE("cable params json round trip and normalization") {
    const json j = io::load_json_file(fx + "/table1.json");
    const CableParams p = io::cable_params_from_json(j);
    CHECK(p.n == 6);
    // files list segments 1..n-1 and points 1..n; index-0 slots get prepended
    REQUIRE(p.k.size() == 6);
    CHECK(p.k[1] == 11.312);
    CHECK(p.k[5] == 14.477);
    CHECK(p.l0[3] == 0.1827);
    REQUIRE(p.mass.size() == 7);
    CHECK(p.mass[0] == 0.0);
    CHECK(p.mass[6] == 0.00116);
    CHECK(p.g == 9.81);

    const CableParams again = io::cable_params_from_json(io::to_json(p));
    CHECK(again.k == p.k);
    CHECK(again.l0 == p.l0);
    CHECK(again.mass == p.mass);
    CHECK(again.c == p.c);

    json bad = j;
    bad["stiffness"] = 1.0;
    CHECK_THROWS_AS(io::cable_params_from_json(bad), SchemaError);
    bad = j;
    bad.erase("k");
    CHECK_THROWS_AS(io::cable_params_from_json(bad), SchemaError);
}

TEST_CASE("quad params json round trip") {
    const QuadParams q =
        io::quad_params_from_json(io::load_json_file(fx + "/crazyflie.json"));
    CHECK(q.m_R == 0.033);
    CHECK(q.f_max == 0.65);
    CHECK(q.J(2, 2) == 2.93e-5);

    const QuadParams again = io::quad_params_from_json(io::to_json(q));
    CHECK(again.m_R == q.m_R);
    CHECK(again.J.isApprox(q.J));

    json bad = io::to_json(q);
    bad["J"] = {1.0, 2.0, 3.0};  // not 3x3
    CHECK_THROWS_AS(io::quad_params_from_json(bad), SchemaError);
}

TEST_CASE("signal parsing matches direct construction") {
    const json poly = {{"primitive", "polynomial"},
                       {"coeffs", {1.0, -2.0, 0.5}},
                       {"t0", 0.3}};
    const json sine = {{"primitive", "sinusoid"},
                       {"amplitude", 0.75},
                       {"omega", 0.125},
                       {"phase", 0.2},
                       {"offset", 1.0}};
    const json gexp = {{"primitive", "gaussian_exp"},
                       {"x0", 0.65},
                       {"xa", 1.5},
                       {"t0", 5.0},
                       {"cx", 0.75}};
    const json total = {{"primitive", "sum"}, {"terms", {poly, sine, gexp}}};

    const SignalPtr parsed = io::signal_from_json(total);
    const Polynomial p({1.0, -2.0, 0.5}, 0.3);
    const Sinusoid s(0.75, 0.125, 0.2, 1.0);
    const GaussianExp g(0.65, 1.5, 5.0, 0.75);
    for (double t : {0.0, 1.7, 4.2, 6.0}) {
        const SJet got = parsed->eval(t, 4);
        const SJet want = p.eval(t, 4) + s.eval(t, 4) + g.eval(t, 4);
        for (int d = 0; d <= 4; ++d)
            CHECK(got[d] == doctest::Approx(want[d]).epsilon(1e-14));
    }

    CHECK_THROWS_AS(io::signal_from_json(json{{"primitive", "wavelet"}}),
                    SchemaError);
    json missing = sine;
    missing.erase("omega");
    CHECK_THROWS_AS(io::signal_from_json(missing), SchemaError);
    json extra = poly;
    extra["scale"] = 2.0;
    CHECK_THROWS_AS(io::signal_from_json(extra), SchemaError);
}

TEST_CASE("flat output channel parsing") {
    const json c = {{"primitive", "constant"}, {"value", 0.5}};
    json doc = {{"pair_index", 3},
                {"channels",
                 {{{"target", "p3"}, {"x", c}, {"y", c}, {"z", c}},
                  {{"target", "yaw1"}, {"signal", c}}}}};
    const FlatOutputs flat = io::flat_outputs_from_json(doc);
    CHECK(flat.pair_index == 3);
    CHECK(flat.positions.count(3) == 1);
    CHECK(flat.yaws.count(1) == 1);
    CHECK((flat.positions.at(3).eval(1.0, 2).value() - Vector3d::Constant(0.5))
              .norm() == 0.0);

    json dup = doc;
    dup["channels"].push_back(dup["channels"][0]);
    CHECK_THROWS_AS(io::flat_outputs_from_json(dup), SchemaError);
    json bad = doc;
    bad["channels"][0]["target"] = "q3";
    CHECK_THROWS_AS(io::flat_outputs_from_json(bad), SchemaError);
    bad["channels"][0]["target"] = "p";
    CHECK_THROWS_AS(io::flat_outputs_from_json(bad), SchemaError);
}

TEST_CASE("scenario loading") {
    const io::Scenario sc = io::load_scenario(fx + "/a1_circle.json");
    CHECK(sc.topo.cls == SystemClass::A);
    CHECK(sc.topo.n == 3);
    CHECK(sc.topo.robots == std::vector<int>{3});
    CHECK(sc.params.k[0] == 0.6);   // ground tether
    CHECK(sc.params.l0[0] == 0.5);
    CHECK(sc.quads.at(3).attach == 3);
    CHECK(sc.sim.duration == 12.5);
    CHECK(sc.mode == io::SimMode::Tracked);
    CHECK(!sc.config_hash.empty());
    CHECK(!sc.params_hash.empty());

    const io::Scenario cl = io::load_scenario(fx + "/c1_closedloop.json");
    CHECK(cl.mode == io::SimMode::ClosedLoop);
    CHECK(cl.has_feedback);
    CHECK(cl.k_scale == 0.7);
    CHECK(cl.plant_params().k[3] == doctest::Approx(15.519 * 0.7));
    CHECK(cl.params.k[3] == 15.519);  // model untouched

    json broken = io::load_json_file(fx + "/a1_circle.json");
    broken["extra_block"] = 1;
    CHECK_THROWS_AS(io::scenario_from_json(broken), SchemaError);
    broken = io::load_json_file(fx + "/a1_circle.json");
    broken["quads"].erase("3");
    CHECK_THROWS_AS(io::scenario_from_json(broken), SchemaError);
}

TEST_CASE("plan csv round trip") {
    const io::Scenario sc = io::load_scenario(fx + "/c1_eightshape.json");
    FlatnessPlanner planner(sc.topo, sc.params, sc.quads, sc.flat);
    const PlannedTrajectory plan = planner.plan(0.0, 0.5, 100.0);

    std::ostringstream ss;
    io::write_plan_csv(ss, plan, sc.config_hash, sc.params_hash);
    const std::string path = "/tmp/flatcable_test_plan.csv";
    io::write_text_file(path, ss.str());
    const PlannedTrajectory back = io::read_plan_csv(path, sc.topo);

    REQUIRE(back.samples.size() == plan.samples.size());
    CHECK(back.rate == doctest::Approx(100.0));
    for (size_t r = 0; r < plan.samples.size(); r += 7) {
        const PlanSample& a = plan.samples[r];
        const PlanSample& b = back.samples[r];
        CHECK(b.t == a.t);
        for (int i = 1; i <= sc.topo.n; ++i) {
            CHECK((a.p[i] - b.p[i]).norm() == 0.0);
            CHECK((a.v[i] - b.v[i]).norm() == 0.0);
            CHECK((a.a[i] - b.a[i]).norm() == 0.0);
        }
        for (int s = 1; s <= sc.topo.n - 1; ++s)
            CHECK((a.seg_force[s] - b.seg_force[s]).norm() == 0.0);
        for (int j : sc.topo.robots) {
            CHECK(b.robots.at(j).f == a.robots.at(j).f);
            CHECK(b.robots.at(j).yaw == a.robots.at(j).yaw);
            CHECK((b.robots.at(j).omega - a.robots.at(j).omega).norm() == 0.0);
            CHECK((b.robots.at(j).R - a.robots.at(j).R).norm() == 0.0);
        }
    }

    CHECK_THROWS_AS(io::read_plan_csv("/tmp/does_not_exist_plan.csv", sc.topo),
                    IoError);
    Topology wrong = sc.topo;
    wrong.n = 4;
    wrong.robots = {1, 4};
    CHECK_THROWS_AS(io::read_plan_csv(path, wrong), SchemaError);
}

TEST_CASE("marker csv round trip and validation") {
    RawSamples raw;
    for (int k = 0; k < 5; ++k) {
        raw.t.push_back(0.01 * k);
        std::vector<Vector3d> row(4, Vector3d::Zero());
        for (int i = 1; i <= 3; ++i)
            row[i] = Vector3d(i + 0.125 * k, -i, 0.5 * i * k);
        raw.pos.push_back(row);
    }
    const std::string path = "/tmp/flatcable_test_markers.csv";
    io::write_marker_csv(path, raw);
    const RawSamples back = io::read_marker_csv(path);
    REQUIRE(back.t.size() == 5);
    for (int k = 0; k < 5; ++k) {
        CHECK(back.t[k] == raw.t[k]);
        for (int i = 1; i <= 3; ++i)
            CHECK((back.pos[k][i] - raw.pos[k][i]).norm() == 0.0);
    }

    io::write_text_file(path, "time,p1x,p1y,p1z\n0,1,2,3\n");
    CHECK_THROWS_AS(io::read_marker_csv(path), SchemaError);
    io::write_text_file(path, "t,p1x,p1y,p1z\n0,1,2\n");
    CHECK_THROWS_AS(io::read_marker_csv(path), SchemaError);
    io::write_text_file(path, "t,p1x,p1y,p1z\n");
    CHECK_THROWS_AS(io::read_marker_csv(path), SchemaError);
}

TEST_CASE("metrics and published-averages documents") {
    std::map<int, OutputErrorStats> stats{{3, {0.01, 0.02}}, {4, {0.005, 0.03}}};
    const auto back = io::metrics_from_json(io::metrics_to_json(stats));
    CHECK(back.at(3).mean == 0.01);
    CHECK(back.at(4).max == 0.03);

    const auto pub =
        io::published_averages_from_json(io::load_json_file(fx + "/table2.json"));
    const auto& a = pub.tables.at("test_a");
    CHECK(a.at("narrow_slow").at(3) == 0.044);
    CHECK(a.at("narrow_slow").at(4) == 0.038);
    CHECK(a.at("narrow_fast").at(3) == 0.071);
    CHECK(a.at("narrow_fast").at(4) == 0.057);
    CHECK(a.at("wide_slow").at(3) == 0.037);
    CHECK(a.at("wide_slow").at(4) == 0.029);
    CHECK(a.at("wide_fast").at(3) == 0.050);
    CHECK(a.at("wide_fast").at(4) == 0.041);
    const auto& b = pub.tables.at("test_b");
    CHECK(b.at("narrow").at(3) == 0.030);
    CHECK(b.at("narrow").at(4) == 0.014);
    CHECK(b.at("wide").at(3) == 0.027);
    CHECK(b.at("wide").at(4) == 0.021);

    CHECK_THROWS_AS(io::published_averages_from_json(json::object()), SchemaError);
}

TEST_CASE("content hash is deterministic and content sensitive") {
    CHECK(io::fnv1a_hash("abc") == io::fnv1a_hash("abc"));
    CHECK(io::fnv1a_hash("abc") != io::fnv1a_hash("abd"));
    CHECK(io::fnv1a_hash("").size() == 16);
}

TEST_CASE("simlog csv carries provenance and references") {
    const io::Scenario sc = io::load_scenario(fx + "/a1_circle.json");
    FlatnessPlanner planner(sc.topo, sc.params, sc.quads, sc.flat);
    auto refs = [&](double t) {
        return tracked_refs_from_sample(planner.eval(t), sc.topo);
    };
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.duration = 0.05;
    cfg.log_every = 10;
    SimLog log = simulate_tracked(sc.topo, sc.params, sc.quads, refs,
                                  state_from_sample(planner.eval(0.0), sc.topo),
                                  cfg);
    log.config_hash = sc.config_hash;
    log.params_hash = sc.params_hash;
    std::ostringstream ss;
    io::write_simlog_csv(ss, log);
    const std::string text = ss.str();
    CHECK(text.find("# config_hash=" + sc.config_hash) != std::string::npos);
    CHECK(text.find("ref1x") != std::string::npos);
    CHECK(text.find("tau3z") != std::string::npos);
    CHECK(text.find("nan") == std::string::npos);
}
