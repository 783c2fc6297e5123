// Batch front end: trajectory planning, simulation, cable parameter
// identification, and metric reporting over JSON scenarios and CSV logs.
//
// Exit codes: 0 success, 2 schema/validation error, 3 recursion degeneracy,
// 4 I/O failure, 1 anything else.

#include <filesystem>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flatcable/io.hpp"

namespace {

using namespace flatcable;
using io::json;

constexpr int kExitSchema = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitIo = 4;

int run_guarded(const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const ZeroForce& e) {
        std::cerr << "error: " << e.what() << " (t=" << e.time
                  << " s, segment " << e.segment << ")\n";
        return kExitDegenerate;
    } catch (const DegenerateThrust& e) {
        std::cerr << "error: " << e.what() << " (t=" << e.time << " s)\n";
        return kExitDegenerate;
    } catch (const GimbalDegeneracy& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDegenerate;
    } catch (const InsufficientDepth& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDegenerate;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {  // schema, gaps, lambda, convergence
        std::cerr << "error: " << e.what() << '\n';
        return kExitSchema;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

// Runs one job per input with at most `jobs` in flight; rethrows the first
// failure after all jobs finish.
void for_each_parallel(const std::vector<std::string>& inputs, int jobs,
                       const std::function<void(const std::string&)>& work) {
    if (jobs < 1) throw SchemaError("--jobs must be >= 1");
    std::exception_ptr first_error;
    for (size_t base = 0; base < inputs.size(); base += jobs) {
        std::vector<std::future<void>> batch;
        for (size_t i = base; i < std::min(inputs.size(), base + jobs); ++i)
            batch.push_back(std::async(std::launch::async, work, inputs[i]));
        for (auto& f : batch) {
            try {
                f.get();
            } catch (...) {
                if (!first_error) first_error = std::current_exception();
            }
        }
    }
    if (first_error) std::rethrow_exception(first_error);
}

std::string out_path(const std::string& dir, const std::string& stem,
                     const std::string& suffix) {
    const std::string d = dir.empty() ? std::string(".") : dir;
    std::error_code ec;
    std::filesystem::create_directories(d, ec);
    if (ec) throw IoError("cannot create output directory: " + d);
    return d + "/" + stem + suffix;
}

std::string scenario_stem(const io::Scenario& sc, const std::string& path) {
    if (!sc.name.empty()) return sc.name;
    const size_t slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    const size_t dot = base.find_last_of('.');
    return dot == std::string::npos ? base : base.substr(0, dot);
}

std::vector<int> output_indices(const io::Scenario& sc) {
    std::vector<int> out;
    for (const auto& [i, sig] : sc.flat.positions) {
        (void)sig;
        out.push_back(i);
    }
    return out;
}

// Per-call planner sample cache: the RK4 stages revisit the same few stamps.
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

SystemState initial_state(const io::Scenario& sc, const FlatnessPlanner& planner) {
    SystemState st = state_from_sample(planner.eval(0.0), sc.topo);
    for (const auto& [i, off] : sc.initial_offsets) {
        st.masses[i].p += off;
        auto q = st.quads.find(i);
        if (q != st.quads.end()) q->second.p += off;
    }
    return st;
}

// --------------------------------------------------------------------------
// plan
// --------------------------------------------------------------------------

void cmd_plan(const std::string& path, const std::string& out_dir) {
    const io::Scenario sc = io::load_scenario(path);
    FlatnessPlanner planner(sc.topo, sc.params, sc.quads, sc.flat);
    const PlannedTrajectory plan =
        planner.plan(0.0, sc.sim.duration, sc.plan_rate);

    const std::string stem = scenario_stem(sc, path);
    io::write_plan_csv(out_path(out_dir, stem, "_plan.csv"), plan,
                       sc.config_hash, sc.params_hash);
    const json report{{"scenario", stem},
                      {"samples", plan.samples.size()},
                      {"rate", plan.rate},
                      {"depth", plan.depth},
                      {"max_residual", plan.max_residual},
                      {"config_hash", sc.config_hash},
                      {"params_hash", sc.params_hash}};
    io::write_text_file(out_path(out_dir, stem, "_plan_report.json"),
                        report.dump(2) + "\n");
    std::cout << stem << ": planned " << plan.samples.size()
              << " samples, max residual " << plan.max_residual << '\n';
}

// --------------------------------------------------------------------------
// simulate
// --------------------------------------------------------------------------

json metrics_with_provenance(const io::Scenario& sc,
                             const std::map<int, OutputErrorStats>& stats) {
    json doc = json::object();
    doc["outputs"] = io::metrics_to_json(stats);
    doc["config_hash"] = sc.config_hash;
    doc["params_hash"] = sc.params_hash;
    return doc;
}

void cmd_simulate(const std::string& path, const std::string& out_dir,
                  const std::string& mode_flag, const std::string& plan_path) {
    const io::Scenario sc = io::load_scenario(path);
    const io::SimMode mode =
        mode_flag.empty() ? sc.mode : io::sim_mode_from_string(mode_flag);
    const std::string stem = scenario_stem(sc, path);
    const CableParams plant = sc.plant_params();

    FlatnessPlanner planner(sc.topo, sc.params, sc.quads, sc.flat);
    if (!plan_path.empty()) {
        // Consistency gate: a supplied plan must describe this scenario.
        const PlannedTrajectory plan = io::read_plan_csv(plan_path, sc.topo);
        const PlanSample check = planner.eval(plan.samples.front().t);
        for (int i = 1; i <= sc.topo.n; ++i)
            if ((check.p[i] - plan.samples.front().p[i]).norm() > 1e-6)
                throw SchemaError("simulate: plan file does not match scenario");
    }

    if (mode == io::SimMode::Tracked) {
        CachedPlanner cache(planner);
        auto refs = [&](double t) {
            return tracked_refs_from_sample(cache.at(t), sc.topo);
        };
        SimLog log = simulate_tracked(sc.topo, plant, sc.quads, refs,
                                      initial_state(sc, planner), sc.sim,
                                      sc.controller);
        log.config_hash = sc.config_hash;
        log.params_hash = sc.params_hash;
        io::write_simlog_csv(out_path(out_dir, stem, "_log.csv"), log);
        const auto stats = output_error_metrics(log, output_indices(sc));
        io::write_text_file(out_path(out_dir, stem, "_metrics.json"),
                            metrics_with_provenance(sc, stats).dump(2) + "\n");
    } else if (mode == io::SimMode::BoundaryDriven) {
        CachedPlanner cache(planner);
        auto boundary = [&](int i, double t) {
            const PlanSample& s = cache.at(t);
            return MassState{s.p[i], s.v[i]};
        };
        SystemState init = initial_state(sc, planner);
        std::vector<MassState> interior(init.masses.begin(), init.masses.end());
        SimLog log = simulate_boundary_driven(sc.topo, plant, sc.topo.robots,
                                              boundary, interior, sc.sim);
        log.config_hash = sc.config_hash;
        log.params_hash = sc.params_hash;
        io::write_simlog_csv(out_path(out_dir, stem, "_log.csv"), log);
    } else {
        IntegralReplanner replanner(planner, sc.feedback);
        const SystemState init = initial_state(sc, planner);
        SimLog closed = simulate_closed_loop(sc.topo, plant, sc.quads, replanner,
                                             init, sc.sim, sc.controller);
        closed.config_hash = sc.config_hash;
        closed.params_hash = sc.params_hash;

        CachedPlanner cache(planner);
        auto refs = [&](double t) {
            return tracked_refs_from_sample(cache.at(t), sc.topo);
        };
        SimLog open = simulate_tracked(sc.topo, plant, sc.quads, refs, init,
                                       sc.sim, sc.controller);
        open.config_hash = sc.config_hash;
        open.params_hash = sc.params_hash;

        io::write_simlog_csv(out_path(out_dir, stem, "_closed_log.csv"), closed);
        io::write_simlog_csv(out_path(out_dir, stem, "_open_log.csv"), open);

        const auto outputs = output_indices(sc);
        const auto closed_stats = output_error_metrics(closed, outputs);
        const auto open_stats = output_error_metrics(open, outputs);
        json cmp = metrics_with_provenance(sc, closed_stats);
        cmp["open_loop"] = io::metrics_to_json(open_stats);
        json ratios = json::object();
        for (int i : outputs)
            if (closed_stats.at(i).mean > 0.0)
                ratios[std::to_string(i)] =
                    open_stats.at(i).mean / closed_stats.at(i).mean;
        cmp["open_over_closed_mean"] = ratios;
        io::write_text_file(out_path(out_dir, stem, "_metrics.json"),
                            cmp.dump(2) + "\n");
    }
    std::cout << stem << ": simulated (" << io::to_string(mode) << ", "
              << sc.sim.duration << " s)\n";
}

// --------------------------------------------------------------------------
// identify
// --------------------------------------------------------------------------

void cmd_identify(const std::string& data_path, const std::string& config_path,
                  const std::string& out, bool paper_exact) {
    const json cfg = io::load_json_file(config_path);
    io::detail::check_keys(cfg, "identify config", {"boundary", "total_mass"},
                           {"max_gap", "schedule", "cost", "theta0", "l0", "note"});
    std::vector<int> boundary;
    for (const auto& b : cfg.at("boundary")) {
        if (!b.is_number_integer())
            throw SchemaError("identify config: boundary must hold integers");
        boundary.push_back(b.get<int>());
    }
    const double total_mass =
        io::detail::get_number(cfg, "identify config", "total_mass");
    const int max_gap = cfg.contains("max_gap")
                            ? io::detail::get_int(cfg, "identify config", "max_gap")
                            : 10;

    IdentifyOptions opts;
    if (cfg.contains("schedule")) {
        const json& s = cfg.at("schedule");
        io::detail::check_keys(s, "schedule", {},
                               {"lambdas", "max_iters_per_stage", "grad_tol",
                                "rel_improvement_tol"});
        if (s.contains("lambdas"))
            opts.schedule.lambdas =
                io::detail::get_number_array(s, "schedule", "lambdas");
        if (s.contains("max_iters_per_stage"))
            opts.schedule.max_iters_per_stage =
                io::detail::get_int(s, "schedule", "max_iters_per_stage");
        opts.schedule.grad_tol = io::detail::get_number_or(
            s, "schedule", "grad_tol", opts.schedule.grad_tol);
        opts.schedule.rel_improvement_tol = io::detail::get_number_or(
            s, "schedule", "rel_improvement_tol", opts.schedule.rel_improvement_tol);
    }
    if (cfg.contains("cost")) {
        const json& c = cfg.at("cost");
        io::detail::check_keys(c, "cost", {}, {"window_s", "weights"});
        opts.cost.window_s =
            io::detail::get_number_or(c, "cost", "window_s", opts.cost.window_s);
        if (c.contains("weights")) {
            const auto w = io::detail::get_number_array(c, "cost", "weights");
            if (w.size() != 6) throw SchemaError("cost: weights must have 6 entries");
            for (int i = 0; i < 6; ++i) opts.cost.W(i) = w[i];
        }
    }
    // single multi-step window over the whole record
    if (paper_exact) opts.cost.window_s = 0.0;

    const RawSamples raw = io::read_marker_csv(data_path);
    MocapDataset data = preprocess(raw, boundary, total_mass, max_gap);
    if (cfg.contains("l0")) {
        // known rest lengths for segments 1..n-1, replacing the mean-separation
        // estimate (which carries the static elongation as bias)
        const auto l0 = io::detail::get_number_array(cfg, "identify config", "l0");
        if (static_cast<int>(l0.size()) != data.n - 1)
            throw SchemaError("identify config: l0 must list segments 1..n-1");
        for (int s = 1; s < data.n; ++s) data.l0[s] = l0[s - 1];
    }

    ThetaVector theta0;
    theta0.k.assign(std::max(0, data.n - 1), 10.0);
    theta0.c = 0.01;
    if (cfg.contains("theta0")) {
        const json& t0 = cfg.at("theta0");
        io::detail::check_keys(t0, "theta0", {}, {"k", "c"});
        if (t0.contains("k")) theta0.k = io::detail::get_number_array(t0, "theta0", "k");
        theta0.c = io::detail::get_number_or(t0, "theta0", "c", theta0.c);
    }

    const FitReport fit = identify(data, theta0, opts);

    json doc = io::fit_report_to_json(fit);
    doc["data_hash"] = io::fnv1a_hash(io::read_text_file(data_path));
    doc["config_hash"] = io::fnv1a_hash(cfg.dump());
    doc["paper_exact"] = paper_exact;
    io::write_text_file(out, doc.dump(2) + "\n");

    std::cout << "identified k = [";
    for (size_t i = 0; i < fit.theta.k.size(); ++i)
        std::cout << (i ? ", " : "") << fit.theta.k[i];
    std::cout << "], c = " << fit.theta.c
              << ", mean coordinate error " << fit.mean_coord_error << " m\n";
}

// --------------------------------------------------------------------------
// report
// --------------------------------------------------------------------------

void cmd_report(const std::vector<std::string>& metric_files,
                const std::string& out, const std::string& table2_path) {
    if (metric_files.empty() && table2_path.empty())
        throw SchemaError("report: no inputs given");

    std::ostringstream csv, human;
    csv << "source,output,mean,max\n";

    if (!table2_path.empty()) {
        const auto pub =
            io::published_averages_from_json(io::load_json_file(table2_path));
        human << "published averages (" << table2_path << "):\n";
        for (const auto& [test, cols] : pub.tables)
            for (const auto& [col, entries] : cols)
                for (const auto& [i, mean] : entries) {
                    human << "  " << test << "/" << col << "  e" << i << " = "
                          << mean << " m\n";
                    csv << test << "/" << col << ",e" << i << ',' << mean << ",\n";
                }
    }

    for (const std::string& path : metric_files) {
        const json doc = io::load_json_file(path);
        const json& outputs = doc.contains("outputs") ? doc.at("outputs") : doc;
        const auto stats = io::metrics_from_json(outputs);
        for (const auto& [i, st] : stats) {
            human << "  " << path << "  e" << i << "  mean " << st.mean
                  << " m, max " << st.max << " m\n";
            csv << path << ",e" << i << ',' << st.mean << ',' << st.max << '\n';
        }
    }

    std::cout << (human.str().empty() ? "(no rows)\n" : human.str());
    if (!out.empty()) io::write_text_file(out, csv.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"elasto-flexible cable + multi-quadrotor batch toolkit"};
    app.require_subcommand(1);

    std::vector<std::string> scenarios;
    std::string out_dir = ".";
    std::string mode_flag;
    std::string plan_path;
    int jobs = 1;

    CLI::App* plan = app.add_subcommand("plan", "plan trajectories from scenarios");
    plan->add_option("scenario", scenarios, "scenario JSON file(s)");
    plan->add_option("--out-dir", out_dir, "output directory");
    plan->add_option("--jobs", jobs, "max parallel scenarios");

    CLI::App* sim = app.add_subcommand("simulate", "simulate scenarios");
    sim->add_option("scenario", scenarios, "scenario JSON file(s)");
    sim->add_option("--out-dir", out_dir, "output directory");
    sim->add_option("--mode", mode_flag,
                    "tracked | boundary_driven | closed_loop (default: scenario)");
    sim->add_option("--plan", plan_path, "planned trajectory CSV to cross-check");
    sim->add_option("--jobs", jobs, "max parallel scenarios");

    std::string data_path, config_path, out_file = "fit_report.json";
    bool paper_exact = false;
    CLI::App* ident = app.add_subcommand("identify", "fit cable parameters");
    ident->add_option("data", data_path, "marker CSV (t,p1x,p1y,p1z,...)");
    ident->add_option("--config", config_path, "identification config JSON");
    ident->add_option("--out", out_file, "report JSON path");
    ident->add_flag("--paper-exact", paper_exact,
                    "single multi-step window instead of short windows");

    std::vector<std::string> metric_files;
    std::string report_out, table2_path;
    CLI::App* rep = app.add_subcommand("report", "consolidate metric files");
    rep->add_option("metrics", metric_files, "metrics JSON file(s)");
    rep->add_option("--out", report_out, "write consolidated CSV here");
    rep->add_option("--table2", table2_path, "published-averages fixture JSON");

    CLI11_PARSE(app, argc, argv);

    return run_guarded([&] {
        if (plan->parsed()) {
            if (scenarios.empty()) throw SchemaError("plan: no scenarios given");
            for_each_parallel(scenarios, jobs,
                              [&](const std::string& s) { cmd_plan(s, out_dir); });
        } else if (sim->parsed()) {
            if (scenarios.empty()) throw SchemaError("simulate: no scenarios given");
            if (!plan_path.empty() && scenarios.size() > 1)
                throw SchemaError("simulate: --plan requires a single scenario");
            for_each_parallel(scenarios, jobs, [&](const std::string& s) {
                cmd_simulate(s, out_dir, mode_flag, plan_path);
            });
        } else if (ident->parsed()) {
            if (data_path.empty()) throw SchemaError("identify: no data CSV given");
            if (config_path.empty())
                throw SchemaError("identify: --config is required");
            cmd_identify(data_path, config_path, out_file, paper_exact);
        } else if (rep->parsed()) {
            cmd_report(metric_files, report_out, table2_path);
        }
    });
}
