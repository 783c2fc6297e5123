#pragma once

// Fixed-step RK4 integration of the coupled cable + quadrotor system.
// Modes:
//  - tracked: robots fly under the geometric controller toward supplied
//    references; every cable mass integrates.
//  - boundary-driven: robot/anchor positions are prescribed signals and only
//    the interior masses integrate (the identification setting; robots are
//    reduced to moving attachment points and their attitude is not simulated).
// Closed-loop runs are tracked runs whose reference source is re-evaluated at
// the control rate (see feedback.hpp).

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "flatcable/cable.hpp"
#include "flatcable/errors.hpp"
#include "flatcable/planner.hpp"
#include "flatcable/quadrotor.hpp"

namespace flatcable {

// Classical RK4 on a flat state vector.
template <class F>
Eigen::VectorXd rk4_step(const Eigen::VectorXd& x, F&& f, double dt) {
    if (!(dt > 0.0)) throw SchemaError("rk4_step: dt must be positive");
    const Eigen::VectorXd k1 = f(x);
    if (!k1.allFinite()) throw NonFiniteDerivative("rk4_step: non-finite derivative");
    const Eigen::VectorXd k2 = f(x + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = f(x + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = f(x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

enum class SimMode { Tracked, BoundaryDriven, ClosedLoop };

struct SimConfig {
    double dt = 1e-3;
    double duration = 0.0;
    double v_max = 50.0;       // instability detector [m/s]
    int log_every = 10;        // log decimation (10 -> 100 Hz at dt = 1 ms)

    void validate() const {
        if (!(dt > 0.0)) throw SchemaError("sim config: dt must be positive");
        if (duration < dt) throw SchemaError("sim config: duration must be >= dt");
        if (log_every < 1) throw SchemaError("sim config: log_every must be >= 1");
    }
    // RK4 stability guard for the stiffest spring mode.
    bool dt_stable(const CableParams& p, const Topology& topo) const {
        double w_max = 0.0;
        for (int s = topo.first_segment(); s < p.n; ++s)
            for (int i = 1; i <= p.n; ++i)
                w_max = std::max(w_max, std::sqrt(p.k[s] / p.mass[i]));
        return dt < 2.0 / w_max;
    }
};

struct SystemState {
    std::vector<MassState> masses;    // indexed 1..n (entry 0 unused)
    std::map<int, QuadState> quads;   // robot index -> state
};

struct SimLogRow {
    double t = 0.0;
    SystemState state;
    std::vector<Eigen::Vector3d> seg_force;   // indexed 0..n-1
    std::map<int, QuadInput> inputs;
    std::map<int, Eigen::Vector3d> ref_pos;   // reference positions, when known
};

struct SimLog {
    Topology topo;
    std::vector<SimLogRow> rows;
    int clamp_events = 0;
    std::string config_hash, params_hash;
};

namespace detail {

inline Eigen::Vector3d segment_force(int s, const std::vector<Eigen::Vector3d>& p,
                                     const Topology& topo, const CableParams& params) {
    if (s == 0) {
        if (!topo.has_anchor()) return Eigen::Vector3d::Zero();
        return ground_anchor_force(p[1], params.k[0], params.l0[0]);
    }
    return spring_force(p[s], p[s + 1], params.k[s], params.l0[s]);
}

inline std::vector<Eigen::Vector3d> all_segment_forces(
    const std::vector<Eigen::Vector3d>& p, const Topology& topo,
    const CableParams& params) {
    std::vector<Eigen::Vector3d> f(std::max(topo.n, 1), Eigen::Vector3d::Zero());
    for (int s = topo.first_segment(); s <= topo.n - 1; ++s)
        f[s] = segment_force(s, p, topo, params);
    return f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Boundary-driven rollout
// ---------------------------------------------------------------------------

// Prescribed motion of the boundary masses (every i in `driven`).
using BoundarySignal = std::function<MassState(int index, double t)>;

inline SimLog simulate_boundary_driven(const Topology& topo,
                                       const CableParams& params,
                                       const std::vector<int>& driven,
                                       const BoundarySignal& boundary,
                                       const std::vector<MassState>& initial_interior,
                                       const SimConfig& config,
                                       double t0 = 0.0) {
    config.validate();
    topo.validate();
    params.validate(topo);

    std::vector<int> interior;
    for (int i = 1; i <= topo.n; ++i)
        if (std::find(driven.begin(), driven.end(), i) == driven.end())
            interior.push_back(i);
    if (static_cast<int>(initial_interior.size()) != topo.n + 1)
        throw SchemaError("boundary-driven: initial state must cover indices 1..n "
                          "(driven entries ignored)");

    const int F = static_cast<int>(interior.size());
    Eigen::VectorXd x(6 * F);
    for (int a = 0; a < F; ++a) {
        x.segment<3>(6 * a) = initial_interior[interior[a]].p;
        x.segment<3>(6 * a + 3) = initial_interior[interior[a]].v;
    }

    auto positions_at = [&](const Eigen::VectorXd& xv, double t,
                            std::vector<Eigen::Vector3d>& p,
                            std::vector<Eigen::Vector3d>& v) {
        p.assign(topo.n + 1, Eigen::Vector3d::Zero());
        v.assign(topo.n + 1, Eigen::Vector3d::Zero());
        for (int a = 0; a < F; ++a) {
            p[interior[a]] = xv.segment<3>(6 * a);
            v[interior[a]] = xv.segment<3>(6 * a + 3);
        }
        for (int i : driven) {
            const MassState b = boundary(i, t);
            p[i] = b.p;
            v[i] = b.v;
        }
    };

    auto dynamics = [&](double t) {
        return [&, t](const Eigen::VectorXd& xv) {
            std::vector<Eigen::Vector3d> p, v;
            positions_at(xv, t, p, v);
            const auto f = detail::all_segment_forces(p, topo, params);
            Eigen::VectorXd dx(6 * F);
            for (int a = 0; a < F; ++a) {
                const int i = interior[a];
                const Eigen::Vector3d f_i =
                    (i <= topo.n - 1) ? f[i] : Eigen::Vector3d::Zero();
                const Eigen::Vector3d f_prev = (i - 1 >= topo.first_segment())
                                                   ? f[i - 1]
                                                   : Eigen::Vector3d::Zero();
                MassState ms{p[i], v[i]};
                dx.segment<3>(6 * a) = v[i];
                dx.segment<3>(6 * a + 3) =
                    mass_acceleration(i, ms, f_i, f_prev, params);
            }
            return dx;
        };
    };

    SimLog log;
    log.topo = topo;
    const int steps = static_cast<int>(std::llround(config.duration / config.dt));

    auto record = [&](double t, const Eigen::VectorXd& xv) {
        SimLogRow row;
        row.t = t;
        std::vector<Eigen::Vector3d> p, v;
        positions_at(xv, t, p, v);
        row.state.masses.resize(topo.n + 1);
        for (int i = 1; i <= topo.n; ++i) row.state.masses[i] = {p[i], v[i]};
        row.seg_force = detail::all_segment_forces(p, topo, params);
        log.rows.push_back(std::move(row));
    };

    record(t0, x);
    for (int step = 0; step < steps; ++step) {
        const double t = t0 + step * config.dt;
        // Stage times advance inside the step; dynamics closes over the
        // stage-start time through re-evaluation of the boundary signal.
        const Eigen::VectorXd k1 = dynamics(t)(x);
        if (!k1.allFinite())
            throw NonFiniteDerivative("boundary-driven: non-finite derivative at t=" +
                                      std::to_string(t));
        const Eigen::VectorXd k2 =
            dynamics(t + 0.5 * config.dt)(x + 0.5 * config.dt * k1);
        const Eigen::VectorXd k3 =
            dynamics(t + 0.5 * config.dt)(x + 0.5 * config.dt * k2);
        const Eigen::VectorXd k4 = dynamics(t + config.dt)(x + config.dt * k3);
        x += (config.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!x.allFinite())
            throw NonFiniteDerivative("boundary-driven: non-finite state at t=" +
                                      std::to_string(t));
        for (int a = 0; a < F; ++a)
            if (x.segment<3>(6 * a + 3).norm() > config.v_max)
                throw Error("boundary-driven: speed above v_max at t=" +
                            std::to_string(t + config.dt) + ", mass " +
                            std::to_string(interior[a]));
        if ((step + 1) % config.log_every == 0 || step + 1 == steps)
            record(t0 + (step + 1) * config.dt, x);
    }
    return log;
}

// ---------------------------------------------------------------------------
// Tracked (full-system) rollout
// ---------------------------------------------------------------------------

// Per-robot references at time t; may also carry cable reference positions
// for error metrics (key = mass index).
struct TrackedReferences {
    std::map<int, TrackingReference> robots;
    std::map<int, Eigen::Vector3d> cable_refs;
};
using ReferenceSource = std::function<TrackedReferences(double t)>;

// Controller references (with cable-force feed-forward) plus cable reference
// positions for error metrics, all read off one planned sample.
inline TrackedReferences tracked_refs_from_sample(const PlanSample& s,
                                                  const Topology& topo) {
    TrackedReferences r;
    for (const auto& [j, rp] : s.robots) {
        TrackingReference ref;
        ref.p = rp.p;
        ref.v = rp.v;
        ref.a = rp.a;
        ref.R = rp.R;
        ref.omega = rp.omega;
        ref.yaw = rp.yaw;
        const Eigen::Vector3d f_j =
            (j <= topo.n - 1) ? s.seg_force[j] : Eigen::Vector3d::Zero();
        const Eigen::Vector3d f_prev = (j - 1 >= topo.first_segment())
                                           ? s.seg_force[j - 1]
                                           : Eigen::Vector3d::Zero();
        ref.cable_force = f_j - f_prev;
        r.robots[j] = ref;
    }
    for (int i = 1; i <= topo.n; ++i) r.cable_refs[i] = s.p[i];
    return r;
}

// Full-system state read off one planned sample (used to start a tracked run
// on the trajectory).
inline SystemState state_from_sample(const PlanSample& s, const Topology& topo) {
    SystemState st;
    st.masses.resize(topo.n + 1);
    for (int i = 1; i <= topo.n; ++i) st.masses[i] = {s.p[i], s.v[i]};
    for (const auto& [j, rp] : s.robots) {
        QuadState q;
        q.p = rp.p;
        q.v = rp.v;
        q.R = rp.R;
        q.omega = rp.omega;
        st.quads[j] = q;
    }
    return st;
}

namespace detail {

struct TrackedDeriv {
    std::vector<Eigen::Vector3d> v, a;            // per mass, 1..n
    std::map<int, Eigen::Vector3d> omega, omega_dot;
};

}  // namespace detail

inline SimLog simulate_tracked(const Topology& topo, const CableParams& params,
                               const std::map<int, QuadParams>& quads,
                               const ReferenceSource& refs,
                               const SystemState& initial,
                               const SimConfig& config,
                               const ControllerGains& gains = {},
                               double t0 = 0.0) {
    config.validate();
    topo.validate();
    params.validate(topo);
    for (int j : topo.robots)
        if (!quads.count(j))
            throw SchemaError("tracked sim: missing quad params for robot " +
                              std::to_string(j));

    SystemState s = initial;
    if (static_cast<int>(s.masses.size()) != topo.n + 1)
        throw SchemaError("tracked sim: initial state must cover indices 1..n");
    for (int j : topo.robots) {
        if (!s.quads.count(j))
            throw SchemaError("tracked sim: initial quad state missing for robot " +
                              std::to_string(j));
        // Robot position and the attached mass position are one and the same.
        s.masses[j].p = s.quads.at(j).p;
        s.masses[j].v = s.quads.at(j).v;
    }

    SimLog log;
    log.topo = topo;

    auto eval_deriv = [&](const SystemState& st, double t,
                          std::map<int, QuadInput>* inputs_out) {
        std::vector<Eigen::Vector3d> p(topo.n + 1), v(topo.n + 1);
        for (int i = 1; i <= topo.n; ++i) { p[i] = st.masses[i].p; v[i] = st.masses[i].v; }
        const auto f = detail::all_segment_forces(p, topo, params);
        const TrackedReferences r = refs(t);

        detail::TrackedDeriv d;
        d.v.assign(topo.n + 1, Eigen::Vector3d::Zero());
        d.a.assign(topo.n + 1, Eigen::Vector3d::Zero());
        for (int i = 1; i <= topo.n; ++i) {
            const Eigen::Vector3d f_i =
                (i <= topo.n - 1) ? f[i] : Eigen::Vector3d::Zero();
            const Eigen::Vector3d f_prev = (i - 1 >= topo.first_segment())
                                               ? f[i - 1]
                                               : Eigen::Vector3d::Zero();
            if (!topo.is_robot(i)) {
                d.v[i] = v[i];
                d.a[i] = mass_acceleration(i, st.masses[i], f_i, f_prev, params);
            } else {
                const QuadState& q = st.quads.at(i);
                bool clamped = false;
                const QuadInput u = geometric_tracking_control(
                    q, r.robots.at(i), quads.at(i), params.mass[i], params.g,
                    gains, &clamped);
                if (clamped) ++log.clamp_events;
                const QuadDeriv qd =
                    quad_dynamics(q, u, f_i, f_prev, quads.at(i), params.mass[i], params.g);
                d.v[i] = qd.v;
                d.a[i] = qd.a;
                d.omega[i] = q.omega;
                d.omega_dot[i] = qd.omega_dot;
                if (inputs_out) (*inputs_out)[i] = u;
            }
        }
        return d;
    };

    auto advance = [&](const SystemState& st, const detail::TrackedDeriv& d,
                       double h) {
        SystemState out = st;
        for (int i = 1; i <= topo.n; ++i) {
            out.masses[i].p += h * d.v[i];
            out.masses[i].v += h * d.a[i];
        }
        for (int j : topo.robots) {
            QuadState& q = out.quads.at(j);
            q.p = out.masses[j].p;
            q.v = out.masses[j].v;
            q.R = st.quads.at(j).R * exp_so3(h * d.omega.at(j));
            q.omega += h * d.omega_dot.at(j);
        }
        return out;
    };

    auto record = [&](double t, const SystemState& st,
                      const std::map<int, QuadInput>& inputs) {
        SimLogRow row;
        row.t = t;
        row.state = st;
        std::vector<Eigen::Vector3d> p(topo.n + 1);
        for (int i = 1; i <= topo.n; ++i) p[i] = st.masses[i].p;
        row.seg_force = detail::all_segment_forces(p, topo, params);
        row.inputs = inputs;
        row.ref_pos = refs(t).cable_refs;
        log.rows.push_back(std::move(row));
    };

    const int steps = static_cast<int>(std::llround(config.duration / config.dt));
    {
        std::map<int, QuadInput> u0;
        eval_deriv(s, t0, &u0);
        record(t0, s, u0);
    }
    const double dt = config.dt;
    for (int step = 0; step < steps; ++step) {
        const double t = t0 + step * dt;
        std::map<int, QuadInput> inputs;
        const auto k1 = eval_deriv(s, t, &inputs);
        const auto k2 = eval_deriv(advance(s, k1, 0.5 * dt), t + 0.5 * dt, nullptr);
        const auto k3 = eval_deriv(advance(s, k2, 0.5 * dt), t + 0.5 * dt, nullptr);
        const auto k4 = eval_deriv(advance(s, k3, dt), t + dt, nullptr);

        SystemState next = s;
        for (int i = 1; i <= topo.n; ++i) {
            next.masses[i].p +=
                (dt / 6.0) * (k1.v[i] + 2.0 * k2.v[i] + 2.0 * k3.v[i] + k4.v[i]);
            next.masses[i].v +=
                (dt / 6.0) * (k1.a[i] + 2.0 * k2.a[i] + 2.0 * k3.a[i] + k4.a[i]);
        }
        for (int j : topo.robots) {
            QuadState& q = next.quads.at(j);
            q.p = next.masses[j].p;
            q.v = next.masses[j].v;
            // Exponential-map attitude update from the RK4-averaged body rate.
            const Eigen::Vector3d w_avg =
                (k1.omega.at(j) + 2.0 * k2.omega.at(j) + 2.0 * k3.omega.at(j) +
                 k4.omega.at(j)) / 6.0;
            q.R = s.quads.at(j).R * exp_so3(dt * w_avg);
            q.omega += (dt / 6.0) * (k1.omega_dot.at(j) + 2.0 * k2.omega_dot.at(j) +
                                     2.0 * k3.omega_dot.at(j) + k4.omega_dot.at(j));
        }
        s = std::move(next);

        for (int i = 1; i <= topo.n; ++i) {
            if (!s.masses[i].p.allFinite() || !s.masses[i].v.allFinite())
                throw NonFiniteDerivative("tracked sim: non-finite state at t=" +
                                          std::to_string(t + dt));
            if (s.masses[i].v.norm() > config.v_max)
                throw Error("tracked sim: speed above v_max at t=" +
                            std::to_string(t + dt) + ", mass " + std::to_string(i));
        }
        if ((step + 1) % config.log_every == 0 || step + 1 == steps)
            record(t0 + (step + 1) * dt, s, inputs);
    }
    return log;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

// Total mechanical energy: kinetic of the listed masses, all spring
// potentials, gravitational potential of the listed masses.
inline double mechanical_energy(const SystemState& st, const Topology& topo,
                                const CableParams& params,
                                const std::vector<int>& masses) {
    double E = 0.0;
    for (int i : masses) {
        E += 0.5 * params.mass[i] * st.masses[i].v.squaredNorm();
        E += params.mass[i] * params.g * st.masses[i].p.z();
    }
    for (int s = topo.first_segment(); s <= topo.n - 1; ++s) {
        if (s == 0) {
            const double e = st.masses[1].p.norm() - params.l0[0];
            E += 0.5 * params.k[0] * e * e;
        } else {
            E += spring_energy(st.masses[s].p, st.masses[s + 1].p, params.k[s],
                               params.l0[s]);
        }
    }
    return E;
}

struct OutputErrorStats {
    double mean = 0.0;
    double max = 0.0;
};

// Per-output time statistics of ||p_i^sim - p_i^ref|| (2-norm per sample,
// then time averaged).
inline std::map<int, OutputErrorStats> output_error_metrics(
    const SimLog& log, const std::vector<int>& outputs) {
    std::map<int, OutputErrorStats> stats;
    for (int i : outputs) {
        OutputErrorStats st;
        int count = 0;
        for (const auto& row : log.rows) {
            auto it = row.ref_pos.find(i);
            if (it == row.ref_pos.end()) continue;
            const double e = (row.state.masses[i].p - it->second).norm();
            st.mean += e;
            st.max = std::max(st.max, e);
            ++count;
        }
        if (count > 0) st.mean /= count;
        stats[i] = st;
    }
    return stats;
}

}  // namespace flatcable
