#pragma once

// Closed-loop cable-output control: the flatness recursion is re-executed at
// the control rate with an integral output-error correction injected into
// every position-inversion step, on both sweep directions. The corrected plan
// sample becomes the robots' tracking reference for the next control period.

#include <Eigen/Dense>
#include <cmath>

#include "flatcable/errors.hpp"
#include "flatcable/planner.hpp"
#include "flatcable/simulator.hpp"

namespace flatcable {

struct IntegralState {
    Eigen::Vector3d accum = Eigen::Vector3d::Zero();  // integral of e [m s]
    double clamp = 1.0;                               // anti-windup bound per axis
};

inline IntegralState integral_update(IntegralState s, const Eigen::Vector3d& e,
                                     double dt) {
    if (!(dt > 0.0)) throw SchemaError("integral_update: dt must be positive");
    if (!(s.clamp > 0.0)) throw SchemaError("integral_update: clamp must be positive");
    s.accum += e * dt;
    for (int a = 0; a < 3; ++a) s.accum(a) = std::clamp(s.accum(a), -s.clamp, s.clamp);
    return s;
}

struct GainConfig {
    Eigen::Vector3d KI = Eigen::Vector3d::Constant(0.2);  // diagonal, [1/s]
    double rate = 100.0;                                   // update rate [Hz]
    double clamp = 1.0;                                    // anti-windup [m s]

    void validate() const {
        // zero entries are allowed (disables the correction on that axis)
        if ((KI.array() < 0.0).any())
            throw SchemaError("gain config: K^I diagonal must be non-negative");
        if (!(rate > 0.0)) throw SchemaError("gain config: rate must be positive");
        if (!(clamp > 0.0)) throw SchemaError("gain config: clamp must be positive");
    }
};

// Re-plans the robot references each control tick. The two flat pair outputs
// each drive their own accumulator: the upper one corrects the
// increasing-index sweep, the lower one the decreasing-index sweep.
class IntegralReplanner {
  public:
    IntegralReplanner(FlatnessPlanner planner, GainConfig gains)
        : planner_(std::move(planner)), gains_(gains) {
        gains_.validate();
        if (planner_.topology().cls != SystemClass::C)
            throw SchemaError("integral replanner: requires a class-c topology");
        up_.clamp = gains_.clamp;
        down_.clamp = gains_.clamp;
    }

    // One control tick: accumulate the measured output errors, then run the
    // corrected recursion. dt defaults to the configured period;
    // `desired_out`, when given, receives the uncorrected plan sample.
    PlanSample replan_step(double t, const SystemState& measured, double dt = 0.0,
                           PlanSample* desired_out = nullptr) {
        const int i = planner_.flat().pair_index;
        const PlanSample desired = planner_.eval(t);
        if (desired_out) *desired_out = desired;
        const double h = dt > 0.0 ? dt : 1.0 / gains_.rate;
        up_ = integral_update(up_, desired.p[i + 1] - measured.masses[i + 1].p, h);
        down_ = integral_update(down_, desired.p[i] - measured.masses[i].p, h);
        return planner_.eval(t, corrections());
    }

    ChainCorrections corrections() const {
        return {gains_.KI.asDiagonal() * up_.accum,
                gains_.KI.asDiagonal() * down_.accum};
    }

    void reset() {
        up_.accum.setZero();
        down_.accum.setZero();
    }

    const FlatnessPlanner& planner() const { return planner_; }
    const GainConfig& gains() const { return gains_; }

  private:
    FlatnessPlanner planner_;
    GainConfig gains_;
    IntegralState up_, down_;
};

// Closed-loop rollout: the replanner is ticked at its own rate from the
// simulated (perfectly sensed) state; robots fly the geometric controller
// toward the corrected references in between. `plant` may differ from the
// replanner's model (that mismatch is the scenario under test).
inline SimLog simulate_closed_loop(const Topology& topo, const CableParams& plant,
                                   const std::map<int, QuadParams>& quads,
                                   IntegralReplanner& replanner,
                                   const SystemState& initial,
                                   const SimConfig& config,
                                   const ControllerGains& gains = {},
                                   double t0 = 0.0) {
    config.validate();
    const double period = 1.0 / replanner.gains().rate;
    const int steps_per_tick =
        static_cast<int>(std::llround(period / config.dt));
    if (steps_per_tick < 1 ||
        std::abs(steps_per_tick * config.dt - period) > 1e-9)
        throw SchemaError("closed loop: dt must divide the control period");

    SimLog log;
    log.topo = topo;
    SystemState state = initial;
    const int ticks =
        static_cast<int>(std::llround(config.duration / period));

    for (int tick = 0; tick < ticks; ++tick) {
        const double t = t0 + tick * period;
        PlanSample desired;
        const PlanSample corrected =
            replanner.replan_step(t, state, 0.0, &desired);
        TrackedReferences refs = tracked_refs_from_sample(corrected, topo);
        // error metrics are taken against the desired outputs, not the
        // corrected chain
        for (int i = 1; i <= topo.n; ++i) refs.cable_refs[i] = desired.p[i];

        SimConfig chunk = config;
        chunk.duration = period;
        const SimLog piece = simulate_tracked(
            topo, plant, quads, [&](double) { return refs; }, state, chunk,
            gains, t);

        state = piece.rows.back().state;
        log.clamp_events += piece.clamp_events;
        const size_t skip = (tick == 0) ? 0 : 1;  // drop duplicated seam row
        log.rows.insert(log.rows.end(), piece.rows.begin() + skip,
                        piece.rows.end());
    }
    return log;
}

}  // namespace flatcable
