#pragma once

// Constructive differential-flatness trajectory generation. Starting from the
// flat outputs (selected cable-point positions plus robot yaws), the chain
// recursion alternates between solving the point-mass dynamics for the next
// segment force and inverting the spring law for the next mass position,
// resolving thrust and attitude whenever a robot index is reached. All
// quantities are propagated as jets, so the repeated differentiation the
// recursion requires is exact.

#include <Eigen/Dense>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flatcable/cable.hpp"
#include "flatcable/errors.hpp"
#include "flatcable/jet.hpp"
#include "flatcable/primitives.hpp"
#include "flatcable/quadrotor.hpp"

namespace flatcable {

inline constexpr double kForceEps = 1e-6;  // N, f_j != 0 assumption

// Linear spring law lifted to jets: force of the segment on its lower mass.
inline VJet spring_force_jet(const VJet& p_i, const VJet& p_next, double k,
                             double l0) {
    const VJet delta = p_i - p_next;
    if (delta.value().norm() < kSeparationEps)
        throw SeparationTooSmall("spring_force_jet: segment endpoints coincide");
    const SJet dist = norm(delta);
    return -k * (delta - l0 * (delta / dist));
}

// Ground-anchor force as a jet (class A only).
inline VJet anchor_force_jet(const VJet& p1, double k0, double l00) {
    if (p1.value().norm() < kSeparationEps)
        throw ZeroNorm("anchor_force_jet: mass 1 at the anchor point");
    const SJet dist = norm(p1);
    return k0 * (p1 - l00 * (p1 / dist));
}

// Segment force from the point-mass dynamics solved forward:
// f_i = m_i p_i'' + m_i g e3 + f_{i-1} + c_i p_i'.
inline VJet chain_force_jet(int i, const VJet& p_i, const VJet& f_prev,
                            const CableParams& params) {
    if (p_i.depth() < 2)
        throw InsufficientDepth("chain_force_jet: position jet needs >= 2 orders");
    const double m = params.mass[i];
    const VJet acc = derivative(derivative(p_i));
    const VJet grav = VJet::constant(m * params.g * Eigen::Vector3d::UnitZ(), acc.depth());
    return m * acc + grav + f_prev.truncated(std::min(f_prev.depth(), acc.depth())) +
           params.c[i] * derivative(p_i).truncated(acc.depth());
}

// Point-mass dynamics solved backward along decreasing indexes:
// f_{i-1} = f_i - m_i p_i'' - m_i g e3 - c_i p_i'.
inline VJet chain_force_jet_down(int i, const VJet& p_i, const VJet& f_i,
                                 const CableParams& params) {
    if (p_i.depth() < 2)
        throw InsufficientDepth("chain_force_jet_down: position jet needs >= 2 orders");
    const double m = params.mass[i];
    const VJet acc = derivative(derivative(p_i));
    const VJet grav = VJet::constant(m * params.g * Eigen::Vector3d::UnitZ(), acc.depth());
    return f_i.truncated(std::min(f_i.depth(), acc.depth())) - m * acc - grav -
           params.c[i] * derivative(p_i).truncated(acc.depth());
}

// Spring-law inversion: position of mass i+1 given p_i and the segment force.
// Given only the force, both a stretched and a compressed configuration solve
// the spring equation; the stretched (tension) branch is the physical one, is
// the one consistent with the static-equilibrium solver, and is pinned by the
// round-trip inversion tests.
inline VJet next_position_jet(int i, const VJet& p_i, const VJet& f_i,
                              const CableParams& params, double t = 0.0) {
    if (f_i.value().norm() < kForceEps)
        throw ZeroForce("next_position_jet: vanishing segment force", t, i);
    const SJet mag = norm(f_i);
    return p_i.truncated(std::min(p_i.depth(), f_i.depth())) +
           f_i / params.k[i] + params.l0[i] * (f_i / mag);
}

// Mirror inversion for the decreasing-index sweep: position of mass i given
// p_{i+1} and the force f_i the segment exerts on mass i.
inline VJet prev_position_jet(int i, const VJet& p_next, const VJet& f_i,
                              const CableParams& params, double t = 0.0) {
    if (f_i.value().norm() < kForceEps)
        throw ZeroForce("prev_position_jet: vanishing segment force", t, i);
    const SJet mag = norm(f_i);
    return p_next.truncated(std::min(p_next.depth(), f_i.depth())) -
           f_i / params.k[i] - params.l0[i] * (f_i / mag);
}

// Spring law applied at a robot whose upper neighbour is a flat output.
inline VJet robot_next_force_jet(int j, const VJet& p_j, const VJet& p_next,
                                 const CableParams& params) {
    return spring_force_jet(p_j, p_next, params.k[j], params.l0[j]);
}

// Thrust vector from the robot translational dynamics:
// u_j = mbar (p_Rj'' + g e3) - f_j + f_{j-1}.
inline VJet robot_thrust_jet(const VJet& p_R, const VJet& f_j, const VJet& f_prev,
                             double m_bar, double g) {
    if (p_R.depth() < 2)
        throw InsufficientDepth("robot_thrust_jet: position jet needs >= 2 orders");
    const VJet acc = derivative(derivative(p_R));
    const VJet grav = VJet::constant(m_bar * g * Eigen::Vector3d::UnitZ(), acc.depth());
    const int D = std::min({acc.depth(), f_j.depth(), f_prev.depth()});
    return (m_bar * acc + grav).truncated(D) - f_j.truncated(D) + f_prev.truncated(D);
}

// ---------------------------------------------------------------------------
// Flat-output specification
// ---------------------------------------------------------------------------

struct FlatOutputs {
    std::map<int, VectorSignal> positions;  // mass index -> trajectory
    std::map<int, SignalPtr> yaws;          // robot index -> yaw trajectory
    int pair_index = 0;                     // class C: lower index of the pair

    // 3 scalar channels per position output plus one yaw per robot.
    int scalar_channel_count() const {
        return 3 * static_cast<int>(positions.size()) +
               static_cast<int>(yaws.size());
    }
};

struct RobotPlanSample {
    Eigen::Vector3d p, v, a;
    Eigen::Matrix3d R;
    Eigen::Vector3d omega, omega_dot;
    double f = 0.0;
    Eigen::Vector3d tau;
    double yaw = 0.0;
};

struct PlanSample {
    double t = 0.0;
    // Indexed 1..n (entry 0 unused).
    std::vector<Eigen::Vector3d> p, v, a;
    // Segment forces indexed 0..n-1 (entry 0 meaningful for class A only).
    std::vector<Eigen::Vector3d> seg_force;
    std::map<int, RobotPlanSample> robots;
};

struct PlannedTrajectory {
    Topology topo;
    std::vector<PlanSample> samples;
    double rate = 100.0;
    int depth = 0;
    double max_residual = 0.0;
};

// Integral-feedback hooks: an additive offset injected into every
// position-inversion step of the corresponding sweep direction (zero jets in
// open-loop planning).
struct ChainCorrections {
    Eigen::Vector3d up = Eigen::Vector3d::Zero();
    Eigen::Vector3d down = Eigen::Vector3d::Zero();
};

// Dynamics residual of one planned sample: worst violation of the point-mass
// and robot translational equations of motion across all rows.
inline double plan_sample_residual(const PlanSample& s, const Topology& topo,
                                   const CableParams& params,
                                   const std::map<int, QuadParams>& quads) {
    double worst = 0.0;
    const Eigen::Vector3d gvec = params.g * Eigen::Vector3d::UnitZ();
    for (int i = 1; i <= topo.n; ++i) {
        const Eigen::Vector3d f_i =
            (i <= topo.n - 1) ? s.seg_force[i] : Eigen::Vector3d::Zero();
        const Eigen::Vector3d f_prev = (i - 1 >= topo.first_segment())
                                           ? s.seg_force[i - 1]
                                           : Eigen::Vector3d::Zero();
        if (!topo.is_robot(i)) {
            const double m = params.mass[i];
            const Eigen::Vector3d r = m * s.a[i] -
                (-m * gvec + f_i - f_prev - params.c[i] * s.v[i]);
            worst = std::max(worst, r.lpNorm<Eigen::Infinity>());
        } else {
            const auto& rs = s.robots.at(i);
            const double m_bar = quads.at(i).total_mass(params.mass[i]);
            const Eigen::Vector3d r = m_bar * rs.a -
                (-m_bar * gvec + f_i - f_prev + rs.f * rs.R.col(2));
            worst = std::max(worst, r.lpNorm<Eigen::Infinity>());
        }
    }
    return worst;
}

class FlatnessPlanner {
  public:
    FlatnessPlanner(Topology topo, CableParams params,
                    std::map<int, QuadParams> quads, FlatOutputs flat,
                    int depth = 0)
        : topo_(std::move(topo)), params_(std::move(params)),
          quads_(std::move(quads)), flat_(std::move(flat)),
          depth_(depth > 0 ? depth : default_depth(topo_)) {
        topo_.validate();
        params_.validate(topo_);
        validate_flat_set();
        if (depth_ < min_depth_required())
            throw InsufficientDepth("planner: jet depth " + std::to_string(depth_) +
                                    " below required " +
                                    std::to_string(min_depth_required()));
    }

    static int default_depth(const Topology& topo) { return 2 * topo.n + 6; }

    // Minimum jet depth for which every thrust jet still carries the two
    // orders the attitude reconstruction needs.
    int min_depth_required() const {
        for (int D = 4; D <= 2 * topo_.n + 8; ++D)
            if (depth_feasible(D)) return D;
        return 2 * topo_.n + 8;
    }

    int depth() const { return depth_; }
    const Topology& topology() const { return topo_; }
    const CableParams& params() const { return params_; }
    const std::map<int, QuadParams>& quads() const { return quads_; }
    const FlatOutputs& flat() const { return flat_; }

    PlanSample eval(double t) const { return eval(t, ChainCorrections{}); }

    PlanSample eval(double t, const ChainCorrections& corr) const {
        PlanSample s;
        s.t = t;
        s.p.assign(topo_.n + 1, Eigen::Vector3d::Zero());
        s.v.assign(topo_.n + 1, Eigen::Vector3d::Zero());
        s.a.assign(topo_.n + 1, Eigen::Vector3d::Zero());
        s.seg_force.assign(std::max(topo_.n, 1), Eigen::Vector3d::Zero());

        try {
            if (topo_.cls == SystemClass::C) {
                eval_class_c(t, corr, s);
            } else {
                const VJet p1 = flat_position(1, t);
                VJet f0(depth_);
                if (topo_.has_anchor()) {
                    f0 = anchor_force_jet(p1, params_.k[0], params_.l0[0]);
                    s.seg_force[0] = f0.value();
                }
                eval_chain_up(t, 1, p1, f0, corr, s);
            }
        } catch (ZeroForce& e) {
            throw ZeroForce(std::string(e.what()) + " at t=" + format_time(t) +
                            " (chain index " + std::to_string(e.segment) + ")",
                            t, e.segment);
        } catch (DegenerateThrust&) {
            throw DegenerateThrust("planner: vanishing thrust at t=" + format_time(t), t);
        }
        return s;
    }

    PlannedTrajectory plan(double t0, double duration, double rate = 100.0) const {
        PlannedTrajectory out;
        out.topo = topo_;
        out.rate = rate;
        out.depth = depth_;
        const int steps = static_cast<int>(std::llround(duration * rate));
        out.samples.reserve(steps + 1);
        for (int k = 0; k <= steps; ++k) {
            PlanSample s = eval(t0 + k / rate);
            out.max_residual = std::max(
                out.max_residual, plan_sample_residual(s, topo_, params_, quads_));
            out.samples.push_back(std::move(s));
        }
        return out;
    }

  private:
    static std::string format_time(double t) {
        std::ostringstream os;
        os << t;
        return os.str();
    }

    VJet flat_position(int i, double t) const {
        return flat_.positions.at(i).eval(t, depth_);
    }
    SJet flat_yaw(int j, double t) const { return flat_.yaws.at(j)->eval(t, depth_); }

    void record_mass(PlanSample& s, int i, const VJet& p) const {
        s.p[i] = p.value();
        s.v[i] = p[1];
        s.a[i] = p[2];
    }

    void record_robot(PlanSample& s, int j, const VJet& p, const VJet& f_j,
                      const VJet& f_prev, double t) const {
        const QuadParams& q = quads_.at(j);
        const double m_bar = q.total_mass(params_.mass[j]);
        const VJet u = robot_thrust_jet(p, f_j, f_prev, m_bar, params_.g);
        if (u.value().norm() < kThrustEps)
            throw DegenerateThrust("robot_thrust_jet: vanishing thrust", t);
        const SJet yaw = flat_yaw(j, t);
        const AttitudeSample att = attitude_from_flat(u, yaw, q.J);
        RobotPlanSample r;
        r.p = p.value();
        r.v = p[1];
        r.a = p[2];
        r.R = att.R;
        r.omega = att.omega;
        r.omega_dot = att.omega_dot;
        r.f = att.f;
        r.tau = att.tau;
        r.yaw = yaw.value();
        s.robots[j] = r;
        record_mass(s, j, p);
    }

    // Increasing-index sweep from mass `start` with its position jet and the
    // force of segment start-1 (or the anchor force) in hand.
    void eval_chain_up(double t, int start, VJet p_cur, VJet f_prev,
                       const ChainCorrections& corr, PlanSample& s) const {
        for (int m = start; m <= topo_.n; ++m) {
            VJet f_m(depth_);
            if (!topo_.is_robot(m)) {
                f_m = chain_force_jet(m, p_cur, f_prev, params_);
                record_mass(s, m, p_cur);
                s.seg_force[m] = f_m.value();
                VJet p_next = next_position_jet(m, p_cur, f_m, params_, t);
                if (corr.up != Eigen::Vector3d::Zero())
                    p_next = p_next + VJet::constant(corr.up, p_next.depth());
                p_cur = std::move(p_next);
            } else {
                if (m < topo_.n) {
                    const VJet p_next = flat_position(m + 1, t);
                    f_m = robot_next_force_jet(m, p_cur, p_next, params_);
                    s.seg_force[m] = f_m.value();
                    record_robot(s, m, p_cur, f_m, f_prev, t);
                    p_cur = p_next;
                } else {
                    f_m = VJet(f_prev.depth());  // no segment n
                    record_robot(s, m, p_cur, f_m, f_prev, t);
                }
            }
            f_prev = std::move(f_m);
        }
    }

    // Decreasing-index sweep from mass `start` with p_start and the force of
    // segment `start` in hand.
    void eval_chain_down(double t, int start, VJet p_cur, VJet f_cur,
                         const ChainCorrections& corr, PlanSample& s) const {
        for (int m = start; m >= 1; --m) {
            VJet f_prev(depth_);
            if (!topo_.is_robot(m)) {
                f_prev = chain_force_jet_down(m, p_cur, f_cur, params_);
                record_mass(s, m, p_cur);
                s.seg_force[m - 1] = f_prev.value();
                VJet p_below = prev_position_jet(m - 1, p_cur, f_prev, params_, t);
                if (corr.down != Eigen::Vector3d::Zero())
                    p_below = p_below + VJet::constant(corr.down, p_below.depth());
                p_cur = std::move(p_below);
            } else {
                if (m > 1) {
                    const VJet p_below = flat_position(m - 1, t);
                    f_prev = spring_force_jet(p_below, p_cur, params_.k[m - 1],
                                              params_.l0[m - 1]);
                    s.seg_force[m - 1] = f_prev.value();
                    record_robot(s, m, p_cur, f_cur, f_prev, t);
                    p_cur = p_below;
                } else {
                    f_prev = VJet(f_cur.depth());  // class C: f_0 = 0
                    record_robot(s, m, p_cur, f_cur, f_prev, t);
                }
            }
            f_cur = std::move(f_prev);
        }
    }

    void eval_class_c(double t, const ChainCorrections& corr, PlanSample& s) const {
        const int i = flat_.pair_index;
        const VJet p_i = flat_position(i, t);
        const VJet p_ip1 = flat_position(i + 1, t);
        const VJet f_i = spring_force_jet(p_i, p_ip1, params_.k[i], params_.l0[i]);
        if (f_i.value().norm() < kForceEps)
            throw ZeroForce("class c: vanishing force at the flat pair", t, i);
        s.seg_force[i] = f_i.value();
        eval_chain_up(t, i + 1, p_ip1, f_i, corr, s);
        eval_chain_down(t, i, p_i, f_i, corr, s);
    }

    void validate_flat_set() const {
        const int n_R = topo_.robot_count();
        std::map<int, VectorSignal> expected_pos;
        auto require_pos = [&](int i) {
            if (!flat_.positions.count(i))
                throw SchemaError("flat outputs: missing position channel p" +
                                  std::to_string(i));
        };
        int expected_positions = 0;
        if (topo_.cls == SystemClass::C) {
            const int i = flat_.pair_index;
            if (i < 1 || i + 1 > topo_.n)
                throw SchemaError("flat outputs: pair index out of range");
            if (topo_.is_robot(i) || topo_.is_robot(i + 1))
                throw SchemaError(
                    "flat outputs: pair touching a robot index is not supported");
            require_pos(i);
            require_pos(i + 1);
            expected_positions = 2;
            for (int j : topo_.robots) {
                if (j > i && j != topo_.n) { require_pos(j + 1); ++expected_positions; }
                if (j < i && j != 1) { require_pos(j - 1); ++expected_positions; }
            }
        } else {
            require_pos(1);
            expected_positions = 1;
            for (int j : topo_.robots)
                if (j != topo_.n) { require_pos(j + 1); ++expected_positions; }
        }
        for (int j : topo_.robots)
            if (!flat_.yaws.count(j))
                throw SchemaError("flat outputs: missing yaw channel for robot " +
                                  std::to_string(j));
        if (static_cast<int>(flat_.positions.size()) != expected_positions ||
            static_cast<int>(flat_.yaws.size()) != n_R)
            throw SchemaError("flat outputs: channel count must be exactly 4 n_R (" +
                              std::to_string(4 * n_R) + " scalars)");
        if (flat_.scalar_channel_count() != 4 * n_R)
            throw SchemaError("flat outputs: channel count must be exactly 4 n_R");
        for (int j : topo_.robots) {
            if (!quads_.count(j))
                throw SchemaError("planner: missing quadrotor parameters for robot " +
                                  std::to_string(j));
            quads_.at(j).validate();
        }
    }

    // Integer depth-propagation mirror of the recursion.
    bool depth_feasible(int D) const {
        auto up = [&](int start, int d_pos, int d_force) {
            for (int m = start; m <= topo_.n; ++m) {
                if (!topo_.is_robot(m)) {
                    const int d_f = std::min(d_pos - 2, d_force);
                    if (d_pos < 2) return false;
                    d_pos = d_f;
                    d_force = d_f;
                } else {
                    const int d_u = std::min(d_pos - 2, d_force);
                    if (d_pos < 2 || d_u < 2) return false;
                    if (m < topo_.n) {
                        d_force = std::min(d_pos, D);
                        d_pos = D;
                    }
                }
            }
            return true;
        };
        auto down = [&](int start, int d_pos, int d_force) {
            for (int m = start; m >= 1; --m) {
                if (!topo_.is_robot(m)) {
                    const int d_f = std::min(d_pos - 2, d_force);
                    if (d_pos < 2) return false;
                    d_pos = d_f;
                    d_force = d_f;
                } else {
                    const int d_u = std::min(d_pos - 2, d_force);
                    if (d_pos < 2 || d_u < 2) return false;
                    if (m > 1) {
                        d_force = std::min(d_pos, D);
                        d_pos = D;
                    }
                }
            }
            return true;
        };
        if (topo_.cls == SystemClass::C)
            return up(flat_.pair_index + 1, D, D) && down(flat_.pair_index, D, D);
        return up(1, D, D);
    }

    Topology topo_;
    CableParams params_;
    std::map<int, QuadParams> quads_;
    FlatOutputs flat_;
    int depth_;
};

}  // namespace flatcable
