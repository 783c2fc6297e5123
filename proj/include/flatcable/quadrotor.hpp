#pragma once

// Quadrotor rigid-body dynamics, thrust/attitude reconstruction from flat
// trajectories, and an SE(3) geometric tracking controller.

#include <Eigen/Dense>
#include <cmath>

#include "flatcable/errors.hpp"
#include "flatcable/jet.hpp"

namespace flatcable {

inline constexpr double kThrustEps = 1e-4;  // N
inline constexpr double kAlignEps = 1e-3;   // yaw reference / body-z alignment

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d S;
    S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return S;
}

inline Eigen::Vector3d vee(const Eigen::Matrix3d& S) {
    return {S(2, 1), S(0, 2), S(1, 0)};
}

// Rodrigues exponential map so(3) -> SO(3).
inline Eigen::Matrix3d exp_so3(const Eigen::Vector3d& phi) {
    const double a = phi.norm();
    if (a < 1e-12) return Eigen::Matrix3d::Identity() + skew(phi);
    const Eigen::Matrix3d S = skew(phi / a);
    return Eigen::Matrix3d::Identity() + std::sin(a) * S +
           (1.0 - std::cos(a)) * S * S;
}

struct QuadParams {
    double m_R = 0.0;                                   // robot mass [kg]
    Eigen::Matrix3d J = Eigen::Matrix3d::Identity();    // inertia [kg m^2]
    int attach = 0;                                     // cable mass index j
    double f_max = 0.0;                                 // thrust saturation [N]

    // Combined mass of robot plus attached cable point.
    double total_mass(double attached_mass) const { return m_R + attached_mass; }

    void validate() const {
        if (m_R <= 0.0) throw SchemaError("quad params: m_R must be positive");
        if (f_max <= 0.0) throw SchemaError("quad params: f_max must be positive");
        if (!J.isApprox(J.transpose(), 1e-12))
            throw SchemaError("quad params: inertia must be symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(J);
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw SchemaError("quad params: inertia must be positive definite");
    }
};

struct QuadState {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();  // body -> world
    Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // body frame
};

struct QuadInput {
    double f = 0.0;                                 // total thrust [N]
    Eigen::Vector3d tau = Eigen::Vector3d::Zero();  // body torque [N m]
};

struct QuadDeriv {
    Eigen::Vector3d v, a;
    Eigen::Vector3d omega;      // attitude rate, body frame (R' = R omega^)
    Eigen::Vector3d omega_dot;
};

// Coupled rigid-body dynamics at the cable attachment. As printed, the
// kinematic equation reads R' = omega x R with a world-frame flavour; the
// body-frame convention R' = R omega^ consistent with the Euler equation is
// the one implemented and pinned by the invariant tests.
inline QuadDeriv quad_dynamics(const QuadState& state, const QuadInput& input,
                               const Eigen::Vector3d& f_right,
                               const Eigen::Vector3d& f_left,
                               const QuadParams& quad, double attached_mass,
                               double g) {
    const double m_bar = quad.total_mass(attached_mass);
    QuadDeriv d;
    d.v = state.v;
    d.a = (-m_bar * g * Eigen::Vector3d::UnitZ() + f_right - f_left +
           input.f * state.R.col(2)) / m_bar;
    d.omega = state.omega;
    d.omega_dot = quad.J.inverse() *
                  (-state.omega.cross(quad.J * state.omega) + input.tau);
    return d;
}

// Attitude, angular rates, thrust magnitude, and torque reconstructed from a
// thrust-vector jet and a yaw jet; intermediate frame x_c = (cos, sin, 0).
struct AttitudeSample {
    Eigen::Matrix3d R;
    Eigen::Vector3d omega, omega_dot;
    double f = 0.0;
    Eigen::Vector3d tau;
};

inline AttitudeSample attitude_from_flat(const VJet& thrust_vec, const SJet& yaw,
                                         const Eigen::Matrix3d& J) {
    if (thrust_vec.depth() < 2 || yaw.depth() < 2)
        throw InsufficientDepth("attitude_from_flat: jets must carry >= 2 orders");
    if (thrust_vec.value().norm() < kThrustEps)
        throw DegenerateThrust("attitude_from_flat: vanishing thrust", 0.0);

    const SJet f_jet = norm(thrust_vec);
    const VJet b3 = thrust_vec / f_jet;

    const auto [sy, cy] = sin_cos(yaw);
    const VJet xc = VJet::from_components(cy, sy, SJet::constant(0.0, yaw.depth()));

    const VJet b3xc = cross(b3, xc);
    if (b3xc.value().norm() < kAlignEps)
        throw GimbalDegeneracy("attitude_from_flat: body z aligned with yaw axis");
    const VJet b2 = unit(b3xc);
    const VJet b1 = cross(b2, b3);

    const int D = std::min({b1.depth(), b2.depth(), b3.depth()});
    auto col = [&](const VJet& b, int k) { return b[k]; };

    Eigen::Matrix3d R, Rd, Rdd;
    for (int c = 0; c < 3; ++c) {
        const VJet& b = (c == 0) ? b1 : (c == 1) ? b2 : b3;
        R.col(c) = col(b, 0);
        Rd.col(c) = D >= 1 ? col(b, 1) : Eigen::Vector3d::Zero();
        Rdd.col(c) = D >= 2 ? col(b, 2) : Eigen::Vector3d::Zero();
    }

    AttitudeSample out;
    out.R = R;
    out.f = f_jet.value();
    // R' = R omega^  =>  omega^ = R^T R'; differentiating once more,
    // omega'^ = R^T R'' - omega^ omega^ (skew part).
    const Eigen::Matrix3d W = R.transpose() * Rd;
    out.omega = vee(0.5 * (W - W.transpose()));
    const Eigen::Matrix3d Wd =
        R.transpose() * Rdd - skew(out.omega) * skew(out.omega);
    out.omega_dot = vee(0.5 * (Wd - Wd.transpose()));
    out.tau = J * out.omega_dot + out.omega.cross(J * out.omega);
    return out;
}

struct ControllerGains {
    // All gains are per unit mass / per unit inertia. The attitude loop is
    // tuned ~5x faster than the position loop (critically damped) so the
    // cascade stays stable; slower attitude gains destabilize the horizontal
    // channels (tilt lags the position command it must realize).
    double kp = 6.0, kv = 4.0, kR = 120.0, komega = 22.0;
};

struct TrackingReference {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    Eigen::Vector3d a = Eigen::Vector3d::Zero();
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d omega = Eigen::Vector3d::Zero();
    double yaw = 0.0;
    // Net planned cable force f_j - f_{j-1} on the robot, cancelled as a
    // thrust feed-forward so zero tracking error commands the planned input.
    Eigen::Vector3d cable_force = Eigen::Vector3d::Zero();
};

// SE(3) geometric tracking controller. Position/velocity errors command a
// thrust vector; the attitude command is rebuilt from that vector and the
// reference yaw, with the planned attitude as fallback near degeneracy.
// Returns the clamped input; the `saturated` flag reports thrust clamping
// (logged by callers, not fatal).
inline QuadInput geometric_tracking_control(const QuadState& state,
                                            const TrackingReference& ref,
                                            const QuadParams& quad,
                                            double attached_mass, double g,
                                            const ControllerGains& gains,
                                            bool* saturated = nullptr) {
    const double m_bar = quad.total_mass(attached_mass);
    const Eigen::Vector3d e_p = state.p - ref.p;
    const Eigen::Vector3d e_v = state.v - ref.v;

    const Eigen::Vector3d thrust_vec =
        m_bar * (-gains.kp * e_p - gains.kv * e_v + ref.a +
                 g * Eigen::Vector3d::UnitZ()) -
        ref.cable_force;

    QuadInput input;
    input.f = thrust_vec.dot(state.R.col(2));
    bool clamped = false;
    if (input.f < 0.0) { input.f = 0.0; clamped = true; }
    if (input.f > quad.f_max) { input.f = quad.f_max; clamped = true; }
    if (saturated) *saturated = clamped;

    Eigen::Matrix3d R_c = ref.R;
    if (thrust_vec.norm() > kThrustEps) {
        const Eigen::Vector3d b3 = thrust_vec.normalized();
        const Eigen::Vector3d xc(std::cos(ref.yaw), std::sin(ref.yaw), 0.0);
        const Eigen::Vector3d b3xc = b3.cross(xc);
        if (b3xc.norm() > kAlignEps) {
            const Eigen::Vector3d b2 = b3xc.normalized();
            R_c.col(0) = b2.cross(b3);
            R_c.col(1) = b2;
            R_c.col(2) = b3;
        }
    }

    const Eigen::Matrix3d E =
        R_c.transpose() * state.R - state.R.transpose() * R_c;
    const Eigen::Vector3d e_R = 0.5 * vee(E);
    const Eigen::Vector3d e_omega =
        state.omega - state.R.transpose() * R_c * ref.omega;
    input.tau = quad.J * (-gains.kR * e_R - gains.komega * e_omega) +
                state.omega.cross(quad.J * state.omega);
    return input;
}

inline double yaw_from_rotation(const Eigen::Matrix3d& R) {
    return std::atan2(R(1, 0), R(0, 0));
}

}  // namespace flatcable
