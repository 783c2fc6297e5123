#pragma once

// Lumped-mass cable model: n point masses joined by linear springs through
// passive spherical joints. Segment s joins mass s to mass s+1; for
// ground-anchored systems (class A) segment 0 joins the origin to mass 1.

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <vector>

#include "flatcable/errors.hpp"
#include "flatcable/jet.hpp"

namespace flatcable {

enum class SystemClass { A, B, C };

inline const char* to_string(SystemClass c) {
    switch (c) {
        case SystemClass::A: return "a";
        case SystemClass::B: return "b";
        default: return "c";
    }
}

struct Topology {
    SystemClass cls = SystemClass::C;
    int n = 0;                  // point-mass count, indices 1..n
    std::vector<int> robots;    // sorted ascending, subset of {1..n}

    bool has_anchor() const { return cls == SystemClass::A; }
    bool is_robot(int i) const {
        return std::binary_search(robots.begin(), robots.end(), i);
    }
    int robot_count() const { return static_cast<int>(robots.size()); }
    // Lowest segment index present: 0 with a ground anchor, else 1.
    int first_segment() const { return has_anchor() ? 0 : 1; }

    void validate() const {
        if (n < 1) throw SchemaError("topology: n must be >= 1");
        if (robots.empty()) throw SchemaError("topology: at least one robot required");
        if (!std::is_sorted(robots.begin(), robots.end()))
            throw SchemaError("topology: robot indices must be sorted ascending");
        for (int r : robots)
            if (r < 1 || r > n) throw SchemaError("topology: robot index out of range");
        if (std::adjacent_find(robots.begin(), robots.end()) != robots.end())
            throw SchemaError("topology: duplicate robot index");
        if ((cls == SystemClass::A || cls == SystemClass::B) && robots.back() != n)
            throw SchemaError("topology: classes a/b require a robot at index n");
        if (cls == SystemClass::C && (robots.front() != 1 || robots.back() != n))
            throw SchemaError("topology: class c requires robots at indices 1 and n");
    }
};

struct CableParams {
    int n = 0;
    // Per-segment stiffness [N/m] and rest length [m], indexed by segment
    // 0..n-1; entry 0 is meaningful only for class A.
    std::vector<double> k, l0;
    // Per-mass mass [kg] and viscous coefficient [N s/m], indexed 1..n
    // (entry 0 unused).
    std::vector<double> mass, c;
    double g = 9.81;

    void validate(const Topology& topo) const {
        if (n != topo.n) throw SchemaError("cable params: n mismatch with topology");
        if (static_cast<int>(k.size()) != n || static_cast<int>(l0.size()) != n)
            throw SchemaError("cable params: k and l0 must have n entries (segment 0..n-1)");
        if (static_cast<int>(mass.size()) != n + 1 || static_cast<int>(c.size()) != n + 1)
            throw SchemaError("cable params: mass and c must cover indices 1..n");
        for (int s = topo.first_segment(); s < n; ++s) {
            if (k[s] <= 0.0) throw SchemaError("cable params: stiffness must be positive");
            if (l0[s] <= 0.0) throw SchemaError("cable params: rest length must be positive");
        }
        for (int i = 1; i <= n; ++i) {
            if (mass[i] <= 0.0) throw SchemaError("cable params: mass must be positive");
            if (c[i] < 0.0) throw SchemaError("cable params: viscous coefficient must be >= 0");
        }
    }
};

struct MassState {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
};

// Force of segment (p_i, p_next) on mass i; -f acts on the far mass. The
// model is bilateral: compressed springs push, no tension-only switching.
inline Eigen::Vector3d spring_force(const Eigen::Vector3d& p_i,
                                    const Eigen::Vector3d& p_next,
                                    double k, double l0) {
    const Eigen::Vector3d delta = p_i - p_next;
    const double dist = delta.norm();
    if (dist < kSeparationEps)
        throw SeparationTooSmall("spring_force: segment endpoints coincide");
    return -k * (delta - (l0 / dist) * delta);
}

// Ground-anchor spring force f_0 = k0 (p_1 - l00 p_1/||p_1||). The inline
// model statement carries a "+" on the rest-length term, the recursion-facing
// statement a "-"; the latter is the one every downstream equation consumes,
// so it is the one implemented. Note the dynamics of mass 1 see -f_0.
inline Eigen::Vector3d ground_anchor_force(const Eigen::Vector3d& p_1,
                                           double k0, double l00) {
    const double dist = p_1.norm();
    if (dist < kSeparationEps)
        throw SeparationTooSmall("ground_anchor_force: mass 1 at the anchor point");
    return k0 * (p_1 - (l00 / dist) * p_1);
}

// Acceleration of free mass i given the adjacent segment forces:
// m_i a = -m_i g e3 + f_i - f_{i-1} - c_i v_i.
inline Eigen::Vector3d mass_acceleration(int i, const MassState& state,
                                         const Eigen::Vector3d& f_i,
                                         const Eigen::Vector3d& f_prev,
                                         const CableParams& params) {
    const double m = params.mass[i];
    return (-m * params.g * Eigen::Vector3d::UnitZ() + f_i - f_prev -
            params.c[i] * state.v) / m;
}

// dF/d(delta) of the spring law, used by the equilibrium Newton solver.
inline Eigen::Matrix3d spring_force_jacobian(const Eigen::Vector3d& delta,
                                             double k, double l0) {
    const double dist = delta.norm();
    const Eigen::Vector3d u = delta / dist;
    const Eigen::Matrix3d tangent =
        Eigen::Matrix3d::Identity() - u * u.transpose();
    return -k * (Eigen::Matrix3d::Identity() - (l0 / dist) * tangent);
}

namespace detail {

// Straight-line interpolation between fixed neighbours, with a slight sag to
// break the symmetry of slack configurations; masses hanging below the last
// fixed point start stacked at rest length.
inline std::vector<Eigen::Vector3d> equilibrium_initial_guess(
    const Topology& topo, const CableParams& params,
    const std::map<int, Eigen::Vector3d>& fixed) {
    const int n = topo.n;
    std::vector<Eigen::Vector3d> p(n + 1, Eigen::Vector3d::Zero());
    for (const auto& [i, pos] : fixed) p[i] = pos;

    auto fixed_below = [&](int i) {
        int best = -1;
        for (const auto& [j, pos] : fixed) { (void)pos; if (j < i && j > best) best = j; }
        if (best < 0 && topo.has_anchor()) best = 0;  // p[0] = origin
        return best;
    };
    auto fixed_above = [&](int i) {
        int best = n + 1;
        for (const auto& [j, pos] : fixed) { (void)pos; if (j > i && j < best) best = j; }
        return best <= n ? best : -1;
    };

    for (int i = 1; i <= n; ++i) {
        if (fixed.count(i)) continue;
        const int lo = fixed_below(i), hi = fixed_above(i);
        if (lo >= 0 && hi > 0) {
            const double a = double(i - lo) / double(hi - lo);
            p[i] = (1.0 - a) * p[lo] + a * p[hi];
            // Initial sag proportional to the slack selects the hanging
            // equilibrium branch over the inverted arch.
            double rest = 0.0;
            for (int s = std::max(lo, 1); s < hi; ++s) rest += params.l0[s];
            const double slack = std::max(1e-3, rest - (p[hi] - p[lo]).norm());
            p[i].z() -= 2.0 * slack * a * (1.0 - a);
        } else if (hi > 0) {
            // Hanging tail below the lowest fixed point (class b shape).
            p[i] = p[hi];
            double drop = 0.0;
            for (int s = i; s < hi; ++s) drop += params.l0[s];
            p[i].z() -= drop;
        } else if (lo >= 0) {
            p[i] = p[lo];
            double rise = 0.0;
            for (int s = lo; s < i; ++s) rise += params.l0[s];
            p[i].z() += rise;
        } else {
            throw SchemaError("static_equilibrium: no boundary data");
        }
    }
    return p;
}

}  // namespace detail

// Positions of all masses (index 0 = anchor when present) at which every
// non-fixed mass carries zero net force. `fixed` prescribes the robot-held
// masses; class A additionally anchors p_0 at the origin. Damped Newton on
// the stacked force residual.
inline std::vector<Eigen::Vector3d> static_equilibrium(
    const Topology& topo, const CableParams& params,
    const std::map<int, Eigen::Vector3d>& fixed,
    double tol = 1e-9, int max_iter = 200) {
    topo.validate();
    params.validate(topo);
    for (const auto& [i, pos] : fixed) {
        (void)pos;
        if (i < 1 || i > topo.n)
            throw SchemaError("static_equilibrium: fixed index out of range");
    }

    const int n = topo.n;
    std::vector<int> free;
    for (int i = 1; i <= n; ++i)
        if (!fixed.count(i)) free.push_back(i);

    std::vector<Eigen::Vector3d> p =
        detail::equilibrium_initial_guess(topo, params, fixed);
    if (free.empty()) return p;

    std::vector<int> slot(n + 1, -1);
    for (size_t a = 0; a < free.size(); ++a) slot[free[a]] = static_cast<int>(a);
    const int N = 3 * static_cast<int>(free.size());

    auto seg_force = [&](int s) -> Eigen::Vector3d {
        if (s == 0) return ground_anchor_force(p[1], params.k[0], params.l0[0]);
        return spring_force(p[s], p[s + 1], params.k[s], params.l0[s]);
    };

    auto residual = [&]() {
        Eigen::VectorXd r(N);
        for (size_t a = 0; a < free.size(); ++a) {
            const int i = free[a];
            Eigen::Vector3d f_i = Eigen::Vector3d::Zero();
            Eigen::Vector3d f_prev = Eigen::Vector3d::Zero();
            if (i < n) f_i = seg_force(i);
            if (i - 1 >= topo.first_segment()) f_prev = seg_force(i - 1);
            r.segment<3>(3 * a) =
                -params.mass[i] * params.g * Eigen::Vector3d::UnitZ() + f_i - f_prev;
        }
        return r;
    };

    auto jacobian = [&]() {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(N, N);
        auto add = [&](int row_mass, int col_mass, const Eigen::Matrix3d& blk) {
            if (slot[col_mass] < 0) return;
            J.block<3, 3>(3 * slot[row_mass], 3 * slot[col_mass]) += blk;
        };
        for (size_t a = 0; a < free.size(); ++a) {
            const int i = free[a];
            if (i < n) {
                const Eigen::Matrix3d G =
                    spring_force_jacobian(p[i] - p[i + 1], params.k[i], params.l0[i]);
                add(i, i, G);
                add(i, i + 1, -G);
            }
            if (i - 1 >= 1) {
                const Eigen::Matrix3d G = spring_force_jacobian(
                    p[i - 1] - p[i], params.k[i - 1], params.l0[i - 1]);
                // -f_{i-1} term; f_{i-1} depends on p_{i-1} (+G) and p_i (-G).
                add(i, i - 1, -G);
                add(i, i, G);
            } else if (i == 1 && topo.has_anchor()) {
                const double dist = p[1].norm();
                const Eigen::Vector3d u = p[1] / dist;
                const Eigen::Matrix3d G =
                    params.k[0] *
                    (Eigen::Matrix3d::Identity() -
                     (params.l0[0] / dist) *
                         (Eigen::Matrix3d::Identity() - u * u.transpose()));
                add(1, 1, -G);
            }
        }
        return J;
    };

    // Damped dynamic relaxation settles onto the stable branch (slack
    // cables admit an inverted-arch equilibrium the Newton polish would
    // otherwise happily converge to).
    {
        double w_max = 0.0;
        for (int s = topo.first_segment(); s < n; ++s)
            for (int i = 1; i <= n; ++i)
                w_max = std::max(w_max, std::sqrt(params.k[s] / params.mass[i]));
        const double dt = 0.3 / std::max(w_max, 1.0);
        std::vector<Eigen::Vector3d> vel(free.size(), Eigen::Vector3d::Zero());
        for (int step = 0; step < 200000; ++step) {
            const Eigen::VectorXd r0 = residual();
            if (r0.lpNorm<Eigen::Infinity>() < 1e-4) break;
            for (size_t a = 0; a < free.size(); ++a) {
                vel[a] = 0.95 * (vel[a] + dt * r0.segment<3>(3 * a) /
                                              params.mass[free[a]]);
                p[free[a]] += dt * vel[a];
            }
        }
    }

    Eigen::VectorXd r = residual();
    for (int iter = 0; iter < max_iter; ++iter) {
        if (r.lpNorm<Eigen::Infinity>() < tol) return p;
        const Eigen::VectorXd step = jacobian().fullPivLu().solve(-r);
        // Backtracking on the residual norm.
        double alpha = 1.0;
        const double base = r.squaredNorm();
        std::vector<Eigen::Vector3d> p_save = p;
        for (int bt = 0; bt < 40; ++bt) {
            for (size_t a = 0; a < free.size(); ++a)
                p[free[a]] = p_save[free[a]] + alpha * step.segment<3>(3 * a);
            Eigen::VectorXd r_try = residual();
            if (r_try.squaredNorm() < base) { r = r_try; break; }
            alpha *= 0.5;
            if (bt == 39) {
                p = p_save;
                throw NoConvergence("static_equilibrium: line search stalled");
            }
        }
    }
    throw NoConvergence("static_equilibrium: residual tolerance not reached");
}

// Total segment tension (signed elongation force magnitudes are recovered by
// callers from spring_force); mechanical energy helper for simulation checks.
inline double spring_energy(const Eigen::Vector3d& p_i, const Eigen::Vector3d& p_next,
                            double k, double l0) {
    const double e = (p_i - p_next).norm() - l0;
    return 0.5 * k * e * e;
}

}  // namespace flatcable
