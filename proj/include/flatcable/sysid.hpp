#pragma once

// Cable parameter identification from boundary-driven trajectory data. The
// unknowns are the interior segment stiffnesses and one shared viscous
// coefficient; rest lengths come from mean marker separations and the mass is
// distributed uniformly. The shooting objective blends a multi-step rollout
// error with a one-step-ahead prediction error through a homotopy weight
// lambda, which is stepped down over the optimization stages.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "flatcable/cable.hpp"
#include "flatcable/errors.hpp"
#include "flatcable/simulator.hpp"

namespace flatcable {

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

// Raw marker table: pos[k][i] (i = 1..n, entry 0 unused); NaN entries mark
// dropped frames.
struct RawSamples {
    std::vector<double> t;
    std::vector<std::vector<Eigen::Vector3d>> pos;
};

struct MocapDataset {
    int n = 0;
    double rate = 100.0;            // grid rate [Hz]
    std::vector<int> boundary;      // driven (input) mass indices, sorted
    std::vector<double> t;
    std::vector<std::vector<Eigen::Vector3d>> pos;  // [sample][mass 1..n]
    std::vector<std::vector<Eigen::Vector3d>> vel;  // central differences
    std::vector<double> l0;         // mean separations, segment 0..n-1
    double mass_per_point = 0.0;
    int filled_gaps = 0;            // interpolated samples (flagged, not fatal)

    double dt() const { return 1.0 / rate; }
    int samples() const { return static_cast<int>(t.size()); }

    std::vector<int> interior() const {
        std::vector<int> out;
        for (int i = 1; i <= n; ++i)
            if (!std::binary_search(boundary.begin(), boundary.end(), i))
                out.push_back(i);
        return out;
    }

    // Topology consistent with the driven boundary set (no ground anchor in
    // the identification setting).
    Topology topology() const {
        Topology topo;
        topo.n = n;
        topo.robots = boundary;
        topo.cls = (!boundary.empty() && boundary.front() == 1)
                       ? SystemClass::C
                       : SystemClass::B;
        return topo;
    }

    // Linear position interpolation between grid samples (stage times of the
    // integrator fall mid-interval).
    MassState boundary_state(int i, double time) const {
        const double s = (time - t.front()) * rate;
        const int k = std::clamp(static_cast<int>(std::floor(s)), 0, samples() - 2);
        const double a = std::clamp(s - k, 0.0, 1.0);
        MassState b;
        b.p = (1.0 - a) * pos[k][i] + a * pos[k + 1][i];
        b.v = (pos[k + 1][i] - pos[k][i]) * rate;
        return b;
    }

    BoundarySignal boundary_signal() const {
        return [this](int i, double time) { return boundary_state(i, time); };
    }
};

inline MocapDataset preprocess(const RawSamples& raw, std::vector<int> boundary,
                               double total_mass, int max_gap = 10) {
    if (raw.t.size() < 3) throw SchemaError("preprocess: need at least 3 samples");
    if (raw.pos.size() != raw.t.size())
        throw SchemaError("preprocess: time and position counts differ");
    const int n = static_cast<int>(raw.pos.front().size()) - 1;
    if (n < 2) throw SchemaError("preprocess: need at least 2 cable points");
    for (const auto& row : raw.pos)
        if (static_cast<int>(row.size()) != n + 1)
            throw SchemaError("preprocess: ragged position table");
    std::sort(boundary.begin(), boundary.end());
    if (boundary.empty() || boundary.back() != n)
        throw SchemaError("preprocess: boundary set must include the last index");
    if (total_mass <= 0.0) throw SchemaError("preprocess: total mass must be positive");

    MocapDataset d;
    d.n = n;
    d.boundary = boundary;
    d.t = raw.t;
    d.pos = raw.pos;

    const double dt0 = raw.t[1] - raw.t[0];
    if (!(dt0 > 0.0)) throw SchemaError("preprocess: time grid must increase");
    for (size_t k = 2; k < raw.t.size(); ++k)
        if (std::abs((raw.t[k] - raw.t[k - 1]) - dt0) > 1e-9 * std::max(1.0, raw.t[k]))
            throw SchemaError("preprocess: non-uniform time grid");
    d.rate = 1.0 / dt0;

    // Per-mass linear gap fill; a gap is a run of non-finite samples.
    const int K = d.samples();
    for (int i = 1; i <= n; ++i) {
        int k = 0;
        while (k < K) {
            if (d.pos[k][i].allFinite()) { ++k; continue; }
            int end = k;
            while (end < K && !d.pos[end][i].allFinite()) ++end;
            if (k == 0 || end == K)
                throw ExcessiveGaps("preprocess: gap touches the dataset edge, mass " +
                                    std::to_string(i));
            if (end - k > max_gap)
                throw ExcessiveGaps("preprocess: gap of " + std::to_string(end - k) +
                                    " samples exceeds limit, mass " + std::to_string(i));
            const Eigen::Vector3d a = d.pos[k - 1][i];
            const Eigen::Vector3d b = d.pos[end][i];
            for (int g = k; g < end; ++g) {
                const double w = double(g - k + 1) / double(end - k + 1);
                d.pos[g][i] = (1.0 - w) * a + w * b;
                ++d.filled_gaps;
            }
            k = end;
        }
    }

    // Central-difference velocities, one-sided at the ends.
    d.vel.assign(K, std::vector<Eigen::Vector3d>(n + 1, Eigen::Vector3d::Zero()));
    for (int i = 1; i <= n; ++i) {
        for (int k = 1; k + 1 < K; ++k)
            d.vel[k][i] = (d.pos[k + 1][i] - d.pos[k - 1][i]) * (0.5 * d.rate);
        d.vel[0][i] = (d.pos[1][i] - d.pos[0][i]) * d.rate;
        d.vel[K - 1][i] = (d.pos[K - 1][i] - d.pos[K - 2][i]) * d.rate;
    }

    // Rest lengths: mean separation of each segment over the whole dataset.
    d.l0.assign(n, 0.0);
    for (int s = 1; s < n; ++s) {
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += (d.pos[k][s] - d.pos[k][s + 1]).norm();
        d.l0[s] = acc / K;
    }
    d.l0[0] = 1.0;  // placeholder, no ground anchor in this setting
    d.mass_per_point = total_mass / n;
    return d;
}

// ---------------------------------------------------------------------------
// Parameter vector
// ---------------------------------------------------------------------------

// Interior segment stiffnesses k_1..k_{n-1} plus one shared damping c.
struct ThetaVector {
    std::vector<double> k;
    double c = 0.0;

    int dim() const { return static_cast<int>(k.size()) + 1; }

    Eigen::VectorXd to_vector() const {
        Eigen::VectorXd v(dim());
        for (size_t s = 0; s < k.size(); ++s) v(s) = k[s];
        v(dim() - 1) = c;
        return v;
    }
    static ThetaVector from_vector(const Eigen::VectorXd& v) {
        ThetaVector th;
        th.k.assign(v.data(), v.data() + v.size() - 1);
        th.c = v(v.size() - 1);
        return th;
    }
    void validate() const {
        for (double ki : k)
            if (!(ki > 0.0)) throw SchemaError("theta: stiffness must be positive");
        if (!(c > 0.0)) throw SchemaError("theta: damping must be positive");
    }

    CableParams to_params(const MocapDataset& d) const {
        if (static_cast<int>(k.size()) != d.n - 1)
            throw SchemaError("theta: expected n-1 stiffness entries");
        CableParams p;
        p.n = d.n;
        p.k.assign(d.n, 1.0);
        for (int s = 1; s < d.n; ++s) p.k[s] = k[s - 1];
        p.l0 = d.l0;
        p.mass.assign(d.n + 1, d.mass_per_point);
        p.c.assign(d.n + 1, c);
        return p;
    }
};

struct HomotopySchedule {
    std::vector<double> lambdas = {0.9, 0.5, 0.2, 0.05};
    int max_iters_per_stage = 40;
    double grad_tol = 1e-7;
    double rel_improvement_tol = 1e-7;

    void validate() const {
        if (lambdas.empty()) throw InvalidLambda("schedule: empty");
        double prev = 1.0;
        for (double l : lambdas) {
            if (!(l > 0.0 && l < 1.0))
                throw InvalidLambda("schedule: lambda must lie in (0,1)");
            if (!(l < prev))
                throw InvalidLambda("schedule: lambdas must be strictly decreasing");
            prev = l;
        }
    }
};

// ---------------------------------------------------------------------------
// Rollout and cost
// ---------------------------------------------------------------------------

namespace detail {

// Substeps per data interval keeping the stiffest spring mode well inside the
// RK4 accuracy region (omega * dt <= 0.3).
inline int substeps_for(const CableParams& p, double dt_data) {
    double w = 0.0;
    for (int s = 1; s < p.n; ++s)
        w = std::max(w, std::sqrt(p.k[s] / p.mass[1]));
    return std::max(1, static_cast<int>(std::ceil(dt_data * w / 0.3)));
}

}  // namespace detail

// Multi-step prediction of the interior masses over samples [w0, w1],
// integrated from the measured state at w0 with the measured boundary motion
// as input; returned rows align with the data grid.
inline SimLog rollout(const ThetaVector& theta, const MocapDataset& d, int w0,
                      int w1) {
    if (w0 < 0 || w1 >= d.samples() || w1 <= w0)
        throw SchemaError("rollout: window out of range");
    const CableParams params = theta.to_params(d);
    const Topology topo = d.topology();

    std::vector<MassState> init(d.n + 1);
    for (int i = 1; i <= d.n; ++i) init[i] = {d.pos[w0][i], d.vel[w0][i]};

    const int sub = detail::substeps_for(params, d.dt());
    SimConfig cfg;
    cfg.dt = d.dt() / sub;
    cfg.duration = (w1 - w0) * d.dt();
    cfg.log_every = sub;
    return simulate_boundary_driven(topo, params, d.boundary, d.boundary_signal(),
                                    init, cfg, d.t[w0]);
}

namespace detail {

// One RK4 step of the interior masses from a measured state (the one-step
// predictor x_c).
inline std::vector<MassState> one_step(const MocapDataset& d,
                                       const CableParams& params, int k) {
    const Topology topo = d.topology();
    std::vector<MassState> init(d.n + 1);
    for (int i = 1; i <= d.n; ++i) init[i] = {d.pos[k][i], d.vel[k][i]};
    const int sub = substeps_for(params, d.dt());
    SimConfig cfg;
    cfg.dt = d.dt() / sub;
    cfg.duration = d.dt();
    cfg.log_every = sub;
    const SimLog log = simulate_boundary_driven(
        topo, params, d.boundary, d.boundary_signal(), init, cfg, d.t[k]);
    std::vector<MassState> out(d.n + 1);
    for (int i = 1; i <= d.n; ++i) out[i] = log.rows.back().state.masses[i];
    return out;
}

}  // namespace detail

struct CostOptions {
    double window_s = 2.0;          // <= 0: single multi-step window
    Eigen::Matrix<double, 6, 1> W = Eigen::Matrix<double, 6, 1>::Ones();
};

struct CostBreakdown {
    double multi_step = 0.0;   // unweighted by lambda
    double one_step = 0.0;
    double total(double lambda) const {
        return multi_step / lambda + one_step / (1.0 - lambda);
    }
};

// Blended shooting cost over the interior masses; W weights the
// stacked (position, velocity) error.
inline CostBreakdown homotopy_cost_terms(const ThetaVector& theta,
                                         const MocapDataset& d,
                                         const CostOptions& opts) {
    const std::vector<int> interior = d.interior();
    const CableParams params = theta.to_params(d);
    CostBreakdown out;

    auto accumulate = [&](double& acc, const MassState& pred, int k, int i) {
        Eigen::Matrix<double, 6, 1> e;
        e << pred.p - d.pos[k][i], pred.v - d.vel[k][i];
        acc += e.dot(opts.W.asDiagonal() * e);
    };

    // Multi-step term, windowed re-initialization from measurements.
    const int K = d.samples();
    const int win = opts.window_s > 0.0
                        ? std::max(2, static_cast<int>(std::llround(
                                          opts.window_s * d.rate)))
                        : K - 1;
    for (int w0 = 0; w0 < K - 1; w0 += win) {
        const int w1 = std::min(w0 + win, K - 1);
        const SimLog log = rollout(theta, d, w0, w1);
        for (int k = w0 + 1; k <= w1; ++k) {
            const auto& row = log.rows[k - w0];
            for (int i : interior) accumulate(out.multi_step, row.state.masses[i], k, i);
        }
    }

    // One-step term: re-initialized from the measured state at the previous
    // sample, every sample.
    for (int k = 1; k < K; ++k) {
        const auto pred = detail::one_step(d, params, k - 1);
        for (int i : interior) accumulate(out.one_step, pred[i], k, i);
    }
    return out;
}

inline double homotopy_cost(const ThetaVector& theta, double lambda,
                            const MocapDataset& d, const CostOptions& opts = {}) {
    if (!(lambda > 0.0 && lambda < 1.0))
        throw InvalidLambda("homotopy_cost: lambda must lie in (0,1)");
    for (int a = 0; a < 6; ++a)
        if (!(opts.W(a) > 0.0))
            throw SchemaError("homotopy_cost: W must be positive definite");
    return homotopy_cost_terms(theta, d, opts).total(lambda);
}

// ---------------------------------------------------------------------------
// Staged identification
// ---------------------------------------------------------------------------

struct StageReport {
    double lambda = 0.0;
    double cost_start = 0.0, cost_end = 0.0;
    int iterations = 0;
};

struct FitReport {
    ThetaVector theta;
    std::vector<StageReport> stages;
    std::map<int, double> mean_pos_error;  // per interior mass [m]
    double mean_coord_error = 0.0;         // mean |error| per coordinate [m]
    double c_sensitivity = 0.0;            // |dJ/d log c| at the solution
    int filled_gaps = 0;
};

struct IdentifyOptions {
    HomotopySchedule schedule;
    CostOptions cost;
    double fd_rel_step = 1e-6;
    double theta_min = 1e-4, theta_max = 1e3;
};

namespace detail {

// Fit statistics of the multi-step rollout at theta (the reported
// figure of merit uses positions only).
inline void fill_fit_errors(const ThetaVector& theta, const MocapDataset& d,
                            const CostOptions& opts, FitReport& report) {
    const std::vector<int> interior = d.interior();
    const int K = d.samples();
    const int win = opts.window_s > 0.0
                        ? std::max(2, static_cast<int>(std::llround(
                                          opts.window_s * d.rate)))
                        : K - 1;
    std::map<int, double> acc;
    double coord_acc = 0.0;
    long coord_count = 0, per_mass_count = 0;
    for (int w0 = 0; w0 < K - 1; w0 += win) {
        const int w1 = std::min(w0 + win, K - 1);
        const SimLog log = rollout(theta, d, w0, w1);
        for (int k = w0 + 1; k <= w1; ++k) {
            for (int i : interior) {
                const Eigen::Vector3d e =
                    log.rows[k - w0].state.masses[i].p - d.pos[k][i];
                acc[i] += e.norm();
                coord_acc += e.cwiseAbs().sum();
                coord_count += 3;
            }
            ++per_mass_count;
        }
    }
    for (auto& [i, a] : acc) report.mean_pos_error[i] = a / per_mass_count;
    report.mean_coord_error = coord_count ? coord_acc / coord_count : 0.0;
}

}  // namespace detail

// Staged homotopy minimization: for each lambda, gradient descent in
// log-parameter space (positivity by construction) with forward-difference
// sensitivities and a backtracking line search, warm-started between stages.
inline FitReport identify(const MocapDataset& d, const ThetaVector& theta0,
                          const IdentifyOptions& opts = {}) {
    opts.schedule.validate();
    theta0.validate();
    if (static_cast<int>(theta0.k.size()) != d.n - 1)
        throw SchemaError("identify: theta0 must carry n-1 stiffness entries");

    const int dim = theta0.dim();
    const double lo = std::log(opts.theta_min), hi = std::log(opts.theta_max);
    auto clamp_phi = [&](Eigen::VectorXd phi) {
        for (int a = 0; a < dim; ++a) phi(a) = std::clamp(phi(a), lo, hi);
        return phi;
    };
    Eigen::VectorXd phi = clamp_phi(theta0.to_vector().array().log().matrix());

    // Unstable or blown-up candidates are scored, not fatal: the line search
    // backs away from them.
    auto cost_at = [&](const Eigen::VectorXd& ph, double lambda) {
        try {
            return homotopy_cost(
                ThetaVector::from_vector(ph.array().exp().matrix()), lambda, d,
                opts.cost);
        } catch (const SchemaError&) {
            throw;
        } catch (const InvalidLambda&) {
            throw;
        } catch (const Error&) {
            return 1e30;
        }
    };
    auto gradient = [&](const Eigen::VectorXd& ph, double lambda, double f0) {
        Eigen::VectorXd g(dim);
        for (int a = 0; a < dim; ++a) {
            const double h = opts.fd_rel_step * std::max(1.0, std::abs(ph(a)));
            Eigen::VectorXd pp = ph;
            pp(a) += h;
            g(a) = (cost_at(pp, lambda) - f0) / h;
        }
        return g;
    };

    FitReport report;
    report.filled_gaps = d.filled_gaps;
    bool any_improvement = false;

    for (size_t stage = 0; stage < opts.schedule.lambdas.size(); ++stage) {
        const double lambda = opts.schedule.lambdas[stage];
        StageReport sr;
        sr.lambda = lambda;
        double f = cost_at(phi, lambda);
        sr.cost_start = f;

        // BFGS in log-parameter space with a backtracking Armijo line search.
        Eigen::MatrixXd H = Eigen::MatrixXd::Identity(dim, dim);
        Eigen::VectorXd g = gradient(phi, lambda, f);
        for (int it = 0; it < opts.schedule.max_iters_per_stage; ++it) {
            if (g.norm() < opts.schedule.grad_tol * std::max(1.0, f)) break;
            Eigen::VectorXd dir = -(H * g);
            if (dir.dot(g) >= 0.0) {  // curvature model broke down: reset
                H.setIdentity();
                dir = -g;
            }
            // cap the first trial so a raw-gradient step stays O(1) in log
            // space
            const double cap = 1.0 / std::max(1.0, dir.norm());
            bool improved = false;
            double alpha = std::min(1.0, cap);
            Eigen::VectorXd phi_new, g_new;
            for (int bt = 0; bt < 25; ++bt) {
                const Eigen::VectorXd cand = clamp_phi(phi + alpha * dir);
                const double fc = cost_at(cand, lambda);
                if (fc < f + 1e-4 * alpha * dir.dot(g)) {
                    phi_new = cand;
                    f = fc;
                    improved = true;
                    any_improvement = true;
                    break;
                }
                alpha *= 0.5;
            }
            ++sr.iterations;
            if (!improved) {
                // A stage that cannot reduce a substantial cost from a cold
                // start is a solver failure; stalling near a found optimum
                // (FD-noise-limited) is normal convergence.
                if (it == 0 && !any_improvement && f > 1e-6)
                    throw NoDescent("identify: no descent direction at stage " +
                                        std::to_string(stage) + " (lambda=" +
                                        std::to_string(lambda) + ")",
                                    static_cast<int>(stage));
                break;
            }
            g_new = gradient(phi_new, lambda, f);
            const Eigen::VectorXd sv = phi_new - phi;
            const Eigen::VectorXd yv = g_new - g;
            const double sy = sv.dot(yv);
            if (sy > 1e-12 * sv.norm() * yv.norm()) {
                const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(dim, dim);
                const double rho = 1.0 / sy;
                H = (I - rho * sv * yv.transpose()) * H *
                        (I - rho * yv * sv.transpose()) +
                    rho * sv * sv.transpose();
            }
            phi = phi_new;
            g = g_new;
        }
        sr.cost_end = f;
        report.stages.push_back(sr);
    }

    report.theta = ThetaVector::from_vector(phi.array().exp().matrix());

    // Sensitivity of the final-stage cost to the damping parameter; near-zero
    // flags an unidentifiable c (e.g. static data with no velocities).
    {
        const double lambda = opts.schedule.lambdas.back();
        const double f0 = cost_at(phi, lambda);
        Eigen::VectorXd pp = phi;
        pp(dim - 1) += 1e-4;
        report.c_sensitivity = std::abs(cost_at(pp, lambda) - f0) / 1e-4;
    }
    detail::fill_fit_errors(report.theta, d, opts.cost, report);
    return report;
}

}  // namespace flatcable
