#pragma once

// Truncated Taylor ("jet") arithmetic: a jet carries the value and the time
// derivatives d^0..d^D of a scalar or 3-vector signal at one instant. All
// elementary operations propagate derivatives in closed form, so repeated
// differentiation chains introduce no numerical-differentiation error.

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "flatcable/errors.hpp"

namespace flatcable {

inline constexpr double kSeparationEps = 1e-6;  // m, minimum admissible norm

namespace detail {

// Binomial coefficients C(n, k), n <= row limit. Exact in double well past
// any depth this library uses.
inline double binom(int n, int k) {
    static const auto table = [] {
        constexpr int N = 64;
        std::vector<std::vector<double>> t(N);
        for (int i = 0; i < N; ++i) {
            t[i].resize(i + 1);
            t[i][0] = t[i][i] = 1.0;
            for (int j = 1; j < i; ++j) t[i][j] = t[i - 1][j - 1] + t[i - 1][j];
        }
        return t;
    }();
    return table[n][k];
}

inline double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scalar jet
// ---------------------------------------------------------------------------

class SJet {
  public:
    SJet() = default;
    explicit SJet(int depth) : d_(depth + 1, 0.0) {}

    static SJet constant(double value, int depth) {
        SJet j(depth);
        j.d_[0] = value;
        return j;
    }
    // Jet of the running time variable t itself.
    static SJet variable(double t, int depth) {
        SJet j(depth);
        j.d_[0] = t;
        if (depth >= 1) j.d_[1] = 1.0;
        return j;
    }

    int depth() const { return static_cast<int>(d_.size()) - 1; }
    double value() const { return d_[0]; }
    double operator[](int k) const { return d_[k]; }
    double& operator[](int k) { return d_[k]; }

    SJet truncated(int depth) const {
        if (depth > this->depth())
            throw InsufficientDepth("jet truncation beyond available depth");
        SJet j(depth);
        for (int k = 0; k <= depth; ++k) j.d_[k] = d_[k];
        return j;
    }

  private:
    std::vector<double> d_;
};

inline int common_depth(const SJet& a, const SJet& b) {
    return std::min(a.depth(), b.depth());
}

inline SJet operator+(const SJet& a, const SJet& b) {
    const int D = common_depth(a, b);
    SJet r(D);
    for (int k = 0; k <= D; ++k) r[k] = a[k] + b[k];
    return r;
}

inline SJet operator-(const SJet& a, const SJet& b) {
    const int D = common_depth(a, b);
    SJet r(D);
    for (int k = 0; k <= D; ++k) r[k] = a[k] - b[k];
    return r;
}

inline SJet operator-(const SJet& a) {
    SJet r(a.depth());
    for (int k = 0; k <= a.depth(); ++k) r[k] = -a[k];
    return r;
}

inline SJet operator*(double s, const SJet& a) {
    SJet r(a.depth());
    for (int k = 0; k <= a.depth(); ++k) r[k] = s * a[k];
    return r;
}
inline SJet operator*(const SJet& a, double s) { return s * a; }

// Leibniz product rule: (fg)^(k) = sum_j C(k,j) f^(j) g^(k-j).
inline SJet operator*(const SJet& a, const SJet& b) {
    const int D = common_depth(a, b);
    SJet r(D);
    for (int k = 0; k <= D; ++k) {
        double s = 0.0;
        for (int j = 0; j <= k; ++j) s += detail::binom(k, j) * a[j] * b[k - j];
        r[k] = s;
    }
    return r;
}

// Quotient h = a/b, solved order by order from a = h*b.
inline SJet operator/(const SJet& a, const SJet& b) {
    if (std::abs(b.value()) < kSeparationEps)
        throw ZeroNorm("jet quotient: divisor value near zero");
    const int D = common_depth(a, b);
    SJet h(D);
    for (int k = 0; k <= D; ++k) {
        double s = a[k];
        for (int j = 1; j <= k; ++j) s -= detail::binom(k, j) * b[j] * h[k - j];
        h[k] = s / b[0];
    }
    return h;
}

inline SJet operator/(const SJet& a, double s) { return (1.0 / s) * a; }

// Jet of the derivative signal: one order shallower.
inline SJet derivative(const SJet& a) {
    if (a.depth() < 1)
        throw InsufficientDepth("derivative of a depth-0 jet");
    SJet r(a.depth() - 1);
    for (int k = 0; k < a.depth(); ++k) r[k] = a[k + 1];
    return r;
}

// s = sqrt(a), from 2 s0 s^(k) = a^(k) - sum_{0<j<k} C(k,j) s^(j) s^(k-j).
inline SJet sqrt(const SJet& a) {
    if (a.value() <= 0.0)
        throw ZeroNorm("jet sqrt of non-positive value");
    const int D = a.depth();
    SJet s(D);
    s[0] = std::sqrt(a.value());
    for (int k = 1; k <= D; ++k) {
        double acc = a[k];
        for (int j = 1; j < k; ++j) acc -= detail::binom(k, j) * s[j] * s[k - j];
        s[k] = acc / (2.0 * s[0]);
    }
    return s;
}

// sin/cos of a jet, from s' = c f' and c' = -s f'.
inline std::pair<SJet, SJet> sin_cos(const SJet& f) {
    const int D = f.depth();
    SJet s(D), c(D);
    s[0] = std::sin(f.value());
    c[0] = std::cos(f.value());
    for (int k = 1; k <= D; ++k) {
        double sa = 0.0, ca = 0.0;
        for (int j = 0; j < k; ++j) {
            const double w = detail::binom(k - 1, j) * f[j + 1];
            sa += w * c[k - 1 - j];
            ca += w * s[k - 1 - j];
        }
        s[k] = sa;
        c[k] = -ca;
    }
    return {s, c};
}

// e = exp(f), from e' = e f'.
inline SJet exp(const SJet& f) {
    const int D = f.depth();
    SJet e(D);
    e[0] = std::exp(f.value());
    for (int k = 1; k <= D; ++k) {
        double acc = 0.0;
        for (int j = 0; j < k; ++j)
            acc += detail::binom(k - 1, j) * f[j + 1] * e[k - 1 - j];
        e[k] = acc;
    }
    return e;
}

// Composition (g o f)(t): `outer` holds d^k g / dx^k evaluated at x = f(0);
// the result is the jet of g(f(t)). Classical truncated power-series
// substitution in Taylor-coefficient space.
inline SJet compose(const SJet& outer, const SJet& inner) {
    const int D = common_depth(outer, inner);
    // Taylor coefficients of the shifted inner series (zero constant term).
    std::vector<double> u(D + 1, 0.0);
    for (int k = 1; k <= D; ++k) u[k] = inner[k] / detail::factorial(k);

    // Horner in series space: r <- g_m + r * u.
    std::vector<double> r(D + 1, 0.0);
    for (int m = D; m >= 0; --m) {
        std::vector<double> nr(D + 1, 0.0);
        for (int i = 0; i <= D; ++i) {
            if (r[i] == 0.0) continue;
            for (int j = 1; i + j <= D; ++j) nr[i + j] += r[i] * u[j];
        }
        nr[0] += outer[m] / detail::factorial(m);
        r = std::move(nr);
    }
    SJet out(D);
    for (int k = 0; k <= D; ++k) out[k] = r[k] * detail::factorial(k);
    return out;
}

// ---------------------------------------------------------------------------
// 3-vector jet
// ---------------------------------------------------------------------------

class VJet {
  public:
    VJet() = default;
    explicit VJet(int depth) : d_(depth + 1, Eigen::Vector3d::Zero()) {}

    static VJet constant(const Eigen::Vector3d& value, int depth) {
        VJet j(depth);
        j.d_[0] = value;
        return j;
    }
    static VJet from_components(const SJet& x, const SJet& y, const SJet& z) {
        const int D = std::min({x.depth(), y.depth(), z.depth()});
        VJet j(D);
        for (int k = 0; k <= D; ++k) j.d_[k] = Eigen::Vector3d(x[k], y[k], z[k]);
        return j;
    }

    int depth() const { return static_cast<int>(d_.size()) - 1; }
    const Eigen::Vector3d& value() const { return d_[0]; }
    const Eigen::Vector3d& operator[](int k) const { return d_[k]; }
    Eigen::Vector3d& operator[](int k) { return d_[k]; }

    SJet component(int axis) const {
        SJet j(depth());
        for (int k = 0; k <= depth(); ++k) j[k] = d_[k][axis];
        return j;
    }

    VJet truncated(int depth) const {
        if (depth > this->depth())
            throw InsufficientDepth("jet truncation beyond available depth");
        VJet j(depth);
        for (int k = 0; k <= depth; ++k) j.d_[k] = d_[k];
        return j;
    }

  private:
    std::vector<Eigen::Vector3d> d_;
};

inline int common_depth(const VJet& a, const VJet& b) {
    return std::min(a.depth(), b.depth());
}

inline VJet operator+(const VJet& a, const VJet& b) {
    const int D = common_depth(a, b);
    VJet r(D);
    for (int k = 0; k <= D; ++k) r[k] = a[k] + b[k];
    return r;
}

inline VJet operator-(const VJet& a, const VJet& b) {
    const int D = common_depth(a, b);
    VJet r(D);
    for (int k = 0; k <= D; ++k) r[k] = a[k] - b[k];
    return r;
}

inline VJet operator-(const VJet& a) {
    VJet r(a.depth());
    for (int k = 0; k <= a.depth(); ++k) r[k] = -a[k];
    return r;
}

inline VJet operator*(double s, const VJet& a) {
    VJet r(a.depth());
    for (int k = 0; k <= a.depth(); ++k) r[k] = s * a[k];
    return r;
}
inline VJet operator*(const VJet& a, double s) { return s * a; }

inline VJet operator*(const SJet& s, const VJet& v) {
    const int D = std::min(s.depth(), v.depth());
    VJet r(D);
    for (int k = 0; k <= D; ++k) {
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        for (int j = 0; j <= k; ++j) acc += detail::binom(k, j) * s[j] * v[k - j];
        r[k] = acc;
    }
    return r;
}

inline VJet operator/(const VJet& v, const SJet& s) {
    if (std::abs(s.value()) < kSeparationEps)
        throw ZeroNorm("vector jet quotient: divisor value near zero");
    const int D = std::min(s.depth(), v.depth());
    VJet h(D);
    for (int k = 0; k <= D; ++k) {
        Eigen::Vector3d acc = v[k];
        for (int j = 1; j <= k; ++j) acc -= detail::binom(k, j) * s[j] * h[k - j];
        h[k] = acc / s[0];
    }
    return h;
}

inline VJet operator/(const VJet& v, double s) { return (1.0 / s) * v; }

inline VJet derivative(const VJet& a) {
    if (a.depth() < 1)
        throw InsufficientDepth("derivative of a depth-0 jet");
    VJet r(a.depth() - 1);
    for (int k = 0; k < a.depth(); ++k) r[k] = a[k + 1];
    return r;
}

inline SJet dot(const VJet& a, const VJet& b) {
    const int D = common_depth(a, b);
    SJet r(D);
    for (int k = 0; k <= D; ++k) {
        double s = 0.0;
        for (int j = 0; j <= k; ++j) s += detail::binom(k, j) * a[j].dot(b[k - j]);
        r[k] = s;
    }
    return r;
}

inline VJet cross(const VJet& a, const VJet& b) {
    const int D = common_depth(a, b);
    VJet r(D);
    for (int k = 0; k <= D; ++k) {
        Eigen::Vector3d s = Eigen::Vector3d::Zero();
        for (int j = 0; j <= k; ++j) s += detail::binom(k, j) * a[j].cross(b[k - j]);
        r[k] = s;
    }
    return r;
}

// ||v|| as a jet. Smooth away from 0, so no depth is lost.
inline SJet norm(const VJet& v) {
    if (v.value().norm() < kSeparationEps)
        throw ZeroNorm("jet norm at near-zero vector");
    return sqrt(dot(v, v));
}

inline VJet unit(const VJet& v) { return v / norm(v); }

}  // namespace flatcable
