#pragma once

// Analytic flat-output primitives. Each evaluates to a scalar jet of any
// requested depth, so the planner never differentiates numerically.

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "flatcable/jet.hpp"

namespace flatcable {

class Signal {
  public:
    virtual ~Signal() = default;
    virtual SJet eval(double t, int depth) const = 0;
    double value(double t) const { return eval(t, 0).value(); }
};

using SignalPtr = std::shared_ptr<const Signal>;

// c0 + c1 (t-t0) + c2 (t-t0)^2 + ...
class Polynomial final : public Signal {
  public:
    Polynomial(std::vector<double> coeffs, double t0 = 0.0)
        : coeffs_(std::move(coeffs)), t0_(t0) {}

    SJet eval(double t, int depth) const override {
        SJet j(depth);
        const double x = t - t0_;
        const int N = static_cast<int>(coeffs_.size());
        for (int k = 0; k <= depth; ++k) {
            double s = 0.0;
            // d^k/dt^k of c_m x^m = c_m m!/(m-k)! x^(m-k)
            for (int m = k; m < N; ++m) {
                double fall = 1.0;
                for (int q = m; q > m - k; --q) fall *= q;
                s += coeffs_[m] * fall * std::pow(x, m - k);
            }
            j[k] = s;
        }
        return j;
    }

    // Quintic rest-to-rest segment from y0 at t0 to y1 at t0+T.
    static Polynomial rest_to_rest(double y0, double y1, double t0, double T) {
        const double d = y1 - y0;
        return Polynomial({y0, 0.0, 0.0, 10.0 * d / (T * T * T),
                           -15.0 * d / (T * T * T * T),
                           6.0 * d / (T * T * T * T * T)},
                          t0);
    }

  private:
    std::vector<double> coeffs_;
    double t0_;
};

// offset + A sin(omega t + phase)
class Sinusoid final : public Signal {
  public:
    Sinusoid(double amplitude, double omega, double phase = 0.0, double offset = 0.0)
        : A_(amplitude), w_(omega), phi_(phase), off_(offset) {}

    SJet eval(double t, int depth) const override {
        SJet j(depth);
        for (int k = 0; k <= depth; ++k)
            j[k] = A_ * std::pow(w_, k) * std::sin(w_ * t + phi_ + 0.5 * M_PI * k);
        j[0] += off_;
        return j;
    }

  private:
    double A_, w_, phi_, off_;
};

// x0 - xa exp(-(t-t0)^2 / cx): the rest-to-rest exponential profile.
class GaussianExp final : public Signal {
  public:
    GaussianExp(double x0, double xa, double t0, double cx)
        : x0_(x0), xa_(xa), t0_(t0), cx_(cx) {}

    SJet eval(double t, int depth) const override {
        const double x = t - t0_;
        SJet q(depth);  // jet of -(t-t0)^2/cx
        q[0] = -x * x / cx_;
        if (depth >= 1) q[1] = -2.0 * x / cx_;
        if (depth >= 2) q[2] = -2.0 / cx_;
        SJet j = -xa_ * exp(q);
        j[0] += x0_;
        return j;
    }

  private:
    double x0_, xa_, t0_, cx_;
};

class Sum final : public Signal {
  public:
    explicit Sum(std::vector<SignalPtr> terms) : terms_(std::move(terms)) {}

    SJet eval(double t, int depth) const override {
        SJet j(depth);
        for (const auto& s : terms_) {
            const SJet term = s->eval(t, depth);
            for (int k = 0; k <= depth; ++k) j[k] += term[k];
        }
        return j;
    }

  private:
    std::vector<SignalPtr> terms_;
};

class Product final : public Signal {
  public:
    Product(SignalPtr a, SignalPtr b) : a_(std::move(a)), b_(std::move(b)) {}
    SJet eval(double t, int depth) const override {
        return a_->eval(t, depth) * b_->eval(t, depth);
    }

  private:
    SignalPtr a_, b_;
};

// 3-vector flat channel built from one signal per axis.
struct VectorSignal {
    SignalPtr x, y, z;

    VJet eval(double t, int depth) const {
        return VJet::from_components(x->eval(t, depth), y->eval(t, depth),
                                     z->eval(t, depth));
    }
    static VectorSignal constant(const Eigen::Vector3d& v) {
        return {std::make_shared<Polynomial>(std::vector<double>{v.x()}),
                std::make_shared<Polynomial>(std::vector<double>{v.y()}),
                std::make_shared<Polynomial>(std::vector<double>{v.z()})};
    }
};

}  // namespace flatcable
