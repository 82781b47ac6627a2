#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "nftrack/channel.hpp"

namespace nftrack {

/// Cubic spline through (x_i, y_i) with either clamped (specified end slopes)
/// or natural end conditions. C2 on [x_front, x_back].
class CubicSpline {
public:
    CubicSpline() = default;
    static CubicSpline natural(std::vector<double> xs, std::vector<double> ys);
    static CubicSpline clamped(std::vector<double> xs, std::vector<double> ys,
                               double slope_front, double slope_back);

    double value(double x) const;
    double derivative(double x) const;
    double front() const { return xs_.front(); }
    double back() const { return xs_.back(); }
    const std::vector<double>& knots() const { return xs_; }
    const std::vector<double>& values() const { return ys_; }

private:
    int segment(double x) const;
    std::vector<double> xs_, ys_, second_;  // second_: second derivatives at knots
};

/// Local polynomial motion model over one sliding window.
/// Coefficients are stored in the normalized basis tau = t' / time_scale, so
/// alpha[i] multiplies tau^i; physical-basis coefficients (per second^i) are
/// alpha[i] / time_scale^i.
struct MotionPoly {
    Eigen::VectorXd alpha;  // angle coefficients, radians
    Eigen::VectorXd beta;   // range coefficients, meters
    double time_scale = 1.0;  // seconds; the history window T_H
    double t_origin = 0.0;    // global time at local t' = 0

    int angle_order() const { return static_cast<int>(alpha.size()) - 1; }
    int range_order() const { return static_cast<int>(beta.size()) - 1; }
    Eigen::VectorXd alpha_physical() const;
    Eigen::VectorXd beta_physical() const;

    static MotionPoly constant(double theta0, double range0, int angle_order,
                               int range_order, double time_scale,
                               double t_origin = 0.0);
};

/// Validity region used to clamp polynomial excursions before channel
/// evaluation. Defaults are wide open; harness code derives bounds from the
/// array's field boundaries.
struct StateClamp {
    double theta_lo = -1.5697963267948965;  // -pi/2 + 1e-3
    double theta_hi = 1.5697963267948965;
    double range_lo = 1e-6;
    double range_hi = 1e12;

    static StateClamp for_geometry(const ArrayGeometry& geom);
};

struct ClampCounter {
    long long events = 0;
};

/// Horner evaluation of the angle/range polynomials at local time t_prime,
/// clamped into `clamp`; a clamp event is counted when a coordinate was moved.
PolarState poly_eval(const MotionPoly& model, double t_prime,
                     const StateClamp& clamp = {}, ClampCounter* counter = nullptr);

/// Re-anchors the window origin: returns model' with
/// poly_eval(model', t') == poly_eval(model, t' + delta) exactly
/// (binomial re-expansion), and t_origin advanced by delta.
MotionPoly poly_shift(const MotionPoly& model, double delta);

struct RegionBounds {
    double theta_min = 0.0, theta_max = 0.0;  // radians
    double r_min = 0.0, r_max = 0.0;          // meters
};

struct MotionConfig {
    RegionBounds region;
    double avg_speed = 0.0;      // m/s, target (realized within 2%)
    double max_speed = 0.0;      // m/s, hard cap
    double duration = 0.0;       // seconds
    double waypoint_spacing = 0.0;  // meters; 0 = auto from region size
};

/// Seeded ground-truth user motion: random waypoints joined by clamped cubic
/// splines in Cartesian coordinates, traversed with a smooth time-varying
/// speed profile whose average hits the configured target.
class TrajectoryTruth {
public:
    static TrajectoryTruth generate(const MotionConfig& config, std::uint64_t seed);
    /// Rebuild from (t, x, y) samples, e.g. from an exported CSV.
    static TrajectoryTruth from_samples(std::vector<double> ts,
                                        std::vector<double> xs,
                                        std::vector<double> ys);

    PolarState state(double t) const;  // throws std::out_of_range outside [0, duration]
    double duration() const { return duration_; }
    double realized_avg_speed() const { return avg_speed_; }
    double realized_max_speed() const { return max_speed_; }
    std::uint64_t seed() const { return seed_; }

    void write_csv(std::ostream& out) const;
    static TrajectoryTruth read_csv(std::istream& in);

private:
    CubicSpline x_, y_;
    double duration_ = 0.0;
    double avg_speed_ = 0.0;
    double max_speed_ = 0.0;
    std::uint64_t seed_ = 0;
};

}  // namespace nftrack
