#include "nftrack/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "nftrack/rng.hpp"

namespace nftrack {

// ---------------------------------------------------------------------------
// CubicSpline

namespace {

// Solves the tridiagonal system for knot second derivatives.
// boundary rows encode either natural (M = 0) or clamped conditions.
std::vector<double> solve_second_derivatives(const std::vector<double>& xs,
                                             const std::vector<double>& ys,
                                             std::optional<double> slope_front,
                                             std::optional<double> slope_back) {
    const int n = static_cast<int>(xs.size());
    std::vector<double> diag(n), lower(n), upper(n), rhs(n);

    if (slope_front) {
        const double h = xs[1] - xs[0];
        diag[0] = h / 3.0;
        upper[0] = h / 6.0;
        rhs[0] = (ys[1] - ys[0]) / h - *slope_front;
    } else {
        diag[0] = 1.0;
        upper[0] = 0.0;
        rhs[0] = 0.0;
    }
    for (int i = 1; i + 1 < n; ++i) {
        const double h0 = xs[i] - xs[i - 1];
        const double h1 = xs[i + 1] - xs[i];
        lower[i] = h0 / 6.0;
        diag[i] = (h0 + h1) / 3.0;
        upper[i] = h1 / 6.0;
        rhs[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
    }
    if (slope_back) {
        const double h = xs[n - 1] - xs[n - 2];
        lower[n - 1] = h / 6.0;
        diag[n - 1] = h / 3.0;
        rhs[n - 1] = *slope_back - (ys[n - 1] - ys[n - 2]) / h;
    } else {
        lower[n - 1] = 0.0;
        diag[n - 1] = 1.0;
        rhs[n - 1] = 0.0;
    }

    // Thomas algorithm.
    std::vector<double> c(n), d(n);
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for (int i = 1; i < n; ++i) {
        const double denom = diag[i] - lower[i] * c[i - 1];
        c[i] = (i + 1 < n) ? upper[i] / denom : 0.0;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    std::vector<double> m(n);
    m[n - 1] = d[n - 1];
    for (int i = n - 2; i >= 0; --i) m[i] = d[i] - c[i] * m[i + 1];
    return m;
}

void check_spline_input(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() < 2 || xs.size() != ys.size())
        throw std::invalid_argument("spline needs >= 2 knots with matching values");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1]))
            throw std::invalid_argument("spline knots must be strictly increasing");
}

}  // namespace

CubicSpline CubicSpline::natural(std::vector<double> xs, std::vector<double> ys) {
    check_spline_input(xs, ys);
    CubicSpline s;
    s.second_ = solve_second_derivatives(xs, ys, std::nullopt, std::nullopt);
    s.xs_ = std::move(xs);
    s.ys_ = std::move(ys);
    return s;
}

CubicSpline CubicSpline::clamped(std::vector<double> xs, std::vector<double> ys,
                                 double slope_front, double slope_back) {
    check_spline_input(xs, ys);
    CubicSpline s;
    s.second_ = solve_second_derivatives(xs, ys, slope_front, slope_back);
    s.xs_ = std::move(xs);
    s.ys_ = std::move(ys);
    return s;
}

int CubicSpline::segment(double x) const {
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const int idx = static_cast<int>(it - xs_.begin()) - 1;
    return std::clamp(idx, 0, static_cast<int>(xs_.size()) - 2);
}

double CubicSpline::value(double x) const {
    const int i = segment(x);
    const double h = xs_[i + 1] - xs_[i];
    const double a = (xs_[i + 1] - x) / h;
    const double b = 1.0 - a;
    return a * ys_[i] + b * ys_[i + 1] +
           ((a * a * a - a) * second_[i] + (b * b * b - b) * second_[i + 1]) *
               (h * h) / 6.0;
}

double CubicSpline::derivative(double x) const {
    const int i = segment(x);
    const double h = xs_[i + 1] - xs_[i];
    const double a = (xs_[i + 1] - x) / h;
    const double b = 1.0 - a;
    return (ys_[i + 1] - ys_[i]) / h -
           (3.0 * a * a - 1.0) * h * second_[i] / 6.0 +
           (3.0 * b * b - 1.0) * h * second_[i + 1] / 6.0;
}

// ---------------------------------------------------------------------------
// MotionPoly

Eigen::VectorXd MotionPoly::alpha_physical() const {
    Eigen::VectorXd out = alpha;
    double scale = 1.0;
    for (int i = 0; i < out.size(); ++i, scale *= time_scale) out[i] /= scale;
    return out;
}

Eigen::VectorXd MotionPoly::beta_physical() const {
    Eigen::VectorXd out = beta;
    double scale = 1.0;
    for (int i = 0; i < out.size(); ++i, scale *= time_scale) out[i] /= scale;
    return out;
}

MotionPoly MotionPoly::constant(double theta0, double range0, int angle_order,
                                int range_order, double time_scale,
                                double t_origin) {
    MotionPoly p;
    p.alpha = Eigen::VectorXd::Zero(angle_order + 1);
    p.beta = Eigen::VectorXd::Zero(range_order + 1);
    p.alpha[0] = theta0;
    p.beta[0] = range0;
    p.time_scale = time_scale;
    p.t_origin = t_origin;
    return p;
}

StateClamp StateClamp::for_geometry(const ArrayGeometry& geom) {
    const FieldBoundaries fb = field_boundaries(geom);
    StateClamp c;
    c.range_lo = std::max(0.5 * fb.fresnel, 1e-3);
    c.range_hi = 2.0 * fb.rayleigh;
    return c;
}

namespace {
double horner(const Eigen::VectorXd& coeffs, double x) {
    double acc = 0.0;
    for (int i = static_cast<int>(coeffs.size()) - 1; i >= 0; --i)
        acc = acc * x + coeffs[i];
    return acc;
}
}  // namespace

PolarState poly_eval(const MotionPoly& model, double t_prime,
                     const StateClamp& clamp, ClampCounter* counter) {
    const double tau = t_prime / model.time_scale;
    PolarState s{horner(model.alpha, tau), horner(model.beta, tau)};
    const double theta = std::clamp(s.theta, clamp.theta_lo, clamp.theta_hi);
    const double range = std::clamp(s.range, clamp.range_lo, clamp.range_hi);
    if (counter && (theta != s.theta || range != s.range)) ++counter->events;
    return {theta, range};
}

MotionPoly poly_shift(const MotionPoly& model, double delta) {
    const double d = delta / model.time_scale;
    auto shift = [d](const Eigen::VectorXd& c) {
        const int n = static_cast<int>(c.size());
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < n; ++k) {
            // out[k] = sum_{i >= k} c[i] * C(i, k) * d^(i-k)
            double binom = 1.0;  // C(k, k)
            double power = 1.0;  // d^0
            for (int i = k; i < n; ++i) {
                out[k] += c[i] * binom * power;
                binom = binom * (i + 1) / (i + 1 - k);
                power *= d;
            }
        }
        return out;
    };
    MotionPoly shifted = model;
    shifted.alpha = shift(model.alpha);
    shifted.beta = shift(model.beta);
    shifted.t_origin = model.t_origin + delta;
    return shifted;
}

// ---------------------------------------------------------------------------
// TrajectoryTruth

namespace {

struct Path {
    CubicSpline x, y;          // parameterized by cumulative chord length s
    std::vector<double> arc_s;  // fine table of parameter values
    std::vector<double> arc_l;  // cumulative arc length at arc_s
};

double speed_along(const Path& p, double s) {
    const double dx = p.x.derivative(s);
    const double dy = p.y.derivative(s);
    return std::hypot(dx, dy);
}

// 5-point Gauss-Legendre on [a, b].
double arc_increment(const Path& p, double a, double b) {
    static const double nodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                    0.5384693101056831, 0.9061798459386640};
    static const double weights[5] = {0.2369268850561891, 0.4786286704993665,
                                      0.5688888888888889, 0.4786286704993665,
                                      0.2369268850561891};
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double sum = 0.0;
    for (int i = 0; i < 5; ++i) sum += weights[i] * speed_along(p, mid + half * nodes[i]);
    return sum * half;
}

void build_arc_table(Path& p) {
    const auto& knots = p.x.knots();
    p.arc_s.clear();
    p.arc_l.clear();
    p.arc_s.push_back(knots.front());
    p.arc_l.push_back(0.0);
    constexpr int kSub = 8;
    for (std::size_t seg = 0; seg + 1 < knots.size(); ++seg) {
        const double a = knots[seg];
        const double b = knots[seg + 1];
        for (int k = 1; k <= kSub; ++k) {
            const double s0 = a + (b - a) * (k - 1) / kSub;
            const double s1 = a + (b - a) * k / kSub;
            p.arc_s.push_back(s1);
            p.arc_l.push_back(p.arc_l.back() + arc_increment(p, s0, s1));
        }
    }
}

// Inverts the arc-length table: parameter s with arc length(s) = target.
double param_at_arc(const Path& p, double target, std::size_t& hint) {
    while (hint + 1 < p.arc_l.size() && p.arc_l[hint + 1] < target) ++hint;
    const double s0 = p.arc_s[hint];
    const double l0 = p.arc_l[hint];
    double s = s0;
    double l = l0;
    for (int it = 0; it < 4; ++it) {
        const double v = std::max(speed_along(p, s), 1e-9);
        double step = (target - l) / v;
        const double s_hi = p.arc_s[std::min(hint + 1, p.arc_s.size() - 1)];
        step = std::clamp(step, -(s - s0), (s_hi - s) + 1e-12);
        const double s_next = s + step;
        l += arc_increment(p, s, s_next);
        s = s_next;
    }
    return s;
}

struct SpeedProfile {
    CubicSpline v;  // m/s over [0, duration]
    double realized_max = 0.0;
};

SpeedProfile build_speed_profile(const MotionConfig& cfg, Rng& rng) {
    const double duration = cfg.duration;
    const int knot_count = std::clamp(static_cast<int>(std::lround(duration / 0.4)) + 2, 4, 48);
    std::vector<double> ts(knot_count), raw(knot_count);
    for (int i = 0; i < knot_count; ++i) {
        ts[i] = duration * i / (knot_count - 1);
        raw[i] = rng.uniform(0.3, 1.0);
    }
    CubicSpline base = CubicSpline::natural(ts, raw);

    const int grid = 4096;
    double mean = 0.0, hi = -1e300, lo = 1e300;
    for (int i = 0; i <= grid; ++i) {
        const double val = base.value(duration * i / grid);
        const double weight = (i == 0 || i == grid) ? 0.5 : 1.0;
        mean += weight * val;
        hi = std::max(hi, val);
        lo = std::min(lo, val);
    }
    mean /= grid;

    // Affine map a + b*base so the time average is exactly avg_speed, the
    // maximum stays below max_speed, and the minimum stays well above zero.
    double b = 0.0;
    if (hi > mean + 1e-12 && mean > lo + 1e-12) {
        const double headroom = (0.97 * cfg.max_speed - cfg.avg_speed) / (hi - mean);
        const double floor_bound = 0.8 * cfg.avg_speed / (mean - lo);
        b = std::max(0.0, std::min(headroom, floor_bound));
    }
    const double a = cfg.avg_speed - b * mean;

    std::vector<double> vals(knot_count);
    for (int i = 0; i < knot_count; ++i) vals[i] = a + b * raw[i];
    SpeedProfile prof;
    prof.v = CubicSpline::natural(ts, vals);
    prof.realized_max = a + b * hi;
    return prof;
}

struct CartesianPoint {
    double x, y;
};

CartesianPoint to_cartesian(double theta, double r) {
    return {r * std::cos(theta), r * std::sin(theta)};
}

bool inside(const RegionBounds& region, double x, double y) {
    const double r = std::hypot(x, y);
    const double theta = std::atan2(y, x);
    return r >= region.r_min && r <= region.r_max && theta >= region.theta_min &&
           theta <= region.theta_max;
}

}  // namespace

TrajectoryTruth TrajectoryTruth::generate(const MotionConfig& cfg, std::uint64_t seed) {
    if (!(cfg.avg_speed > 0.0) || !(cfg.max_speed > cfg.avg_speed))
        throw std::invalid_argument("need 0 < avg_speed < max_speed");
    if (!(cfg.duration > 0.0)) throw std::invalid_argument("duration must be > 0");
    const RegionBounds& region = cfg.region;
    const double theta_span = region.theta_max - region.theta_min;
    const double r_span = region.r_max - region.r_min;
    if (theta_span <= 0.0 || r_span <= 0.0)
        throw std::invalid_argument("empty motion region");

    const double margin_theta = 0.06 * theta_span;
    const double margin_r = 0.06 * r_span;
    RegionBounds safe{region.theta_min + margin_theta, region.theta_max - margin_theta,
                      region.r_min + margin_r, region.r_max - margin_r};
    const double mid_r = 0.5 * (safe.r_min + safe.r_max);
    const double extent = std::min(safe.r_max - safe.r_min,
                                   mid_r * (safe.theta_max - safe.theta_min));
    if (extent <= 0.0) throw std::invalid_argument("motion region too small");

    double step = cfg.waypoint_spacing > 0.0 ? cfg.waypoint_spacing
                                             : std::min(cfg.avg_speed * cfg.duration / 6.0,
                                                        0.3 * extent);
    step = std::min(step, 0.45 * extent);
    if (step <= 0.0) throw std::invalid_argument("motion region too small");

    const double needed = cfg.avg_speed * cfg.duration;
    Rng waypoint_rng(seed, 0);
    Rng speed_rng(seed, 1);
    const SpeedProfile prof = build_speed_profile(cfg, speed_rng);

    for (int attempt = 0; attempt < 25; ++attempt) {
        // Random-walk waypoints inside the margin region.
        std::vector<CartesianPoint> pts;
        pts.push_back(to_cartesian(waypoint_rng.uniform(safe.theta_min, safe.theta_max),
                                   waypoint_rng.uniform(safe.r_min, safe.r_max)));
        double chord_total = 0.0;
        while (chord_total < 1.25 * needed + 2.0 * step ||
               pts.size() < 5) {
            const CartesianPoint prev = pts.back();
            CartesianPoint next{};
            bool placed = false;
            for (int tries = 0; tries < 64; ++tries) {
                const double dir = waypoint_rng.uniform(0.0, 2.0 * std::numbers::pi);
                const double len = step * waypoint_rng.uniform(0.7, 1.3);
                next = {prev.x + len * std::cos(dir), prev.y + len * std::sin(dir)};
                if (inside(safe, next.x, next.y)) {
                    placed = true;
                    break;
                }
            }
            if (!placed)
                next = to_cartesian(waypoint_rng.uniform(safe.theta_min, safe.theta_max),
                                    waypoint_rng.uniform(safe.r_min, safe.r_max));
            chord_total += std::hypot(next.x - pts.back().x, next.y - pts.back().y);
            pts.push_back(next);
            if (pts.size() > 100000)
                throw std::invalid_argument("motion region cannot sustain requested path");
        }

        // Chord-length parameterized clamped spline through the waypoints.
        std::vector<double> ss(pts.size()), xs(pts.size()), ys(pts.size());
        ss[0] = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            xs[i] = pts[i].x;
            ys[i] = pts[i].y;
            if (i > 0)
                ss[i] = ss[i - 1] +
                        std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y);
        }
        const double c0 = ss[1] - ss[0];
        const double cn = ss.back() - ss[ss.size() - 2];
        Path path;
        path.x = CubicSpline::clamped(ss, xs, (xs[1] - xs[0]) / c0,
                                      (xs.back() - xs[xs.size() - 2]) / cn);
        path.y = CubicSpline::clamped(ss, ys, (ys[1] - ys[0]) / c0,
                                      (ys.back() - ys[ys.size() - 2]) / cn);
        build_arc_table(path);
        if (path.arc_l.back() <= needed) continue;

        // Walk the path at the profiled speed, sampling on a uniform grid.
        const double dt = std::min(1e-3, cfg.duration / 512.0);
        const int samples = static_cast<int>(std::ceil(cfg.duration / dt)) + 1;
        std::vector<double> t_knots(samples), x_knots(samples), y_knots(samples);
        bool ok = true;
        double arc = 0.0;
        double v_prev = prof.v.value(0.0);
        std::size_t hint = 0;
        for (int i = 0; i < samples; ++i) {
            const double t = std::min(cfg.duration, i * dt);
            if (i > 0) {
                const double v_now = prof.v.value(t);
                arc += 0.5 * (v_prev + v_now) * (t - t_knots[i - 1]);
                v_prev = v_now;
            }
            const double s = param_at_arc(path, arc, hint);
            const double x = path.x.value(s);
            const double y = path.y.value(s);
            if (!inside(region, x, y)) {
                ok = false;
                break;
            }
            t_knots[i] = t;
            x_knots[i] = x;
            y_knots[i] = y;
        }
        if (!ok) continue;

        TrajectoryTruth truth;
        const double v0 = prof.v.value(0.0);
        const double v1 = prof.v.value(cfg.duration);
        const double ux0 = path.x.derivative(0.0);
        const double uy0 = path.y.derivative(0.0);
        const double n0 = std::max(std::hypot(ux0, uy0), 1e-12);
        const double s_end = param_at_arc(path, arc, hint);
        const double ux1 = path.x.derivative(s_end);
        const double uy1 = path.y.derivative(s_end);
        const double n1 = std::max(std::hypot(ux1, uy1), 1e-12);
        truth.x_ = CubicSpline::clamped(t_knots, x_knots, v0 * ux0 / n0, v1 * ux1 / n1);
        truth.y_ = CubicSpline::clamped(t_knots, y_knots, v0 * uy0 / n0, v1 * uy1 / n1);
        truth.duration_ = cfg.duration;
        truth.avg_speed_ = arc / cfg.duration;
        truth.max_speed_ = prof.realized_max;
        truth.seed_ = seed;
        return truth;
    }
    throw std::invalid_argument(
        "could not generate an in-region trajectory; region too small for the "
        "requested speed and duration");
}

TrajectoryTruth TrajectoryTruth::from_samples(std::vector<double> ts,
                                              std::vector<double> xs,
                                              std::vector<double> ys) {
    if (ts.size() < 2 || ts.size() != xs.size() || ts.size() != ys.size())
        throw std::invalid_argument("need >= 2 samples with matching lengths");
    TrajectoryTruth truth;
    truth.duration_ = ts.back() - ts.front();
    if (ts.front() != 0.0) {
        const double t0 = ts.front();
        for (double& t : ts) t -= t0;
    }
    const double dt0 = ts[1] - ts[0];
    const double dtn = ts[ts.size() - 1] - ts[ts.size() - 2];
    double arc = 0.0, vmax = 0.0;
    for (std::size_t i = 1; i < ts.size(); ++i) {
        const double d = std::hypot(xs[i] - xs[i - 1], ys[i] - ys[i - 1]);
        arc += d;
        vmax = std::max(vmax, d / (ts[i] - ts[i - 1]));
    }
    truth.avg_speed_ = arc / truth.duration_;
    truth.max_speed_ = vmax;
    truth.x_ = CubicSpline::clamped(ts, xs, (xs[1] - xs[0]) / dt0,
                                    (xs[xs.size() - 1] - xs[xs.size() - 2]) / dtn);
    truth.y_ = CubicSpline::clamped(std::move(ts), std::move(ys),
                                    (ys[1] - ys[0]) / dt0,
                                    (ys[ys.size() - 1] - ys[ys.size() - 2]) / dtn);
    return truth;
}

PolarState TrajectoryTruth::state(double t) const {
    if (t < 0.0 || t > duration_ + 1e-12)
        throw std::out_of_range("trajectory time outside [0, duration]");
    t = std::min(t, duration_);
    const double x = x_.value(t);
    const double y = y_.value(t);
    return {std::atan2(y, x), std::hypot(x, y)};
}

void TrajectoryTruth::write_csv(std::ostream& out) const {
    out << "t,theta,r,x,y\n";
    char line[256];
    const auto& ts = x_.knots();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double x = x_.values()[i];
        const double y = y_.values()[i];
        std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g,%.17g,%.17g\n", ts[i],
                      std::atan2(y, x), std::hypot(x, y), x, y);
        out << line;
    }
}

TrajectoryTruth TrajectoryTruth::read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("empty trajectory CSV");
    std::vector<double> ts, xs, ys;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != 5)
            throw std::invalid_argument("trajectory CSV rows must have 5 columns");
        ts.push_back(row[0]);
        xs.push_back(row[3]);
        ys.push_back(row[4]);
    }
    return from_samples(std::move(ts), std::move(xs), std::move(ys));
}

}  // namespace nftrack
