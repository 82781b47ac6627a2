#include "nftrack/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nftrack {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

ArrayGeometry ArrayGeometry::from_carrier(int num_elements, double carrier_hz,
                                          double spacing_wavelengths) {
    if (num_elements < 1) throw std::invalid_argument("num_elements must be >= 1");
    if (carrier_hz <= 0.0) throw std::invalid_argument("carrier_hz must be > 0");
    if (spacing_wavelengths <= 0.0)
        throw std::invalid_argument("spacing must be > 0");
    ArrayGeometry geom;
    geom.num_elements = num_elements;
    geom.carrier_hz = carrier_hz;
    geom.wavelength = kSpeedOfLight / carrier_hz;
    geom.spacing = spacing_wavelengths * geom.wavelength;
    return geom;
}

std::complex<double> unit_phasor(double cycles) {
    const double frac = cycles - std::round(cycles);
    const double angle = -kTwoPi * frac;
    return {std::cos(angle), std::sin(angle)};
}

double element_distance(const ArrayGeometry& geom, const PolarState& state, int n) {
    const double offset = geom.element_offset(n) * geom.spacing;
    const double radicand = state.range * state.range + offset * offset -
                            2.0 * state.range * std::sin(state.theta) * offset;
    if (radicand <= 0.0)
        throw std::domain_error("user position coincides with an array element");
    return std::sqrt(radicand);
}

ChannelVector steering_vector(const ArrayGeometry& geom, const PolarState& state) {
    const int n = geom.num_elements;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    ChannelVector b(n);
    for (int i = 0; i < n; ++i) {
        const double delta = element_distance(geom, state, i) - state.range;
        b[i] = scale * unit_phasor(delta / geom.wavelength);
    }
    return b;
}

ChannelVector los_channel(const ArrayGeometry& geom, const PolarState& state) {
    const double gain = geom.wavelength / (4.0 * std::numbers::pi * state.range);
    const std::complex<double> global =
        gain * unit_phasor(state.range / geom.wavelength);
    return global * steering_vector(geom, state);
}

ChannelVector nlos_channel(const ArrayGeometry& geom, const PolarState& state,
                           std::span<const Scatterer> scatterers) {
    ChannelVector h = ChannelVector::Zero(geom.num_elements);
    for (const Scatterer& sc : scatterers) {
        if (sc.range_bs <= 0.0)
            throw std::domain_error("scatterer range must be > 0");
        const double r2sq = state.range * state.range + sc.range_bs * sc.range_bs -
                            2.0 * state.range * sc.range_bs *
                                std::cos(state.theta - sc.theta);
        const double r2 = std::sqrt(std::max(r2sq, 0.0));
        if (r2 <= 0.0)
            throw std::domain_error("user position coincides with a scatterer");
        const std::complex<double> gain =
            sc.reflection * geom.wavelength /
            (4.0 * std::numbers::pi * sc.range_bs * r2);
        const std::complex<double> phase =
            unit_phasor((sc.range_bs + r2) / geom.wavelength);
        h += gain * phase *
             steering_vector(geom, PolarState{sc.theta, sc.range_bs});
    }
    return h;
}

ChannelVector full_channel(const ArrayGeometry& geom, const PolarState& state,
                           std::span<const Scatterer> scatterers) {
    if (scatterers.empty()) return los_channel(geom, state);
    return los_channel(geom, state) + nlos_channel(geom, state, scatterers);
}

FieldBoundaries field_boundaries(const ArrayGeometry& geom) {
    const double d = geom.aperture();
    FieldBoundaries fb;
    fb.fresnel = 0.5 * std::sqrt(d * d * d / geom.wavelength);
    fb.rayleigh = 2.0 * d * d / geom.wavelength;
    return fb;
}

std::complex<double> receive_symbol(const ChannelVector& h, const ChannelVector& w,
                                    std::complex<double> symbol,
                                    std::complex<double> noise) {
    return h.dot(w) * symbol + noise;
}

double normalized_gain(const ChannelVector& h, const ChannelVector& w) {
    const double hh = h.squaredNorm();
    if (hh <= 0.0) return 0.0;
    return std::norm(h.dot(w)) / hh;
}

BeamResponse los_beam_response(const ArrayGeometry& geom, const PolarState& state,
                               const ChannelVector& w, bool with_derivatives) {
    const int n = geom.num_elements;
    const double r = state.range;
    const double sin_t = std::sin(state.theta);
    const double cos_t = std::cos(state.theta);
    const double gain = geom.wavelength / (4.0 * std::numbers::pi * r);
    const double wavenumber = kTwoPi / geom.wavelength;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    const std::complex<double> global =
        gain * scale * unit_phasor(r / geom.wavelength);

    BeamResponse out;
    for (int i = 0; i < n; ++i) {
        const double offset = geom.element_offset(i) * geom.spacing;
        const double radicand =
            r * r + offset * offset - 2.0 * r * sin_t * offset;
        if (radicand <= 0.0)
            throw std::domain_error("user position coincides with an array element");
        const double rn = std::sqrt(radicand);
        const std::complex<double> hn =
            global * unit_phasor((rn - r) / geom.wavelength);
        // mu = sum_n conj(h_n) w_n
        const std::complex<double> term = std::conj(hn) * w[i];
        out.mu += term;
        if (with_derivatives) {
            const double drn_dtheta = -(r * offset * cos_t) / rn;
            const double drn_drange = (r - offset * sin_t) / rn;
            // conj(h_n) carries phase +j k r^(n): d/dx conj(h_n) =
            // conj(h_n) (j k dr^(n)/dx), plus the 1/r amplitude roll-off in r.
            out.dmu_dtheta += term * std::complex<double>(0.0, wavenumber * drn_dtheta);
            out.dmu_drange +=
                term * std::complex<double>(-1.0 / r, wavenumber * drn_drange);
        }
    }
    return out;
}

}  // namespace nftrack
