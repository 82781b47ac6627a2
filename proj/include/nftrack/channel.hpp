#pragma once

#include <Eigen/Dense>
#include <complex>
#include <span>
#include <vector>

namespace nftrack {

inline constexpr double kSpeedOfLight = 299792458.0;

using ChannelVector = Eigen::VectorXcd;

/// Uniform linear array along the y-axis, centered on the origin.
/// Element n sits at (0, offset(n) * spacing) with offset(n) = (2n - N + 1)/2.
struct ArrayGeometry {
    int num_elements = 1;
    double spacing = 0.0;     // meters
    double wavelength = 0.0;  // meters
    double carrier_hz = 0.0;

    static ArrayGeometry from_carrier(int num_elements, double carrier_hz,
                                      double spacing_wavelengths = 0.5);

    double aperture() const { return (num_elements - 1) * spacing; }
    double element_offset(int n) const { return 0.5 * (2 * n - num_elements + 1); }
};

/// User position in polar coordinates relative to the array center;
/// theta = 0 is broadside, theta measured toward the positive y (array) axis.
struct PolarState {
    double theta = 0.0;  // radians, in (-pi/2, pi/2)
    double range = 0.0;  // meters, > 0
};

struct Scatterer {
    double theta = 0.0;                        // radians
    double range_bs = 0.0;                     // BS-to-scatterer distance, meters
    std::complex<double> reflection{0.0, 0.0};  // dimensionless coefficient
};

struct FieldBoundaries {
    double fresnel = 0.0;   // meters
    double rayleigh = 0.0;  // meters
};

/// e^{-j 2*pi*cycles}, with the argument reduced modulo one cycle first so
/// phases stay accurate when cycles is of order r/lambda ~ 1e4.
std::complex<double> unit_phasor(double cycles);

/// Propagation distance from element n to the user (exact 2-D geometry).
/// Throws std::domain_error when the user coincides with the element.
double element_distance(const ArrayGeometry& geom, const PolarState& state, int n);

/// Unit-norm near-field steering vector; entry n is
/// (1/sqrt(N)) e^{-j (2*pi/lambda) (r^(n) - r)}.
ChannelVector steering_vector(const ArrayGeometry& geom, const PolarState& state);

/// Line-of-sight channel g * e^{-j 2*pi*r/lambda} * b(theta, r) with
/// free-space gain g = lambda / (4*pi*r).
ChannelVector los_channel(const ArrayGeometry& geom, const PolarState& state);

/// Sum over static single-bounce reflection paths. Throws std::domain_error
/// when the user coincides with a scatterer.
ChannelVector nlos_channel(const ArrayGeometry& geom, const PolarState& state,
                           std::span<const Scatterer> scatterers);

ChannelVector full_channel(const ArrayGeometry& geom, const PolarState& state,
                           std::span<const Scatterer> scatterers);

/// Fresnel distance 0.5*sqrt(D^3/lambda) and Rayleigh distance 2*D^2/lambda.
FieldBoundaries field_boundaries(const ArrayGeometry& geom);

/// Received sample y = h^H w x + n.
std::complex<double> receive_symbol(const ChannelVector& h, const ChannelVector& w,
                                    std::complex<double> symbol,
                                    std::complex<double> noise);

/// |h^H w|^2 / ||h||^2, in [0, 1] for unit-norm w.
double normalized_gain(const ChannelVector& h, const ChannelVector& w);

/// Noiseless response of beam w at the predicted LoS channel for `state`,
/// together with its partial derivatives. mu = h(state)^H w.
struct BeamResponse {
    std::complex<double> mu{0.0, 0.0};
    std::complex<double> dmu_dtheta{0.0, 0.0};
    std::complex<double> dmu_drange{0.0, 0.0};
};

/// Single fused pass over the array; `mu` equals los_channel(state)^H w up to
/// rounding of the summation order.
BeamResponse los_beam_response(const ArrayGeometry& geom, const PolarState& state,
                               const ChannelVector& w, bool with_derivatives);

}  // namespace nftrack
