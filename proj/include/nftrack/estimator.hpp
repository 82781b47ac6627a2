#pragma once

#include <Eigen/Dense>
#include <complex>
#include <span>
#include <vector>

#include "nftrack/channel.hpp"
#include "nftrack/trajectory.hpp"

namespace nftrack {

/// One feedback tuple: the beam that was transmitted at window-local time
/// t_prime and the complex sample the user reported back.
struct Observation {
    long long index = 0;       // global symbol index u
    double t_prime = 0.0;      // seconds within the current window, in [0, T_H]
    Eigen::VectorXcd beam;     // unit-norm transmit beamformer w_u
    std::complex<double> received{0.0, 0.0};  // y_u
};

struct AdamConfig {
    double rho1 = 0.9;
    double rho2 = 0.999;
    double step_angle = 3e-3;   // eta_alpha, normalized basis
    double step_range = 3e-2;   // eta_beta, normalized basis
    double epsilon = 1e-12;     // divisor stabilizer
    int max_iterations = 300;
    double rel_tolerance = 1e-6;  // stop when |dJ| / max(J, 1e-30) drops below
};

/// First/second gradient moments for the two coefficient blocks.
struct AdamState {
    Eigen::VectorXd m_alpha, v_alpha, m_beta, v_beta;
    long iteration = 0;

    static AdamState zero(int angle_order, int range_order);
};

struct FitDiagnostics {
    double initial_cost = 0.0;
    double final_cost = 0.0;
    long iterations = 0;
    bool converged = false;
    int polish_steps = 0;
    std::vector<double> cost_trace;  // J per iteration (including the initial)
};

struct FitResult {
    MotionPoly model;
    FitDiagnostics diagnostics;
};

/// Predicted noiseless response mu_u = h(theta(t'), r(t'))^H w_u.
std::complex<double> predict_mu(const MotionPoly& model, const ArrayGeometry& geom,
                                const Observation& obs, const StateClamp& clamp = {});

/// Nonlinear least-squares cost J = sum_u |y_u - mu_u|^2.
double cost_j(const MotionPoly& model, const ArrayGeometry& geom,
              std::span<const Observation> window, const StateClamp& clamp = {});

struct CostGradient {
    double cost = 0.0;
    Eigen::VectorXd grad_alpha, grad_beta;  // d J / d coefficients (normalized basis)
};

/// Analytic gradient via the chain rule through the predicted channel.
CostGradient cost_gradient(const MotionPoly& model, const ArrayGeometry& geom,
                           std::span<const Observation> window,
                           const StateClamp& clamp = {});

/// One Adam recursion step with bias correction and per-block step sizes;
/// mutates the moment state and both coefficient blocks in place.
void adam_apply_step(AdamState& state, const AdamConfig& cfg,
                     const Eigen::VectorXd& grad_alpha,
                     const Eigen::VectorXd& grad_beta, Eigen::VectorXd& alpha,
                     Eigen::VectorXd& beta);

/// Full-batch Adam descent on J. Returns the best-cost iterate seen.
/// Non-convergence is reported in the diagnostics, never thrown.
FitResult adam_fit(const MotionPoly& initial, const ArrayGeometry& geom,
                   std::span<const Observation> window, const AdamConfig& cfg,
                   const StateClamp& clamp = {});

/// Safeguarded Gauss-Newton refinement around a near-stationary point;
/// optional sharpening pass after Adam. Returns accepted step count.
int gauss_newton_polish(MotionPoly& model, const ArrayGeometry& geom,
                        std::span<const Observation> window, int max_steps,
                        const StateClamp& clamp = {});

struct FimBlocks {
    Eigen::MatrixXd alpha, beta;
};

/// Per-block observed Fisher information in Gauss-Newton form:
/// I[i][j] = (2/sigma^2) sum_u Re{ conj(dmu/d c_i) dmu/d c_j }.
FimBlocks observed_fim(const MotionPoly& model, const ArrayGeometry& geom,
                       std::span<const Observation> window, double noise_var,
                       const StateClamp& clamp = {});

/// Gaussian posterior approximation: mean at the MLE, per-block covariance
/// (FIM + ridge I)^{-1} with a scale-aware ridge.
struct PosteriorBelief {
    MotionPoly mean;
    Eigen::MatrixXd cov_alpha, cov_beta;
    Eigen::MatrixXd chol_alpha, chol_beta;  // lower-triangular factors
    double noise_var = 0.0;
    FitDiagnostics diagnostics;
};

/// ridge = ridge_rel * trace(FIM)/dim + ridge_abs, applied per block.
PosteriorBelief make_posterior(const MotionPoly& mle, const ArrayGeometry& geom,
                               std::span<const Observation> window, double noise_var,
                               double ridge_rel = 1e-8, double ridge_abs = 1e-12,
                               const StateClamp& clamp = {});

/// Covariance block from one FIM block (exposed for tests).
Eigen::MatrixXd invert_fim_block(const Eigen::MatrixXd& fim, double ridge_rel,
                                 double ridge_abs);

}  // namespace nftrack
