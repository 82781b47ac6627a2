#include "nftrack/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nftrack {

namespace {

struct TauPowers {
    // powers[i] = tau^i, up to max(angle_order, range_order)
    Eigen::VectorXd powers;
};

TauPowers tau_powers(const MotionPoly& model, double t_prime) {
    const double tau = t_prime / model.time_scale;
    const int n = std::max(model.alpha.size(), model.beta.size());
    TauPowers tp;
    tp.powers = Eigen::VectorXd(n);
    double p = 1.0;
    for (int i = 0; i < n; ++i, p *= tau) tp.powers[i] = p;
    return tp;
}

struct EvalPoint {
    PolarState state;
    bool theta_clamped = false;
    bool range_clamped = false;
};

EvalPoint eval_clamped(const MotionPoly& model, const TauPowers& tp,
                       const StateClamp& clamp) {
    double theta = 0.0, range = 0.0;
    for (int i = 0; i < model.alpha.size(); ++i) theta += model.alpha[i] * tp.powers[i];
    for (int i = 0; i < model.beta.size(); ++i) range += model.beta[i] * tp.powers[i];
    EvalPoint pt;
    pt.state.theta = std::clamp(theta, clamp.theta_lo, clamp.theta_hi);
    pt.state.range = std::clamp(range, clamp.range_lo, clamp.range_hi);
    pt.theta_clamped = pt.state.theta != theta;
    pt.range_clamped = pt.state.range != range;
    return pt;
}

}  // namespace

AdamState AdamState::zero(int angle_order, int range_order) {
    AdamState s;
    s.m_alpha = Eigen::VectorXd::Zero(angle_order + 1);
    s.v_alpha = Eigen::VectorXd::Zero(angle_order + 1);
    s.m_beta = Eigen::VectorXd::Zero(range_order + 1);
    s.v_beta = Eigen::VectorXd::Zero(range_order + 1);
    return s;
}

std::complex<double> predict_mu(const MotionPoly& model, const ArrayGeometry& geom,
                                const Observation& obs, const StateClamp& clamp) {
    const EvalPoint pt = eval_clamped(model, tau_powers(model, obs.t_prime), clamp);
    return los_beam_response(geom, pt.state, obs.beam, false).mu;
}

double cost_j(const MotionPoly& model, const ArrayGeometry& geom,
              std::span<const Observation> window, const StateClamp& clamp) {
    double cost = 0.0;
    for (const Observation& obs : window)
        cost += std::norm(obs.received - predict_mu(model, geom, obs, clamp));
    return cost;
}

CostGradient cost_gradient(const MotionPoly& model, const ArrayGeometry& geom,
                           std::span<const Observation> window,
                           const StateClamp& clamp) {
    CostGradient out;
    out.grad_alpha = Eigen::VectorXd::Zero(model.alpha.size());
    out.grad_beta = Eigen::VectorXd::Zero(model.beta.size());
    for (const Observation& obs : window) {
        const TauPowers tp = tau_powers(model, obs.t_prime);
        const EvalPoint pt = eval_clamped(model, tp, clamp);
        const BeamResponse resp = los_beam_response(geom, pt.state, obs.beam, true);
        const std::complex<double> residual = obs.received - resp.mu;
        out.cost += std::norm(residual);
        // d|y - mu|^2 / dc = -2 Re{ conj(y - mu) dmu/dc }; a clamped
        // coordinate is locally flat, so its chain-rule factor vanishes.
        const double dtheta = pt.theta_clamped
                                  ? 0.0
                                  : -2.0 * std::real(std::conj(residual) * resp.dmu_dtheta);
        const double drange = pt.range_clamped
                                  ? 0.0
                                  : -2.0 * std::real(std::conj(residual) * resp.dmu_drange);
        for (int i = 0; i < out.grad_alpha.size(); ++i)
            out.grad_alpha[i] += dtheta * tp.powers[i];
        for (int i = 0; i < out.grad_beta.size(); ++i)
            out.grad_beta[i] += drange * tp.powers[i];
    }
    return out;
}

void adam_apply_step(AdamState& state, const AdamConfig& cfg,
                     const Eigen::VectorXd& grad_alpha,
                     const Eigen::VectorXd& grad_beta, Eigen::VectorXd& alpha,
                     Eigen::VectorXd& beta) {
    ++state.iteration;
    const double bias1 = 1.0 - std::pow(cfg.rho1, static_cast<double>(state.iteration));
    const double bias2 = 1.0 - std::pow(cfg.rho2, static_cast<double>(state.iteration));
    auto update = [&](Eigen::VectorXd& m, Eigen::VectorXd& v,
                      const Eigen::VectorXd& grad, Eigen::VectorXd& coeff,
                      double step) {
        m = cfg.rho1 * m + (1.0 - cfg.rho1) * grad;
        v = cfg.rho2 * v + (1.0 - cfg.rho2) * grad.cwiseProduct(grad);
        for (int i = 0; i < coeff.size(); ++i) {
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            coeff[i] -= step * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    };
    update(state.m_alpha, state.v_alpha, grad_alpha, alpha, cfg.step_angle);
    update(state.m_beta, state.v_beta, grad_beta, beta, cfg.step_range);
}

FitResult adam_fit(const MotionPoly& initial, const ArrayGeometry& geom,
                   std::span<const Observation> window, const AdamConfig& cfg,
                   const StateClamp& clamp) {
    if (window.empty()) throw std::invalid_argument("adam_fit: empty window");
    FitResult result;
    result.model = initial;
    MotionPoly current = initial;
    AdamState state = AdamState::zero(current.angle_order(), current.range_order());

    double best_cost = cost_j(current, geom, window, clamp);
    double prev_cost = best_cost;
    result.diagnostics.initial_cost = best_cost;
    result.diagnostics.cost_trace.push_back(best_cost);

    for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
        const CostGradient cg = cost_gradient(current, geom, window, clamp);
        adam_apply_step(state, cfg, cg.grad_alpha, cg.grad_beta, current.alpha,
                        current.beta);
        const double cost = cost_j(current, geom, window, clamp);
        result.diagnostics.cost_trace.push_back(cost);
        result.diagnostics.iterations = iter;
        if (cost < best_cost) {
            best_cost = cost;
            result.model = current;
        }
        if (std::abs(cost - prev_cost) / std::max(prev_cost, 1e-30) <
            cfg.rel_tolerance) {
            result.diagnostics.converged = true;
            break;
        }
        prev_cost = cost;
    }
    result.diagnostics.final_cost = best_cost;
    return result;
}

int gauss_newton_polish(MotionPoly& model, const ArrayGeometry& geom,
                        std::span<const Observation> window, int max_steps,
                        const StateClamp& clamp) {
    if (window.empty() || max_steps <= 0) return 0;
    const int na = static_cast<int>(model.alpha.size());
    const int nb = static_cast<int>(model.beta.size());
    const int dim = na + nb;
    double damping = 1e-12;
    double cost = cost_j(model, geom, window, clamp);
    int accepted = 0;
    for (int step = 0; step < max_steps; ++step) {
        Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
        for (const Observation& obs : window) {
            const TauPowers tp = tau_powers(model, obs.t_prime);
            const EvalPoint pt = eval_clamped(model, tp, clamp);
            const BeamResponse resp = los_beam_response(geom, pt.state, obs.beam, true);
            const std::complex<double> residual = obs.received - resp.mu;
            Eigen::VectorXcd jac(dim);
            for (int i = 0; i < na; ++i)
                jac[i] = pt.theta_clamped ? 0.0 : resp.dmu_dtheta * tp.powers[i];
            for (int i = 0; i < nb; ++i)
                jac[na + i] = pt.range_clamped ? 0.0 : resp.dmu_drange * tp.powers[i];
            normal.noalias() += 2.0 * (jac * jac.adjoint()).real();
            for (int i = 0; i < dim; ++i)
                rhs[i] += 2.0 * std::real(std::conj(jac[i]) * residual);
        }
        bool improved = false;
        for (int attempt = 0; attempt < 6; ++attempt) {
            Eigen::MatrixXd damped = normal;
            damped.diagonal().array() += damping * (normal.trace() / dim + 1e-30);
            Eigen::LLT<Eigen::MatrixXd> llt(damped);
            if (llt.info() != Eigen::Success) {
                damping *= 10.0;
                continue;
            }
            const Eigen::VectorXd delta = llt.solve(rhs);
            MotionPoly trial = model;
            trial.alpha += delta.head(na);
            trial.beta += delta.tail(nb);
            const double trial_cost = cost_j(trial, geom, window, clamp);
            if (trial_cost < cost) {
                model = trial;
                cost = trial_cost;
                damping = std::max(damping * 0.25, 1e-14);
                improved = true;
                ++accepted;
                break;
            }
            damping *= 10.0;
        }
        if (!improved) break;
        if (cost <= 1e-300) break;
    }
    return accepted;
}

FimBlocks observed_fim(const MotionPoly& model, const ArrayGeometry& geom,
                       std::span<const Observation> window, double noise_var,
                       const StateClamp& clamp) {
    const int na = static_cast<int>(model.alpha.size());
    const int nb = static_cast<int>(model.beta.size());
    FimBlocks fim;
    fim.alpha = Eigen::MatrixXd::Zero(na, na);
    fim.beta = Eigen::MatrixXd::Zero(nb, nb);
    // Moment sums s_k = sum_u |dmu/d(theta|range)|^2 tau^k fill the Hankel
    // structure I[i][j] = s_{i+j}.
    Eigen::VectorXd mom_a = Eigen::VectorXd::Zero(2 * na - 1);
    Eigen::VectorXd mom_b = Eigen::VectorXd::Zero(2 * nb - 1);
    const int max_pow = std::max(2 * na - 1, 2 * nb - 1);
    for (const Observation& obs : window) {
        const TauPowers tp = tau_powers(model, obs.t_prime);
        const EvalPoint pt = eval_clamped(model, tp, clamp);
        const BeamResponse resp = los_beam_response(geom, pt.state, obs.beam, true);
        const double wa = pt.theta_clamped ? 0.0 : std::norm(resp.dmu_dtheta);
        const double wb = pt.range_clamped ? 0.0 : std::norm(resp.dmu_drange);
        const double tau = tp.powers.size() > 1 ? tp.powers[1] : 1.0;
        double p = 1.0;
        for (int k = 0; k < max_pow; ++k, p *= tau) {
            if (k < mom_a.size()) mom_a[k] += wa * p;
            if (k < mom_b.size()) mom_b[k] += wb * p;
        }
    }
    const double scale = 2.0 / noise_var;
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < na; ++j) fim.alpha(i, j) = scale * mom_a[i + j];
    for (int i = 0; i < nb; ++i)
        for (int j = 0; j < nb; ++j) fim.beta(i, j) = scale * mom_b[i + j];
    return fim;
}

Eigen::MatrixXd invert_fim_block(const Eigen::MatrixXd& fim, double ridge_rel,
                                 double ridge_abs) {
    const int n = static_cast<int>(fim.rows());
    const double ridge = ridge_rel * fim.trace() / n + ridge_abs;
    Eigen::MatrixXd regularized = fim;
    regularized.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(regularized);
    if (llt.info() != Eigen::Success) {
        // Extremely rare: fall back to a heavier ridge.
        regularized.diagonal().array() += 1e-6 * regularized.trace() / n + 1e-9;
        llt.compute(regularized);
    }
    Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(n, n));
    return 0.5 * (cov + cov.transpose());  // enforce exact symmetry
}

PosteriorBelief make_posterior(const MotionPoly& mle, const ArrayGeometry& geom,
                               std::span<const Observation> window, double noise_var,
                               double ridge_rel, double ridge_abs,
                               const StateClamp& clamp) {
    PosteriorBelief belief;
    belief.mean = mle;
    belief.noise_var = noise_var;
    const FimBlocks fim = observed_fim(mle, geom, window, noise_var, clamp);
    belief.cov_alpha = invert_fim_block(fim.alpha, ridge_rel, ridge_abs);
    belief.cov_beta = invert_fim_block(fim.beta, ridge_rel, ridge_abs);
    belief.chol_alpha = Eigen::LLT<Eigen::MatrixXd>(belief.cov_alpha).matrixL();
    belief.chol_beta = Eigen::LLT<Eigen::MatrixXd>(belief.cov_beta).matrixL();
    return belief;
}

}  // namespace nftrack
