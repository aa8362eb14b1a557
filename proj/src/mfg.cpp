#include "hisam/mfg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hisam::mfg {

double SystemParams::f_m() const {
    return std::min(f_ind_max, f_pop_max / static_cast<double>(n_devices));
}

void SystemParams::validate() const {
    if (n_devices < 2)
        throw std::invalid_argument("SystemParams: n_devices must be >= 2");
    if (!(f_pop_max > 0.0) || !(f_ind_max > 0.0))
        throw std::invalid_argument("SystemParams: frequency caps must be positive");
    if (!(time_unit > 0.0))
        throw std::invalid_argument("SystemParams: time_unit must be positive");
    if (!(tolerance > 0.0))
        throw std::invalid_argument("SystemParams: tolerance must be positive");
    if (max_rounds == 0)
        throw std::invalid_argument("SystemParams: max_rounds must be positive");
}

MeanFieldTriangle MeanFieldTriangle::unitized(double alpha_star, double f_m) {
    if (!(alpha_star > 0.0) || !(f_m > 0.0) || alpha_star > f_m)
        throw std::invalid_argument("unitized triangle needs 0 < alpha* <= F_m");
    return MeanFieldTriangle{alpha_star, f_m, alpha_star / f_m, 1.0};
}

double loss_individual(double demand, double alpha, double x_pop,
                       const SystemParams& params, double total_resource) {
    if (!(alpha > 0.0))
        throw std::domain_error("loss_individual: alpha must be positive");
    if (!(demand > 0.0) || !(total_resource > 0.0))
        throw std::domain_error("loss_individual: demand and resource must be positive");
    const double pop_rate = x_pop / params.time_unit;
    if (pop_rate >= params.f_pop_max)
        throw std::domain_error("loss_individual: population rate saturates F_P");
    const double pressure = alpha / (params.f_pop_max - pop_rate);
    const double inverse_reward =
        (x_pop * demand) / (total_resource * params.time_unit) / alpha;
    return pressure + inverse_reward;
}

GameCoefficients game_coefficients(double x_pop, double demand,
                                   const SystemParams& params,
                                   double total_resource) {
    if (!(demand > 0.0))
        throw std::domain_error("game_coefficients: demand must be positive");
    if (!(x_pop > 0.0))
        throw std::domain_error("game_coefficients: workload must be positive");
    const double pop_rate = x_pop / params.time_unit;
    if (pop_rate >= params.f_pop_max)
        throw std::domain_error("game_coefficients: population rate saturates F_P");
    GameCoefficients c;
    c.mu1 = 1.0 / (params.f_pop_max - pop_rate);
    c.mu2 = total_resource * params.time_unit / (x_pop * demand);
    return c;
}

double optimal_alpha_feedback(const GameCoefficients& coeffs, double costate) {
    const double slope = costate + coeffs.mu1;
    if (!(slope > 0.0))
        throw std::domain_error("optimal_alpha_feedback: costate + mu1 must be positive");
    return std::sqrt(1.0 / (coeffs.mu2 * slope));
}

double hamiltonian_infimum(const GameCoefficients& coeffs, double costate) {
    const double slope = costate + coeffs.mu1;
    if (!(slope > 0.0))
        throw std::domain_error("hamiltonian_infimum: costate + mu1 must be positive");
    return 2.0 * std::sqrt(slope / coeffs.mu2);
}

double terminal_cost(double x_terminal, const SystemParams& params) {
    return x_terminal / (params.f_m() * params.time_unit) - 1.0;
}

ControlPoint value_function(double t, double x, const GameCoefficients& coeffs,
                            const SystemParams& params) {
    const double horizon = params.f_m() * params.time_unit;
    ControlPoint p;
    p.t = t;
    p.x = x;
    p.costate = 1.0 / horizon;
    p.hamiltonian_inf = hamiltonian_infimum(coeffs, p.costate);
    p.value = x / horizon - 1.0 +
              2.0 * std::sqrt((coeffs.mu1 + 1.0 / horizon) / coeffs.mu2) *
                  (params.time_unit - t);
    return p;
}

namespace {

double raw_alpha_with_cap(double demand, double x_pop, double f_pop_max,
                          double f_m, double time_unit, double total_resource) {
    if (!(demand > 0.0))
        throw std::domain_error("optimal_alpha: demand must be positive");
    if (!(x_pop > 0.0))
        throw std::domain_error("optimal_alpha: workload must be positive");
    const double pop_rate = x_pop / time_unit;
    if (pop_rate >= f_pop_max)
        throw std::domain_error("optimal_alpha: population rate saturates F_P");
    const double mu1 = 1.0 / (f_pop_max - pop_rate);
    const double mu2 = total_resource * time_unit / (x_pop * demand);
    const double q = 1.0 / (f_m * time_unit);
    return std::sqrt(1.0 / (mu2 * (mu1 + q)));
}

}  // namespace

double optimal_alpha_raw(double demand, double x_pop,
                         const SystemParams& params, double total_resource) {
    return raw_alpha_with_cap(demand, x_pop, params.f_pop_max, params.f_m(),
                              params.time_unit, total_resource);
}

double optimal_alpha(double demand, double x_pop, const SystemParams& params,
                     double total_resource) {
    return std::min(params.f_m(),
                    optimal_alpha_raw(demand, x_pop, params, total_resource));
}

double optimal_alpha_with_cap(double demand, double x_pop, double f_pop_max,
                              double f_m, double time_unit,
                              double total_resource) {
    return std::min(f_m, raw_alpha_with_cap(demand, x_pop, f_pop_max, f_m,
                                            time_unit, total_resource));
}

double triangle_density(const MeanFieldTriangle& tri, double t, double x,
                        const SystemParams& params) {
    if (t < 0.0 || t > params.time_unit)
        throw std::domain_error("triangle_density: t outside [0, T]");
    if (!(tri.base > 0.0) || tri.weight < 0.0 || tri.weight > 1.0 ||
        !(tri.focus_time > 0.0))
        throw std::domain_error("triangle_density: bad triangle parameters");

    // Pure translation at speed vertex_rate: evaluate in the comoving
    // coordinate s = x - vertex_rate*(t - focus_time). Vertex at
    // s = vertex_rate * focus_time.
    const double s = x - tri.vertex_rate * (t - tri.focus_time);
    const double vertex = tri.vertex_rate * tri.focus_time;
    const double left = vertex - tri.weight * tri.base;
    const double right = vertex + (1.0 - tri.weight) * tri.base;
    const double peak = 2.0 / tri.base;

    if (s <= left || s >= right) {
        // Degenerate limbs put the peak on a support edge.
        if (s == left && tri.weight == 0.0) return peak;
        if (s == right && tri.weight == 1.0) return peak;
        return 0.0;
    }
    if (s < vertex) {
        if (tri.weight == 0.0) return 0.0;
        return peak * (s - left) / (tri.weight * tri.base);
    }
    if (tri.weight == 1.0) return s == vertex ? peak : 0.0;
    return peak * (right - s) / ((1.0 - tri.weight) * tri.base);
}

double expected_population_workload(std::span<const double> alphas,
                                    const SystemParams& params) {
    const double cap = params.f_m();
    double total = 0.0;
    for (double a : alphas) total += (a + cap) / 3.0;
    return total;
}

double contraction_coefficient(std::span<const double> demands) {
    if (demands.size() < 2)
        throw std::domain_error("contraction_coefficient: needs N >= 2");
    double total = 0.0;
    double root_sum = 0.0;
    for (double r : demands) {
        if (!(r > 0.0))
            throw std::domain_error("contraction_coefficient: demands must be positive");
        total += r;
        root_sum += std::sqrt(r);
    }
    return total / (root_sum * root_sum);
}

double closed_form_equilibrium(std::span<const double> demands,
                               const SystemParams& params) {
    const double c = contraction_coefficient(demands);
    return params.f_pop_max * params.time_unit / (1.0 + c);
}

double project_workload(double x, const SystemParams& params) {
    const double cap = params.f_pop_max * params.time_unit;
    const double eps = 1e-9 * cap;
    return std::clamp(x, eps, cap - eps);
}

NegotiationEngine::NegotiationEngine(const SystemParams& params,
                                     double total_resource)
    : params_(params), total_resource_(total_resource) {
    params_.validate();
    if (!(total_resource > 0.0))
        throw std::invalid_argument("NegotiationEngine: total resource must be positive");
    params_.time_unit = 1.0;  // negotiation is unitized
    initial_alpha_ = 0.8 * params_.f_m();
    committed_.assign(params_.n_devices, initial_alpha_);
    x_ = project_workload(expected_population_workload(committed_, params_), params_);
}

void NegotiationEngine::submit_alphas(std::span<const double> alphas) {
    if (alphas.size() != params_.n_devices)
        throw std::invalid_argument("NegotiationEngine: report count mismatch");
    latest_.assign(alphas.begin(), alphas.end());
    x_ = project_workload(expected_population_workload(latest_, params_), params_);
    ++exchange_;
}

bool NegotiationEngine::round_boundary() {
    if (exchange_ < kExchangesPerRound) return false;
    exchange_ = 0;
    double error = 0.0;
    for (std::size_t i = 0; i < latest_.size(); ++i)
        error += std::abs(latest_[i] - committed_[i]);
    error /= static_cast<double>(latest_.size());
    committed_ = latest_;
    trace_.per_round_errors.push_back(error);
    trace_.per_round_alphas.push_back(committed_);
    trace_.final_x = x_;
    if (error < params_.tolerance) {
        converged_ = true;
        trace_.converged = true;
    }
    return true;
}

NegotiationOutcome negotiate_equilibrium(std::span<const double> demands,
                                         const SystemParams& params) {
    SystemParams p = params;
    p.validate();
    if (demands.size() != p.n_devices)
        throw std::invalid_argument("negotiate_equilibrium: demand count != n_devices");
    const double total_resource = std::accumulate(demands.begin(), demands.end(), 0.0);

    SystemParams unit = p;
    unit.time_unit = 1.0;
    NegotiationEngine engine(unit, total_resource);

    std::vector<double> alphas(demands.size());
    while (!engine.converged() && engine.rounds() < p.max_rounds) {
        for (int exchange = 0; exchange < NegotiationEngine::kExchangesPerRound;
             ++exchange) {
            const double x = engine.broadcast_x();
            for (std::size_t i = 0; i < demands.size(); ++i)
                alphas[i] = optimal_alpha(demands[i], x, unit, total_resource);
            engine.submit_alphas(alphas);
        }
        engine.round_boundary();
    }

    NegotiationOutcome out;
    out.trace = engine.trace();
    out.result.alphas = engine.committed_alphas();
    out.result.final_x = engine.final_x();
    return out;
}

Allocation allocate_resources(std::span<const double> alphas, double x_pop,
                              const SystemParams& params,
                              double total_resource) {
    if (!(x_pop > 0.0))
        throw std::domain_error("allocate_resources: population workload must be positive");
    Allocation a;
    a.per_device_share.reserve(alphas.size());
    const double rate = x_pop / params.time_unit;
    for (double alpha : alphas)
        a.per_device_share.push_back(total_resource * alpha / rate);
    return a;
}

}  // namespace hisam::mfg
