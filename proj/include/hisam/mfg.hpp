#ifndef HISAM_MFG_HPP
#define HISAM_MFG_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

// Mean-field-game core: individual optimal control, triangular mean-field
// density, population workload expectation, and the fixed-point negotiation
// loop that assigns each device an authentication frequency.
//
// All negotiation-level quantities are unitized (time unit T = 1); physical
// time enters only when the simulation schedules authentications.

namespace hisam::mfg {

struct SystemParams {
    std::size_t n_devices = 100;   // N
    double f_pop_max = 2000.0;     // F_P, authentications per time unit
    double f_ind_max = 20.0;       // F_I, authentications per time unit
    double time_unit = 1.0;        // T, seconds
    double tolerance = 1e-10;      // stop when mean per-device change drops below
    std::size_t max_rounds = 50;

    // F_m = min(F_I, F_P/N), the admissible per-device frequency cap.
    double f_m() const;

    // Throws std::invalid_argument when a field is out of domain
    // (N < 2, non-positive caps, non-positive time unit).
    void validate() const;
};

struct DeviceProfile {
    std::size_t id = 0;
    double demand = 1.0;    // r, resource units
    double alpha = 0.0;     // current frequency per time unit
    double workload = 0.0;  // x, accumulated authentications
};

struct PopulationState {
    double total_resource = 0.0;        // R = sum of demands
    double workload_expectation = 0.0;  // X, current iterate
    std::size_t round = 0;
};

struct GameCoefficients {
    double mu1 = 0.0;  // 1/(F_P - X/T)
    double mu2 = 0.0;  // R*T/(X*r)
};

struct ControlPoint {
    double t = 0.0;
    double x = 0.0;
    double costate = 0.0;          // p = dv/dx
    double value = 0.0;            // v(t, x)
    double hamiltonian_inf = 0.0;  // H* at this costate
};

// Translating triangular density. The general form has a vertex moving at
// vertex_rate, support of width `base`, fraction `weight` of the base to the
// left of the vertex, and a focus time at which the vertex sits at
// vertex_rate * focus_time.
struct MeanFieldTriangle {
    double vertex_rate = 1.0;  // alpha*
    double base = 1.0;         // x_b
    double weight = 0.5;       // gamma in (0, 1); 0/1 degenerate one-sided
    double focus_time = 1.0;   // T_f

    // Unitized form: T = 1, base = F_m, weight = alpha*/F_m, focus = 1.
    static MeanFieldTriangle unitized(double alpha_star, double f_m);
};

struct NegotiationTrace {
    std::vector<double> per_round_errors;
    std::vector<std::vector<double>> per_round_alphas;
    bool converged = false;
    double final_x = 0.0;
};

struct EquilibriumResult {
    std::vector<double> alphas;
    double final_x = 0.0;
};

struct NegotiationOutcome {
    EquilibriumResult result;
    NegotiationTrace trace;
};

struct Allocation {
    std::vector<double> per_device_share;
};

// Loss of one device:
//   alpha/(F_P - X/T) + (X*r)/(R*T) * 1/alpha.
// Throws std::domain_error when alpha <= 0 or X/T >= F_P (saturated system).
double loss_individual(double demand, double alpha, double x_pop,
                       const SystemParams& params, double total_resource);

// mu1 = 1/(F_P - X/T), mu2 = R*T/(X*r). Domain error when X <= 0 or
// X/T >= F_P.
GameCoefficients game_coefficients(double x_pop, double demand,
                                   const SystemParams& params,
                                   double total_resource);

// Minimizer of (costate + mu1)*a + 1/(mu2*a) over a > 0:
//   sqrt(1/(mu2*(costate + mu1))).
// Domain error when costate + mu1 <= 0 (no interior minimizer).
double optimal_alpha_feedback(const GameCoefficients& coeffs, double costate);

// Value of the objective above at its minimizer: 2*sqrt((costate + mu1)/mu2).
double hamiltonian_infimum(const GameCoefficients& coeffs, double costate);

// Terminal cost x_T/(F_m*T) - 1, in [-1, 0] on the admissible range.
double terminal_cost(double x_terminal, const SystemParams& params);

// Closed-form value function
//   v(t,x) = x/(F_m T) - 1 + 2*sqrt((mu1 + 1/(F_m T))/mu2)*(T - t)
// with constant costate 1/(F_m T).
ControlPoint value_function(double t, double x, const GameCoefficients& coeffs,
                            const SystemParams& params);

// Closed-form optimum sqrt(1/(mu2*(mu1 + 1/(F_m*T)))), before clamping.
double optimal_alpha_raw(double demand, double x_pop,
                         const SystemParams& params, double total_resource);

// Raw optimum clamped to the admissible cap F_m.
double optimal_alpha(double demand, double x_pop, const SystemParams& params,
                     double total_resource);

// Same computation with the cap passed explicitly. Devices on the wire learn
// F_m from the broadcast instead of deriving it from N; routing both callers
// through one primitive keeps their results bit-identical.
double optimal_alpha_with_cap(double demand, double x_pop, double f_pop_max,
                              double f_m, double time_unit,
                              double total_resource);

// Density value m(t, x) of the translating triangle. Zero outside support,
// peak 2/base at the vertex. weight in {0, 1} collapses one limb.
double triangle_density(const MeanFieldTriangle& tri, double t, double x,
                        const SystemParams& params);

// Unitized population workload expectation, Sum_i (alpha_i + F_m)/3 --
// the sum of triangular-distribution means with support [0, F_m] and mode
// alpha_i.
double expected_population_workload(std::span<const double> alphas,
                                    const SystemParams& params);

// c = R/(sum_i sqrt(r_i))^2, in [1/N, 1) for N >= 2; equality at 1/N iff all
// demands are equal. Domain error for N < 2.
double contraction_coefficient(std::span<const double> demands);

// Fixed point X = F_P*T/(1 + c) of the aggregated affine map
// X -> F_P*T - c*X. This is the proof-level approximation; the negotiation
// pipeline below converges to a different point (it keeps the 1/(F_m*T)
// term that the aggregated map drops).
double closed_form_equilibrium(std::span<const double> demands,
                               const SystemParams& params);

// Projects an iterate into [eps, F_P*T - eps], eps = 1e-9 * F_P * T.
double project_workload(double x, const SystemParams& params);

// Round bookkeeping shared by the in-process solver and the wire AP loop so
// both produce bit-identical iterates. One negotiation round is two
// broadcast/report exchanges: the AP broadcasts X, devices answer with
// alpha*, the AP re-aggregates, and the pair settles once more before the
// round error is measured on the committed per-device iterates x_i =
// alpha_i * T (unitized T = 1).
class NegotiationEngine {
public:
    static constexpr int kExchangesPerRound = 2;

    NegotiationEngine(const SystemParams& params, double total_resource);

    double initial_alpha() const { return initial_alpha_; }
    // X to broadcast for the next exchange (already projected).
    double broadcast_x() const { return x_; }
    // Feed one exchange worth of reports, in device-index order.
    void submit_alphas(std::span<const double> alphas);
    // True once kExchangesPerRound exchanges were submitted; commits the
    // round, records the trace row and resets the exchange counter.
    bool round_boundary();

    bool converged() const { return converged_; }
    std::size_t rounds() const { return trace_.per_round_errors.size(); }
    const NegotiationTrace& trace() const { return trace_; }
    const std::vector<double>& committed_alphas() const { return committed_; }
    double final_x() const { return x_; }
    PopulationState population_state() const {
        return PopulationState{total_resource_, x_, rounds()};
    }

private:
    SystemParams params_;
    double total_resource_;
    double initial_alpha_;
    double x_;
    int exchange_ = 0;
    bool converged_ = false;
    std::vector<double> committed_;  // round-end iterates
    std::vector<double> latest_;
    NegotiationTrace trace_;
};

// Full negotiation: initialize alpha_i = 0.8*F_m, iterate rounds until the
// mean per-device change drops below params.tolerance or max_rounds is hit.
// Non-convergence is reported through trace.converged, never silently.
// Internally unitized: params.time_unit is ignored in favor of T = 1.
NegotiationOutcome negotiate_equilibrium(std::span<const double> demands,
                                         const SystemParams& params);

// Proof-of-work split: share_i = R * alpha_i / (X/T). Domain error when
// x_pop <= 0.
Allocation allocate_resources(std::span<const double> alphas, double x_pop,
                              const SystemParams& params,
                              double total_resource);

}  // namespace hisam::mfg

#endif
