#ifndef HISAM_SIM_HPP
#define HISAM_SIM_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hisam/mfg.hpp"

// Seeded discrete-event harness: samples demands, picks per-policy
// frequencies, schedules authentications (each one running a DTR-MAC
// handshake with penalty bookkeeping), injects anomalies, and accounts
// loss, workload and detection time across seeds.

namespace hisam::sim {

enum class Policy { hisam, fixed_high, fixed_low, demand_driven };

const char* policy_name(Policy p);
std::optional<Policy> policy_from_name(const std::string& name);

struct Scenario {
    mfg::SystemParams params;     // time_unit in physical seconds
    double demand_mean = 10.0;
    double demand_stddev = 3.0;   // the "variance" knob, applied as the stddev
    double demand_min = 0.0;      // open bounds on the demand support
    double demand_max = 20.0;
    Policy policy = Policy::hisam;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    double horizon = 0.0;  // seconds; 0 means one time unit
    std::size_t anomalies_per_device = 1;

    double effective_horizon() const {
        return horizon > 0.0 ? horizon : params.time_unit;
    }
    void validate() const;
};

struct AnomalyEvent {
    std::size_t device = 0;
    double onset = 0.0;
    std::optional<double> detected_at;  // unset while pending
};

struct SeedMetrics {
    std::uint64_t seed = 0;
    double population_loss = 0.0;
    double total_workload = 0.0;        // authentications executed
    double mean_detection_time = 0.0;   // seconds, censored at horizon
    std::uint64_t detected_count = 0;
    std::uint64_t censored_count = 0;   // pending on never-evicted devices
    std::uint64_t excluded_count = 0;   // pending on evicted devices
    std::uint64_t evicted_devices = 0;
    std::uint64_t handshake_failures = 0;
    double realized_r_max = 0.0;
};

struct MetricsRecord {
    Policy policy = Policy::hisam;
    // Seed means.
    double population_loss = 0.0;
    double total_workload = 0.0;
    double mean_detection_time = 0.0;
    double mean_evicted_devices = 0.0;
    std::vector<SeedMetrics> per_seed;
};

// n draws from Gaussian(mean, stddev^2) truncated to (lo, hi) by rejection.
// Deterministic per seed; throws std::runtime_error when the acceptance
// probability is pathologically small.
std::vector<double> sample_demands(double mean, double stddev, std::size_t n,
                                   std::uint64_t seed, double lo = 0.0,
                                   double hi = 20.0);

// Per-policy frequencies (authentications per time unit):
//   fixed_high     F_m
//   fixed_low      F_m/2
//   demand_driven  max(F_I, F_P/N) * r_i / max_j r_j
//   hisam          negotiated equilibrium
// The demand-driven baseline scales each device by relative demand against
// the larger of the individual cap and the per-device population share; it
// deliberately ignores the joint feasibility that the negotiation enforces.
std::vector<double> policy_frequencies(Policy policy,
                                       std::span<const double> demands,
                                       const mfg::SystemParams& params);

// Runs scenario.policy across all seeds and aggregates.
MetricsRecord run_simulation(const Scenario& scenario);

// One (policy, seed) cell; exposed for tests and the grid runner.
SeedMetrics run_simulation_seed(const Scenario& scenario, Policy policy,
                                std::uint64_t seed);

struct GridCell {
    std::string sweep_name;
    double sweep_value = 0.0;
    MetricsRecord record;
};

enum class Sweep { mean, variance, size };

std::optional<Sweep> sweep_from_name(const std::string& name);
const char* sweep_name(Sweep sweep);
std::vector<double> default_sweep_values(Sweep sweep);

// Every policy at every sweep point, all seeds. Deterministic.
std::vector<GridCell> experiment_grid(const Scenario& base, Sweep sweep);
std::vector<GridCell> experiment_grid(const Scenario& base, Sweep sweep,
                                      std::span<const double> values);

}  // namespace hisam::sim

#endif
