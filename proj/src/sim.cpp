#include "hisam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "hisam/dtr_mac.hpp"

namespace hisam::sim {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

dtr::MessageWord random_word(std::mt19937_64& rng) {
    dtr::MessageWord w;
    do {
        for (auto& b : w.bytes) b = static_cast<std::uint8_t>(rng() & 0xff);
    } while (w.is_zero());
    return w;
}

}  // namespace

const char* policy_name(Policy p) {
    switch (p) {
        case Policy::hisam: return "hisam";
        case Policy::fixed_high: return "fixed_high";
        case Policy::fixed_low: return "fixed_low";
        case Policy::demand_driven: return "demand_driven";
    }
    return "?";
}

std::optional<Policy> policy_from_name(const std::string& name) {
    for (Policy p : {Policy::hisam, Policy::fixed_high, Policy::fixed_low,
                     Policy::demand_driven})
        if (name == policy_name(p)) return p;
    return std::nullopt;
}

void Scenario::validate() const {
    params.validate();
    if (!(demand_min < demand_mean && demand_mean < demand_max))
        throw std::invalid_argument("Scenario: demand bounds must contain the mean");
    if (!(demand_stddev > 0.0))
        throw std::invalid_argument("Scenario: demand stddev must be positive");
    if (seeds.empty())
        throw std::invalid_argument("Scenario: seed list must not be empty");
    if (horizon < 0.0)
        throw std::invalid_argument("Scenario: horizon must be nonnegative");
}

std::vector<double> sample_demands(double mean, double stddev, std::size_t n,
                                   std::uint64_t seed, double lo, double hi) {
    if (!(lo < mean && mean < hi))
        throw std::invalid_argument("sample_demands: mean outside bounds");
    std::mt19937_64 rng(mix_seed(seed, 0x01));
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<double> out;
    out.reserve(n);
    // 1e3 attempts per draw bounds the acceptance probability at ~1e-3.
    constexpr int kMaxAttempts = 1000;
    for (std::size_t i = 0; i < n; ++i) {
        int attempt = 0;
        for (;;) {
            const double r = mean + stddev * unit(rng);
            if (r > lo && r < hi) {
                out.push_back(r);
                break;
            }
            if (++attempt >= kMaxAttempts)
                throw std::runtime_error("sample_demands: rejection rate pathological");
        }
    }
    return out;
}

std::vector<double> policy_frequencies(Policy policy,
                                       std::span<const double> demands,
                                       const mfg::SystemParams& params) {
    const double cap = params.f_m();
    std::vector<double> alphas(demands.size());
    switch (policy) {
        case Policy::fixed_high:
            std::fill(alphas.begin(), alphas.end(), cap);
            break;
        case Policy::fixed_low:
            std::fill(alphas.begin(), alphas.end(), cap / 2.0);
            break;
        case Policy::demand_driven: {
            const double r_max = *std::max_element(demands.begin(), demands.end());
            const double allowance =
                std::max(params.f_ind_max,
                         params.f_pop_max / static_cast<double>(params.n_devices));
            for (std::size_t i = 0; i < demands.size(); ++i)
                alphas[i] = allowance * demands[i] / r_max;
            break;
        }
        case Policy::hisam: {
            const auto outcome = mfg::negotiate_equilibrium(demands, params);
            if (!outcome.trace.converged)
                throw std::runtime_error("policy_frequencies: negotiation did not converge");
            return outcome.result.alphas;
        }
    }
    return alphas;
}

SeedMetrics run_simulation_seed(const Scenario& scenario, Policy policy,
                                std::uint64_t seed) {
    scenario.validate();
    const mfg::SystemParams& params = scenario.params;
    const double T = params.time_unit;
    const double horizon = scenario.effective_horizon();
    const double f_m = params.f_m();
    const double sleep_unit = T / f_m;     // T_s
    const std::uint64_t oversleep_limit = 2;  // n: the sleep allowance is 2*T_s = 2T/F_m

    const std::vector<double> demands =
        sample_demands(scenario.demand_mean, scenario.demand_stddev,
                       params.n_devices, seed, scenario.demand_min,
                       scenario.demand_max);
    const double total_resource =
        std::accumulate(demands.begin(), demands.end(), 0.0);

    SeedMetrics metrics;
    metrics.seed = seed;
    metrics.realized_r_max = *std::max_element(demands.begin(), demands.end());

    // Frequencies and the population workload entering the loss. The
    // negotiated policy carries its own equilibrium expectation; the
    // baselines only have their realized rate sum(alpha)*T.
    std::vector<double> alphas;
    double x_for_loss = 0.0;
    if (policy == Policy::hisam) {
        const auto outcome = mfg::negotiate_equilibrium(demands, params);
        if (!outcome.trace.converged)
            throw std::runtime_error("run_simulation: negotiation did not converge");
        alphas = outcome.result.alphas;
        x_for_loss = outcome.result.final_x;
    } else {
        alphas = policy_frequencies(policy, demands, params);
        x_for_loss = std::accumulate(alphas.begin(), alphas.end(), 0.0);
    }

    std::vector<mfg::DeviceProfile> devices(alphas.size());
    for (std::size_t i = 0; i < alphas.size(); ++i)
        devices[i] = mfg::DeviceProfile{i, demands[i], alphas[i], 0.0};

    mfg::SystemParams unit = params;
    unit.time_unit = 1.0;
    x_for_loss = mfg::project_workload(x_for_loss, unit);
    double loss = 0.0;
    for (const auto& device : devices)
        loss += mfg::loss_individual(device.demand, device.alpha, x_for_loss,
                                     unit, total_resource);
    metrics.population_loss = loss;

    double detection_sum = 0.0;
    std::uint64_t detection_n = 0;

    for (std::size_t dev = 0; dev < devices.size(); ++dev) {
        mfg::DeviceProfile& device = devices[dev];
        const double alpha = device.alpha;
        const double spacing = T / alpha;

        // Pre-shared registration state for the per-authentication DTR runs.
        std::mt19937_64 session_rng(mix_seed(seed, 0x100 + dev));
        dtr::AuthSession shared;
        shared.ue_msg = random_word(session_rng);
        shared.ap_msg = random_word(session_rng);
        for (auto& b : shared.key.key)
            b = static_cast<std::uint8_t>(session_rng() & 0xff);
        shared.sleep_unit = sleep_unit;
        dtr::UeSession ue(shared);
        dtr::ApSession ap(shared);
        dtr::PenaltyLedger ledger{oversleep_limit, 0.0, false};

        std::mt19937_64 delay_rng(mix_seed(seed, 0x10000 + dev));
        std::uniform_real_distribution<double> delay(
            0.0, std::min(0.04 * sleep_unit, 0.4 * spacing));

        std::vector<double> executed;  // successful authentication instants
        bool evicted = false;
        for (std::uint64_t k = 1;; ++k) {
            const double now = spacing * static_cast<double>(k);
            if (now > horizon * (1.0 + 1e-12)) break;
            const dtr::MacTag tag1 = ue.initiate(now);
            const auto verdict = ap.verify_initiation(tag1, now + delay(delay_rng));
            bool ok = verdict.accepted;
            if (ok) {
                const dtr::MacTag tag2 = ap.respond();
                const auto reply = ue.verify_response_and_finalize(tag2);
                ok = reply.has_value() && ap.finalize(*reply);
            }
            if (!ok) {
                ++metrics.handshake_failures;
                continue;
            }
            executed.push_back(now);
            // The authentication counts as work, then the preceding sleep is
            // judged. Consecutive slots make the realized sleep exactly one
            // spacing.
            ledger.workload += 1.0;
            ledger = dtr::apply_oversleep_penalty(ledger, spacing, sleep_unit);
            if (ledger.evicted) {
                evicted = true;
                ue.mark_evicted();
                break;
            }
        }
        device.workload = static_cast<double>(executed.size());
        metrics.total_workload += device.workload;
        if (evicted) ++metrics.evicted_devices;

        std::mt19937_64 anomaly_rng(mix_seed(seed, 0x20000 + dev));
        std::uniform_real_distribution<double> onset_dist(0.0, horizon);
        for (std::size_t a = 0; a < scenario.anomalies_per_device; ++a) {
            const double onset = onset_dist(anomaly_rng);
            const auto next = std::lower_bound(executed.begin(), executed.end(), onset);
            if (next != executed.end()) {
                detection_sum += *next - onset;
                ++detection_n;
                ++metrics.detected_count;
            } else if (evicted) {
                // Post-eviction anomalies stay out of the statistics.
                ++metrics.excluded_count;
            } else {
                // Never resolved within the horizon: censor there.
                detection_sum += horizon - onset;
                ++detection_n;
                ++metrics.censored_count;
            }
        }
    }

    metrics.mean_detection_time =
        detection_n > 0 ? detection_sum / static_cast<double>(detection_n) : 0.0;
    return metrics;
}

MetricsRecord run_simulation(const Scenario& scenario) {
    scenario.validate();
    MetricsRecord record;
    record.policy = scenario.policy;
    for (std::uint64_t seed : scenario.seeds)
        record.per_seed.push_back(run_simulation_seed(scenario, scenario.policy, seed));
    const double n = static_cast<double>(record.per_seed.size());
    for (const auto& s : record.per_seed) {
        record.population_loss += s.population_loss / n;
        record.total_workload += s.total_workload / n;
        record.mean_detection_time += s.mean_detection_time / n;
        record.mean_evicted_devices += static_cast<double>(s.evicted_devices) / n;
    }
    return record;
}

std::optional<Sweep> sweep_from_name(const std::string& name) {
    if (name == "mean") return Sweep::mean;
    if (name == "variance") return Sweep::variance;
    if (name == "size") return Sweep::size;
    return std::nullopt;
}

const char* sweep_name(Sweep sweep) {
    switch (sweep) {
        case Sweep::mean: return "mean";
        case Sweep::variance: return "variance";
        case Sweep::size: return "size";
    }
    return "?";
}

std::vector<double> default_sweep_values(Sweep sweep) {
    switch (sweep) {
        case Sweep::mean: return {4, 8, 10, 12, 16};
        case Sweep::variance: return {1, 2, 3, 4, 5};
        case Sweep::size: return {20, 60, 100, 140, 180};
    }
    return {};
}

std::vector<GridCell> experiment_grid(const Scenario& base, Sweep sweep) {
    const auto values = default_sweep_values(sweep);
    return experiment_grid(base, sweep, values);
}

std::vector<GridCell> experiment_grid(const Scenario& base, Sweep sweep,
                                      std::span<const double> values) {
    std::vector<GridCell> cells;
    for (double value : values) {
        Scenario scenario = base;
        switch (sweep) {
            case Sweep::mean:
                scenario.demand_mean = value;
                break;
            case Sweep::variance:
                // Sweep value lands on the stddev knob; the interpretation
                // is recorded in the CLI metadata sidecar.
                scenario.demand_stddev = value;
                break;
            case Sweep::size:
                scenario.params.n_devices = static_cast<std::size_t>(value);
                break;
        }
        for (Policy policy : {Policy::hisam, Policy::fixed_high, Policy::fixed_low,
                              Policy::demand_driven}) {
            scenario.policy = policy;
            GridCell cell;
            cell.sweep_name = sweep_name(sweep);
            cell.sweep_value = value;
            cell.record = run_simulation(scenario);
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

}  // namespace hisam::sim
