// Experiment runner and conformance-vector generator for the Hi-SAM stack:
//   negotiate    convergence table (round, error, X)
//   simulate     one policy across seeds
//   grid         sweep x policy x seed metrics CSV + seed-averaged companion
//   gen-vectors  DTR-MAC conformance vectors
//   serve-ap     wire-protocol access point
//   run-ue       wire-protocol device client
// Exit codes: 0 success, 2 config error, 3 convergence failure, 4 protocol.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "hisam/ap_service.hpp"
#include "hisam/dtr_mac.hpp"
#include "hisam/mfg.hpp"
#include "hisam/sim.hpp"
#include "hisam/ue_client.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNoConvergence = 3;
constexpr int kExitProtocol = 4;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

struct CommonOptions {
    std::size_t n = 100;
    double fp = 2000.0;
    double fi = 20.0;
    double time_unit = 10.0;
    double mean = 10.0;
    double variance = 3.0;  // dispersion knob, applied as the stddev
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::string out;

    hisam::mfg::SystemParams params() const {
        hisam::mfg::SystemParams p;
        p.n_devices = n;
        p.f_pop_max = fp;
        p.f_ind_max = fi;
        p.time_unit = time_unit;
        return p;
    }

    hisam::sim::Scenario scenario() const {
        hisam::sim::Scenario s;
        s.params = params();
        s.demand_mean = mean;
        s.demand_stddev = variance;
        s.seeds = seeds;
        return s;
    }
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool with_seeds = true) {
    cmd->set_config("--config", "", "flat key=value configuration file");
    cmd->add_option("--n", opt.n, "population size N");
    cmd->add_option("--fp", opt.fp, "population frequency cap F_P per time unit");
    cmd->add_option("--fi", opt.fi, "individual frequency cap F_I per time unit");
    cmd->add_option("--time-unit", opt.time_unit, "time unit T in seconds");
    cmd->add_option("--mean", opt.mean, "demand mean");
    cmd->add_option("--variance", opt.variance,
                    "demand dispersion, applied as the stddev of the demand draw");
    if (with_seeds)
        cmd->add_option("--seeds", opt.seeds, "seed list")->delimiter(',');
    cmd->add_option("--out", opt.out, "output file (default stdout)");
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CLI::ValidationError("--out", "cannot open " + path);
    return f;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    auto f = open_out(path);
    f << text;
}

int run_negotiate(const CommonOptions& opt) {
    const auto demands = hisam::sim::sample_demands(
        opt.mean, opt.variance, opt.n, opt.seeds.front());
    const auto outcome = hisam::mfg::negotiate_equilibrium(demands, opt.params());

    std::ostringstream csv;
    csv << "round,error,X\n";
    for (std::size_t i = 0; i < outcome.trace.per_round_errors.size(); ++i) {
        const double x = hisam::mfg::expected_population_workload(
            outcome.trace.per_round_alphas[i], opt.params());
        csv << (i + 1) << ',' << fmt(outcome.trace.per_round_errors[i]) << ','
            << fmt(x) << '\n';
    }
    write_text(opt.out, csv.str());

    if (!outcome.trace.converged) {
        std::cerr << "negotiation did not converge within "
                  << opt.params().max_rounds << " rounds\n";
        return kExitNoConvergence;
    }
    std::cerr << "converged in " << outcome.trace.per_round_errors.size()
              << " rounds, X = " << fmt(outcome.result.final_x) << '\n';
    return kExitOk;
}

void write_metadata(const std::string& out, const CommonOptions& opt,
                    const std::string& extra) {
    if (out.empty()) return;
    std::ofstream meta(out + ".meta", std::ios::binary);
    meta << "n=" << opt.n << "\nfp=" << fmt(opt.fp) << "\nfi=" << fmt(opt.fi)
         << "\ntime_unit=" << fmt(opt.time_unit) << "\nmean=" << fmt(opt.mean)
         << "\nvariance_row=" << fmt(opt.variance)
         << "\nvariance_row_interpreted_as=stddev\ndemand_stddev="
         << fmt(opt.variance)
         << "\ndemand_driven_allowance=max(F_I,F_P/N)\nr_max_mode=realized"
         << "\nsleep_unit=T/F_m\noversleep_limit=2\nseeds=";
    for (std::size_t i = 0; i < opt.seeds.size(); ++i)
        meta << (i ? "," : "") << opt.seeds[i];
    meta << '\n' << extra;
}

int run_simulate(const CommonOptions& opt, const std::string& policy_name) {
    const auto policy = hisam::sim::policy_from_name(policy_name);
    if (!policy) throw CLI::ValidationError("--policy", "unknown policy " + policy_name);
    auto scenario = opt.scenario();
    scenario.policy = *policy;
    const auto record = hisam::sim::run_simulation(scenario);

    std::ostringstream csv;
    csv << "policy,seed,loss,detection_time,workload\n";
    for (const auto& s : record.per_seed)
        csv << policy_name << ',' << s.seed << ',' << fmt(s.population_loss) << ','
            << fmt(s.mean_detection_time) << ',' << fmt(s.total_workload) << '\n';
    write_text(opt.out, csv.str());
    write_metadata(opt.out, opt, "");

    std::cerr << "seed means: loss=" << fmt(record.population_loss)
              << " detection=" << fmt(record.mean_detection_time)
              << " workload=" << fmt(record.total_workload) << '\n';
    return kExitOk;
}

int run_grid(const CommonOptions& opt, const std::string& sweep_name) {
    const auto sweep = hisam::sim::sweep_from_name(sweep_name);
    if (!sweep) throw CLI::ValidationError("--sweep", "unknown sweep " + sweep_name);
    const auto cells = hisam::sim::experiment_grid(opt.scenario(), *sweep);

    std::ostringstream csv;
    csv << "sweep_name,sweep_value,policy,seed,loss,detection_time,workload\n";
    for (const auto& cell : cells)
        for (const auto& s : cell.record.per_seed)
            csv << cell.sweep_name << ',' << fmt(cell.sweep_value) << ','
                << hisam::sim::policy_name(cell.record.policy) << ',' << s.seed
                << ',' << fmt(s.population_loss) << ','
                << fmt(s.mean_detection_time) << ',' << fmt(s.total_workload)
                << '\n';
    write_text(opt.out, csv.str());

    std::ostringstream mean_csv;
    mean_csv << "sweep_name,sweep_value,policy,loss,detection_time,workload\n";
    for (const auto& cell : cells)
        mean_csv << cell.sweep_name << ',' << fmt(cell.sweep_value) << ','
                 << hisam::sim::policy_name(cell.record.policy) << ','
                 << fmt(cell.record.population_loss) << ','
                 << fmt(cell.record.mean_detection_time) << ','
                 << fmt(cell.record.total_workload) << '\n';
    if (!opt.out.empty()) {
        const std::filesystem::path path(opt.out);
        std::filesystem::path mean_path = path;
        mean_path.replace_extension("");
        mean_path += "_mean";
        mean_path += path.extension();
        auto f = open_out(mean_path.string());
        f << mean_csv.str();
    } else {
        std::cout << mean_csv.str();
    }
    write_metadata(opt.out, opt, "sweep=" + std::string(sweep_name) + "\n");
    return kExitOk;
}

int run_gen_vectors(const std::string& out, std::uint64_t seed,
                    std::size_t steps, double sleep_unit) {
    const auto records =
        hisam::dtr::generate_conformance_vectors(seed, steps, sleep_unit);
    write_text(out, hisam::dtr::format_conformance_vectors(records));
    return kExitOk;
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& ep) {
    const auto colon = ep.rfind(':');
    if (colon == std::string::npos)
        throw CLI::ValidationError("endpoint", "expected host:port, got " + ep);
    const std::string host = ep.substr(0, colon);
    const int port = std::stoi(ep.substr(colon + 1));
    if (port < 0 || port > 65535)
        throw CLI::ValidationError("endpoint", "port out of range");
    return {host, static_cast<std::uint16_t>(port)};
}

int run_serve_ap(const CommonOptions& opt, const std::string& listen,
                 std::uint64_t secret_seed) {
    const auto [host, port] = parse_endpoint(listen);
    hisam::wire::ApConfig config;
    config.params = opt.params();
    config.sleep_unit = opt.time_unit / config.params.f_m();
    config.listen_host = host;
    config.listen_port = port;

    std::map<std::uint64_t, hisam::wire::DeviceSecrets> registry;
    for (std::size_t i = 0; i < opt.n; ++i)
        registry[i] = hisam::wire::derive_device_secrets(secret_seed, i);

    try {
        hisam::wire::ApService service(config, std::move(registry),
                                       std::make_shared<hisam::SystemClock>());
        std::cout << "hisam-ap listening on " << service.port() << std::endl;
        service.run();
    } catch (const std::exception& e) {
        std::cerr << "serve-ap: " << e.what() << '\n';
        return kExitProtocol;
    }
    return kExitOk;
}

int run_ue(const CommonOptions& opt, const std::string& connect,
           std::uint64_t device_id, double demand, std::uint64_t secret_seed,
           std::size_t auths, double auth_interval, int quiet_ms) {
    const auto [host, port] = parse_endpoint(connect);
    hisam::wire::UeConfig config;
    config.device_id = device_id;
    config.demand = demand;
    config.f_pop_max = opt.fp;
    config.sleep_unit = opt.time_unit / opt.params().f_m();

    auto clock = std::make_shared<hisam::SystemClock>();
    hisam::wire::UeClient client(
        config, hisam::wire::derive_device_secrets(secret_seed, device_id), clock);
    try {
        client.connect(host, port);
        client.send_register();
    } catch (const std::exception& e) {
        std::cerr << "run-ue: " << e.what() << '\n';
        return kExitProtocol;
    }

    // Answer broadcasts until the negotiation goes quiet.
    auto last_activity = std::chrono::steady_clock::now();
    while (true) {
        if (client.poll_once(50)) last_activity = std::chrono::steady_clock::now();
        if (client.evicted()) break;
        const auto idle = std::chrono::steady_clock::now() - last_activity;
        if (client.broadcasts_seen() > 0 &&
            idle > std::chrono::milliseconds(quiet_ms))
            break;
    }
    if (client.last_alpha())
        std::cout << "negotiated alpha = " << fmt(*client.last_alpha()) << std::endl;

    const double spacing = client.last_alpha() && *client.last_alpha() > 0.0
                               ? opt.time_unit / *client.last_alpha()
                               : 1.0;
    const double interval = auth_interval > 0.0 ? auth_interval : spacing;
    for (std::size_t i = 0; i < auths && !client.evicted(); ++i) {
        std::this_thread::sleep_for(std::chrono::duration<double>(interval));
        const auto result = client.authenticate(clock->now());
        if (result == hisam::wire::UeClient::AuthResult::success) {
            std::cout << "auth " << (i + 1) << " ok" << std::endl;
        } else if (result == hisam::wire::UeClient::AuthResult::evicted) {
            break;
        } else {
            std::cerr << "run-ue: authentication failed\n";
            return kExitProtocol;
        }
    }
    if (client.evicted()) std::cout << "evicted" << std::endl;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hi-SAM negotiation, DTR-MAC and simulation toolkit"};
    app.require_subcommand(1);

    CommonOptions opt;

    auto* negotiate = app.add_subcommand("negotiate", "run one negotiation to convergence");
    add_common(negotiate, opt);

    auto* simulate = app.add_subcommand("simulate", "run one policy across seeds");
    add_common(simulate, opt);
    std::string policy = "hisam";
    simulate->add_option("--policy", policy, "hisam|fixed_high|fixed_low|demand_driven");

    auto* grid = app.add_subcommand("grid", "full sweep x policy x seed experiment");
    add_common(grid, opt);
    std::string sweep = "size";
    grid->add_option("--sweep", sweep, "mean|variance|size");

    auto* vectors = app.add_subcommand("gen-vectors", "DTR-MAC conformance vectors");
    vectors->set_config("--config", "", "flat key=value configuration file");
    std::uint64_t vec_seed = 1;
    std::size_t vec_steps = 256;
    double vec_sleep_unit = 0.5;
    std::string vec_out;
    vectors->add_option("--seed", vec_seed, "generator seed");
    vectors->add_option("--steps", vec_steps, "handshakes to record");
    vectors->add_option("--sleep-unit", vec_sleep_unit, "T_s in seconds");
    vectors->add_option("--out", vec_out, "output file (default stdout)");

    auto* serve = app.add_subcommand("serve-ap", "run the access-point service");
    add_common(serve, opt, false);
    std::string listen = "127.0.0.1:0";
    std::uint64_t secret_seed = 1;
    serve->add_option("--listen", listen, "host:port (port 0 = ephemeral)");
    serve->add_option("--secret-seed", secret_seed,
                      "registration-phase secret derivation seed");

    auto* ue = app.add_subcommand("run-ue", "run one device client");
    add_common(ue, opt, false);
    std::string connect = "127.0.0.1:4700";
    std::uint64_t device_id = 0;
    double demand = 10.0;
    std::size_t auths = 3;
    double auth_interval = 0.0;
    int quiet_ms = 300;
    ue->add_option("--connect", connect, "AP endpoint host:port");
    ue->add_option("--id", device_id, "device id");
    ue->add_option("--demand", demand, "device demand r");
    ue->add_option("--auths", auths, "authentications to run after negotiation");
    ue->add_option("--auth-interval", auth_interval,
                   "seconds between authentications (default T/alpha)");
    ue->add_option("--quiet-ms", quiet_ms, "negotiation quiescence window");
    ue->add_option("--secret-seed", secret_seed,
                   "registration-phase secret derivation seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (negotiate->parsed()) {
            if (opt.seeds.empty()) {
                std::cerr << "config error: empty seed list\n";
                return kExitConfig;
            }
            return run_negotiate(opt);
        }
        if (simulate->parsed()) {
            if (opt.seeds.empty()) {
                std::cerr << "config error: empty seed list\n";
                return kExitConfig;
            }
            return run_simulate(opt, policy);
        }
        if (grid->parsed()) {
            if (opt.seeds.empty()) {
                std::cerr << "config error: empty seed list\n";
                return kExitConfig;
            }
            return run_grid(opt, sweep);
        }
        if (vectors->parsed())
            return run_gen_vectors(vec_out, vec_seed, vec_steps, vec_sleep_unit);
        if (serve->parsed()) return run_serve_ap(opt, listen, secret_seed);
        if (ue->parsed())
            return run_ue(opt, connect, device_id, demand, secret_seed, auths,
                          auth_interval, quiet_ms);
    } catch (const CLI::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const hisam::wire::ProtocolError& e) {
        std::cerr << "protocol error: " << e.what() << '\n';
        return kExitProtocol;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNoConvergence;
    }
    return kExitOk;
}
