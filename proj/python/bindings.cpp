#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hisam/dtr_mac.hpp"
#include "hisam/mfg.hpp"
#include "hisam/sim.hpp"
#include "hisam/wire.hpp"

namespace py = pybind11;
using namespace hisam;

namespace {

dtr::MacTag tag_from_bytes(py::bytes b) {
    const std::string s = b;
    if (s.size() != 32) throw py::value_error("tag must be 32 bytes");
    dtr::MacTag tag;
    std::copy(s.begin(), s.end(), reinterpret_cast<char*>(tag.tag.data()));
    return tag;
}

py::bytes tag_to_bytes(const dtr::MacTag& tag) {
    return py::bytes(reinterpret_cast<const char*>(tag.tag.data()), tag.tag.size());
}

}  // namespace

PYBIND11_MODULE(_hisam, m) {
    m.doc() = "Hi-SAM core: mean-field negotiation, DTR-MAC, simulation";

    py::class_<mfg::SystemParams>(m, "SystemParams")
        .def(py::init<>())
        .def_readwrite("n_devices", &mfg::SystemParams::n_devices)
        .def_readwrite("f_pop_max", &mfg::SystemParams::f_pop_max)
        .def_readwrite("f_ind_max", &mfg::SystemParams::f_ind_max)
        .def_readwrite("time_unit", &mfg::SystemParams::time_unit)
        .def_readwrite("tolerance", &mfg::SystemParams::tolerance)
        .def_readwrite("max_rounds", &mfg::SystemParams::max_rounds)
        .def("f_m", &mfg::SystemParams::f_m);

    py::class_<mfg::GameCoefficients>(m, "GameCoefficients")
        .def(py::init<double, double>(), py::arg("mu1"), py::arg("mu2"))
        .def_readwrite("mu1", &mfg::GameCoefficients::mu1)
        .def_readwrite("mu2", &mfg::GameCoefficients::mu2);

    py::class_<mfg::ControlPoint>(m, "ControlPoint")
        .def_readonly("t", &mfg::ControlPoint::t)
        .def_readonly("x", &mfg::ControlPoint::x)
        .def_readonly("costate", &mfg::ControlPoint::costate)
        .def_readonly("value", &mfg::ControlPoint::value)
        .def_readonly("hamiltonian_inf", &mfg::ControlPoint::hamiltonian_inf);

    py::class_<mfg::MeanFieldTriangle>(m, "MeanFieldTriangle")
        .def(py::init<>())
        .def_static("unitized", &mfg::MeanFieldTriangle::unitized,
                    py::arg("alpha_star"), py::arg("f_m"))
        .def_readwrite("vertex_rate", &mfg::MeanFieldTriangle::vertex_rate)
        .def_readwrite("base", &mfg::MeanFieldTriangle::base)
        .def_readwrite("weight", &mfg::MeanFieldTriangle::weight)
        .def_readwrite("focus_time", &mfg::MeanFieldTriangle::focus_time);

    py::class_<mfg::NegotiationTrace>(m, "NegotiationTrace")
        .def_readonly("per_round_errors", &mfg::NegotiationTrace::per_round_errors)
        .def_readonly("per_round_alphas", &mfg::NegotiationTrace::per_round_alphas)
        .def_readonly("converged", &mfg::NegotiationTrace::converged)
        .def_readonly("final_x", &mfg::NegotiationTrace::final_x);

    py::class_<mfg::NegotiationOutcome>(m, "NegotiationOutcome")
        .def_property_readonly(
            "alphas", [](const mfg::NegotiationOutcome& o) { return o.result.alphas; })
        .def_property_readonly(
            "final_x", [](const mfg::NegotiationOutcome& o) { return o.result.final_x; })
        .def_readonly("trace", &mfg::NegotiationOutcome::trace);

    m.def("loss_individual", &mfg::loss_individual, py::arg("demand"),
          py::arg("alpha"), py::arg("x_pop"), py::arg("params"),
          py::arg("total_resource"));
    m.def("game_coefficients", &mfg::game_coefficients, py::arg("x_pop"),
          py::arg("demand"), py::arg("params"), py::arg("total_resource"));
    m.def("optimal_alpha_feedback", &mfg::optimal_alpha_feedback);
    m.def("hamiltonian_infimum", &mfg::hamiltonian_infimum);
    m.def("terminal_cost", &mfg::terminal_cost);
    m.def("value_function", &mfg::value_function, py::arg("t"), py::arg("x"),
          py::arg("coeffs"), py::arg("params"));
    m.def("optimal_alpha", &mfg::optimal_alpha, py::arg("demand"), py::arg("x_pop"),
          py::arg("params"), py::arg("total_resource"));
    m.def("optimal_alpha_raw", &mfg::optimal_alpha_raw);
    m.def("triangle_density",
          [](const mfg::MeanFieldTriangle& tri, double t, double x,
             const mfg::SystemParams& p) { return mfg::triangle_density(tri, t, x, p); });
    m.def("expected_population_workload",
          [](const std::vector<double>& alphas, const mfg::SystemParams& p) {
              return mfg::expected_population_workload(alphas, p);
          });
    m.def("contraction_coefficient", [](const std::vector<double>& demands) {
        return mfg::contraction_coefficient(demands);
    });
    m.def("closed_form_equilibrium",
          [](const std::vector<double>& demands, const mfg::SystemParams& p) {
              return mfg::closed_form_equilibrium(demands, p);
          });
    m.def("negotiate_equilibrium",
          [](const std::vector<double>& demands, const mfg::SystemParams& p) {
              return mfg::negotiate_equilibrium(demands, p);
          });
    m.def("allocate_resources",
          [](const std::vector<double>& alphas, double x_pop,
             const mfg::SystemParams& p, double total_resource) {
              return mfg::allocate_resources(alphas, x_pop, p, total_resource)
                  .per_device_share;
          });

    // DTR-MAC surface: words travel as 32-digit hex, tags as raw bytes.
    py::class_<dtr::AuthSession>(m, "AuthSession")
        .def(py::init([](const std::string& ue_hex, const std::string& ap_hex,
                         py::bytes key, double sleep_unit) {
                 dtr::AuthSession s;
                 s.ue_msg = dtr::MessageWord::from_hex(ue_hex);
                 s.ap_msg = dtr::MessageWord::from_hex(ap_hex);
                 const std::string k = key;
                 if (k.size() != 32) throw py::value_error("key must be 32 bytes");
                 std::copy(k.begin(), k.end(),
                           reinterpret_cast<char*>(s.key.key.data()));
                 s.sleep_unit = sleep_unit;
                 return s;
             }),
             py::arg("ue_msg_hex"), py::arg("ap_msg_hex"), py::arg("key"),
             py::arg("sleep_unit"))
        .def_property_readonly("ue_msg_hex",
                               [](const dtr::AuthSession& s) { return s.ue_msg.hex(); })
        .def_property_readonly("ap_msg_hex",
                               [](const dtr::AuthSession& s) { return s.ap_msg.hex(); })
        .def_readonly("step_index", &dtr::AuthSession::step_index)
        .def_readonly("last_time", &dtr::AuthSession::last_time);

    py::class_<dtr::UeSession>(m, "UeSession")
        .def(py::init<dtr::AuthSession>())
        .def("initiate",
             [](dtr::UeSession& s, double now) { return tag_to_bytes(s.initiate(now)); })
        .def("verify_response_and_finalize",
             [](dtr::UeSession& s, py::bytes tag) -> py::object {
                 const auto reply = s.verify_response_and_finalize(tag_from_bytes(tag));
                 if (!reply) return py::none();
                 return tag_to_bytes(*reply);
             })
        .def("mark_evicted", &dtr::UeSession::mark_evicted)
        .def_property_readonly("state", &dtr::UeSession::state);

    py::class_<dtr::ApSession>(m, "ApSession")
        .def(py::init<dtr::AuthSession>())
        .def("verify_initiation",
             [](dtr::ApSession& s, py::bytes tag, double arrival) {
                 const auto v = s.verify_initiation(tag_from_bytes(tag), arrival);
                 return py::make_tuple(v.accepted, v.matched_shift);
             })
        .def("respond", [](dtr::ApSession& s) { return tag_to_bytes(s.respond()); })
        .def("finalize",
             [](dtr::ApSession& s, py::bytes tag) { return s.finalize(tag_from_bytes(tag)); })
        .def_property_readonly("state", &dtr::ApSession::state);

    m.def("shift_bits_from_interval", &dtr::shift_bits_from_interval);
    m.def("circular_shift_hex", [](const std::string& hex, std::uint64_t count) {
        return dtr::circular_shift(dtr::MessageWord::from_hex(hex), count).hex();
    });
    m.def("compute_tag", [](py::bytes message, py::bytes key) {
        const std::string msg = message;
        const std::string k = key;
        if (k.size() != 32) throw py::value_error("key must be 32 bytes");
        dtr::SessionKey sk;
        std::copy(k.begin(), k.end(), reinterpret_cast<char*>(sk.key.data()));
        return tag_to_bytes(dtr::compute_tag(
            {reinterpret_cast<const std::uint8_t*>(msg.data()), msg.size()}, sk));
    });

    py::class_<dtr::PenaltyLedger>(m, "PenaltyLedger")
        .def(py::init([](std::uint64_t limit, double workload) {
                 return dtr::PenaltyLedger{limit, workload, false};
             }),
             py::arg("oversleep_limit") = 2, py::arg("workload") = 0.0)
        .def_readwrite("workload", &dtr::PenaltyLedger::workload)
        .def_readwrite("evicted", &dtr::PenaltyLedger::evicted)
        .def_readonly("oversleep_limit", &dtr::PenaltyLedger::oversleep_limit);

    m.def("apply_oversleep_penalty", &dtr::apply_oversleep_penalty,
          py::arg("ledger"), py::arg("sleep_period"), py::arg("sleep_unit"));
    m.def("generate_conformance_vectors",
          [](std::uint64_t seed, std::size_t steps, double sleep_unit) {
              return dtr::format_conformance_vectors(
                  dtr::generate_conformance_vectors(seed, steps, sleep_unit));
          });

    // Simulation surface.
    py::enum_<sim::Policy>(m, "Policy")
        .value("hisam", sim::Policy::hisam)
        .value("fixed_high", sim::Policy::fixed_high)
        .value("fixed_low", sim::Policy::fixed_low)
        .value("demand_driven", sim::Policy::demand_driven);

    py::class_<sim::Scenario>(m, "Scenario")
        .def(py::init<>())
        .def_readwrite("params", &sim::Scenario::params)
        .def_readwrite("demand_mean", &sim::Scenario::demand_mean)
        .def_readwrite("demand_stddev", &sim::Scenario::demand_stddev)
        .def_readwrite("policy", &sim::Scenario::policy)
        .def_readwrite("seeds", &sim::Scenario::seeds)
        .def_readwrite("horizon", &sim::Scenario::horizon)
        .def_readwrite("anomalies_per_device", &sim::Scenario::anomalies_per_device);

    py::class_<sim::SeedMetrics>(m, "SeedMetrics")
        .def_readonly("seed", &sim::SeedMetrics::seed)
        .def_readonly("population_loss", &sim::SeedMetrics::population_loss)
        .def_readonly("total_workload", &sim::SeedMetrics::total_workload)
        .def_readonly("mean_detection_time", &sim::SeedMetrics::mean_detection_time)
        .def_readonly("detected_count", &sim::SeedMetrics::detected_count)
        .def_readonly("censored_count", &sim::SeedMetrics::censored_count)
        .def_readonly("evicted_devices", &sim::SeedMetrics::evicted_devices)
        .def_readonly("handshake_failures", &sim::SeedMetrics::handshake_failures);

    py::class_<sim::MetricsRecord>(m, "MetricsRecord")
        .def_readonly("policy", &sim::MetricsRecord::policy)
        .def_readonly("population_loss", &sim::MetricsRecord::population_loss)
        .def_readonly("total_workload", &sim::MetricsRecord::total_workload)
        .def_readonly("mean_detection_time", &sim::MetricsRecord::mean_detection_time)
        .def_readonly("per_seed", &sim::MetricsRecord::per_seed);

    m.def("sample_demands", &sim::sample_demands, py::arg("mean"), py::arg("stddev"),
          py::arg("n"), py::arg("seed"), py::arg("lo") = 0.0, py::arg("hi") = 20.0);
    m.def("policy_frequencies",
          [](sim::Policy policy, const std::vector<double>& demands,
             const mfg::SystemParams& p) {
              return sim::policy_frequencies(policy, demands, p);
          });
    m.def("run_simulation", &sim::run_simulation);

    // Wire framing.
    m.def("encode_frame", [](int kind, py::bytes payload) {
        const std::string p = payload;
        const auto bytes = wire::encode_frame(
            static_cast<wire::FrameKind>(kind),
            {reinterpret_cast<const std::uint8_t*>(p.data()), p.size()});
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    });
    m.def("decode_frame", [](py::bytes data) -> py::object {
        const std::string d = data;
        const auto decoded = wire::decode_frame(
            {reinterpret_cast<const std::uint8_t*>(d.data()), d.size()});
        if (!decoded) return py::none();
        return py::make_tuple(
            static_cast<int>(decoded->frame.kind),
            py::bytes(reinterpret_cast<const char*>(decoded->frame.payload.data()),
                      decoded->frame.payload.size()),
            decoded->consumed);
    });
}
