#ifndef HISAM_AP_SERVICE_HPP
#define HISAM_AP_SERVICE_HPP

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hisam/clock.hpp"
#include "hisam/dtr_mac.hpp"
#include "hisam/mfg.hpp"
#include "hisam/wire.hpp"

namespace hisam::wire {

// State agreed during registration, before the service starts.
struct DeviceSecrets {
    dtr::MessageWord ue_msg;
    dtr::MessageWord ap_msg;
    dtr::SessionKey key;
    double initial_workload = 0.0;
};

// Deterministic demo registry: secrets derived from (seed, device id).
DeviceSecrets derive_device_secrets(std::uint64_t secret_seed,
                                    std::uint64_t device_id);

struct ApConfig {
    mfg::SystemParams params;
    double sleep_unit = 1.0;            // T_s, seconds
    std::uint64_t oversleep_limit = 2;  // n
    std::string listen_host = "127.0.0.1";
    std::uint16_t listen_port = 0;  // 0 picks an ephemeral port
};

// Access-point service: accepts registrations, drives the negotiation
// rounds over NEGOTIATE_BROADCAST/ALPHA_REPORT, then serves
// AUTH1/AUTH2/AUTH3 handshakes and evicts devices whose workload goes
// negative. Single-threaded poll loop; run() blocks until stop().
class ApService {
public:
    ApService(ApConfig config,
              std::map<std::uint64_t, DeviceSecrets> registry,
              std::shared_ptr<Clock> clock);
    ~ApService();

    ApService(const ApService&) = delete;
    ApService& operator=(const ApService&) = delete;

    std::uint16_t port() const { return port_; }

    // Blocks; returns when stop() was called or every session closed after
    // the negotiation finished. Throws on listener setup failure.
    void run();
    void stop();

    // Blocks until the negotiation phase finished (or failed).
    mfg::NegotiationOutcome wait_negotiation();
    bool negotiation_done() const;

    struct DeviceStatus {
        double workload = 0.0;
        bool evicted = false;
        std::uint64_t completed_auths = 0;
        double last_alpha = 0.0;
    };
    std::optional<DeviceStatus> device_status(std::uint64_t device_id) const;
    std::uint64_t protocol_errors() const { return protocol_errors_.load(); }

    // Frames sent and received per session, in order, concatenated over
    // sessions sorted by device id. Stable across runs with a scripted
    // clock.
    std::vector<std::uint8_t> transcript() const;

private:
    struct Session;

    void accept_pending();
    bool pump(int timeout_ms);  // poll + read; returns false when idle
    void handle_frame(Session& session, const wire::Frame& frame);
    void close_session(Session& session, const char* reason);
    void send_frame(Session& session, FrameKind kind,
                    std::span<const std::uint8_t> payload);
    bool negotiation_exchange(mfg::NegotiationEngine& engine,
                              const std::vector<Session*>& participants);
    void run_negotiation();
    std::vector<Session*> registered_sessions();  // sorted by device id

    ApConfig config_;
    std::map<std::uint64_t, DeviceSecrets> registry_;
    std::shared_ptr<Clock> clock_;

    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::vector<std::unique_ptr<Session>> sessions_;
    double total_resource_ = 0.0;

    std::atomic<bool> stop_{false};
    std::atomic<std::uint64_t> protocol_errors_{0};

    mutable std::mutex state_mutex_;
    std::condition_variable state_cv_;
    std::optional<mfg::NegotiationOutcome> negotiation_;
    bool negotiation_failed_ = false;
    std::map<std::uint64_t, DeviceStatus> status_;
};

}  // namespace hisam::wire

#endif
