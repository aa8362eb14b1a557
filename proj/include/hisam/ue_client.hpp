#ifndef HISAM_UE_CLIENT_HPP
#define HISAM_UE_CLIENT_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "hisam/ap_service.hpp"
#include "hisam/clock.hpp"
#include "hisam/dtr_mac.hpp"
#include "hisam/mfg.hpp"
#include "hisam/wire.hpp"

namespace hisam::wire {

struct UeConfig {
    std::uint64_t device_id = 0;
    double demand = 1.0;
    double f_pop_max = 2000.0;  // local copy of the AP-side cap
    double sleep_unit = 1.0;    // T_s, seconds
};

// Device side of the wire protocol. Registers, answers every negotiation
// broadcast with a locally computed alpha*, and runs the three-message
// authentication on demand. Single-owner object, not thread safe.
class UeClient {
public:
    UeClient(UeConfig config, DeviceSecrets secrets, std::shared_ptr<Clock> clock);
    ~UeClient();

    UeClient(const UeClient&) = delete;
    UeClient& operator=(const UeClient&) = delete;

    void connect(const std::string& host, std::uint16_t port);

    // Registers with the AP and anchors the session's interval reference at
    // the current clock reading, mirroring the AP's arrival timestamp.
    void send_register();

    // Handles at most one inbound frame; returns false when nothing was
    // pending within the timeout. Broadcast frames are answered inline.
    bool poll_once(int timeout_ms);

    enum class AuthResult { success, rejected, evicted, disconnected };

    // Runs one full AUTH1/AUTH2/AUTH3 exchange at `now`, answering any
    // negotiation broadcasts that interleave.
    AuthResult authenticate(double now);

    bool evicted() const { return evicted_; }
    std::optional<double> last_alpha() const { return last_alpha_; }
    std::uint64_t broadcasts_seen() const { return broadcasts_seen_; }
    std::uint64_t completed_auths() const { return completed_auths_; }
    const std::optional<std::string>& last_error() const { return last_error_; }

private:
    bool read_more(int timeout_ms);
    void handle_broadcast(const Frame& frame);
    std::optional<Frame> next_frame(int timeout_ms);
    void send_frame(FrameKind kind, std::span<const std::uint8_t> payload);

    UeConfig config_;
    DeviceSecrets secrets_;
    std::shared_ptr<Clock> clock_;
    int fd_ = -1;
    FrameReader reader_;
    dtr::UeSession session_;
    bool evicted_ = false;
    std::optional<double> last_alpha_;
    std::uint64_t broadcasts_seen_ = 0;
    std::uint64_t completed_auths_ = 0;
    std::optional<std::string> last_error_;
};

}  // namespace hisam::wire

#endif
