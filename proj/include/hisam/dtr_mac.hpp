#ifndef HISAM_DTR_MAC_HPP
#define HISAM_DTR_MAC_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Dynamic time-range MAC: the sleep interval between authentications is
// quantized into a bit-rotation count, both sides evolve their message words
// with it, and a three-message HMAC exchange proves each side tracked the
// other's timeline. Only 32-byte tags ever travel; message words stay local.

namespace hisam::dtr {

// 128-bit message word, serialized big-endian (16 bytes).
struct MessageWord {
    std::array<std::uint8_t, 16> bytes{};

    bool is_zero() const;
    std::array<std::uint8_t, 16> serialize() const { return bytes; }
    std::string hex() const;
    static MessageWord from_hex(const std::string& hex);

    friend bool operator==(const MessageWord&, const MessageWord&) = default;
};

struct SessionKey {
    std::array<std::uint8_t, 32> key{};
};

struct MacTag {
    std::array<std::uint8_t, 32> tag{};

    std::string hex() const;
    friend bool operator==(const MacTag&, const MacTag&) = default;
};

// floor(dt/T_s + 0.5): sleep interval in sleep units, half rounding up.
// Throws std::domain_error on clock regression (t_now < t_prev).
std::uint64_t shift_bits_from_interval(double t_prev, double t_now,
                                       double sleep_unit);

// Left rotation by count mod 128; bijective for fixed count.
MessageWord circular_shift(const MessageWord& word, std::uint64_t count);

MessageWord xor_words(const MessageWord& a, const MessageWord& b);

// HMAC-SHA-256 with arbitrary-length key (RFC 2104 / FIPS 198).
MacTag hmac_sha256(std::span<const std::uint8_t> key,
                   std::span<const std::uint8_t> message);

// Session tag: HMAC-SHA-256(message, K), 32 bytes.
MacTag compute_tag(std::span<const std::uint8_t> message_bytes,
                   const SessionKey& key);

// Next-step message words. Both rules use step-i words on both inputs so
// either side can compute them from shared state.
MessageWord derive_next_ue_message(const MessageWord& ue_msg,
                                   const MessageWord& ap_msg,
                                   std::uint64_t shift);
MessageWord derive_next_ap_message(const MessageWord& ap_msg,
                                   const MessageWord& ue_msg,
                                   std::uint64_t shift);

// Committed per-side handshake state.
struct AuthSession {
    MessageWord ue_msg;
    MessageWord ap_msg;
    SessionKey key;
    double last_time = 0.0;   // UE: last committed send time; AP: last arrival
    double sleep_unit = 1.0;  // T_s, seconds
    std::uint64_t step_index = 0;

    // Throws std::invalid_argument when either registration word is all
    // zero (the XOR chain would be degenerate) or sleep_unit <= 0.
    void validate() const;
};

// UE side of the three-message exchange. Nothing commits until the AP's
// response verifies; a rejected or abandoned attempt leaves committed state
// untouched.
class UeSession {
public:
    UeSession(AuthSession state);

    const AuthSession& state() const { return state_; }
    bool evicted() const { return evicted_; }
    void mark_evicted() { evicted_ = true; }
    bool has_pending() const { return pending_.has_value(); }

    // Message 1: tag over the candidate M^ue_{i+1}. Throws std::runtime_error
    // if the device was evicted.
    MacTag initiate(double now);

    // Message 3 on success: verifies MAC(M^ue_{i+1} || M^ap_{i+1}, K),
    // commits, and returns the reply MAC(M^ap_{i+1}, K). On failure the
    // pending attempt is discarded and nullopt returned.
    std::optional<MacTag> verify_response_and_finalize(const MacTag& response);

private:
    struct Pending {
        std::uint64_t shift;
        MessageWord next_ue;
        double now;
    };
    AuthSession state_;
    std::optional<Pending> pending_;
    bool evicted_ = false;
};

// AP side. The shift recovered from arrival times may differ from the UE's
// by one unit of jitter, so candidates {b, b-1, b+1} are tried.
class ApSession {
public:
    ApSession(AuthSession state);

    const AuthSession& state() const { return state_; }
    bool has_pending() const { return pending_.has_value(); }

    struct VerifyResult {
        bool accepted = false;
        std::uint64_t matched_shift = 0;
    };

    // Verifies message 1 against the jitter window; on acceptance the
    // candidate update is parked until finalize.
    VerifyResult verify_initiation(const MacTag& tag, double arrival);

    // Message 2: MAC(M^ue_{i+1} || M^ap_{i+1}, K). Throws std::logic_error
    // without a prior accepted initiation.
    MacTag respond();

    // Verifies message 3 and commits on success; discards the pending
    // update on failure.
    bool finalize(const MacTag& reply);

private:
    struct Pending {
        std::uint64_t shift;
        MessageWord next_ue;
        MessageWord next_ap;
        double arrival;
        bool responded = false;
    };
    AuthSession state_;
    std::optional<Pending> pending_;
};

struct PenaltyLedger {
    std::uint64_t oversleep_limit = 2;  // n, sleep units
    double workload = 0.0;              // x_i, may go negative before eviction
    bool evicted = false;
};

// If P_s > n*T_s, subtract ceil(P_s/T_s) - n from the workload; the device
// is evicted once its workload drops below zero.
PenaltyLedger apply_oversleep_penalty(PenaltyLedger ledger, double sleep_period,
                                      double sleep_unit);

// Conformance vector line: one completed handshake.
struct VectorRecord {
    std::uint64_t step = 0;
    std::uint64_t shift = 0;
    MessageWord ue_msg;  // committed after the step
    MessageWord ap_msg;
    MacTag tag1;
    MacTag tag2;
    MacTag tag3;
};

// Runs `steps` honest handshakes from seeded initial state and returns one
// record per step. Deterministic for a fixed seed.
std::vector<VectorRecord> generate_conformance_vectors(std::uint64_t seed,
                                                       std::size_t steps,
                                                       double sleep_unit);

// `step,shift,M_ue_hex,M_ap_hex,tag1_hex,tag2_hex,tag3_hex` lines with a
// header row.
std::string format_conformance_vectors(std::span<const VectorRecord> records);

}  // namespace hisam::dtr

#endif
