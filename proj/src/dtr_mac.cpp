#include "hisam/dtr_mac.hpp"

#include <openssl/hmac.h>

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>
#include <stdexcept>

namespace hisam::dtr {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

std::string to_hex(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        out.push_back(kHexDigits[b >> 4]);
        out.push_back(kHexDigits[b & 0x0f]);
    }
    return out;
}

std::uint8_t hex_nibble(char c) {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw std::invalid_argument("bad hex digit");
}

}  // namespace

bool MessageWord::is_zero() const {
    for (std::uint8_t b : bytes)
        if (b != 0) return false;
    return true;
}

std::string MessageWord::hex() const { return to_hex(bytes); }

MessageWord MessageWord::from_hex(const std::string& hex) {
    if (hex.size() != 32)
        throw std::invalid_argument("MessageWord hex must be 32 digits");
    MessageWord w;
    for (std::size_t i = 0; i < 16; ++i)
        w.bytes[i] = static_cast<std::uint8_t>((hex_nibble(hex[2 * i]) << 4) |
                                               hex_nibble(hex[2 * i + 1]));
    return w;
}

std::string MacTag::hex() const { return to_hex(tag); }

std::uint64_t shift_bits_from_interval(double t_prev, double t_now,
                                       double sleep_unit) {
    if (!(sleep_unit > 0.0))
        throw std::domain_error("shift_bits_from_interval: sleep unit must be positive");
    if (t_now < t_prev)
        throw std::domain_error("shift_bits_from_interval: clock regression");
    return static_cast<std::uint64_t>(
        std::floor((t_now - t_prev) / sleep_unit + 0.5));
}

MessageWord circular_shift(const MessageWord& word, std::uint64_t count) {
    const unsigned n = static_cast<unsigned>(count % 128);
    if (n == 0) return word;
    // Big-endian 128-bit value as (hi, lo) halves.
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;
    for (int i = 0; i < 8; ++i) {
        hi = (hi << 8) | word.bytes[i];
        lo = (lo << 8) | word.bytes[8 + i];
    }
    std::uint64_t nhi;
    std::uint64_t nlo;
    if (n < 64) {
        nhi = (hi << n) | (lo >> (64 - n));
        nlo = (lo << n) | (hi >> (64 - n));
    } else if (n == 64) {
        nhi = lo;
        nlo = hi;
    } else {
        const unsigned m = n - 64;
        nhi = (lo << m) | (hi >> (64 - m));
        nlo = (hi << m) | (lo >> (64 - m));
    }
    MessageWord out;
    for (int i = 7; i >= 0; --i) {
        out.bytes[i] = static_cast<std::uint8_t>(nhi & 0xff);
        out.bytes[8 + i] = static_cast<std::uint8_t>(nlo & 0xff);
        nhi >>= 8;
        nlo >>= 8;
    }
    return out;
}

MessageWord xor_words(const MessageWord& a, const MessageWord& b) {
    MessageWord out;
    for (std::size_t i = 0; i < out.bytes.size(); ++i)
        out.bytes[i] = static_cast<std::uint8_t>(a.bytes[i] ^ b.bytes[i]);
    return out;
}

MacTag hmac_sha256(std::span<const std::uint8_t> key,
                   std::span<const std::uint8_t> message) {
    MacTag out;
    unsigned int len = 0;
    if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
             message.data(), message.size(), out.tag.data(), &len) == nullptr ||
        len != out.tag.size())
        throw std::runtime_error("HMAC-SHA-256 failed");
    return out;
}

MacTag compute_tag(std::span<const std::uint8_t> message_bytes,
                   const SessionKey& key) {
    return hmac_sha256(key.key, message_bytes);
}

MessageWord derive_next_ue_message(const MessageWord& ue_msg,
                                   const MessageWord& ap_msg,
                                   std::uint64_t shift) {
    return xor_words(circular_shift(ue_msg, shift), ap_msg);
}

MessageWord derive_next_ap_message(const MessageWord& ap_msg,
                                   const MessageWord& ue_msg,
                                   std::uint64_t shift) {
    return xor_words(circular_shift(ap_msg, shift), ue_msg);
}

void AuthSession::validate() const {
    if (ue_msg.is_zero() || ap_msg.is_zero())
        throw std::invalid_argument("AuthSession: all-zero registration word");
    if (!(sleep_unit > 0.0))
        throw std::invalid_argument("AuthSession: sleep unit must be positive");
}

namespace {

MacTag tag_over_word(const MessageWord& w, const SessionKey& key) {
    return compute_tag(w.serialize(), key);
}

MacTag tag_over_pair(const MessageWord& ue, const MessageWord& ap,
                     const SessionKey& key) {
    std::array<std::uint8_t, 32> buf;
    std::memcpy(buf.data(), ue.bytes.data(), 16);
    std::memcpy(buf.data() + 16, ap.bytes.data(), 16);
    return compute_tag(buf, key);
}

}  // namespace

UeSession::UeSession(AuthSession state) : state_(std::move(state)) {
    state_.validate();
}

MacTag UeSession::initiate(double now) {
    if (evicted_)
        throw std::runtime_error("UeSession: device evicted");
    const std::uint64_t shift =
        shift_bits_from_interval(state_.last_time, now, state_.sleep_unit);
    const MessageWord next_ue =
        derive_next_ue_message(state_.ue_msg, state_.ap_msg, shift);
    pending_ = Pending{shift, next_ue, now};
    return tag_over_word(next_ue, state_.key);
}

std::optional<MacTag> UeSession::verify_response_and_finalize(
    const MacTag& response) {
    if (!pending_)
        throw std::logic_error("UeSession: no pending initiation");
    const MessageWord next_ap =
        derive_next_ap_message(state_.ap_msg, state_.ue_msg, pending_->shift);
    const MacTag expected = tag_over_pair(pending_->next_ue, next_ap, state_.key);
    if (!(expected == response)) {
        pending_.reset();
        return std::nullopt;
    }
    state_.ue_msg = pending_->next_ue;
    state_.ap_msg = next_ap;
    state_.last_time = pending_->now;
    ++state_.step_index;
    pending_.reset();
    return tag_over_word(state_.ap_msg, state_.key);
}

ApSession::ApSession(AuthSession state) : state_(std::move(state)) {
    state_.validate();
}

ApSession::VerifyResult ApSession::verify_initiation(const MacTag& tag,
                                                     double arrival) {
    const std::uint64_t estimate =
        shift_bits_from_interval(state_.last_time, arrival, state_.sleep_unit);
    // Jitter window {b, b-1, b+1}; negative candidates skipped.
    const std::int64_t base = static_cast<std::int64_t>(estimate);
    for (std::int64_t delta : {std::int64_t{0}, std::int64_t{-1}, std::int64_t{1}}) {
        const std::int64_t candidate = base + delta;
        if (candidate < 0) continue;
        const std::uint64_t shift = static_cast<std::uint64_t>(candidate);
        const MessageWord next_ue =
            derive_next_ue_message(state_.ue_msg, state_.ap_msg, shift);
        if (tag_over_word(next_ue, state_.key) == tag) {
            const MessageWord next_ap =
                derive_next_ap_message(state_.ap_msg, state_.ue_msg, shift);
            pending_ = Pending{shift, next_ue, next_ap, arrival, false};
            return {true, shift};
        }
    }
    pending_.reset();
    return {false, 0};
}

MacTag ApSession::respond() {
    if (!pending_)
        throw std::logic_error("ApSession: respond without accepted initiation");
    pending_->responded = true;
    return tag_over_pair(pending_->next_ue, pending_->next_ap, state_.key);
}

bool ApSession::finalize(const MacTag& reply) {
    if (!pending_ || !pending_->responded)
        throw std::logic_error("ApSession: finalize without response");
    const MacTag expected = tag_over_word(pending_->next_ap, state_.key);
    if (!(expected == reply)) {
        pending_.reset();
        return false;
    }
    state_.ue_msg = pending_->next_ue;
    state_.ap_msg = pending_->next_ap;
    state_.last_time = pending_->arrival;
    ++state_.step_index;
    pending_.reset();
    return true;
}

PenaltyLedger apply_oversleep_penalty(PenaltyLedger ledger, double sleep_period,
                                      double sleep_unit) {
    if (!(sleep_unit > 0.0))
        throw std::domain_error("apply_oversleep_penalty: sleep unit must be positive");
    if (sleep_period < 0.0)
        throw std::domain_error("apply_oversleep_penalty: negative sleep period");
    const double limit = static_cast<double>(ledger.oversleep_limit) * sleep_unit;
    if (sleep_period > limit) {
        const double deduction =
            std::ceil(sleep_period / sleep_unit) -
            static_cast<double>(ledger.oversleep_limit);
        ledger.workload -= deduction;
    }
    if (ledger.workload < 0.0) ledger.evicted = true;
    return ledger;
}

std::vector<VectorRecord> generate_conformance_vectors(std::uint64_t seed,
                                                       std::size_t steps,
                                                       double sleep_unit) {
    std::mt19937_64 rng(seed);
    auto random_word = [&rng]() {
        MessageWord w;
        do {
            for (auto& b : w.bytes)
                b = static_cast<std::uint8_t>(rng() & 0xff);
        } while (w.is_zero());
        return w;
    };

    AuthSession shared;
    shared.ue_msg = random_word();
    shared.ap_msg = random_word();
    for (auto& b : shared.key.key) b = static_cast<std::uint8_t>(rng() & 0xff);
    shared.sleep_unit = sleep_unit;
    shared.last_time = 0.0;

    UeSession ue(shared);
    ApSession ap(shared);

    std::uniform_real_distribution<double> sleep_units(0.0, 8.0);
    std::vector<VectorRecord> records;
    records.reserve(steps);
    double now = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
        now += sleep_units(rng) * sleep_unit;
        const MacTag tag1 = ue.initiate(now);
        const auto verdict = ap.verify_initiation(tag1, now);
        if (!verdict.accepted)
            throw std::runtime_error("conformance generator: honest step rejected");
        const MacTag tag2 = ap.respond();
        const auto reply = ue.verify_response_and_finalize(tag2);
        if (!reply || !ap.finalize(*reply))
            throw std::runtime_error("conformance generator: honest step rejected");
        records.push_back(VectorRecord{ue.state().step_index, verdict.matched_shift,
                                       ue.state().ue_msg, ue.state().ap_msg, tag1,
                                       tag2, *reply});
    }
    return records;
}

std::string format_conformance_vectors(std::span<const VectorRecord> records) {
    std::ostringstream out;
    out << "step,shift,m_ue,m_ap,tag1,tag2,tag3\n";
    for (const auto& r : records) {
        out << r.step << ',' << r.shift << ',' << r.ue_msg.hex() << ','
            << r.ap_msg.hex() << ',' << r.tag1.hex() << ',' << r.tag2.hex()
            << ',' << r.tag3.hex() << '\n';
    }
    return out.str();
}

}  // namespace hisam::dtr
