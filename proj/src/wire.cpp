#include "hisam/wire.hpp"

#include <bit>
#include <cstring>

namespace hisam::wire {

namespace {

bool known_kind(std::uint8_t k) {
    return k >= 1 && k <= 7;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(FrameKind kind,
                                       std::span<const std::uint8_t> payload) {
    if (payload.size() > kMaxPayload)
        throw ProtocolError("frame payload exceeds 65535 bytes");
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + payload.size());
    out.push_back(static_cast<std::uint8_t>(kind));
    out.push_back(static_cast<std::uint8_t>(payload.size() >> 8));
    out.push_back(static_cast<std::uint8_t>(payload.size() & 0xff));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    return encode_frame(frame.kind, frame.payload);
}

std::optional<DecodeResult> decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize) return std::nullopt;
    if (!known_kind(bytes[0]))
        throw ProtocolError("unknown frame kind " + std::to_string(bytes[0]));
    const std::size_t length =
        (static_cast<std::size_t>(bytes[1]) << 8) | bytes[2];
    if (bytes.size() < kHeaderSize + length) return std::nullopt;
    DecodeResult result;
    result.frame.kind = static_cast<FrameKind>(bytes[0]);
    result.frame.payload.assign(bytes.begin() + kHeaderSize,
                                bytes.begin() + kHeaderSize + length);
    result.consumed = kHeaderSize + length;
    return result;
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
    buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Frame> FrameReader::next() {
    const auto view =
        std::span<const std::uint8_t>(buffer_).subspan(offset_);
    auto decoded = decode_frame(view);
    if (!decoded) return std::nullopt;
    offset_ += decoded->consumed;
    // Compact once the consumed prefix dominates the buffer.
    if (offset_ > 4096 && offset_ * 2 > buffer_.size()) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<long>(offset_));
        offset_ = 0;
    }
    return std::move(decoded->frame);
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t get_u64(std::span<const std::uint8_t> bytes, std::size_t offset) {
    if (offset + 8 > bytes.size())
        throw ProtocolError("payload too short for u64");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i) v = (v << 8) | bytes[offset + i];
    return v;
}

double get_f64(std::span<const std::uint8_t> bytes, std::size_t offset) {
    return std::bit_cast<double>(get_u64(bytes, offset));
}

std::vector<std::uint8_t> encode_register(const RegisterPayload& p) {
    std::vector<std::uint8_t> out;
    put_u64(out, p.device_id);
    put_f64(out, p.demand);
    return out;
}

RegisterPayload decode_register(std::span<const std::uint8_t> payload) {
    if (payload.size() != 16)
        throw ProtocolError("REGISTER payload must be 16 bytes");
    return RegisterPayload{get_u64(payload, 0), get_f64(payload, 8)};
}

std::vector<std::uint8_t> encode_broadcast(const BroadcastPayload& p) {
    std::vector<std::uint8_t> out;
    put_f64(out, p.x_pop);
    put_f64(out, p.total_resource);
    put_f64(out, p.f_m);
    return out;
}

BroadcastPayload decode_broadcast(std::span<const std::uint8_t> payload) {
    if (payload.size() != 24)
        throw ProtocolError("NEGOTIATE_BROADCAST payload must be 24 bytes");
    return BroadcastPayload{get_f64(payload, 0), get_f64(payload, 8),
                            get_f64(payload, 16)};
}

}  // namespace hisam::wire
