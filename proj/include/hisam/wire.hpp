#ifndef HISAM_WIRE_HPP
#define HISAM_WIRE_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Framed wire protocol: one byte kind, 16-bit big-endian payload length,
// payload. Floats travel as IEEE-754 doubles, big-endian.

namespace hisam::wire {

enum class FrameKind : std::uint8_t {
    register_device = 1,
    negotiate_broadcast = 2,
    alpha_report = 3,
    auth1 = 4,
    auth2 = 5,
    auth3 = 6,
    evict = 7,
};

struct Frame {
    FrameKind kind = FrameKind::register_device;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const Frame&, const Frame&) = default;
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr std::size_t kMaxPayload = 65535;
constexpr std::size_t kHeaderSize = 3;

std::vector<std::uint8_t> encode_frame(FrameKind kind,
                                       std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_frame(const Frame& frame);

struct DecodeResult {
    Frame frame;
    std::size_t consumed = 0;
};

// Decodes one frame from the head of `bytes`. Returns nullopt when more
// bytes are needed (truncation is resumable, never an error); throws
// ProtocolError on an unknown kind.
std::optional<DecodeResult> decode_frame(std::span<const std::uint8_t> bytes);

// Streaming decoder over a byte buffer fed in arbitrary chunks.
class FrameReader {
public:
    void feed(std::span<const std::uint8_t> bytes);
    std::optional<Frame> next();  // throws ProtocolError on malformed input

private:
    std::vector<std::uint8_t> buffer_;
    std::size_t offset_ = 0;
};

// Big-endian scalar packing.
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
std::uint64_t get_u64(std::span<const std::uint8_t> bytes, std::size_t offset);
double get_f64(std::span<const std::uint8_t> bytes, std::size_t offset);

// Typed payloads used by the AP/UE loops.
struct RegisterPayload {
    std::uint64_t device_id = 0;
    double demand = 0.0;
};
struct BroadcastPayload {
    double x_pop = 0.0;
    double total_resource = 0.0;
    double f_m = 0.0;
};

std::vector<std::uint8_t> encode_register(const RegisterPayload& p);
RegisterPayload decode_register(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_broadcast(const BroadcastPayload& p);
BroadcastPayload decode_broadcast(std::span<const std::uint8_t> payload);

}  // namespace hisam::wire

#endif
