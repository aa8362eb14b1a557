#include "hisam/ue_client.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

namespace hisam::wire {

namespace {

dtr::AuthSession make_session_state(const UeConfig& config,
                                    const DeviceSecrets& secrets,
                                    double registered_at) {
    dtr::AuthSession state;
    state.ue_msg = secrets.ue_msg;
    state.ap_msg = secrets.ap_msg;
    state.key = secrets.key;
    state.sleep_unit = config.sleep_unit;
    state.last_time = registered_at;
    return state;
}

}  // namespace

UeClient::UeClient(UeConfig config, DeviceSecrets secrets,
                   std::shared_ptr<Clock> clock)
    : config_(config),
      secrets_(secrets),
      clock_(std::move(clock)),
      session_(make_session_state(config, secrets, 0.0)) {}

UeClient::~UeClient() {
    if (fd_ >= 0) ::close(fd_);
}

void UeClient::connect(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw std::runtime_error("bad AP host");
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw std::runtime_error("connect failed: " + std::string(strerror(errno)));
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

void UeClient::send_frame(FrameKind kind, std::span<const std::uint8_t> payload) {
    const auto bytes = encode_frame(kind, payload);
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n =
            ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error("send failed");
        }
        sent += static_cast<std::size_t>(n);
    }
}

void UeClient::send_register() {
    session_ = dtr::UeSession(
        make_session_state(config_, secrets_, clock_->now()));
    send_frame(FrameKind::register_device,
               encode_register({config_.device_id, config_.demand}));
}

bool UeClient::read_more(int timeout_ms) {
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc <= 0) return false;
    std::uint8_t buf[4096];
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n <= 0) return false;
    reader_.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
    return true;
}

std::optional<Frame> UeClient::next_frame(int timeout_ms) {
    if (auto frame = reader_.next()) return frame;
    if (!read_more(timeout_ms)) return std::nullopt;
    return reader_.next();
}

void UeClient::handle_broadcast(const Frame& frame) {
    const BroadcastPayload b = decode_broadcast(frame.payload);
    ++broadcasts_seen_;
    // Unitized local decision from the broadcast population state and cap.
    const double alpha = mfg::optimal_alpha_with_cap(
        config_.demand, b.x_pop, config_.f_pop_max, b.f_m, 1.0, b.total_resource);
    last_alpha_ = alpha;
    std::vector<std::uint8_t> payload;
    put_f64(payload, alpha);
    send_frame(FrameKind::alpha_report, payload);
}

bool UeClient::poll_once(int timeout_ms) {
    std::optional<Frame> frame;
    try {
        frame = next_frame(timeout_ms);
    } catch (const ProtocolError& e) {
        last_error_ = e.what();
        return false;
    }
    if (!frame) return false;
    switch (frame->kind) {
        case FrameKind::negotiate_broadcast:
            try {
                handle_broadcast(*frame);
            } catch (const std::exception& e) {
                last_error_ = e.what();  // e.g. broadcast X at the F_P pole
            }
            return true;
        case FrameKind::evict:
            evicted_ = true;
            session_.mark_evicted();
            return true;
        default:
            last_error_ = "unexpected frame kind";
            return true;
    }
}

UeClient::AuthResult UeClient::authenticate(double now) {
    if (evicted_) return AuthResult::evicted;
    const dtr::MacTag tag1 = session_.initiate(now);
    try {
        send_frame(FrameKind::auth1, tag1.tag);
    } catch (const std::exception& e) {
        last_error_ = e.what();
        return AuthResult::disconnected;
    }

    // Wait for AUTH2, answering broadcasts that interleave.
    for (int attempts = 0; attempts < 200; ++attempts) {
        auto frame = next_frame(50);
        if (!frame) continue;
        switch (frame->kind) {
            case FrameKind::negotiate_broadcast:
                handle_broadcast(*frame);
                continue;
            case FrameKind::evict:
                evicted_ = true;
                session_.mark_evicted();
                return AuthResult::evicted;
            case FrameKind::auth2: {
                if (frame->payload.size() != 32) return AuthResult::rejected;
                dtr::MacTag tag2;
                std::copy(frame->payload.begin(), frame->payload.end(),
                          tag2.tag.begin());
                const auto reply = session_.verify_response_and_finalize(tag2);
                if (!reply) return AuthResult::rejected;
                try {
                    send_frame(FrameKind::auth3, reply->tag);
                } catch (const std::exception& e) {
                    last_error_ = e.what();
                    return AuthResult::disconnected;
                }
                ++completed_auths_;
                return AuthResult::success;
            }
            default:
                return AuthResult::rejected;
        }
    }
    return AuthResult::disconnected;
}

}  // namespace hisam::wire
