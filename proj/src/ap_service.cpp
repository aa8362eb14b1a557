#include "hisam/ap_service.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace hisam::wire {

namespace {

void write_all(int fd, const std::uint8_t* data, std::size_t size) {
    std::size_t sent = 0;
    while (sent < size) {
        const ssize_t n = ::send(fd, data + sent, size - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error("send failed");
        }
        sent += static_cast<std::size_t>(n);
    }
}

}  // namespace

DeviceSecrets derive_device_secrets(std::uint64_t secret_seed,
                                    std::uint64_t device_id) {
    auto block = [&](const char* label) {
        std::vector<std::uint8_t> key(8);
        for (int i = 0; i < 8; ++i)
            key[static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>(secret_seed >> (56 - 8 * i));
        std::vector<std::uint8_t> msg;
        for (int i = 0; i < 8; ++i)
            msg.push_back(static_cast<std::uint8_t>(device_id >> (56 - 8 * i)));
        for (const char* c = label; *c; ++c)
            msg.push_back(static_cast<std::uint8_t>(*c));
        return dtr::hmac_sha256(key, msg);
    };
    DeviceSecrets secrets;
    const auto ue = block("ue");
    const auto ap = block("ap");
    const auto k = block("key");
    std::copy_n(ue.tag.begin(), 16, secrets.ue_msg.bytes.begin());
    std::copy_n(ap.tag.begin(), 16, secrets.ap_msg.bytes.begin());
    secrets.key.key = k.tag;
    return secrets;
}

struct ApService::Session {
    int fd = -1;
    FrameReader reader;
    std::optional<std::uint64_t> device_id;
    double demand = 0.0;
    std::optional<dtr::ApSession> dtr;
    dtr::PenaltyLedger ledger;
    std::optional<double> reported_alpha;  // current exchange
    double pending_sleep = 0.0;            // realized sleep behind the open handshake
    bool closed = false;
    std::vector<std::uint8_t> transcript;  // sent and received, in order
};

ApService::ApService(ApConfig config,
                     std::map<std::uint64_t, DeviceSecrets> registry,
                     std::shared_ptr<Clock> clock)
    : config_(std::move(config)),
      registry_(std::move(registry)),
      clock_(std::move(clock)) {
    config_.params.validate();
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(config_.listen_port);
    if (::inet_pton(AF_INET, config_.listen_host.c_str(), &addr.sin_addr) != 1)
        throw std::runtime_error("bad listen host");
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw std::runtime_error("bind failed");
    if (::listen(listen_fd_, 64) != 0) throw std::runtime_error("listen failed");
    ::fcntl(listen_fd_, F_SETFL, ::fcntl(listen_fd_, F_GETFL, 0) | O_NONBLOCK);
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

ApService::~ApService() {
    stop();
    for (auto& s : sessions_)
        if (s->fd >= 0) ::close(s->fd);
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void ApService::stop() { stop_.store(true); }

bool ApService::negotiation_done() const {
    std::lock_guard lock(state_mutex_);
    return negotiation_.has_value() || negotiation_failed_;
}

mfg::NegotiationOutcome ApService::wait_negotiation() {
    std::unique_lock lock(state_mutex_);
    state_cv_.wait(lock, [&] { return negotiation_.has_value() || negotiation_failed_; });
    if (negotiation_failed_)
        throw std::runtime_error("negotiation failed (session lost or timeout)");
    return *negotiation_;
}

std::optional<ApService::DeviceStatus> ApService::device_status(
    std::uint64_t device_id) const {
    std::lock_guard lock(state_mutex_);
    const auto it = status_.find(device_id);
    if (it == status_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::uint8_t> ApService::transcript() const {
    std::lock_guard lock(state_mutex_);
    std::vector<const Session*> ordered;
    for (const auto& s : sessions_)
        if (s->device_id) ordered.push_back(s.get());
    std::sort(ordered.begin(), ordered.end(), [](const Session* a, const Session* b) {
        return *a->device_id < *b->device_id;
    });
    std::vector<std::uint8_t> out;
    for (const Session* s : ordered)
        out.insert(out.end(), s->transcript.begin(), s->transcript.end());
    return out;
}

void ApService::send_frame(Session& session, FrameKind kind,
                           std::span<const std::uint8_t> payload) {
    if (session.closed) return;
    const auto bytes = encode_frame(kind, payload);
    try {
        write_all(session.fd, bytes.data(), bytes.size());
    } catch (const std::exception&) {
        close_session(session, "send failure");
        return;
    }
    std::lock_guard lock(state_mutex_);
    session.transcript.push_back(0x01);  // sent marker
    session.transcript.insert(session.transcript.end(), bytes.begin(), bytes.end());
}

void ApService::close_session(Session& session, const char*) {
    if (session.closed) return;
    session.closed = true;
    if (session.fd >= 0) {
        ::close(session.fd);
        session.fd = -1;
    }
}

void ApService::accept_pending() {
    for (;;) {
        sockaddr_in addr{};
        socklen_t len = sizeof(addr);
        const int fd = ::accept4(listen_fd_, reinterpret_cast<sockaddr*>(&addr),
                                 &len, SOCK_NONBLOCK);
        if (fd < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK) return;
            if (errno == EINTR) continue;
            return;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        auto session = std::make_unique<Session>();
        session->fd = fd;
        sessions_.push_back(std::move(session));
    }
}

std::vector<ApService::Session*> ApService::registered_sessions() {
    std::vector<Session*> out;
    for (auto& s : sessions_)
        if (!s->closed && s->device_id) out.push_back(s.get());
    std::sort(out.begin(), out.end(), [](const Session* a, const Session* b) {
        return *a->device_id < *b->device_id;
    });
    return out;
}

bool ApService::pump(int timeout_ms) {
    std::vector<pollfd> fds;
    fds.push_back(pollfd{listen_fd_, POLLIN, 0});
    std::vector<Session*> polled;
    for (auto& s : sessions_) {
        if (s->closed) continue;
        fds.push_back(pollfd{s->fd, POLLIN, 0});
        polled.push_back(s.get());
    }
    const int rc = ::poll(fds.data(), fds.size(), timeout_ms);
    if (rc <= 0) return false;

    if (fds[0].revents & POLLIN) accept_pending();
    bool activity = false;
    for (std::size_t i = 0; i < polled.size(); ++i) {
        if (!(fds[i + 1].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        Session& session = *polled[i];
        std::uint8_t buf[4096];
        const ssize_t n = ::recv(session.fd, buf, sizeof(buf), 0);
        if (n <= 0) {
            close_session(session, "peer closed");
            continue;
        }
        activity = true;
        session.reader.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
        try {
            while (auto frame = session.reader.next()) {
                {
                    const auto bytes = encode_frame(*frame);
                    std::lock_guard lock(state_mutex_);
                    session.transcript.push_back(0x00);  // received marker
                    session.transcript.insert(session.transcript.end(), bytes.begin(),
                                              bytes.end());
                }
                handle_frame(session, *frame);
                if (session.closed) break;
            }
        } catch (const ProtocolError&) {
            ++protocol_errors_;
            close_session(session, "protocol error");
        }
    }
    return activity;
}

void ApService::handle_frame(Session& session, const Frame& frame) {
    switch (frame.kind) {
        case FrameKind::register_device: {
            RegisterPayload reg;
            try {
                reg = decode_register(frame.payload);
            } catch (const ProtocolError&) {
                ++protocol_errors_;
                close_session(session, "bad register");
                return;
            }
            const auto secret = registry_.find(reg.device_id);
            const bool duplicate = [&] {
                for (const auto& s : sessions_)
                    if (s.get() != &session && !s->closed && s->device_id == reg.device_id)
                        return true;
                return false;
            }();
            if (secret == registry_.end() || duplicate || session.device_id ||
                !(reg.demand > 0.0)) {
                ++protocol_errors_;
                close_session(session, "register rejected");
                return;
            }
            session.device_id = reg.device_id;
            session.demand = reg.demand;
            dtr::AuthSession state;
            state.ue_msg = secret->second.ue_msg;
            state.ap_msg = secret->second.ap_msg;
            state.key = secret->second.key;
            state.sleep_unit = config_.sleep_unit;
            state.last_time = clock_->now();
            session.dtr.emplace(state);
            session.ledger =
                dtr::PenaltyLedger{config_.oversleep_limit,
                                   secret->second.initial_workload, false};
            std::lock_guard lock(state_mutex_);
            status_[reg.device_id] =
                DeviceStatus{session.ledger.workload, false, 0, 0.0};
            return;
        }
        case FrameKind::alpha_report: {
            if (!session.device_id || frame.payload.size() != 8)
                throw ProtocolError("unexpected ALPHA_REPORT");
            const double alpha = get_f64(frame.payload, 0);
            if (!std::isfinite(alpha) || alpha <= 0.0 ||
                alpha > config_.params.f_m() * (1.0 + 1e-9))
                throw ProtocolError("ALPHA_REPORT outside (0, F_m]");
            session.reported_alpha = alpha;
            return;
        }
        case FrameKind::auth1: {
            if (!session.device_id || !session.dtr)
                throw ProtocolError("AUTH1 before registration");
            if (frame.payload.size() != 32)
                throw ProtocolError("AUTH1 payload must be a 32-byte tag");
            if (session.ledger.evicted) {
                send_frame(session, FrameKind::evict, {});
                close_session(session, "evicted");
                return;
            }
            dtr::MacTag tag;
            std::copy(frame.payload.begin(), frame.payload.end(), tag.tag.begin());
            const double arrival = clock_->now();
            const double previous = session.dtr->state().last_time;
            const auto verdict = session.dtr->verify_initiation(tag, arrival);
            if (!verdict.accepted) return;  // rejection, not a session error
            const dtr::MacTag response = session.dtr->respond();
            send_frame(session, FrameKind::auth2, response.tag);
            session.pending_sleep = arrival - previous;
            return;
        }
        case FrameKind::auth3: {
            if (!session.device_id || !session.dtr || !session.dtr->has_pending())
                throw ProtocolError("AUTH3 without pending handshake");
            if (frame.payload.size() != 32)
                throw ProtocolError("AUTH3 payload must be a 32-byte tag");
            dtr::MacTag reply;
            std::copy(frame.payload.begin(), frame.payload.end(), reply.tag.begin());
            if (!session.dtr->finalize(reply)) return;
            session.ledger.workload += 1.0;
            session.ledger = dtr::apply_oversleep_penalty(
                session.ledger, session.pending_sleep, config_.sleep_unit);
            {
                std::lock_guard lock(state_mutex_);
                auto& st = status_[*session.device_id];
                st.workload = session.ledger.workload;
                st.completed_auths += 1;
                st.evicted = session.ledger.evicted;
            }
            if (session.ledger.evicted) {
                send_frame(session, FrameKind::evict, {});
                close_session(session, "evicted");
            }
            return;
        }
        case FrameKind::negotiate_broadcast:
        case FrameKind::auth2:
        case FrameKind::evict:
            throw ProtocolError("client sent a server-only frame");
    }
    throw ProtocolError("unhandled frame kind");
}

bool ApService::negotiation_exchange(mfg::NegotiationEngine& engine,
                                     const std::vector<Session*>& participants) {
    const auto broadcast =
        encode_broadcast({engine.broadcast_x(), total_resource_, config_.params.f_m()});
    for (Session* s : participants) {
        s->reported_alpha.reset();
        send_frame(*s, FrameKind::negotiate_broadcast, broadcast);
    }
    for (;;) {
        bool complete = true;
        for (const Session* s : participants) {
            if (s->closed) return false;  // the barrier needs all N devices
            if (!s->reported_alpha) complete = false;
        }
        if (complete) {
            std::vector<double> alphas;
            alphas.reserve(participants.size());
            for (const Session* s : participants) alphas.push_back(*s->reported_alpha);
            engine.submit_alphas(alphas);
            {
                std::lock_guard lock(state_mutex_);
                for (const Session* s : participants)
                    status_[*s->device_id].last_alpha = *s->reported_alpha;
            }
            return true;
        }
        if (stop_.load()) return false;
        pump(50);
    }
}

void ApService::run_negotiation() {
    // The barrier set is pinned when the negotiation starts; devices that
    // register later join only the authentication phase.
    const std::vector<Session*> participants = registered_sessions();
    total_resource_ = 0.0;
    for (const Session* s : participants) total_resource_ += s->demand;

    mfg::SystemParams unit = config_.params;
    unit.time_unit = 1.0;
    mfg::NegotiationEngine engine(unit, total_resource_);
    bool ok = participants.size() == config_.params.n_devices;
    while (ok && !engine.converged() &&
           engine.rounds() < config_.params.max_rounds) {
        for (int e = 0; ok && e < mfg::NegotiationEngine::kExchangesPerRound; ++e)
            ok = negotiation_exchange(engine, participants);
        if (!ok) break;
        engine.round_boundary();
    }

    std::lock_guard lock(state_mutex_);
    if (ok) {
        mfg::NegotiationOutcome outcome;
        outcome.trace = engine.trace();
        outcome.result.alphas = engine.committed_alphas();
        outcome.result.final_x = engine.final_x();
        negotiation_ = std::move(outcome);
    } else {
        negotiation_failed_ = true;
    }
    state_cv_.notify_all();
}

void ApService::run() {
    // Registration barrier.
    while (!stop_.load()) {
        pump(50);
        if (registered_sessions().size() >= config_.params.n_devices) break;
    }
    if (stop_.load()) {
        std::lock_guard lock(state_mutex_);
        negotiation_failed_ = true;
        state_cv_.notify_all();
        return;
    }

    run_negotiation();

    // Authentication service until asked to stop.
    while (!stop_.load()) pump(50);
}

}  // namespace hisam::wire
