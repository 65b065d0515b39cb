#include "qkd/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>

namespace qkd {

namespace {

struct PipeBuffer {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::uint8_t> data;
  bool closed = false;
};

class PipeStream : public ByteStream {
 public:
  PipeStream(std::shared_ptr<PipeBuffer> in, std::shared_ptr<PipeBuffer> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~PipeStream() override { close(); }

  void write_all(std::span<const std::uint8_t> data) override {
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw ChannelClosed();
    out_->data.insert(out_->data.end(), data.begin(), data.end());
    out_->cv.notify_all();
  }

  void read_exact(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override {
    std::unique_lock lock(in_->mu);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::size_t got = 0;
    while (got < out.size()) {
      if (!in_->cv.wait_until(lock, deadline, [&] { return !in_->data.empty() || in_->closed; })) {
        throw ChannelTimeout();
      }
      if (in_->data.empty()) throw ChannelClosed();
      while (got < out.size() && !in_->data.empty()) {
        out[got++] = in_->data.front();
        in_->data.pop_front();
      }
    }
  }

  void close() override {
    for (auto* b : {in_.get(), out_.get()}) {
      std::lock_guard lock(b->mu);
      b->closed = true;
      b->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<PipeBuffer> in_;
  std::shared_ptr<PipeBuffer> out_;
};

class SocketStream : public ByteStream {
 public:
  explicit SocketStream(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~SocketStream() override { close(); }

  void write_all(std::span<const std::uint8_t> data) override {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ChannelClosed();
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  void read_exact(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::size_t got = 0;
    while (got < out.size()) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw ChannelTimeout();
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw ChannelClosed();
      }
      if (ready == 0) throw ChannelTimeout();
      const ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
      if (n == 0) throw ChannelClosed();
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw ChannelClosed();
      }
      got += static_cast<std::size_t>(n);
    }
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_;
};

addrinfo* resolve(const std::string& host, std::uint16_t port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res) != 0 || !res) {
    throw TransportError("cannot resolve " + host);
  }
  return res;
}

}  // namespace

std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_pipe_pair() {
  auto a_to_b = std::make_shared<PipeBuffer>();
  auto b_to_a = std::make_shared<PipeBuffer>();
  return {std::make_unique<PipeStream>(b_to_a, a_to_b), std::make_unique<PipeStream>(a_to_b, b_to_a)};
}

std::unique_ptr<ByteStream> tcp_connect(const std::string& host, std::uint16_t port,
                                        std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  addrinfo* res = resolve(host, port, false);
  // The server may still be starting up; retry until the deadline.
  while (true) {
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) break;
    if (::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      return std::make_unique<SocketStream>(fd);
    }
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) break;
    ::usleep(50'000);
  }
  ::freeaddrinfo(res);
  throw TransportError("cannot connect to " + host + ":" + std::to_string(port));
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  addrinfo* res = resolve(host, port, true);
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  int one = 1;
  if (fd_ >= 0) ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const bool ok = fd_ >= 0 && ::bind(fd_, res->ai_addr, res->ai_addrlen) == 0 && ::listen(fd_, 1) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    const std::string why = std::strerror(errno);
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw TransportError("cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
  }
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<ByteStream> TcpListener::accept(std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  if (ready <= 0) throw TransportError("no connection before timeout");
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw TransportError("accept failed");
  return std::make_unique<SocketStream>(fd);
}

void WireTap::record(std::span<const std::uint8_t> frame) {
  std::lock_guard lock(mu_);
  frames_.emplace_back(frame.begin(), frame.end());
}

std::vector<std::vector<std::uint8_t>> WireTap::frames() const {
  std::lock_guard lock(mu_);
  return frames_;
}

FramedChannel::FramedChannel(std::unique_ptr<ByteStream> stream, std::chrono::milliseconds timeout)
    : stream_(std::move(stream)), timeout_(timeout) {}

void FramedChannel::send(const wire::Message& msg) {
  const auto frame = wire::encode_frame(msg);
  if (tap_) tap_->record(frame);
  try {
    stream_->write_all(frame);
  } catch (const ChannelClosed&) {
    throw WireFailure(wire::AbortReason::channel_closed);
  }
}

wire::Message FramedChannel::receive() {
  using wire::AbortReason;
  try {
    std::vector<std::uint8_t> header(wire::kHeaderSize);
    stream_->read_exact(header, timeout_);
    const auto h = wire::decode_header(header);
    if (const auto* err = std::get_if<wire::DecodeError>(&h)) {
      throw WireFailure(*err == wire::DecodeError::unknown_type ? AbortReason::protocol_error
                                                                : AbortReason::malformed_frame);
    }
    const auto hdr = std::get<wire::Header>(h);
    std::vector<std::uint8_t> payload(hdr.payload_len);
    stream_->read_exact(payload, timeout_);
    auto decoded = wire::decode_payload(static_cast<wire::MsgType>(hdr.type), payload);
    if (!std::holds_alternative<wire::Message>(decoded)) throw WireFailure(AbortReason::malformed_frame);
    return std::get<wire::Message>(std::move(decoded));
  } catch (const ChannelTimeout&) {
    throw WireFailure(AbortReason::timeout);
  } catch (const ChannelClosed&) {
    throw WireFailure(AbortReason::channel_closed);
  }
}

void FramedChannel::close() { stream_->close(); }

}  // namespace qkd
