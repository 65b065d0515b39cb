#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qkd/wire.hpp"

namespace qkd {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ChannelClosed : public TransportError {
 public:
  ChannelClosed() : TransportError("channel closed") {}
};
class ChannelTimeout : public TransportError {
 public:
  ChannelTimeout() : TransportError("read timed out") {}
};

/// Ordered reliable byte stream, one owner per direction.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write_all(std::span<const std::uint8_t> data) = 0;
  /// Blocks until out is filled. Throws ChannelClosed or ChannelTimeout.
  virtual void read_exact(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

/// Two connected in-process endpoints.
std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_pipe_pair();

/// TCP client connection; throws TransportError on failure.
std::unique_ptr<ByteStream> tcp_connect(const std::string& host, std::uint16_t port,
                                        std::chrono::milliseconds timeout = std::chrono::seconds(30));

class TcpListener {
 public:
  /// Binds host:port; port 0 picks a free port.
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<ByteStream> accept(std::chrono::milliseconds timeout = std::chrono::seconds(30));

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Records every frame crossing a connection, in send order.
class WireTap {
 public:
  void record(std::span<const std::uint8_t> frame);
  std::vector<std::vector<std::uint8_t>> frames() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::vector<std::uint8_t>> frames_;
};

/// Frame-level failure on receive, mapped to the abort reason to report.
class WireFailure : public std::runtime_error {
 public:
  explicit WireFailure(wire::AbortReason reason)
      : std::runtime_error(std::string(wire::to_string(reason))), reason_(reason) {}
  wire::AbortReason reason() const { return reason_; }

 private:
  wire::AbortReason reason_;
};

/// Message-level view of a byte stream.
class FramedChannel {
 public:
  explicit FramedChannel(std::unique_ptr<ByteStream> stream,
                         std::chrono::milliseconds timeout = std::chrono::seconds(30));

  void set_tap(std::shared_ptr<WireTap> tap) { tap_ = std::move(tap); }
  void send(const wire::Message& msg);
  /// Throws WireFailure with timeout, channel_closed, protocol_error
  /// (unknown type) or malformed_frame.
  wire::Message receive();
  void close();

 private:
  std::unique_ptr<ByteStream> stream_;
  std::chrono::milliseconds timeout_;
  std::shared_ptr<WireTap> tap_;
};

}  // namespace qkd
