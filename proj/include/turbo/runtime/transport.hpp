#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "turbo/runtime/wire.hpp"

namespace turbo::runtime {

struct transport_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int tcp_listen(const std::string& host, uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw transport_error("socket: " + std::string(strerror(errno)));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw transport_error("bad listen address: " + host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string err = strerror(errno);
    ::close(fd);
    throw transport_error("bind " + host + ":" + std::to_string(port) + ": " + err);
  }
  if (::listen(fd, 16) != 0) {
    const std::string err = strerror(errno);
    ::close(fd);
    throw transport_error("listen: " + err);
  }
  return fd;
}

inline uint16_t local_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0)
    throw transport_error("getsockname: " + std::string(strerror(errno)));
  return ntohs(addr.sin_port);
}

inline int tcp_connect(const std::string& host, uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw transport_error("socket: " + std::string(strerror(errno)));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw transport_error("bad address: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string err = strerror(errno);
    ::close(fd);
    throw transport_error("connect " + host + ":" + std::to_string(port) + ": " + err);
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd;
}

inline bool send_all(int fd, const uint8_t* data, size_t len) {
  size_t sent = 0;
  while (sent < len) {
    const ssize_t n = ::send(fd, data + sent, len - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      return false;
    }
    sent += static_cast<size_t>(n);
  }
  return true;
}

inline bool recv_all(int fd, uint8_t* data, size_t len) {
  size_t got = 0;
  while (got < len) {
    const ssize_t n = ::recv(fd, data + got, len - got, 0);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      return false;
    }
    got += static_cast<size_t>(n);
  }
  return true;
}

struct ReadResult {
  enum class Status { Ok, Closed, Malformed } status = Status::Closed;
  OffloadEnvelope env;
};

// Blocking read of one envelope.
inline ReadResult read_envelope(int fd) {
  ReadResult r;
  uint8_t header[kHeaderBytes];
  if (!recv_all(fd, header, sizeof(header))) return r;
  auto h = decode_header(header);
  if (!h) {
    r.status = ReadResult::Status::Malformed;
    return r;
  }
  r.env.msg_type = h->msg_type;
  r.env.service_id = h->service_id;
  r.env.frame_id = h->frame_id;
  r.env.config_id = h->config_id;
  r.env.deadline_unix_micros = h->deadline_unix_micros;
  r.env.payload.resize(h->payload_len);
  if (h->payload_len > 0 && !recv_all(fd, r.env.payload.data(), h->payload_len)) {
    r.status = ReadResult::Status::Closed;
    return r;
  }
  r.status = ReadResult::Status::Ok;
  return r;
}

inline bool write_envelope(int fd, const OffloadEnvelope& env) {
  const std::vector<uint8_t> bytes = encode(env);
  return send_all(fd, bytes.data(), bytes.size());
}

}  // namespace turbo::runtime
