#pragma once

// Minimal RFC 6455 WebSocket: opening handshake, frame encode/decode and
// a blocking TCP socket wrapper. Text and control frames only; no
// extensions, no TLS.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cerrno>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace facevalue::ws {

class protocol_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
inline constexpr std::size_t kMaxPayload = 1 << 20;

enum class Opcode : std::uint8_t { continuation = 0x0, text = 0x1, binary = 0x2, close = 0x8, ping = 0x9, pong = 0xA };

inline std::string base64(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

/// Sec-WebSocket-Accept value for a client's Sec-WebSocket-Key.
inline std::string accept_key(std::string_view client_key) {
  std::string s(client_key);
  s += kGuid;
  std::array<unsigned char, SHA_DIGEST_LENGTH> digest{};
  SHA1(reinterpret_cast<const unsigned char*>(s.data()), s.size(), digest.data());
  return base64(digest.data(), digest.size());
}

/// Value of an HTTP header (case-insensitive name), if present.
inline std::optional<std::string> header_value(std::string_view request, std::string_view name) {
  std::size_t pos = request.find("\r\n");
  while (pos != std::string_view::npos) {
    const std::size_t start = pos + 2;
    const std::size_t end = request.find("\r\n", start);
    const std::string_view line = request.substr(start, end == std::string_view::npos ? end : end - start);
    const std::size_t colon = line.find(':');
    if (colon != std::string_view::npos && colon == name.size() &&
        std::equal(name.begin(), name.end(), line.begin(),
                   [](char a, char b) { return std::tolower(static_cast<unsigned char>(a)) ==
                                               std::tolower(static_cast<unsigned char>(b)); })) {
      std::string_view v = line.substr(colon + 1);
      while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
      while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.remove_suffix(1);
      return std::string(v);
    }
    pos = end;
  }
  return std::nullopt;
}

/// 101 response for an upgrade request; throws protocol_error when the
/// request is not a WebSocket upgrade.
inline std::string handshake_response(std::string_view request) {
  if (request.substr(0, 4) != "GET ") throw protocol_error("handshake: expected GET");
  const auto key = header_value(request, "Sec-WebSocket-Key");
  if (!key || key->empty()) throw protocol_error("handshake: missing Sec-WebSocket-Key");
  return "HTTP/1.1 101 Switching Protocols\r\n"
         "Upgrade: websocket\r\n"
         "Connection: Upgrade\r\n"
         "Sec-WebSocket-Accept: " +
         accept_key(*key) + "\r\n\r\n";
}

struct Frame {
  bool fin = true;
  Opcode opcode = Opcode::text;
  std::string payload;
};

/// Server frames are unmasked; client frames must carry a mask.
inline std::string encode_frame(Opcode op, std::string_view payload, std::optional<std::array<std::uint8_t, 4>> mask = {},
                                bool fin = true) {
  std::string out;
  out.push_back(static_cast<char>((fin ? 0x80 : 0x00) | static_cast<std::uint8_t>(op)));
  const std::uint8_t mbit = mask ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mbit | n));
  } else if (n <= 0xFFFF) {
    out.push_back(static_cast<char>(mbit | 126));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(mbit | 127));
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> s) & 0xFF));
  }
  if (mask) {
    out.append(reinterpret_cast<const char*>(mask->data()), 4);
    for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(payload[i] ^ (*mask)[i % 4]));
  } else {
    out.append(payload);
  }
  return out;
}

/// Incremental frame decoder. Feed bytes, pop complete messages.
/// Fragmented data messages are reassembled; control frames pass through.
class Decoder {
 public:
  explicit Decoder(bool require_mask) : require_mask_(require_mask) {}

  void feed(std::string_view bytes) { buf_.append(bytes); }

  /// Next complete message, or nullopt when more bytes are needed.
  std::optional<Frame> next() {
    for (;;) {
      auto f = next_frame();
      if (!f) return std::nullopt;
      const bool control = static_cast<std::uint8_t>(f->opcode) & 0x8;
      if (control) {
        if (!f->fin || f->payload.size() > 125) throw protocol_error("malformed control frame");
        return f;
      }
      if (f->opcode == Opcode::continuation) {
        if (!partial_) throw protocol_error("continuation without a started message");
        partial_->payload += f->payload;
      } else {
        if (partial_) throw protocol_error("new message before the previous one finished");
        partial_ = Frame{false, f->opcode, std::move(f->payload)};
      }
      if (partial_->payload.size() > kMaxPayload) throw protocol_error("message too large");
      if (f->fin) {
        Frame done = std::move(*partial_);
        done.fin = true;
        partial_.reset();
        return done;
      }
    }
  }

 private:
  std::optional<Frame> next_frame() {
    if (buf_.size() < 2) return std::nullopt;
    const auto b = [&](std::size_t i) { return static_cast<std::uint8_t>(buf_[i]); };
    if (b(0) & 0x70) throw protocol_error("reserved bits set");
    const bool masked = b(1) & 0x80;
    if (require_mask_ && !masked) throw protocol_error("client frame is not masked");
    std::uint64_t len = b(1) & 0x7F;
    std::size_t off = 2;
    if (len == 126) {
      if (buf_.size() < 4) return std::nullopt;
      len = (std::uint64_t{b(2)} << 8) | b(3);
      off = 4;
    } else if (len == 127) {
      if (buf_.size() < 10) return std::nullopt;
      len = 0;
      for (std::size_t i = 0; i < 8; ++i) len = (len << 8) | b(2 + i);
      off = 10;
    }
    if (len > kMaxPayload) throw protocol_error("frame too large");
    std::array<std::uint8_t, 4> mask{};
    if (masked) {
      if (buf_.size() < off + 4) return std::nullopt;
      for (std::size_t i = 0; i < 4; ++i) mask[i] = b(off + i);
      off += 4;
    }
    if (buf_.size() < off + len) return std::nullopt;
    Frame f;
    f.fin = b(0) & 0x80;
    f.opcode = static_cast<Opcode>(b(0) & 0x0F);
    f.payload = buf_.substr(off, static_cast<std::size_t>(len));
    if (masked)
      for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] = static_cast<char>(f.payload[i] ^ mask[i % 4]);
    buf_.erase(0, off + static_cast<std::size_t>(len));
    return f;
  }

  bool require_mask_;
  std::string buf_;
  std::optional<Frame> partial_;
};

// ---------------------------------------------------------------------------
// Blocking TCP sockets

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  /// Stop both directions without releasing the descriptor; unblocks a
  /// reader in another thread.
  void shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  bool send_all(std::string_view data) {
    while (!data.empty()) {
      const ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
  }

  /// Up to `max` bytes; empty on orderly close or error.
  std::string recv_some(std::size_t max = 4096) {
    std::string buf(max, '\0');
    for (;;) {
      const ssize_t n = ::recv(fd_, buf.data(), max, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return {};
      buf.resize(static_cast<std::size_t>(n));
      return buf;
    }
  }

 private:
  int fd_ = -1;
};

/// Listening socket on 127.0.0.1 or any address. Port 0 picks a free port.
inline Socket listen_tcp(std::uint16_t port, bool loopback_only = false) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(loopback_only ? INADDR_LOOPBACK : INADDR_ANY);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw std::runtime_error("bind port " + std::to_string(port) + ": " + std::strerror(errno));
  if (::listen(s.fd(), 4) != 0) throw std::runtime_error(std::string("listen: ") + std::strerror(errno));
  return s;
}

inline std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0)
    throw std::runtime_error(std::string("getsockname: ") + std::strerror(errno));
  return ntohs(addr.sin_port);
}

inline Socket connect_tcp(const std::string& host, std::uint16_t port) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw std::runtime_error("bad IPv4 address " + host);
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw std::runtime_error("connect " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

/// Reads until the blank line ending an HTTP head. Bytes past it are
/// returned in `rest`.
inline std::string read_http_head(Socket& s, std::string& rest, std::size_t limit = 8192) {
  std::string buf;
  for (;;) {
    const auto end = buf.find("\r\n\r\n");
    if (end != std::string::npos) {
      rest = buf.substr(end + 4);
      return buf.substr(0, end + 4);
    }
    if (buf.size() > limit) throw protocol_error("HTTP head too long");
    const std::string chunk = s.recv_some();
    if (chunk.empty()) throw protocol_error("connection closed during handshake");
    buf += chunk;
  }
}

/// Client side of the opening handshake (used by tests and tools).
inline void client_handshake(Socket& s, const std::string& host, std::uint16_t port, std::string& rest) {
  std::array<unsigned char, 16> nonce{};
  std::random_device rd;
  for (auto& c : nonce) c = static_cast<unsigned char>(rd());
  const std::string key = base64(nonce.data(), nonce.size());
  const std::string req = "GET / HTTP/1.1\r\nHost: " + host + ":" + std::to_string(port) +
                          "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                          "\r\nSec-WebSocket-Version: 13\r\n\r\n";
  if (!s.send_all(req)) throw protocol_error("handshake send failed");
  const std::string head = read_http_head(s, rest);
  if (head.rfind("HTTP/1.1 101", 0) != 0) throw protocol_error("handshake rejected: " + head.substr(0, head.find('\r')));
  if (header_value(head, "Sec-WebSocket-Accept") != accept_key(key)) throw protocol_error("bad Sec-WebSocket-Accept");
}

}  // namespace facevalue::ws
