#include "atlas/util/socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "atlas/util/error.hpp"

namespace atlas::net {

Endpoint parse_endpoint(const std::string& text, std::uint16_t default_port) {
  std::string rest = text;
  if (auto pos = rest.find("://"); pos != std::string::npos) rest = rest.substr(pos + 3);
  if (auto pos = rest.find('/'); pos != std::string::npos) rest = rest.substr(0, pos);
  Endpoint ep;
  ep.port = default_port;
  auto colon = rest.rfind(':');
  std::string port_text;
  if (colon == std::string::npos) {
    bool all_digits = !rest.empty() && rest.find_first_not_of("0123456789") == std::string::npos;
    if (all_digits) {
      port_text = rest;
    } else if (!rest.empty()) {
      ep.host = rest;
    }
  } else {
    if (colon > 0) ep.host = rest.substr(0, colon);
    port_text = rest.substr(colon + 1);
  }
  if (!port_text.empty()) {
    if (port_text.find_first_not_of("0123456789") != std::string::npos || port_text.size() > 5) {
      throw Error(Errc::ParseError, "bad port in endpoint '" + text + "'");
    }
    unsigned long port = std::stoul(port_text);
    if (port > 65535) throw Error(Errc::ParseError, "port out of range in '" + text + "'");
    ep.port = static_cast<std::uint16_t>(port);
  }
  if (ep.host == "localhost") ep.host = "127.0.0.1";
  if (ep.host.empty() || ep.host == "0.0.0.0" || ep.host == "*") ep.host = "0.0.0.0";
  return ep;
}

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

void Socket::send_all(ByteView data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::CircuitLost, std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool Socket::recv_exact(std::uint8_t* out, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t r = ::recv(fd_, out + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw Error(Errc::Truncated, "connection closed mid-message");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      if (got == 0) return false;
      throw Error(Errc::Truncated, std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

namespace {

sockaddr_in make_addr(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
      throw Error(Errc::EndpointUnreachable, "cannot resolve " + ep.host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  return addr;
}

}  // namespace

Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout) {
  sockaddr_in addr = make_addr(ep);
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::EndpointUnreachable, "socket() failed");
  Socket sock(fd);
  int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc < 0 && errno != EINPROGRESS) {
    throw Error(Errc::EndpointUnreachable, "connect " + ep.str() + ": " + std::strerror(errno));
  }
  if (rc < 0) {
    pollfd pfd{fd, POLLOUT, 0};
    int pr = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (pr <= 0 || err != 0) {
      throw Error(Errc::EndpointUnreachable,
                  "connect " + ep.str() + ": " + (pr <= 0 ? "timeout" : std::strerror(err)));
    }
  }
  ::fcntl(fd, F_SETFL, flags);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return sock;
}

Listener::Listener(const Endpoint& ep) {
  sockaddr_in addr = make_addr(ep);
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::BindFailure, "socket() failed");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd, 128) < 0) {
    std::string why = std::strerror(errno);
    ::close(fd);
    throw Error(Errc::BindFailure, "bind " + ep.str() + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  fd_ = fd;
  port_ = ntohs(addr.sin_port);
}

Listener::~Listener() { close(); }

std::optional<Socket> Listener::accept() {
  while (true) {
    int lfd = fd_.load();
    if (lfd < 0) return std::nullopt;
    pollfd pfd{lfd, POLLIN, 0};
    int pr = ::poll(&pfd, 1, 100);
    if (pr == 0) continue;
    if (fd_.load() < 0) return std::nullopt;
    int c = ::accept4(lfd, nullptr, nullptr, SOCK_CLOEXEC | SOCK_NONBLOCK);
    if (c < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return std::nullopt;
    }
    ::fcntl(c, F_SETFL, ::fcntl(c, F_GETFL, 0) & ~O_NONBLOCK);
    int one = 1;
    ::setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Socket(c);
  }
}

void Listener::close() {
  int fd = fd_.exchange(-1);
  if (fd >= 0) {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
  }
}

}  // namespace atlas::net
