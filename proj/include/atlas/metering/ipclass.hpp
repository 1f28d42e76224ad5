#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace atlas::metering {

enum class IpClass { CgnatShared, PrivateRfc1918, PublicV4, PublicV6, OtherReserved };

const char* to_string(IpClass c);

struct IpAddress {
  bool v6 = false;
  std::array<std::uint8_t, 16> bytes{};  // IPv4 uses the first four

  // Throws Error(ParseError).
  static IpAddress parse(std::string_view text);
  std::string str() const;
  bool operator==(const IpAddress&) const = default;
};

struct Cidr {
  IpAddress base;
  int prefix = 0;

  // "a.b.c.d/n" or "x::/n"; a bare address means a host route.
  // Throws Error(ParseError).
  static Cidr parse(std::string_view text);
  bool contains(const IpAddress& a) const;
  bool contains(std::string_view address) const { return contains(IpAddress::parse(address)); }
  std::string str() const;
  // The n-th address inside the block (wraps within the host part).
  IpAddress host(std::uint64_t n) const;
};

// IPv4-mapped IPv6 addresses are classified by their embedded IPv4 address.
IpClass classify_ip(std::string_view address);
IpClass classify_ip(const IpAddress& address);

}  // namespace atlas::metering
