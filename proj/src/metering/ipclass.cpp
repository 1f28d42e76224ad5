#include "atlas/metering/ipclass.hpp"

#include <arpa/inet.h>

#include <cstring>
#include <vector>

#include "atlas/util/error.hpp"

namespace atlas::metering {

const char* to_string(IpClass c) {
  switch (c) {
    case IpClass::CgnatShared:
      return "CgnatShared";
    case IpClass::PrivateRfc1918:
      return "PrivateRfc1918";
    case IpClass::PublicV4:
      return "PublicV4";
    case IpClass::PublicV6:
      return "PublicV6";
    case IpClass::OtherReserved:
      return "OtherReserved";
  }
  return "?";
}

IpAddress IpAddress::parse(std::string_view text) {
  std::string s(text);
  IpAddress a;
  if (s.find(':') != std::string::npos) {
    a.v6 = true;
    if (inet_pton(AF_INET6, s.c_str(), a.bytes.data()) != 1) throw Error(Errc::ParseError, "bad IPv6 address '" + s + "'");
  } else {
    if (inet_pton(AF_INET, s.c_str(), a.bytes.data()) != 1) throw Error(Errc::ParseError, "bad IPv4 address '" + s + "'");
  }
  return a;
}

std::string IpAddress::str() const {
  char buf[INET6_ADDRSTRLEN] = {};
  inet_ntop(v6 ? AF_INET6 : AF_INET, bytes.data(), buf, sizeof buf);
  return buf;
}

Cidr Cidr::parse(std::string_view text) {
  Cidr c;
  auto slash = text.find('/');
  c.base = IpAddress::parse(text.substr(0, slash));
  const int max = c.base.v6 ? 128 : 32;
  c.prefix = max;
  if (slash != std::string_view::npos) {
    std::string p(text.substr(slash + 1));
    if (p.empty() || p.size() > 3 || p.find_first_not_of("0123456789") != std::string::npos) {
      throw Error(Errc::ParseError, "bad prefix in '" + std::string(text) + "'");
    }
    c.prefix = std::stoi(p);
    if (c.prefix > max) throw Error(Errc::ParseError, "prefix too long in '" + std::string(text) + "'");
  }
  // Clear host bits so str() is canonical.
  for (int bit = c.prefix; bit < max; ++bit) c.base.bytes[bit / 8] &= static_cast<std::uint8_t>(~(0x80 >> (bit % 8)));
  return c;
}

bool Cidr::contains(const IpAddress& a) const {
  if (a.v6 != base.v6) return false;
  int full = prefix / 8;
  if (std::memcmp(a.bytes.data(), base.bytes.data(), full) != 0) return false;
  int rest = prefix % 8;
  if (rest == 0) return true;
  auto mask = static_cast<std::uint8_t>(0xFF << (8 - rest));
  return (a.bytes[full] & mask) == (base.bytes[full] & mask);
}

std::string Cidr::str() const { return base.str() + "/" + std::to_string(prefix); }

IpAddress Cidr::host(std::uint64_t n) const {
  IpAddress a = base;
  const int max = base.v6 ? 128 : 32;
  const int host_bits = max - prefix;
  if (host_bits < 64) n &= (std::uint64_t{1} << host_bits) - 1;
  const int last = base.v6 ? 15 : 3;
  unsigned carry = 0;
  for (int i = last; i >= 0 && (n || carry); --i) {
    unsigned v = a.bytes[i] + static_cast<unsigned>(n & 0xFF) + carry;
    a.bytes[i] = static_cast<std::uint8_t>(v);
    carry = v >> 8;
    n >>= 8;
  }
  return a;
}

namespace {

struct Range {
  const char* cidr;
  IpClass cls;
};

const Range kV4[] = {
    {"100.64.0.0/10", IpClass::CgnatShared},   {"10.0.0.0/8", IpClass::PrivateRfc1918},
    {"172.16.0.0/12", IpClass::PrivateRfc1918}, {"192.168.0.0/16", IpClass::PrivateRfc1918},
    {"0.0.0.0/8", IpClass::OtherReserved},      {"127.0.0.0/8", IpClass::OtherReserved},
    {"169.254.0.0/16", IpClass::OtherReserved}, {"224.0.0.0/3", IpClass::OtherReserved},
};

const Range kV6[] = {
    {"::/128", IpClass::OtherReserved},    {"::1/128", IpClass::OtherReserved},  {"fc00::/7", IpClass::OtherReserved},
    {"fe80::/10", IpClass::OtherReserved}, {"ff00::/8", IpClass::OtherReserved},
};

}  // namespace

IpClass classify_ip(const IpAddress& a) {
  static const Cidr mapped = Cidr::parse("::ffff:0:0/96");
  if (a.v6 && mapped.contains(a)) {
    IpAddress v4;
    std::memcpy(v4.bytes.data(), a.bytes.data() + 12, 4);
    return classify_ip(v4);
  }
  static const auto compile = [](const auto& table) {
    std::vector<std::pair<Cidr, IpClass>> out;
    for (const auto& r : table) out.emplace_back(Cidr::parse(r.cidr), r.cls);
    return out;
  };
  static const auto v4 = compile(kV4);
  static const auto v6 = compile(kV6);
  for (const auto& [net, cls] : a.v6 ? v6 : v4) {
    if (net.contains(a)) return cls;
  }
  return a.v6 ? IpClass::PublicV6 : IpClass::PublicV4;
}

IpClass classify_ip(std::string_view address) { return classify_ip(IpAddress::parse(address)); }

}  // namespace atlas::metering
