#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "atlas/net/vif.hpp"
#include "atlas/util/bytes.hpp"

namespace atlas::metering {

// Stand-in for a popular-domain list used to vary DNS query names.
const std::vector<std::string>& bundled_domain_names();

inline constexpr std::size_t kDnsMaxQuery = 512;
inline constexpr std::size_t kDnsMinQuery = 128;

// DNS A query for `name`, padded with an EDNS(0) padding option to exactly
// `size` bytes. Throws Error(LengthError) if `size` cannot hold the name.
Bytes build_dns_query(std::string_view name, std::uint16_t id, std::size_t size);
// The QNAME of a DNS query, or nullopt if the payload is not one.
std::optional<std::string> parse_dns_qname(ByteView payload);

// "POST / HTTP/1.1" request whose header names `host`; the body pads the
// request to exactly `size` bytes. Throws Error(LengthError) if too small.
Bytes build_http_request(std::string_view host, std::size_t size);
std::optional<std::string> parse_http_host(ByteView payload);

// TLS 1.2-framed ClientHello carrying `sni` in the server_name extension.
Bytes build_client_hello(std::string_view sni, std::mt19937_64& rng);
std::optional<std::string> parse_tls_sni(ByteView payload);

// Traffic generators: each sends exactly `bytes` payload bytes on `flow`.
void send_dns_volume(net::VirtualInterface::Flow& flow, std::uint64_t bytes, std::mt19937_64& rng);
void send_http_volume(net::VirtualInterface::Flow& flow, std::string_view host, std::uint64_t bytes);
void send_tls_volume(net::VirtualInterface::Flow& flow, std::string_view sni, std::uint64_t bytes,
                     std::mt19937_64& rng);

}  // namespace atlas::metering
