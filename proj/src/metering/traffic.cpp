#include "atlas/metering/traffic.hpp"

#include <algorithm>
#include <cctype>

#include "atlas/util/error.hpp"

namespace atlas::metering {

const std::vector<std::string>& bundled_domain_names() {
  static const std::vector<std::string> names = {
      "google.com",    "facebook.com",  "microsoft.com", "amazonaws.com", "apple.com",     "youtube.com",
      "twitter.com",   "instagram.com", "cloudflare.com", "akamaiedge.net", "linkedin.com", "netflix.com",
      "wikipedia.org", "yahoo.com",     "bing.com",      "live.com",      "office.com",    "github.com",
      "whatsapp.net",  "tiktokcdn.com", "spotify.com",   "zoom.us",       "reddit.com",    "adobe.com",
      "dropbox.com",   "pinterest.com", "icloud.com",    "skype.com",     "ebay.com",      "paypal.com",
      "booking.com",   "mozilla.org",   "snapchat.com",  "telegram.org",  "twitch.tv",     "vimeo.com",
  };
  return names;
}

namespace {

void put_name(Bytes& out, std::string_view name) {
  std::size_t pos = 0;
  while (pos <= name.size()) {
    auto dot = name.find('.', pos);
    if (dot == std::string_view::npos) dot = name.size();
    auto label = name.substr(pos, dot - pos);
    if (label.empty() || label.size() > 63) throw Error(Errc::LengthError, "bad DNS label in " + std::string(name));
    out.push_back(static_cast<std::uint8_t>(label.size()));
    out.insert(out.end(), label.begin(), label.end());
    pos = dot + 1;
  }
  out.push_back(0);
}

std::size_t digits(std::uint64_t v) {
  std::size_t d = 1;
  while (v >= 10) {
    v /= 10;
    ++d;
  }
  return d;
}

std::string http_head(std::string_view host, std::uint64_t body) {
  return "POST /upload HTTP/1.1\r\nHost: " + std::string(host) +
         "\r\nContent-Type: application/octet-stream\r\nContent-Length: " + std::to_string(body) + "\r\n\r\n";
}

void send_zeros(net::VirtualInterface::Flow& flow, std::uint64_t n) {
  static const Bytes block(64 * 1024, 0);
  while (n > 0) {
    auto k = static_cast<std::size_t>(std::min<std::uint64_t>(n, block.size()));
    flow.send(ByteView(block.data(), k));
    n -= k;
  }
}

}  // namespace

Bytes build_dns_query(std::string_view name, std::uint16_t id, std::size_t size) {
  Bytes q;
  put_u16be(q, id);
  q.insert(q.end(), {0x01, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x01});
  put_name(q, name);
  q.insert(q.end(), {0x00, 0x01, 0x00, 0x01});
  // OPT pseudo-record with a padding option.
  const std::size_t fixed = q.size() + 11 + 4;
  if (size < fixed || size > 0xFFFF) throw Error(Errc::LengthError, "DNS query cannot be " + std::to_string(size) + " bytes");
  const std::size_t pad = size - fixed;
  q.insert(q.end(), {0x00, 0x00, 0x29, 0x10, 0x00, 0x00, 0x00, 0x00, 0x00});
  put_u16be(q, static_cast<std::uint16_t>(4 + pad));
  put_u16be(q, 12);
  put_u16be(q, static_cast<std::uint16_t>(pad));
  q.resize(size, 0);
  return q;
}

std::optional<std::string> parse_dns_qname(ByteView p) {
  if (p.size() < 17 || get_u16be(p.data() + 4) == 0 || (p[2] & 0x80)) return std::nullopt;
  std::string name;
  std::size_t pos = 12;
  while (pos < p.size()) {
    std::uint8_t len = p[pos++];
    if (len == 0) return name;
    if (len > 63 || pos + len > p.size()) return std::nullopt;
    if (!name.empty()) name += '.';
    name.append(reinterpret_cast<const char*>(p.data() + pos), len);
    pos += len;
  }
  return std::nullopt;
}

Bytes build_http_request(std::string_view host, std::size_t size) {
  const std::size_t base = http_head(host, 0).size() - 1;
  for (std::size_t d = 1; d <= 20; ++d) {
    if (size < base + d) break;
    std::uint64_t body = size - base - d;
    if (digits(body) != d) continue;
    std::string head = http_head(host, body);
    Bytes out(head.begin(), head.end());
    out.resize(size, 'x');
    return out;
  }
  throw Error(Errc::LengthError, "HTTP request cannot be " + std::to_string(size) + " bytes");
}

std::optional<std::string> parse_http_host(ByteView p) {
  std::string_view text(reinterpret_cast<const char*>(p.data()), p.size());
  auto end = text.find("\r\n\r\n");
  if (end == std::string_view::npos) return std::nullopt;
  text = text.substr(0, end + 2);
  auto sp = text.find(' ');
  if (sp == std::string_view::npos || sp == 0) return std::nullopt;
  for (char c : text.substr(0, sp)) {
    if (!std::isupper(static_cast<unsigned char>(c))) return std::nullopt;
  }
  std::size_t pos = text.find("\r\n");
  while (pos != std::string_view::npos && pos + 2 < text.size()) {
    auto eol = text.find("\r\n", pos + 2);
    auto line = text.substr(pos + 2, eol - pos - 2);
    auto colon = line.find(':');
    if (colon != std::string_view::npos) {
      std::string key(line.substr(0, colon));
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
      if (key == "host") {
        auto v = line.substr(colon + 1);
        while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
        while (!v.empty() && v.back() == ' ') v.remove_suffix(1);
        return std::string(v);
      }
    }
    pos = eol;
  }
  return std::nullopt;
}

Bytes build_client_hello(std::string_view sni, std::mt19937_64& rng) {
  Bytes body{0x03, 0x03};
  for (int i = 0; i < 32; ++i) body.push_back(static_cast<std::uint8_t>(rng()));
  body.push_back(32);
  for (int i = 0; i < 32; ++i) body.push_back(static_cast<std::uint8_t>(rng()));
  body.insert(body.end(), {0x00, 0x06, 0x13, 0x01, 0x13, 0x02, 0xC0, 0x2F, 0x01, 0x00});
  Bytes ext;
  put_u16be(ext, 0x0000);
  put_u16be(ext, static_cast<std::uint16_t>(sni.size() + 5));
  put_u16be(ext, static_cast<std::uint16_t>(sni.size() + 3));
  ext.push_back(0x00);
  put_u16be(ext, static_cast<std::uint16_t>(sni.size()));
  ext.insert(ext.end(), sni.begin(), sni.end());
  // supported_versions: TLS 1.3, 1.2
  ext.insert(ext.end(), {0x00, 0x2B, 0x00, 0x05, 0x04, 0x03, 0x04, 0x03, 0x03});
  put_u16be(body, static_cast<std::uint16_t>(ext.size()));
  append(body, ext);

  Bytes hs{0x01, static_cast<std::uint8_t>(body.size() >> 16), static_cast<std::uint8_t>(body.size() >> 8),
           static_cast<std::uint8_t>(body.size())};
  append(hs, body);
  Bytes rec{0x16, 0x03, 0x01};
  put_u16be(rec, static_cast<std::uint16_t>(hs.size()));
  append(rec, hs);
  return rec;
}

std::optional<std::string> parse_tls_sni(ByteView p) {
  if (p.size() < 5 + 4 || p[0] != 0x16 || p[1] != 0x03) return std::nullopt;
  std::size_t rec_end = std::min<std::size_t>(p.size(), 5 + get_u16be(p.data() + 3));
  if (p[5] != 0x01) return std::nullopt;
  std::size_t pos = 5 + 4 + 2 + 32;
  auto need = [&](std::size_t n) { return pos + n <= rec_end; };
  if (!need(1)) return std::nullopt;
  pos += 1 + p[pos];
  if (!need(2)) return std::nullopt;
  pos += 2 + get_u16be(p.data() + pos);
  if (!need(1)) return std::nullopt;
  pos += 1 + p[pos];
  if (!need(2)) return std::nullopt;
  std::size_t ext_end = std::min(rec_end, pos + 2 + get_u16be(p.data() + pos));
  pos += 2;
  while (pos + 4 <= ext_end) {
    std::uint16_t type = get_u16be(p.data() + pos);
    std::uint16_t len = get_u16be(p.data() + pos + 2);
    pos += 4;
    if (pos + len > ext_end) return std::nullopt;
    if (type == 0x0000 && len >= 5 && p[pos + 2] == 0x00) {
      std::uint16_t n = get_u16be(p.data() + pos + 3);
      if (5u + n > len) return std::nullopt;
      return std::string(reinterpret_cast<const char*>(p.data() + pos + 5), n);
    }
    pos += len;
  }
  return std::nullopt;
}

void send_dns_volume(net::VirtualInterface::Flow& flow, std::uint64_t bytes, std::mt19937_64& rng) {
  if (bytes != 0 && bytes < kDnsMinQuery) throw Error(Errc::LengthError, "DNS volume below one query");
  const auto& names = bundled_domain_names();
  static const char hex[] = "0123456789abcdef";
  std::uint64_t remaining = bytes;
  while (remaining > 0) {
    std::uint64_t size = std::min<std::uint64_t>(remaining, kDnsMaxQuery);
    if (remaining - size > 0 && remaining - size < kDnsMinQuery) size = remaining - kDnsMinQuery;
    // A fresh random label per query defeats resolver caching.
    std::string name(8, '0');
    for (auto& c : name) c = hex[rng() & 15];
    name += "." + names[rng() % names.size()];
    flow.send(build_dns_query(name, static_cast<std::uint16_t>(rng()), static_cast<std::size_t>(size)));
    remaining -= size;
  }
}

void send_http_volume(net::VirtualInterface::Flow& flow, std::string_view host, std::uint64_t bytes) {
  // Headers first so the gateway sees them in the flow's first packet.
  const std::size_t base = http_head(host, 0).size() - 1;
  std::optional<std::uint64_t> body;
  for (std::size_t d = 1; d <= 20 && bytes >= base + d; ++d) {
    if (digits(bytes - base - d) == d) {
      body = bytes - base - d;
      break;
    }
  }
  if (!body) throw Error(Errc::LengthError, "HTTP volume " + std::to_string(bytes) + " too small");
  std::string head = http_head(host, *body);
  flow.send(ByteView(reinterpret_cast<const std::uint8_t*>(head.data()), head.size()));
  send_zeros(flow, *body);
}

void send_tls_volume(net::VirtualInterface::Flow& flow, std::string_view sni, std::uint64_t bytes,
                     std::mt19937_64& rng) {
  Bytes hello = build_client_hello(sni, rng);
  constexpr std::uint64_t kMinRecord = 6;
  constexpr std::uint64_t kMaxRecord = 5 + 16384;
  if (bytes < hello.size() || (bytes > hello.size() && bytes - hello.size() < kMinRecord)) {
    throw Error(Errc::LengthError, "TLS volume " + std::to_string(bytes) + " too small");
  }
  flow.send(hello);
  std::uint64_t remaining = bytes - hello.size();
  Bytes rec;
  while (remaining > 0) {
    std::uint64_t size = std::min(remaining, kMaxRecord);
    if (remaining - size > 0 && remaining - size < kMinRecord) size = remaining - kMinRecord;
    rec.assign(static_cast<std::size_t>(size), 0);
    rec[0] = 0x17;
    rec[1] = 0x03;
    rec[2] = 0x03;
    rec[3] = static_cast<std::uint8_t>((size - 5) >> 8);
    rec[4] = static_cast<std::uint8_t>(size - 5);
    flow.send(rec);
    remaining -= size;
  }
}

}  // namespace atlas::metering
