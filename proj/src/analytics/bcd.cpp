#include "atlas/analytics/bcd.hpp"

#include "atlas/util/error.hpp"

namespace atlas::analytics {

std::string decode_bcd_swapped(ByteView bytes, bool filler_f_allowed) {
  if (bytes.empty()) throw Error(Errc::PreconditionFailed, "empty BCD input");
  std::string out;
  out.reserve(bytes.size() * 2);
  const std::size_t nibbles = bytes.size() * 2;
  for (std::size_t i = 0; i < nibbles; ++i) {
    std::uint8_t b = bytes[i / 2];
    std::uint8_t nib = (i % 2 == 0) ? (b & 0x0F) : (b >> 4);
    if (nib <= 9) {
      out.push_back(static_cast<char>('0' + nib));
      continue;
    }
    // Filler may only occupy the tail.
    bool tail_is_filler = filler_f_allowed && nib == 0xF;
    for (std::size_t j = i + 1; tail_is_filler && j < nibbles; ++j) {
      std::uint8_t bj = bytes[j / 2];
      std::uint8_t nj = (j % 2 == 0) ? (bj & 0x0F) : (bj >> 4);
      tail_is_filler = nj == 0xF;
    }
    if (!tail_is_filler) {
      throw Error(Errc::NonDecimalNibble, "nibble 0x" + std::string(1, "0123456789abcdef"[nib]) +
                                              " at position " + std::to_string(i));
    }
    break;
  }
  return out;
}

bool is_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

Bytes encode_bcd_swapped(std::string_view digits) {
  if (!digits.empty() && !is_digits(digits)) {
    throw Error(Errc::ParseError, "not a digit string: " + std::string(digits));
  }
  Bytes out((digits.size() + 1) / 2, 0xFF);
  for (std::size_t i = 0; i < digits.size(); ++i) {
    auto d = static_cast<std::uint8_t>(digits[i] - '0');
    std::uint8_t& b = out[i / 2];
    b = (i % 2 == 0) ? static_cast<std::uint8_t>((b & 0xF0) | d)
                     : static_cast<std::uint8_t>((b & 0x0F) | (d << 4));
  }
  return out;
}

bool luhn_valid(std::string_view digits) {
  if (!is_digits(digits) || digits.size() < 2) return false;
  int sum = 0;
  bool dbl = false;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    int d = *it - '0';
    if (dbl) {
      d *= 2;
      if (d > 9) d -= 9;
    }
    sum += d;
    dbl = !dbl;
  }
  return sum % 10 == 0;
}

char luhn_check_digit(std::string_view payload) {
  std::string candidate(payload);
  candidate.push_back('0');
  for (char c = '0'; c <= '9'; ++c) {
    candidate.back() = c;
    if (luhn_valid(candidate)) return c;
  }
  throw Error(Errc::ParseError, "not a digit string: " + std::string(payload));
}

Bytes encode_ef_imsi(std::string_view imsi) {
  if (!is_digits(imsi) || imsi.size() > 15) {
    throw Error(Errc::InvalidProfile, "IMSI must be 1..15 digits");
  }
  const bool odd = imsi.size() % 2 == 1;
  // Identity type 001 (IMSI) with the odd/even indicator in bit 4.
  const std::uint8_t type_nibble = odd ? 0x9 : 0x1;
  Bytes body;
  body.push_back(static_cast<std::uint8_t>(type_nibble | ((imsi[0] - '0') << 4)));
  Bytes rest = encode_bcd_swapped(imsi.substr(1));
  append(body, rest);
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(body.size()));
  append(out, body);
  out.resize(9, 0xFF);
  return out;
}

std::string decode_ef_imsi(ByteView content) {
  if (content.size() < 2 || content[0] == 0 || content[0] + 1u > content.size()) {
    throw Error(Errc::ParseError, "EF_IMSI too short");
  }
  ByteView body = content.subspan(1, content[0]);
  std::uint8_t type_nibble = body[0] & 0x0F;
  if ((type_nibble & 0x7) != 0x1) throw Error(Errc::ParseError, "EF_IMSI identity type is not IMSI");
  std::uint8_t first = body[0] >> 4;
  if (first > 9) throw Error(Errc::NonDecimalNibble, "first IMSI digit");
  std::string digits(1, static_cast<char>('0' + first));
  if (body.size() > 1) digits += decode_bcd_swapped(body.subspan(1), true);
  bool odd = (type_nibble & 0x8) != 0;
  if ((digits.size() % 2 == 1) != odd) throw Error(Errc::ParseError, "EF_IMSI parity mismatch");
  return digits;
}

Bytes encode_ef_iccid(std::string_view iccid) {
  if (!is_digits(iccid) || iccid.size() < 19 || iccid.size() > 20) {
    throw Error(Errc::InvalidProfile, "ICCID must be 19..20 digits");
  }
  Bytes out = encode_bcd_swapped(iccid);
  out.resize(10, 0xFF);
  return out;
}

}  // namespace atlas::analytics
