#include "atlas/analytics/scan.hpp"

#include <algorithm>
#include <optional>

#include "atlas/analytics/bcd.hpp"

namespace atlas::analytics {

namespace {

// Swapped-BCD decode without exceptions; F filler allowed only at the tail.
std::optional<std::string> try_decode(ByteView bytes, bool filler_allowed) {
  std::string out;
  out.reserve(bytes.size() * 2);
  bool in_filler = false;
  for (std::size_t i = 0; i < bytes.size() * 2; ++i) {
    std::uint8_t b = bytes[i / 2];
    std::uint8_t nib = (i % 2 == 0) ? (b & 0x0F) : (b >> 4);
    if (in_filler) {
      if (nib != 0xF) return std::nullopt;
      continue;
    }
    if (nib <= 9) {
      out.push_back(static_cast<char>('0' + nib));
    } else if (nib == 0xF && filler_allowed) {
      in_filler = true;
    } else {
      return std::nullopt;
    }
  }
  return out;
}

void scan_iccid(ByteView blob, std::size_t off, std::vector<IdentifierHit>& hits) {
  if (off + 10 > blob.size()) return;
  auto digits = try_decode(blob.subspan(off, 10), true);
  if (!digits || digits->size() < 19) return;
  if (digits->compare(0, 2, "89") != 0 || !luhn_valid(*digits)) return;
  hits.push_back({IdentifierKind::Iccid, *digits, off, Confidence::Strong});
}

void scan_imsi(ByteView blob, std::size_t off, const std::set<std::string>& mcc_list,
               std::vector<IdentifierHit>& hits) {
  if (off + 9 > blob.size() || blob[off] != 0x08) return;
  std::uint8_t head = blob[off + 1];
  std::uint8_t type_nibble = head & 0x0F;
  if ((type_nibble & 0x7) != 0x1) return;
  std::uint8_t first = head >> 4;
  if (first > 9) return;
  auto rest = try_decode(blob.subspan(off + 2, 7), true);
  if (!rest) return;
  std::string digits = static_cast<char>('0' + first) + *rest;
  bool odd = (type_nibble & 0x8) != 0;
  if ((digits.size() % 2 == 1) != odd || digits.size() < 6 || digits.size() > 15) return;
  Confidence c = mcc_list.count(digits.substr(0, 3)) ? Confidence::Strong : Confidence::Weak;
  hits.push_back({IdentifierKind::Imsi, std::move(digits), off, c});
}

void scan_imeisv(ByteView blob, std::size_t off, std::vector<IdentifierHit>& hits) {
  // Plain 8-byte form.
  if (off + 8 <= blob.size()) {
    auto digits = try_decode(blob.subspan(off, 8), false);
    if (digits && digits->size() == 16) {
      hits.push_back({IdentifierKind::ImeiSv, *digits, off, Confidence::Weak});
    }
  }
  // Mobile identity form: type 011 with even indicator, digit 1 in the high
  // nibble, 14 digits, then digit 16 and an F filler.
  if (off + 9 <= blob.size() && (blob[off] & 0x0F) == 0x3 && (blob[off] >> 4) <= 9 &&
      (blob[off + 8] >> 4) == 0xF) {
    auto mid = try_decode(blob.subspan(off + 1, 8), true);
    if (mid && mid->size() == 15) {
      std::string digits = static_cast<char>('0' + (blob[off] >> 4)) + *mid;
      hits.push_back({IdentifierKind::ImeiSv, std::move(digits), off, Confidence::Weak});
    }
  }
}

}  // namespace

const char* to_string(IdentifierKind kind) {
  switch (kind) {
    case IdentifierKind::Imsi:
      return "Imsi";
    case IdentifierKind::Iccid:
      return "Iccid";
    case IdentifierKind::ImeiSv:
      return "ImeiSv";
  }
  return "?";
}

const char* to_string(Confidence c) { return c == Confidence::Strong ? "Strong" : "Weak"; }

std::vector<IdentifierHit> scan_identifiers(ByteView blob, const std::set<std::string>& mcc_list) {
  std::vector<IdentifierHit> hits;
  for (std::size_t off = 0; off < blob.size(); ++off) {
    scan_iccid(blob, off, hits);
    scan_imsi(blob, off, mcc_list, hits);
    scan_imeisv(blob, off, hits);
  }
  std::stable_sort(hits.begin(), hits.end(), [](const IdentifierHit& a, const IdentifierHit& b) {
    if (a.byte_offset != b.byte_offset) return a.byte_offset < b.byte_offset;
    return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  });
  return hits;
}

std::vector<std::vector<IdentifierHit>> scan_batch(const std::vector<Bytes>& blobs,
                                                   const std::set<std::string>& mcc_list) {
  std::vector<std::vector<IdentifierHit>> out(blobs.size());
  const auto n = static_cast<long>(blobs.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = scan_identifiers(blobs[static_cast<std::size_t>(i)], mcc_list);
  }
  return out;
}

std::vector<std::vector<IdentifierHit>> scan_batch_serial(const std::vector<Bytes>& blobs,
                                                          const std::set<std::string>& mcc_list) {
  std::vector<std::vector<IdentifierHit>> out;
  out.reserve(blobs.size());
  for (const auto& b : blobs) out.push_back(scan_identifiers(b, mcc_list));
  return out;
}

}  // namespace atlas::analytics
