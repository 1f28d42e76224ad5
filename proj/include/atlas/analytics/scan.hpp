#pragma once

#include <set>
#include <string>
#include <vector>

#include "atlas/util/bytes.hpp"

namespace atlas::analytics {

enum class IdentifierKind { Imsi, Iccid, ImeiSv };
enum class Confidence { Strong, Weak };

struct IdentifierHit {
  IdentifierKind kind;
  std::string digits;
  std::size_t byte_offset = 0;
  Confidence confidence = Confidence::Weak;

  friend bool operator==(const IdentifierHit&, const IdentifierHit&) = default;
};

const char* to_string(IdentifierKind kind);
const char* to_string(Confidence c);

// ITU E.212 mobile country codes. Used to raise IMSI confidence only.
const std::set<std::string>& default_mcc_list();

// Sliding-window scan for encoded identifiers in an opaque blob:
//  - ICCID: 10 swapped-BCD bytes, 19-20 digits, prefix "89", Luhn-valid.
//  - IMSI: length byte 0x08, identity-type/parity nibble, swapped BCD;
//    Strong when the first three digits are a listed MCC.
//  - IMEISV: 8 plain swapped-BCD bytes, or the 9-byte mobile identity form
//    (type nibble 0x3, F-terminated); always Weak.
// Hits may overlap; output is sorted by offset, then kind.
std::vector<IdentifierHit> scan_identifiers(ByteView blob, const std::set<std::string>& mcc_list);

// Batch scan, parallel over blobs.
std::vector<std::vector<IdentifierHit>> scan_batch(const std::vector<Bytes>& blobs,
                                                   const std::set<std::string>& mcc_list);
// Serial reference for scan_batch.
std::vector<std::vector<IdentifierHit>> scan_batch_serial(const std::vector<Bytes>& blobs,
                                                          const std::set<std::string>& mcc_list);

}  // namespace atlas::analytics
