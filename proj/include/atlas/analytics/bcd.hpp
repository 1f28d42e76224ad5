#pragma once

#include <string>
#include <string_view>

#include "atlas/util/bytes.hpp"

// Telecom identifier codecs: nibble-swapped BCD (3GPP TS 31.102 / 24.008
// style), Luhn check digits, and the EF_IMSI / EF_ICCID file layouts.
namespace atlas::analytics {

// Per byte: low nibble then high nibble. A trailing 0xF filler nibble is
// stripped when `filler_f_allowed`; any other nibble > 9 throws
// Error(NonDecimalNibble).
std::string decode_bcd_swapped(ByteView bytes, bool filler_f_allowed = true);

// Inverse of decode_bcd_swapped; odd digit counts are padded with 0xF.
Bytes encode_bcd_swapped(std::string_view digits);

bool is_digits(std::string_view s);
bool luhn_valid(std::string_view digits);
// Check digit that makes `payload` + digit Luhn-valid.
char luhn_check_digit(std::string_view payload);

// EF_IMSI content: length byte, then the identity-type/parity nibble and
// the digits in swapped BCD, padded with 0xFF to 9 bytes.
Bytes encode_ef_imsi(std::string_view imsi);
std::string decode_ef_imsi(ByteView content);

// EF_ICCID content: 10 bytes of swapped BCD, F-padded for 19-digit ICCIDs.
Bytes encode_ef_iccid(std::string_view iccid);

}  // namespace atlas::analytics
