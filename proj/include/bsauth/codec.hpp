#pragma once

// Manchester framing of a node's identification key.
//
// Default convention: bit 1 -> chips (0,1), bit 0 -> chips (1,0). Bits are
// taken most-significant first within each byte.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bsauth::codec {

using Bytes = std::vector<std::uint8_t>;
using Bits = std::vector<std::uint8_t>;
using ChipStream = std::vector<std::uint8_t>;

enum class Convention { OneIsRising, OneIsFalling };

inline constexpr std::uint8_t kDefaultPreambleByte = 0xAA;

struct PvkFrame {
    Bytes key;
    Bytes preamble;
    double chip_rate_hz = 40e3;
    Convention convention = Convention::OneIsRising;

    std::size_t total_chips() const noexcept { return 16 * (preamble.size() + key.size()); }
    double duration_s() const;
    void validate() const;
};

Bits bytes_to_bits(std::span<const std::uint8_t> bytes);
// Packs MSB-first; the bit count must be a multiple of 8.
Bytes bits_to_bytes(std::span<const std::uint8_t> bits);

ChipStream encode_manchester(std::span<const std::uint8_t> bits,
                             Convention convention = Convention::OneIsRising);

// Throws OddChipCount, or InvalidChipPair with the first offending bit index.
Bits decode_manchester(std::span<const std::uint8_t> chips,
                       Convention convention = Convention::OneIsRising);

// Tolerant decode used by the monitor: an invalid pair repeats the previous
// bit (0 for the first bit) and is counted instead of thrown.
struct LenientDecode {
    Bits bits;
    std::size_t invalid_pairs = 0;
    std::size_t first_invalid = 0;
};
LenientDecode decode_manchester_lenient(std::span<const std::uint8_t> chips,
                                        Convention convention = Convention::OneIsRising);

ChipStream frame_chips(const PvkFrame& frame);

double frame_duration(std::size_t key_len, std::size_t preamble_len, double chip_rate_hz);

// Hex helpers for keys on the command line and in config files.
Bytes parse_hex(std::string_view hex);
std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace bsauth::codec
