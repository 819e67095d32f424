#include "bsauth/codec.hpp"

#include <cctype>

#include "bsauth/errors.hpp"

namespace bsauth::codec {

namespace {

// First chip of a bit under the given convention.
std::uint8_t leading_chip(std::uint8_t bit, Convention convention) {
    const bool one_rising = convention == Convention::OneIsRising;
    return (bit != 0) == one_rising ? 0 : 1;
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

double PvkFrame::duration_s() const {
    return frame_duration(key.size(), preamble.size(), chip_rate_hz);
}

void PvkFrame::validate() const {
    if (key.empty()) {
        throw DomainError("key: must contain at least one byte");
    }
    if (!(chip_rate_hz > 0.0)) {
        throw DomainError("chip_rate_hz: must be > 0");
    }
}

Bits bytes_to_bits(std::span<const std::uint8_t> bytes) {
    Bits bits;
    bits.reserve(bytes.size() * 8);
    for (std::uint8_t b : bytes) {
        for (int i = 7; i >= 0; --i) {
            bits.push_back(static_cast<std::uint8_t>((b >> i) & 1u));
        }
    }
    return bits;
}

Bytes bits_to_bytes(std::span<const std::uint8_t> bits) {
    if (bits.size() % 8 != 0) {
        throw DomainError("bit count " + std::to_string(bits.size()) + " is not a whole number of bytes");
    }
    Bytes bytes(bits.size() / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] != 0) {
            bytes[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
        }
    }
    return bytes;
}

ChipStream encode_manchester(std::span<const std::uint8_t> bits, Convention convention) {
    ChipStream chips;
    chips.reserve(bits.size() * 2);
    for (std::uint8_t bit : bits) {
        const std::uint8_t first = leading_chip(bit, convention);
        chips.push_back(first);
        chips.push_back(static_cast<std::uint8_t>(1 - first));
    }
    return chips;
}

Bits decode_manchester(std::span<const std::uint8_t> chips, Convention convention) {
    if (chips.size() % 2 != 0) {
        throw OddChipCount(chips.size());
    }
    Bits bits;
    bits.reserve(chips.size() / 2);
    for (std::size_t i = 0; i < chips.size(); i += 2) {
        if (chips[i] == chips[i + 1]) {
            throw InvalidChipPair(i / 2);
        }
        bits.push_back(chips[i] == leading_chip(1, convention) ? 1 : 0);
    }
    return bits;
}

LenientDecode decode_manchester_lenient(std::span<const std::uint8_t> chips, Convention convention) {
    if (chips.size() % 2 != 0) {
        throw OddChipCount(chips.size());
    }
    LenientDecode out;
    out.bits.reserve(chips.size() / 2);
    std::uint8_t previous = 0;
    for (std::size_t i = 0; i < chips.size(); i += 2) {
        std::uint8_t bit = previous;
        if (chips[i] == chips[i + 1]) {
            if (out.invalid_pairs++ == 0) {
                out.first_invalid = i / 2;
            }
        } else {
            bit = chips[i] == leading_chip(1, convention) ? 1 : 0;
        }
        out.bits.push_back(bit);
        previous = bit;
    }
    return out;
}

ChipStream frame_chips(const PvkFrame& frame) {
    Bytes payload = frame.preamble;
    payload.insert(payload.end(), frame.key.begin(), frame.key.end());
    return encode_manchester(bytes_to_bits(payload), frame.convention);
}

double frame_duration(std::size_t key_len, std::size_t preamble_len, double chip_rate_hz) {
    if (!(chip_rate_hz > 0.0)) {
        throw DomainError("frame_duration: chip rate must be positive");
    }
    return 16.0 * static_cast<double>(key_len + preamble_len) / chip_rate_hz;
}

Bytes parse_hex(std::string_view hex) {
    if (hex.starts_with("0x") || hex.starts_with("0X")) {
        hex.remove_prefix(2);
    }
    if (hex.size() % 2 != 0) {
        throw DomainError("hex string has odd length");
    }
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        const int hi = hex_value(hex[i]);
        const int lo = hex_value(hex[i + 1]);
        if (hi < 0 || lo < 0) {
            throw DomainError("invalid hex digit near position " + std::to_string(i));
        }
        out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
    }
    return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0x0f]);
    }
    return out;
}

}  // namespace bsauth::codec
