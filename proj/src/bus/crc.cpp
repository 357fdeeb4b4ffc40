#include "photon/bus/crc.hpp"

#include <array>

namespace photon::bus {
namespace {

constexpr std::array<std::uint16_t, 256> make_table() {
    std::array<std::uint16_t, 256> table{};
    for (int i = 0; i < 256; ++i) {
        auto c = static_cast<std::uint16_t>(i << 8);
        for (int bit = 0; bit < 8; ++bit) c = (c & 0x8000) ? static_cast<std::uint16_t>((c << 1) ^ 0x1021) : static_cast<std::uint16_t>(c << 1);
        table[static_cast<std::size_t>(i)] = c;
    }
    return table;
}

constexpr auto kTable = make_table();

}  // namespace

std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> data, std::uint16_t crc) {
    for (std::uint8_t b : data) {
        crc = static_cast<std::uint16_t>((crc << 8) ^ kTable[static_cast<std::uint8_t>((crc >> 8) ^ b)]);
    }
    return crc;
}

}  // namespace photon::bus
