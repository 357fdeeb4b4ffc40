#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace photon {

/// A key on the instrument: manual is 1-based, key is the 0-based index from
/// the lowest key of that manual.
struct KeyId {
    int manual = 1;
    int key = 0;

    auto operator<=>(const KeyId&) const = default;
};

struct Compass {
    int manuals = 2;
    int keys_per_manual = 61;

    int total_keys() const { return manuals * keys_per_manual; }
    bool contains(const KeyId& k) const {
        return k.manual >= 1 && k.manual <= manuals && k.key >= 0 && k.key < keys_per_manual;
    }
    /// Dense index used in CSV exports: (manual - 1) * keys_per_manual + key.
    int index_of(const KeyId& k) const { return (k.manual - 1) * keys_per_manual + k.key; }
    KeyId key_at(int index) const { return {index / keys_per_manual + 1, index % keys_per_manual}; }
};

inline std::string to_string(const KeyId& k) {
    return "m" + std::to_string(k.manual) + "k" + std::to_string(k.key);
}

}  // namespace photon
