#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cmcss {

enum class Modality : std::size_t {
    radiomics = 0,
    structural_connectome = 1,
    functional_connectome = 2,
    image_volume = 3,
    clinical = 4,
};

inline constexpr std::size_t kModalityCount = 5;

// Fixed order used for concatenation, checkpoints and exports: r, sc, fc, t, c.
inline constexpr std::array<Modality, kModalityCount> kAllModalities = {
    Modality::radiomics, Modality::structural_connectome, Modality::functional_connectome,
    Modality::image_volume, Modality::clinical};

std::string_view modality_name(Modality m);
Modality modality_from_name(std::string_view name);

constexpr std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

constexpr bool is_attention_modality(Modality m) {
    return m == Modality::radiomics || m == Modality::structural_connectome ||
           m == Modality::functional_connectome;
}

// Subset of modalities taking part in encoding, losses and fusion.
class ModalitySet {
public:
    ModalitySet() = default;
    static ModalitySet all();
    static ModalitySet only(Modality m);
    static ModalitySet all_but(Modality m);

    bool contains(Modality m) const { return bits_.test(index_of(m)); }
    void insert(Modality m) { bits_.set(index_of(m)); }
    void erase(Modality m) { bits_.reset(index_of(m)); }
    std::size_t count() const { return bits_.count(); }
    // Present modalities in canonical order.
    std::vector<Modality> members() const;
    std::vector<std::string> names() const;

    bool operator==(const ModalitySet&) const = default;

private:
    std::bitset<kModalityCount> bits_;
};

}  // namespace cmcss
