#include "cmcss/modality.hpp"

#include "cmcss/error.hpp"

namespace cmcss {

std::string_view modality_name(Modality m) {
    switch (m) {
        case Modality::radiomics: return "radiomics";
        case Modality::structural_connectome: return "structural_connectome";
        case Modality::functional_connectome: return "functional_connectome";
        case Modality::image_volume: return "image_volume";
        case Modality::clinical: return "clinical";
    }
    return "unknown";
}

Modality modality_from_name(std::string_view name) {
    for (Modality m : kAllModalities)
        if (modality_name(m) == name) return m;
    throw ConfigError("unknown modality '" + std::string(name) + "'");
}

ModalitySet ModalitySet::all() {
    ModalitySet s;
    s.bits_.set();
    return s;
}

ModalitySet ModalitySet::only(Modality m) {
    ModalitySet s;
    s.insert(m);
    return s;
}

ModalitySet ModalitySet::all_but(Modality m) {
    ModalitySet s = all();
    s.erase(m);
    return s;
}

std::vector<Modality> ModalitySet::members() const {
    std::vector<Modality> out;
    for (Modality m : kAllModalities)
        if (contains(m)) out.push_back(m);
    return out;
}

std::vector<std::string> ModalitySet::names() const {
    std::vector<std::string> out;
    for (Modality m : members()) out.emplace_back(modality_name(m));
    return out;
}

}  // namespace cmcss
