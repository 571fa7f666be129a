#include "cmcss/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cmcss/error.hpp"

namespace cmcss {

namespace fs = std::filesystem;
using nlohmann::json;

const Matrix& SubjectRecord::payload(Modality m) const {
    switch (m) {
        case Modality::radiomics: return radiomics;
        case Modality::structural_connectome: return structural_connectome;
        case Modality::functional_connectome: return functional_connectome;
        case Modality::image_volume: return image_volume;
        case Modality::clinical: return clinical;
    }
    throw ContractError("invalid modality");
}

Matrix& SubjectRecord::payload(Modality m) {
    return const_cast<Matrix&>(static_cast<const SubjectRecord&>(*this).payload(m));
}

std::vector<int> Cohort::labels() const {
    std::vector<int> out;
    out.reserve(subjects.size());
    for (const auto& s : subjects) out.push_back(s.label);
    return out;
}

std::size_t Cohort::count_label(int label) const {
    return static_cast<std::size_t>(
        std::count_if(subjects.begin(), subjects.end(), [&](const SubjectRecord& s) { return s.label == label; }));
}

Cohort Cohort::subset(const std::vector<std::size_t>& indices) const {
    Cohort out;
    out.dims = dims;
    out.subjects.reserve(indices.size());
    for (std::size_t i : indices) out.subjects.push_back(subjects.at(i));
    return out;
}

std::pair<std::size_t, std::size_t> payload_shape(Modality m, const CohortDims& dims) {
    switch (m) {
        case Modality::radiomics: return {dims.d, dims.z};
        case Modality::structural_connectome:
        case Modality::functional_connectome: return {dims.d, dims.d};
        case Modality::image_volume: return {dims.n_slices * dims.h, dims.w};
        case Modality::clinical: return {1, dims.c_dim};
    }
    throw ContractError("invalid modality");
}

void validate(const CohortConfig& c) {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    if (c.dims.d < 2) fail("d must be >= 2");
    if (c.dims.z < 1) fail("z must be >= 1");
    if (c.dims.n_slices < 1 || c.dims.h < 1 || c.dims.w < 1) fail("image dims n_slices/h/w must be >= 1");
    if (c.dims.c_dim < 1) fail("c_dim must be >= 1");
    if (c.n_subjects < 4) fail("n_subjects must be >= 4");
    if (!(c.class_balance > 0.0 && c.class_balance < 1.0)) fail("class_balance must lie in (0, 1)");
    if (c.latent_dim < 1) fail("latent_dim must be >= 1");
    if (!(c.snr >= 0.0) || !std::isfinite(c.snr)) fail("snr must be finite and >= 0");
    if (!(c.cross_modality_coupling >= 0.0 && c.cross_modality_coupling <= 1.0))
        fail("cross_modality_coupling must lie in [0, 1]");
    const auto positives = static_cast<std::size_t>(std::llround(c.class_balance * static_cast<double>(c.n_subjects)));
    if (positives < 2 || c.n_subjects - positives < 2)
        fail("class_balance leaves fewer than 2 subjects in a class");
}

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix random_gaussian(std::size_t rows, std::size_t cols, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = normal(rng);
    return m;
}

Matrix symmetric_part(const Matrix& m) {
    Matrix s(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
    return s;
}

}  // namespace

Cohort generate_synthetic_cohort(const CohortConfig& config) {
    validate(config);
    std::mt19937_64 rng(config.seed);
    const auto& dims = config.dims;
    const std::size_t latent = config.latent_dim;

    // Fixed per-cohort structure: class direction and one mixing map per modality.
    std::vector<double> direction(latent);
    {
        std::normal_distribution<double> normal;
        for (double& v : direction) v = normal(rng);
        const double n = norm2(direction);
        for (double& v : direction) v /= n;
    }
    std::array<Matrix, kModalityCount> mixing;
    for (Modality m : kAllModalities) {
        const auto [r, c] = payload_shape(m, dims);
        mixing[index_of(m)] = random_gaussian(r * c, latent, 1.0 / std::sqrt(static_cast<double>(latent)), rng);
    }

    const std::size_t n = config.n_subjects;
    const auto positives = static_cast<std::size_t>(std::llround(config.class_balance * static_cast<double>(n)));
    std::vector<int> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<long>(positives), 1);
    std::shuffle(labels.begin(), labels.end(), rng);

    Cohort cohort;
    cohort.dims = dims;
    cohort.subjects.reserve(n);
    std::normal_distribution<double> normal;
    const double coupling = config.cross_modality_coupling;
    for (std::size_t s = 0; s < n; ++s) {
        SubjectRecord rec;
        rec.subject_id = "s" + std::to_string(s);
        rec.label = labels[s];
        const double offset = (labels[s] - 0.5) * config.snr;
        std::vector<double> h(latent);
        for (std::size_t k = 0; k < latent; ++k) h[k] = offset * direction[k] + normal(rng);

        for (Modality m : kAllModalities) {
            std::vector<double> signal(latent);
            for (std::size_t k = 0; k < latent; ++k) signal[k] = coupling * h[k] + (1.0 - coupling) * normal(rng);
            const Matrix& mix = mixing[index_of(m)];
            const auto [rows, cols] = payload_shape(m, dims);
            Matrix raw(rows, cols);
            for (std::size_t e = 0; e < raw.size(); ++e) raw.data()[e] = dot(mix.row(e), signal);

            switch (m) {
                case Modality::radiomics:
                case Modality::clinical: break;
                case Modality::structural_connectome: {
                    raw = symmetric_part(raw);
                    for (double& v : raw.values()) v = softplus(v);
                    for (std::size_t i = 0; i < rows; ++i) raw(i, i) = 0.0;
                    break;
                }
                case Modality::functional_connectome: {
                    raw = symmetric_part(raw);
                    for (double& v : raw.values()) v = std::tanh(v);
                    for (std::size_t i = 0; i < rows; ++i) raw(i, i) = 1.0;
                    break;
                }
                case Modality::image_volume:
                    for (double& v : raw.values()) v = sigmoid(v);
                    break;
            }
            rec.payload(m) = std::move(raw);
        }
        cohort.subjects.push_back(std::move(rec));
    }
    return cohort;
}

void validate_record(const SubjectRecord& rec, const CohortDims& dims) {
    auto fail = [&](Modality m, const std::string& what) {
        throw LoadError(std::string(modality_name(m)) + " of subject " + rec.subject_id + ": " + what);
    };
    if (rec.label != 0 && rec.label != 1)
        throw LoadError("label of subject " + rec.subject_id + " must be 0 or 1");
    constexpr double tol = 1e-9;
    for (Modality m : kAllModalities) {
        const Matrix& p = rec.payload(m);
        const auto [r, c] = payload_shape(m, dims);
        if (p.rows() != r || p.cols() != c)
            fail(m, "shape " + p.shape_string() + " does not match expected " + std::to_string(r) + "x" + std::to_string(c));
        if (!all_finite(p.values())) fail(m, "non-finite value");
    }
    const Matrix& sc = rec.structural_connectome;
    const Matrix& fc = rec.functional_connectome;
    for (std::size_t i = 0; i < dims.d; ++i) {
        if (fc(i, i) != 1.0) fail(Modality::functional_connectome, "diagonal entry " + std::to_string(i) + " is not 1");
        for (std::size_t j = 0; j < dims.d; ++j) {
            if (sc(i, j) < 0.0) fail(Modality::structural_connectome, "negative entry");
            if (std::abs(sc(i, j) - sc(j, i)) > tol) fail(Modality::structural_connectome, "not symmetric");
            if (std::abs(fc(i, j) - fc(j, i)) > tol) fail(Modality::functional_connectome, "not symmetric");
            if (fc(i, j) < -1.0 || fc(i, j) > 1.0) fail(Modality::functional_connectome, "entry outside [-1, 1]");
        }
    }
    for (double v : rec.image_volume.values())
        if (v < 0.0 || v > 1.0) fail(Modality::image_volume, "value outside [0, 1]");
}

void validate_cohort(const Cohort& cohort) {
    std::set<std::string> ids;
    for (const auto& rec : cohort.subjects) {
        if (!ids.insert(rec.subject_id).second) throw LoadError("duplicate subject id " + rec.subject_id);
        validate_record(rec, cohort.dims);
    }
}

namespace {

void write_csv(const fs::path& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    char buf[32];
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.9g", m(r, c));
            if (c) out << ',';
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Matrix read_csv(const fs::path& path, const std::string& context) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string() + " (" + context + ")");
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t count = 0;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) throw LoadError("unparseable value '" + cell + "' in " + path.string() + " (" + context + ")");
            if (!std::isfinite(v)) throw LoadError("non-finite value in " + path.string() + " (" + context + ")");
            values.push_back(v);
            ++count;
        }
        if (rows == 0) cols = count;
        else if (count != cols) throw LoadError("ragged row in " + path.string() + " (" + context + ")");
        ++rows;
    }
    return Matrix(rows, cols, std::move(values));
}

}  // namespace

fs::path save_cohort(const Cohort& cohort, const fs::path& directory) {
    fs::create_directories(directory);
    json manifest;
    const auto& d = cohort.dims;
    manifest["d"] = d.d;
    manifest["z"] = d.z;
    manifest["n_slices"] = d.n_slices;
    manifest["h"] = d.h;
    manifest["w"] = d.w;
    manifest["c_dim"] = d.c_dim;
    manifest["subjects"] = json::array();
    for (const auto& rec : cohort.subjects) {
        json files;
        for (Modality m : kAllModalities) {
            const std::string name = rec.subject_id + "_" + std::string(modality_name(m)) + ".csv";
            write_csv(directory / name, rec.payload(m));
            files[std::string(modality_name(m))] = name;
        }
        manifest["subjects"].push_back({{"id", rec.subject_id}, {"label", rec.label}, {"files", files}});
    }
    const fs::path path = directory / "manifest.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << manifest.dump(2) << '\n';
    return path;
}

Cohort load_cohort(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw LoadError("cannot open manifest " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw LoadError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    const fs::path dir = manifest_path.parent_path();
    Cohort cohort;
    try {
        cohort.dims.d = manifest.at("d").get<std::size_t>();
        cohort.dims.z = manifest.at("z").get<std::size_t>();
        cohort.dims.n_slices = manifest.at("n_slices").get<std::size_t>();
        cohort.dims.h = manifest.at("h").get<std::size_t>();
        cohort.dims.w = manifest.at("w").get<std::size_t>();
        cohort.dims.c_dim = manifest.at("c_dim").get<std::size_t>();
        for (const auto& entry : manifest.at("subjects")) {
            SubjectRecord rec;
            rec.subject_id = entry.at("id").get<std::string>();
            rec.label = entry.at("label").get<int>();
            const auto& files = entry.at("files");
            for (Modality m : kAllModalities) {
                const std::string key(modality_name(m));
                if (!files.contains(key))
                    throw LoadError("missing modality " + key + " for subject " + rec.subject_id);
                rec.payload(m) = read_csv(dir / files.at(key).get<std::string>(),
                                          "modality " + key + " of subject " + rec.subject_id);
            }
            cohort.subjects.push_back(std::move(rec));
        }
    } catch (const json::exception& e) {
        throw LoadError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    validate_cohort(cohort);
    return cohort;
}

}  // namespace cmcss
