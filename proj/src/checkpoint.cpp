#include "cmcss/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cmcss/error.hpp"

namespace cmcss {

using nlohmann::json;

namespace {

json shape_json(const ModelShape& s) {
    return {{"d", s.dims.d},
            {"z", s.dims.z},
            {"n_slices", s.dims.n_slices},
            {"h", s.dims.h},
            {"w", s.dims.w},
            {"c_dim", s.dims.c_dim},
            {"reduce_width", s.reduce_width},
            {"hidden1", s.hidden1},
            {"hidden2", s.hidden2},
            {"feature_width", s.feature_width},
            {"embed_dim", s.embed_dim},
            {"conv_channels", s.conv_channels},
            {"modalities", s.active.names()}};
}

ModelShape shape_from_json(const json& j) {
    ModelShape s;
    s.dims.d = j.at("d");
    s.dims.z = j.at("z");
    s.dims.n_slices = j.at("n_slices");
    s.dims.h = j.at("h");
    s.dims.w = j.at("w");
    s.dims.c_dim = j.at("c_dim");
    s.reduce_width = j.at("reduce_width");
    s.hidden1 = j.at("hidden1");
    s.hidden2 = j.at("hidden2");
    s.feature_width = j.at("feature_width");
    s.embed_dim = j.at("embed_dim");
    s.conv_channels = j.at("conv_channels").get<std::array<std::size_t, 3>>();
    s.active = ModalitySet();
    for (const auto& name : j.at("modalities")) s.active.insert(modality_from_name(name.get<std::string>()));
    return s;
}

}  // namespace

std::string checkpoint_to_string(const EncoderParams& params) {
    json j;
    j["version"] = kCheckpointVersion;
    j["shape"] = shape_json(params.shape);
    json tensors = json::object();
    params.for_each([&](const std::string& path, const Matrix& m) {
        tensors[path] = {{"shape", {m.rows(), m.cols()}},
                         {"values", std::vector<double>(m.values().begin(), m.values().end())}};
    });
    j["params"] = std::move(tensors);
    return j.dump();
}

EncoderParams checkpoint_from_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed checkpoint: ") + e.what());
    }
    try {
        if (j.at("version") != kCheckpointVersion)
            throw LoadError("unsupported checkpoint version " + j.at("version").dump());
        // Build a correctly shaped container, then overwrite every tensor.
        EncoderParams params = init_params(shape_from_json(j.at("shape")), 0);
        const auto& tensors = j.at("params");
        params.for_each([&](const std::string& path, Matrix& m) {
            if (!tensors.contains(path)) throw LoadError("checkpoint lacks parameter " + path);
            const auto& t = tensors.at(path);
            const auto shape = t.at("shape").get<std::array<std::size_t, 2>>();
            if (shape[0] != m.rows() || shape[1] != m.cols())
                throw LoadError("parameter " + path + " has shape " + std::to_string(shape[0]) + "x" +
                                std::to_string(shape[1]) + ", expected " + m.shape_string());
            m = Matrix(shape[0], shape[1], t.at("values").get<std::vector<double>>());
        });
        return params;
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << checkpoint_to_string(params) << '\n';
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_string(ss.str());
}

}  // namespace cmcss
