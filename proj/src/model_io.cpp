// advpe - adversarial PE manipulation toolkit

#include "advpe/model_io.hpp"

#include <bit>
#include <cstring>
#include <json.hpp>

namespace advpe {

namespace {

static_assert(std::endian::native == std::endian::little, "model container assumes a little-endian host");

constexpr char magic[8] = {'A', 'D', 'V', 'P', 'E', 'M', 'D', 'L'};

}  // namespace

Bytes encode_model(const Classifier& model) {
    nlohmann::ordered_json header;
    header["kind"] = std::string(to_string(model.kind()));
    header["window"] = model.window();
    auto& hp = header["hyperparameters"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : model.hyperparameters()) {
        hp[k] = v;
    }
    auto& arrays = header["arrays"] = nlohmann::ordered_json::array();
    for (const auto& b : model.layout().blocks()) {
        arrays.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    }
    const auto theta = model.threshold();
    arrays.push_back({{"name", "threshold"}, {"rows", theta ? 1 : 0}, {"cols", 1}});

    const std::string text = header.dump();
    Bytes out(magic, magic + 8);
    out.resize(16);
    write_u32(out, 8, model_format_version);
    write_u32(out, 12, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());

    const auto& params = model.parameters();
    const std::size_t data_at = out.size();
    out.resize(data_at + sizeof(double) * (static_cast<std::size_t>(params.size()) + (theta ? 1 : 0)));
    std::memcpy(out.data() + data_at, params.data(), sizeof(double) * static_cast<std::size_t>(params.size()));
    if (theta) {
        const double t = *theta;
        std::memcpy(out.data() + out.size() - sizeof(double), &t, sizeof(double));
    }
    return out;
}

Classifier decode_model(ByteView data) {
    if (data.size() < 16 || std::memcmp(data.data(), magic, 8) != 0) {
        throw Error(ErrorCode::ModelFormat, "not a model container");
    }
    if (read_u32(data, 8) != model_format_version) {
        throw Error(ErrorCode::ModelFormat, "unsupported container version " + std::to_string(read_u32(data, 8)));
    }
    const std::size_t header_len = read_u32(data, 12);
    if (16 + header_len > data.size()) {
        throw Error(ErrorCode::ModelFormat, "truncated header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(data.begin() + 16, data.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ModelFormat, std::string("header: ") + e.what());
    }

    try {
        const auto kind = model_kind_from_string(header.at("kind").get<std::string>());
        std::vector<std::pair<std::string, Index>> hp;
        for (const auto& [k, v] : header.at("hyperparameters").items()) {
            hp.emplace_back(k, v.get<Index>());
        }
        Classifier model = Classifier::from_hyperparameters(kind, hp);
        if (header.at("window").get<Index>() != model.window()) {
            throw Error(ErrorCode::ModelFormat, "window does not match hyperparameters");
        }

        const auto& blocks = model.layout().blocks();
        const auto& arrays = header.at("arrays");
        if (arrays.size() != blocks.size() + 1) {
            throw Error(ErrorCode::ModelFormat, "array count mismatch");
        }
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            if (arrays[i].at("name") != blocks[i].name || arrays[i].at("rows").get<Index>() != blocks[i].rows ||
                arrays[i].at("cols").get<Index>() != blocks[i].cols) {
                throw Error(ErrorCode::ModelFormat, "array '" + blocks[i].name + "' has unexpected shape");
            }
        }
        const auto theta_rows = arrays.back().at("rows").get<std::size_t>();
        auto& params = model.parameters();
        const std::size_t expected =
            16 + header_len + sizeof(double) * (static_cast<std::size_t>(params.size()) + theta_rows);
        if (data.size() != expected) {
            throw Error(ErrorCode::ModelFormat, "data section has " + std::to_string(data.size()) +
                                                    " bytes, expected " + std::to_string(expected));
        }
        const auto* payload = data.data() + 16 + header_len;
        std::memcpy(params.data(), payload, sizeof(double) * static_cast<std::size_t>(params.size()));
        if (theta_rows == 1) {
            double t = 0;
            std::memcpy(&t, payload + sizeof(double) * static_cast<std::size_t>(params.size()), sizeof(double));
            model.set_threshold(t);
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ModelFormat, std::string("header: ") + e.what());
    }
}

void save_model(const Classifier& model, const std::string& path) { write_file(path, encode_model(model)); }

Classifier load_model(const std::string& path) { return decode_model(read_file(path)); }

}  // namespace advpe
