#include "bavit/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>
#include <zlib.h>

#include "bavit/image_io.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace bavit {

using nlohmann::json;

namespace {

template <typename Int>
void put_le(std::string& out, Int value) {
    for (std::size_t i = 0; i < sizeof(Int); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename Int>
Int get_le(const std::string& in, std::size_t offset) {
    Int v = 0;
    for (std::size_t i = 0; i < sizeof(Int); ++i) {
        v |= static_cast<Int>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    }
    return v;
}

std::uint32_t crc32_of(const char* data, std::size_t size) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

json config_to_json(const ModelConfig& c) {
    return {{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"embed_dim", c.embed_dim},
            {"depth", c.depth},           {"heads", c.heads},           {"mlp_ratio", c.mlp_ratio},
            {"classes", c.classes},       {"tokens", c.tokens()}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.classes = j.at("classes").get<int>();
    c.validate();
    if (j.contains("tokens") && j.at("tokens").get<int>() != c.tokens()) {
        throw CheckpointError("checkpoint: token count inconsistent with image/patch size");
    }
    return c;
}

struct NamedTensor {
    std::string name;
    const Matrix<float>* tensor;
};

std::vector<NamedTensor> payload_tensors(const Checkpoint& ck) {
    std::vector<NamedTensor> out;
    ck.params.visit([&](const std::string& name, const Matrix<float>& m) { out.push_back({name, &m}); });
    ck.optim.first_moment.visit(
        [&](const std::string& name, const Matrix<float>& m) { out.push_back({"adam.m." + name, &m}); });
    ck.optim.second_moment.visit(
        [&](const std::string& name, const Matrix<float>& m) { out.push_back({"adam.v." + name, &m}); });
    return out;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
    std::string payload;
    json manifest = json::array();
    for (const auto& [name, tensor] : payload_tensors(ck)) {
        manifest.push_back({{"name", name},
                            {"shape", {tensor->rows(), tensor->cols()}},
                            {"dtype", "f32"},
                            {"offset", payload.size()}});
        payload.append(reinterpret_cast<const char*>(tensor->data()),
                       static_cast<std::size_t>(tensor->size()) * sizeof(float));
    }
    const json header{
        {"config", config_to_json(ck.config)},
        {"tensors", manifest},
        {"optimizer",
         {{"type", "adam"},
          {"beta1", ck.optim.hyper.beta1},
          {"beta2", ck.optim.hyper.beta2},
          {"eps", ck.optim.hyper.eps},
          {"step", ck.optim.step},
          {"epoch", ck.optim.epoch}}},
        {"schedule", {{"base_lr", ck.schedule.base_lr}, {"step_size", ck.schedule.step_size}, {"gamma", ck.schedule.gamma}}},
        {"payload_bytes", payload.size()},
        {"payload_crc32", crc32_of(payload.data(), payload.size())}};
    const std::string header_text = header.dump();

    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, header_text.size());
    out += header_text;
    out += payload;
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    constexpr std::size_t prefix = 4 + 4 + 8;
    if (bytes.size() < prefix) {
        throw CheckpointError("checkpoint: truncated file (expected at least " + std::to_string(prefix) +
                              " bytes, got " + std::to_string(bytes.size()) + ")");
    }
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic", 0);
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version), 4);
    }
    const auto header_len = get_le<std::uint64_t>(bytes, 8);
    if (header_len > bytes.size() - prefix) {
        throw CheckpointError("checkpoint: truncated header (expected " + std::to_string(prefix + header_len) +
                              " bytes, got " + std::to_string(bytes.size()) + ")");
    }
    json header;
    try {
        header = json::parse(bytes.begin() + prefix, bytes.begin() + static_cast<std::ptrdiff_t>(prefix + header_len));
    } catch (const json::parse_error& e) {
        throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what(), prefix + e.byte);
    }

    try {
        const std::size_t payload_start = prefix + header_len;
        const auto payload_bytes = header.at("payload_bytes").get<std::size_t>();
        const std::size_t expected = payload_start + payload_bytes;
        if (bytes.size() != expected) {
            throw CheckpointError("checkpoint: " + std::string(bytes.size() < expected ? "truncated" : "oversized") +
                                  " payload (expected " + std::to_string(expected) + " bytes, got " +
                                  std::to_string(bytes.size()) + ")");
        }
        const char* payload = bytes.data() + payload_start;
        if (crc32_of(payload, payload_bytes) != header.at("payload_crc32").get<std::uint32_t>()) {
            throw CheckpointError("checkpoint: payload CRC32 mismatch");
        }

        Checkpoint ck;
        ck.config = config_from_json(header.at("config"));
        ck.params = ModelParams<float>::zeros(ck.config);
        ck.optim = OptimState::create(ck.config);
        const auto& opt = header.at("optimizer");
        ck.optim.hyper = {opt.at("beta1").get<double>(), opt.at("beta2").get<double>(), opt.at("eps").get<double>()};
        ck.optim.step = opt.at("step").get<std::int64_t>();
        ck.optim.epoch = opt.at("epoch").get<int>();
        const auto& sched = header.at("schedule");
        ck.schedule = {sched.at("base_lr").get<double>(), sched.at("step_size").get<int>(),
                       sched.at("gamma").get<double>()};

        const auto& manifest = header.at("tensors");
        const auto expected_tensors = payload_tensors(ck);
        if (manifest.size() != expected_tensors.size()) {
            throw CheckpointError("checkpoint: manifest lists " + std::to_string(manifest.size()) +
                                  " tensors, config implies " + std::to_string(expected_tensors.size()));
        }
        for (std::size_t i = 0; i < manifest.size(); ++i) {
            const auto& entry = manifest[i];
            const auto& [name, tensor] = expected_tensors[i];
            auto& dst = const_cast<Matrix<float>&>(*tensor);
            const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            if (entry.at("name").get<std::string>() != name || shape.size() != 2 || shape[0] != dst.rows() ||
                shape[1] != dst.cols() || entry.at("dtype").get<std::string>() != "f32") {
                throw CheckpointError("checkpoint: manifest entry " + std::to_string(i) + " does not match " + name);
            }
            const auto offset = entry.at("offset").get<std::size_t>();
            const std::size_t len = static_cast<std::size_t>(dst.size()) * sizeof(float);
            if (offset + len > payload_bytes) throw CheckpointError("checkpoint: tensor " + name + " exceeds payload");
            std::memcpy(dst.data(), payload + offset, len);
        }
        return ck;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: invalid header: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint: invalid config: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    try {
        return decode_checkpoint(read_file(path));
    } catch (const CheckpointError& e) {
        throw CheckpointError(path.string() + ": " + e.what(), e.byte_offset());
    }
}

}  // namespace bavit
