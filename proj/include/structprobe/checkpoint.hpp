#pragma once

// Probe checkpoint file:
//   "SPK1" | version u32 | header length u32 | header JSON | B (float32, row-major) | CRC32(B bytes) u32
// B is narrowed to float32 on write, so a checkpoint that was read back
// re-encodes to identical bytes.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "structprobe/binary_io.hpp"
#include "structprobe/embedding_store.hpp"
#include "structprobe/probe.hpp"

namespace structprobe {

inline constexpr std::string_view kCheckpointMagic = "SPK1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ProbeParams params;
    std::uint64_t seed = 0;
    nlohmann::json training = nlohmann::json::object();
};

inline nlohmann::json kernel_params_json(const ProbeParams& p) {
    return {
        {"kernel", kernel_name(p.kernel)},
        {"c", p.hp.c},
        {"degree", p.hp.degree},
        {"sigma", p.hp.sigma},
        {"a", p.hp.a},
        {"b", p.hp.b},
        {"rbf_mode", rbf_mode_name(p.hp.rbf_mode)},
        {"pair_kernel", kernel_name(p.hp.pair_kernel)},
        {"train_affine", p.train_affine},
    };
}

inline std::string encode_checkpoint(const Checkpoint& ck) {
    validate(ck.params);
    const auto& B = ck.params.B;
    nlohmann::json header = kernel_params_json(ck.params);
    header["rank"] = B.rows();
    header["dim"] = B.cols();
    header["seed"] = ck.seed;
    header["training"] = ck.training;
    const std::string header_text = header.dump();

    std::string payload;
    payload.reserve(static_cast<std::size_t>(B.size()) * sizeof(float));
    for (Eigen::Index r = 0; r < B.rows(); ++r)
        for (Eigen::Index c = 0; c < B.cols(); ++c) binio::put_f32(payload, static_cast<float>(B(r, c)));

    std::string out(kCheckpointMagic);
    binio::put_u32(out, kCheckpointVersion);
    binio::put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out += header_text;
    out += payload;
    binio::put_u32(out, binio::crc32(payload));
    return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
    using K = ContainerError::Kind;
    if (bytes.size() < 12 || bytes.substr(0, 4) != kCheckpointMagic)
        throw ContainerError(K::BadMagic, "not a probe checkpoint (bad magic)");
    if (auto v = binio::get_u32(bytes, 4); v != kCheckpointVersion)
        throw ContainerError(K::BadVersion, "unsupported checkpoint version " + std::to_string(v));
    const std::size_t header_len = binio::get_u32(bytes, 8);
    if (bytes.size() < 12 + header_len) throw ContainerError(K::Truncated, "checkpoint truncated inside header");

    Checkpoint ck;
    std::size_t rank = 0, dim = 0;
    try {
        const auto h = nlohmann::json::parse(bytes.substr(12, header_len));
        auto kernel = parse_kernel(h.at("kernel").get<std::string>());
        auto pair = parse_kernel(h.at("pair_kernel").get<std::string>());
        auto mode = parse_rbf_mode(h.at("rbf_mode").get<std::string>());
        if (!kernel || !pair || !mode) throw ContainerError(K::BadHeader, "unknown kernel or rbf mode in checkpoint");
        ck.params.kernel = *kernel;
        ck.params.hp.pair_kernel = *pair;
        ck.params.hp.rbf_mode = *mode;
        ck.params.hp.c = h.at("c").get<double>();
        ck.params.hp.degree = h.at("degree").get<int>();
        ck.params.hp.sigma = h.at("sigma").get<double>();
        ck.params.hp.a = h.at("a").get<double>();
        ck.params.hp.b = h.at("b").get<double>();
        ck.params.train_affine = h.at("train_affine").get<bool>();
        rank = h.at("rank").get<std::size_t>();
        dim = h.at("dim").get<std::size_t>();
        ck.seed = h.at("seed").get<std::uint64_t>();
        ck.training = h.at("training");
    } catch (const nlohmann::json::exception& e) {
        throw ContainerError(K::BadHeader, std::string("bad checkpoint header: ") + e.what());
    }

    const std::size_t payload_start = 12 + header_len;
    const std::size_t payload_len = rank * dim * sizeof(float);
    if (bytes.size() != payload_start + payload_len + 4)
        throw ContainerError(K::Truncated, "checkpoint size does not match header");
    const auto payload = bytes.substr(payload_start, payload_len);
    if (binio::crc32(payload) != binio::get_u32(bytes, payload_start + payload_len))
        throw ContainerError(K::ChecksumMismatch, "checkpoint checksum mismatch");

    ck.params.B.resize(static_cast<Eigen::Index>(rank), static_cast<Eigen::Index>(dim));
    std::size_t pos = 0;
    for (Eigen::Index r = 0; r < ck.params.B.rows(); ++r)
        for (Eigen::Index c = 0; c < ck.params.B.cols(); ++c, pos += sizeof(float))
            ck.params.B(r, c) = binio::get_f32(payload, pos);
    if (!ck.params.B.allFinite()) throw ContainerError(K::NonFinite, "checkpoint contains non-finite weights");
    validate(ck.params);
    return ck;
}

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
    const auto bytes = encode_checkpoint(ck);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ContainerError(ContainerError::Kind::Io, "cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContainerError(ContainerError::Kind::Io, "write failed for '" + path + "'");
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContainerError(ContainerError::Kind::Io, "cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace structprobe
