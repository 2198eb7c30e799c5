#pragma once

// Binary container for per-layer word embeddings aligned to treebank sentences.
//
// Layout (all integers little-endian):
//   "SPB1" | version u32 | header length u32 | header JSON | payload | CRC32(payload) u32
// The payload holds, per sentence in header order, layers-major then tokens
// then components, as float32.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "structprobe/binary_io.hpp"
#include "structprobe/treebank.hpp"

namespace structprobe {

inline constexpr std::string_view kContainerMagic = "SPB1";
inline constexpr std::uint32_t kContainerVersion = 1;

class ContainerError : public std::runtime_error {
public:
    enum class Kind { Io, BadMagic, BadVersion, BadHeader, Truncated, ChecksumMismatch, NonFinite, Invalid };

    ContainerError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class AlignmentError : public std::runtime_error {
public:
    AlignmentError(std::string sent_id, const std::string& what)
        : std::runtime_error(what), sent_id_(std::move(sent_id)) {}
    const std::string& sent_id() const noexcept { return sent_id_; }

private:
    std::string sent_id_;
};

/// Row-major T×n view of one layer.
using LayerView = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct SentenceEmbeddings {
    std::string sent_id;
    std::size_t token_count = 0;
    std::vector<float> values;  // num_layers × token_count × dim

    LayerView layer(std::size_t l, std::size_t dim) const {
        return LayerView(values.data() + l * token_count * dim, static_cast<Eigen::Index>(token_count),
                         static_cast<Eigen::Index>(dim));
    }

    friend bool operator==(const SentenceEmbeddings&, const SentenceEmbeddings&) = default;
};

struct EmbeddingSet {
    std::string model_name;
    std::size_t num_layers = 0;
    std::size_t dim = 0;
    bool contextual = true;
    // Extra header fields carried through verbatim (e.g. pooling flags).
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<SentenceEmbeddings> sentences;

    /// Column-per-token matrix (dim × T) for layer l, widened to double.
    Eigen::MatrixXd layer_matrix(std::size_t sentence, std::size_t l) const {
        const auto& s = sentences.at(sentence);
        return s.layer(l, dim).cast<double>().transpose();
    }

    friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
        return a.model_name == b.model_name && a.num_layers == b.num_layers && a.dim == b.dim &&
               a.contextual == b.contextual && a.metadata == b.metadata && a.sentences == b.sentences;
    }
};

/// Throws ContainerError(Invalid / NonFinite) if the set breaks its invariants.
inline void validate(const EmbeddingSet& set) {
    using K = ContainerError::Kind;
    if (set.num_layers == 0 || set.dim == 0) throw ContainerError(K::Invalid, "num_layers and dim must be positive");
    std::set<std::string> seen;
    for (const auto& s : set.sentences) {
        if (!seen.insert(s.sent_id).second) throw ContainerError(K::Invalid, "duplicate sent_id '" + s.sent_id + "'");
        if (s.values.size() != set.num_layers * s.token_count * set.dim)
            throw ContainerError(K::Invalid, "sentence '" + s.sent_id + "' has " + std::to_string(s.values.size()) +
                                                 " values, expected layers*tokens*dim");
        for (float v : s.values)
            if (!std::isfinite(v)) throw ContainerError(K::NonFinite, "non-finite value in sentence '" + s.sent_id + "'");
    }
}

inline std::string encode_container(const EmbeddingSet& set) {
    validate(set);
    nlohmann::json header = set.metadata;
    header["model_name"] = set.model_name;
    header["num_layers"] = set.num_layers;
    header["dim"] = set.dim;
    header["contextual"] = set.contextual;
    auto index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& s : set.sentences) {
        index.push_back({{"sent_id", s.sent_id}, {"token_count", s.token_count}, {"offset", offset}});
        offset += s.values.size() * sizeof(float);
    }
    header["sentences"] = std::move(index);
    const std::string header_text = header.dump();

    std::string payload;
    payload.reserve(offset);
    for (const auto& s : set.sentences)
        for (float v : s.values) binio::put_f32(payload, v);

    std::string out(kContainerMagic);
    binio::put_u32(out, kContainerVersion);
    binio::put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out += header_text;
    out += payload;
    binio::put_u32(out, binio::crc32(payload));
    return out;
}

inline EmbeddingSet decode_container(std::string_view bytes) {
    using K = ContainerError::Kind;
    if (bytes.size() < 12 || bytes.substr(0, 4) != kContainerMagic)
        throw ContainerError(K::BadMagic, "not an embedding container (bad magic)");
    const auto version = binio::get_u32(bytes, 4);
    if (version != kContainerVersion)
        throw ContainerError(K::BadVersion, "unsupported container version " + std::to_string(version));
    const std::size_t header_len = binio::get_u32(bytes, 8);
    if (bytes.size() < 12 + header_len) throw ContainerError(K::Truncated, "container truncated inside header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(12, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ContainerError(K::BadHeader, std::string("malformed header JSON: ") + e.what());
    }

    EmbeddingSet set;
    std::uint64_t payload_len = 0;
    try {
        set.model_name = header.at("model_name").get<std::string>();
        set.num_layers = header.at("num_layers").get<std::size_t>();
        set.dim = header.at("dim").get<std::size_t>();
        set.contextual = header.at("contextual").get<bool>();
        for (const auto& entry : header.at("sentences")) {
            SentenceEmbeddings s;
            s.sent_id = entry.at("sent_id").get<std::string>();
            s.token_count = entry.at("token_count").get<std::size_t>();
            if (entry.at("offset").get<std::uint64_t>() != payload_len)
                throw ContainerError(K::BadHeader, "non-contiguous offset for sentence '" + s.sent_id + "'");
            payload_len += static_cast<std::uint64_t>(set.num_layers) * s.token_count * set.dim * sizeof(float);
            set.sentences.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ContainerError(K::BadHeader, std::string("header missing or mistyped field: ") + e.what());
    }
    for (const auto& key : {"model_name", "num_layers", "dim", "contextual", "sentences"}) header.erase(key);
    set.metadata = std::move(header);

    const std::size_t payload_start = 12 + header_len;
    if (bytes.size() != payload_start + payload_len + 4)
        throw ContainerError(K::Truncated, "container size " + std::to_string(bytes.size()) + " does not match header (expected " +
                                               std::to_string(payload_start + payload_len + 4) + ")");
    const auto payload = bytes.substr(payload_start, payload_len);
    if (binio::crc32(payload) != binio::get_u32(bytes, payload_start + payload_len))
        throw ContainerError(K::ChecksumMismatch, "payload checksum mismatch");

    std::size_t pos = 0;
    for (auto& s : set.sentences) {
        s.values.resize(set.num_layers * s.token_count * set.dim);
        for (auto& v : s.values) {
            v = binio::get_f32(payload, pos);
            pos += sizeof(float);
        }
    }
    validate(set);
    return set;
}

inline void write_container(const EmbeddingSet& set, const std::string& path) {
    const auto bytes = encode_container(set);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ContainerError(ContainerError::Kind::Io, "cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContainerError(ContainerError::Kind::Io, "write failed for '" + path + "'");
}

inline EmbeddingSet read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContainerError(ContainerError::Kind::Io, "cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_container(bytes);
}

/// Sent_ids the extractor skipped (one per line, optional tab-separated reason),
/// read from "<container>.skipped" when present.
inline std::map<std::string, std::string> read_skip_log(const std::string& container_path) {
    std::map<std::string, std::string> skipped;
    std::ifstream in(container_path + ".skipped");
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        skipped[line.substr(0, tab)] = tab == std::string::npos ? "" : line.substr(tab + 1);
    }
    return skipped;
}

struct AlignedSentence {
    const Sentence* sentence = nullptr;
    std::size_t embedding_index = 0;
};

struct Alignment {
    std::vector<AlignedSentence> sentences;
    std::vector<std::string> missing;  // treebank sent_ids with no embeddings
};

inline Alignment align(const EmbeddingSet& set, std::span<const Sentence> treebank) {
    std::map<std::string_view, std::size_t> by_id;
    for (std::size_t i = 0; i < set.sentences.size(); ++i) by_id.emplace(set.sentences[i].sent_id, i);

    Alignment out;
    for (const auto& s : treebank) {
        auto it = by_id.find(s.sent_id);
        if (it == by_id.end()) {
            out.missing.push_back(s.sent_id);
            continue;
        }
        const auto& emb = set.sentences[it->second];
        if (emb.token_count != s.size())
            throw AlignmentError(s.sent_id, "token count mismatch for sentence '" + s.sent_id + "': treebank has " +
                                                std::to_string(s.size()) + ", embeddings have " +
                                                std::to_string(emb.token_count));
        out.sentences.push_back({&s, it->second});
    }
    return out;
}

}  // namespace structprobe
