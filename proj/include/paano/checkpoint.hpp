#pragma once

// Binary checkpoint, all integers and floats little-endian:
//   "PAAB" | u32 version | u32 d | u32 w | u32 l | u32 K
//   per tensor in ModelParams::all_tensors() order: u32 rank | u32 dims[rank] | f32 payload
//   K rows of l f32 (reduced memory bank)
//   u32 CRC-32 of every byte before it

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "paano/error.hpp"
#include "paano/memory_bank.hpp"
#include "paano/model.hpp"

namespace paano {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'P', 'A', 'A', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
public:
    enum class Kind { BadMagic, VersionMismatch, Truncated, ShapeMismatch, ChecksumMismatch, Io };

    CheckpointError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

namespace detail {

class ByteWriter {
public:
    void put_u32(std::uint32_t v) { put_raw(&v, sizeof v); }
    void put_f32(const float* p, std::size_t n) { put_raw(p, n * sizeof(float)); }
    void put_raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    std::vector<unsigned char> bytes;
};

class ByteReader {
public:
    ByteReader(const std::vector<unsigned char>& bytes, std::size_t end, std::string path)
        : bytes_(bytes), end_(end), path_(std::move(path)) {}

    void get_raw(void* out, std::size_t n) {
        if (end_ - pos_ < n) {
            throw CheckpointError(CheckpointError::Kind::Truncated, path_ + ": checkpoint is truncated");
        }
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t get_u32() {
        std::uint32_t v = 0;
        get_raw(&v, sizeof v);
        return v;
    }
    std::size_t position() const { return pos_; }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
    std::string path_;
};

inline std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = ::crc32(crc, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const ModelParams<float>& params, const ReducedMemoryBank& bank) {
    const auto l = static_cast<std::size_t>(bank.embeddings.cols());
    if (bank.size() > 0 && l != kEmbeddingDim) {
        throw ShapeError("memory bank embedding dimension " + std::to_string(l) + " differs from " +
                         std::to_string(kEmbeddingDim));
    }
    detail::ByteWriter out;
    out.put_raw(kCheckpointMagic, 4);
    out.put_u32(kCheckpointVersion);
    out.put_u32(static_cast<std::uint32_t>(params.channels));
    out.put_u32(static_cast<std::uint32_t>(params.window));
    out.put_u32(static_cast<std::uint32_t>(kEmbeddingDim));
    out.put_u32(static_cast<std::uint32_t>(bank.size()));
    for (const auto* t : params.all_tensors()) {
        out.put_u32(static_cast<std::uint32_t>(t->shape.size()));
        for (auto dim : t->shape) out.put_u32(static_cast<std::uint32_t>(dim));
        out.put_f32(t->data.data(), t->data.size());
    }
    out.put_f32(bank.embeddings.data(), static_cast<std::size_t>(bank.embeddings.size()));
    out.put_u32(detail::crc32_of(out.bytes.data(), out.bytes.size()));
    return std::move(out.bytes);
}

inline std::pair<ModelParams<float>, ReducedMemoryBank> deserialize_checkpoint(const std::vector<unsigned char>& bytes,
                                                                               const std::string& path = "checkpoint") {
    using Kind = CheckpointError::Kind;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        throw CheckpointError(Kind::BadMagic, path + ": not a checkpoint file (bad magic)");
    }
    // Structural checks run before the checksum so that truncation and shape
    // problems get their own diagnostics.
    detail::ByteReader in(bytes, bytes.size() >= 4 ? bytes.size() - 4 : 0, path);
    char magic[4];
    in.get_raw(magic, 4);
    const std::uint32_t version = in.get_u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError(Kind::VersionMismatch, path + ": checkpoint format version " + std::to_string(version) +
                                                         ", expected " + std::to_string(kCheckpointVersion));
    }
    const std::uint32_t d = in.get_u32();
    const std::uint32_t w = in.get_u32();
    const std::uint32_t l = in.get_u32();
    const std::uint32_t k = in.get_u32();
    auto shape_error = [&](const std::string& m) { throw CheckpointError(Kind::ShapeMismatch, path + ": " + m); };
    if (l != kEmbeddingDim) {
        shape_error("embedding dimension " + std::to_string(l) + ", expected " + std::to_string(kEmbeddingDim));
    }
    if (d < 1 || w < kMinPatchLength) shape_error("invalid header (d=" + std::to_string(d) + ", w=" + std::to_string(w) + ")");
    if (k < 1) shape_error("memory bank is empty");

    ModelParams<float> params;
    params.channels = d;
    params.window = w;
    const auto shapes = ModelParams<float>::expected_shapes(d);
    auto tensors = params.all_tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const std::uint32_t rank = in.get_u32();
        if (rank > 8) shape_error("tensor " + std::to_string(i) + " has implausible rank " + std::to_string(rank));
        std::vector<std::size_t> dims(rank);
        for (auto& v : dims) v = in.get_u32();
        if (dims != shapes[i]) {
            shape_error("tensor " + std::to_string(i) + " has shape " + shape_string(dims) + ", expected " +
                        shape_string(shapes[i]));
        }
        *tensors[i] = Tensor<float>(dims);
        in.get_raw(tensors[i]->data.data(), tensors[i]->data.size() * sizeof(float));
    }
    ReducedMemoryBank bank;
    bank.embeddings.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
    in.get_raw(bank.embeddings.data(), static_cast<std::size_t>(bank.embeddings.size()) * sizeof(float));
    if (bytes.size() < 4 || in.position() != bytes.size() - 4) {
        throw CheckpointError(in.position() > bytes.size() - 4 ? Kind::Truncated : Kind::ShapeMismatch,
                              path + ": unexpected trailing bytes after the memory bank");
    }
    std::uint32_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    if (stored != detail::crc32_of(bytes.data(), bytes.size() - 4)) {
        throw CheckpointError(Kind::ChecksumMismatch, path + ": checksum mismatch (file corrupted)");
    }
    return {std::move(params), std::move(bank)};
}

inline void save_checkpoint(const ModelParams<float>& params, const ReducedMemoryBank& bank, const std::string& path) {
    const auto bytes = serialize_checkpoint(params, bank);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError(CheckpointError::Kind::Io, "cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError(CheckpointError::Kind::Io, "failed writing '" + path + "'");
}

inline std::pair<ModelParams<float>, ReducedMemoryBank> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, path);
}

}  // namespace paano
