#include "mdlab/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace mdlab {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'L', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kFormatVersion = 1;

void write_u32_le(std::ostream& out, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64_le(std::ostream& out, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32_le(std::istream& in) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t read_u64_le(std::istream& in) {
    uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_doubles_le(std::ostream& out, const double* data, size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
    } else {
        for (size_t i = 0; i < n; ++i) {
            uint64_t bits;
            std::memcpy(&bits, &data[i], 8);
            write_u64_le(out, bits);
        }
    }
}

void read_doubles_le(std::istream& in, double* data, size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 8));
    } else {
        for (size_t i = 0; i < n; ++i) {
            uint64_t bits = read_u64_le(in);
            std::memcpy(&data[i], &bits, 8);
        }
    }
}

nlohmann::json config_to_json(const DenoiserConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},   {"n_layers", c.n_layers},
            {"n_heads", c.n_heads},       {"max_len", c.max_len},   {"ff_mult", c.ff_mult}};
}

DenoiserConfig config_from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.vocab_size = j.at("vocab_size").get<uint32_t>();
    c.d_model = j.at("d_model").get<uint32_t>();
    c.n_layers = j.at("n_layers").get<uint32_t>();
    c.n_heads = j.at("n_heads").get<uint32_t>();
    c.max_len = j.at("max_len").get<uint32_t>();
    c.ff_mult = j.at("ff_mult").get<uint32_t>();
    return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json header;
    header["config"] = config_to_json(ckpt.params.config);
    header["vocab_hash"] = ckpt.vocab_hash;
    header["param_hash"] = ckpt.params.content_hash();
    header["stage_tag"] = ckpt.stage_tag;
    header["rng_state"] = ckpt.rng_state;
    nlohmann::json manifest = nlohmann::json::array();
    ckpt.params.for_each([&](const std::string& name, Eigen::Map<const Mat> m) {
        manifest.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    });
    header["tensors"] = std::move(manifest);
    std::string header_str = header.dump();

    // write to a temp file then rename so a failed save never clobbers an
    // existing checkpoint
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
        out.write(kMagic, sizeof(kMagic));
        write_u32_le(out, kFormatVersion);
        write_u64_le(out, header_str.size());
        out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        ckpt.params.for_each([&](const std::string&, Eigen::Map<const Mat> m) {
            write_doubles_le(out, m.data(), static_cast<size_t>(m.size()));
        });
        if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("checkpoint: cannot rename " + tmp + " to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = read_u32_le(in);
    if (version != kFormatVersion)
        throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
    uint64_t header_len = read_u64_le(in);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);
    nlohmann::json header = nlohmann::json::parse(header_str);

    Checkpoint ckpt;
    DenoiserConfig cfg = config_from_json(header.at("config"));
    cfg.validate();
    // materialize the parameter shapes, then overwrite with the stored bytes
    ckpt.params = init_params(cfg, 0).zeros_like();
    ckpt.vocab_hash = header.at("vocab_hash").get<uint64_t>();
    ckpt.stage_tag = header.at("stage_tag").get<std::string>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();

    const auto& manifest = header.at("tensors");
    size_t idx = 0;
    ckpt.params.for_each([&](const std::string& name, Eigen::Map<Mat> m) {
        const auto& entry = manifest.at(idx++);
        if (entry.at("name").get<std::string>() != name ||
            entry.at("rows").get<Eigen::Index>() != m.rows() ||
            entry.at("cols").get<Eigen::Index>() != m.cols())
            throw std::runtime_error("checkpoint: tensor manifest mismatch at " + name);
        read_doubles_le(in, m.data(), static_cast<size_t>(m.size()));
    });
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data in " + path);

    uint64_t expected = header.at("param_hash").get<uint64_t>();
    if (ckpt.params.content_hash() != expected)
        throw std::runtime_error("checkpoint: parameter hash mismatch in " + path);
    return ckpt;
}

}  // namespace mdlab
