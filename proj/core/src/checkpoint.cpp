#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "subtune/model.hpp"

namespace subtune {

// Layout: "SBTN" | u32 version | u64 metadata length | metadata JSON (UTF-8) |
// little-endian f64 payloads, one per entry of metadata["tensors"], in order.
class CheckpointCodec {
public:
    static std::vector<unsigned char> encode(const BlockNetwork& net);
    static BlockNetwork decode(std::span<const unsigned char> bytes);
};

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'B', 'T', 'N'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<unsigned char>(u & 0xffu));
        u = static_cast<U>(u >> 8);
    }
}

class Reader {
public:
    explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    std::span<const unsigned char> take(std::size_t n, const char* what) {
        if (remaining() < n) {
            throw CheckpointError(std::string("truncated checkpoint: need ") + std::to_string(n) +
                                      " bytes for " + what + ", have " +
                                      std::to_string(remaining()),
                                  pos_);
        }
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    template <typename T>
    T get_le(const char* what) {
        auto s = take(sizeof(T), what);
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<decltype(u)>((u << 8) | s[i]);
        return static_cast<T>(u);
    }

private:
    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

struct TensorRef {
    std::string name;
    std::size_t rows;
    std::size_t cols;  // 1 for vectors
};

std::vector<TensorRef> layout(const BlockNetwork& net) {
    std::vector<TensorRef> refs;
    auto add_blocks = [&refs](const std::vector<ResidualBlock>& blocks, const std::string& prefix) {
        for (const auto& b : blocks) {
            const std::string base = prefix + "block" + std::to_string(b.id.index) + ".";
            refs.push_back({base + "lin1.weight", b.lin1.weight.rows(), b.lin1.weight.cols()});
            refs.push_back({base + "lin1.bias", b.lin1.bias.size(), 1});
            refs.push_back({base + "lin2.weight", b.lin2.weight.rows(), b.lin2.weight.cols()});
            refs.push_back({base + "lin2.bias", b.lin2.bias.size(), 1});
        }
    };
    add_blocks(net.live().blocks, "");
    refs.push_back({"head.weight", net.head().weight.rows(), net.head().weight.cols()});
    refs.push_back({"head.bias", net.head().bias.size(), 1});
    add_blocks(net.snapshot(), "snapshot.");
    return refs;
}

void append_values(std::vector<unsigned char>& out, std::span<const double> values) {
    for (double v : values) put_le(out, std::bit_cast<std::uint64_t>(v));
}

}  // namespace

std::vector<unsigned char> CheckpointCodec::encode(const BlockNetwork& net) {
    json meta;
    meta["input_width"] = net.input_width();
    meta["head"] = {{"kind", to_string(net.head_spec().kind)},
                    {"in_width", net.head_spec().in_width},
                    {"classes", net.head_spec().classes}};
    json blocks = json::array();
    for (const auto& b : net.live().blocks) {
        blocks.push_back({{"name", "block" + std::to_string(b.id.index)},
                          {"hidden", b.hidden()},
                          {"lin1_frozen", b.lin1.frozen},
                          {"lin2_frozen", b.lin2.frozen}});
    }
    meta["blocks"] = blocks;
    json tensors = json::array();
    for (const auto& t : layout(net)) {
        tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}});
    }
    meta["tensors"] = tensors;
    const std::string text = meta.dump();

    std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());

    auto write_blocks = [&out](const std::vector<ResidualBlock>& blocks) {
        for (const auto& b : blocks) {
            for (Slot s : {Slot::lin1_weight, Slot::lin1_bias, Slot::lin2_weight, Slot::lin2_bias}) {
                append_values(out, b.param(s));
            }
        }
    };
    write_blocks(net.live().blocks);
    append_values(out, net.head().weight.values());
    append_values(out, net.head().bias);
    write_blocks(net.snapshot());
    return out;
}

BlockNetwork CheckpointCodec::decode(std::span<const unsigned char> bytes) {
    Reader rd(bytes);
    auto magic = rd.take(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw CheckpointError("bad magic: expected SBTN", 0);
    }
    const std::size_t version_at = rd.offset();
    const auto version = rd.get_le<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version),
                              version_at);
    }
    const auto meta_len = rd.get_le<std::uint64_t>("metadata length");
    const std::size_t meta_at = rd.offset();
    auto meta_bytes = rd.take(static_cast<std::size_t>(meta_len), "metadata");
    json meta;
    try {
        meta = json::parse(meta_bytes.begin(), meta_bytes.end());
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("metadata is not valid JSON: ") + e.what(), meta_at);
    }

    BlockNetwork net;
    try {
        const auto width = meta.at("input_width").get<std::size_t>();
        const auto& head = meta.at("head");
        const auto& blocks = meta.at("blocks");
        if (width < 1 || !blocks.is_array() || blocks.empty()) {
            throw CheckpointError("metadata describes an empty network", meta_at);
        }
        net.width_ = width;
        net.head_spec_ = {head_kind_from_string(head.at("kind").get<std::string>()),
                          head.at("in_width").get<std::size_t>(),
                          head.at("classes").get<std::size_t>()};
        const HeadSpec expected = HeadSpec::for_network(net, net.head_spec_.kind);
        if (expected.in_width != net.head_spec_.in_width) {
            throw CheckpointError("head in_width inconsistent with head kind", meta_at);
        }
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto hidden = blocks[i].at("hidden").get<std::size_t>();
            ResidualBlock b;
            b.id = BlockId{i + 1};
            b.lin1 = DenseLayer(width, hidden);
            b.lin2 = DenseLayer(hidden, width);
            b.lin1.frozen = blocks[i].at("lin1_frozen").get<bool>();
            b.lin2.frozen = blocks[i].at("lin2_frozen").get<bool>();
            net.net_.blocks.push_back(b);
            b.lin1.frozen = b.lin2.frozen = false;
            net.snapshot_.push_back(std::move(b));
        }
        net.net_.head = DenseLayer(net.head_spec_.in_width, net.head_spec_.classes);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed metadata: ") + e.what(), meta_at);
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("malformed metadata: ") + e.what(), meta_at);
    }

    // The tensor table must agree exactly with the shapes implied by the blocks.
    const auto expected = layout(net);
    const auto& tensors = meta.at("tensors");
    if (!tensors.is_array() || tensors.size() != expected.size()) {
        throw CheckpointError("tensor table has wrong length", meta_at);
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& t = tensors[i];
        const bool ok = t.value("name", "") == expected[i].name && t.contains("shape") &&
                        t["shape"] == json::array({expected[i].rows, expected[i].cols});
        if (!ok) {
            throw CheckpointError("tensor entry " + std::to_string(i) + " does not match '" +
                                      expected[i].name + "'",
                                  meta_at);
        }
    }

    auto read_into = [&rd](std::span<double> dst, const std::string& name) {
        for (double& v : dst) v = std::bit_cast<double>(rd.get_le<std::uint64_t>(name.c_str()));
    };
    std::size_t k = 0;
    auto read_blocks = [&](std::vector<ResidualBlock>& blocks) {
        for (auto& b : blocks) {
            for (Slot s : {Slot::lin1_weight, Slot::lin1_bias, Slot::lin2_weight, Slot::lin2_bias}) {
                read_into(b.param(s), expected[k++].name);
            }
        }
    };
    read_blocks(net.net_.blocks);
    read_into(net.net_.head.weight.values(), expected[k++].name);
    read_into(net.net_.head.bias, expected[k++].name);
    read_blocks(net.snapshot_);
    if (rd.remaining() != 0) {
        throw CheckpointError("trailing bytes after payload", rd.offset());
    }
    for (const auto& b : net.net_.blocks) {
        if (!b.lin1.weight.all_finite() || !b.lin2.weight.all_finite()) {
            throw CheckpointError("non-finite parameter in " + std::to_string(b.id.index),
                                  meta_at);
        }
    }
    return net;
}

std::vector<unsigned char> encode_checkpoint(const BlockNetwork& net) {
    return CheckpointCodec::encode(net);
}

BlockNetwork decode_checkpoint(std::span<const unsigned char> bytes) {
    return CheckpointCodec::decode(bytes);
}

void save_checkpoint(const BlockNetwork& net, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(net);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

BlockNetwork load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace subtune
