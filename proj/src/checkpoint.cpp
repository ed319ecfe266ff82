#include "chmc/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "chmc/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace chmc {

namespace {

constexpr char kMagic[5] = {'C', 'H', 'M', 'C', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ParseError("truncated checkpoint");
    return v;
}

void write_tensor(std::ofstream& out, const std::string& name, const Mat<float>& m) {
    write_pod<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint8_t>(out, 2);
    write_pod<uint32_t>(out, static_cast<uint32_t>(m.rows));
    write_pod<uint32_t>(out, static_cast<uint32_t>(m.cols));
    out.write(reinterpret_cast<const char*>(m.a.data()),
              static_cast<std::streamsize>(m.a.size() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, 5);

    nlohmann::ordered_json header;
    header["schema"] = "chmc1";
    header["encoder"] = {
        {"n_layers", ckpt.encoder.cfg.n_layers}, {"n_heads", ckpt.encoder.cfg.n_heads},
        {"d_model", ckpt.encoder.cfg.d_model},   {"d_ff", ckpt.encoder.cfg.d_ff},
        {"max_len", ckpt.encoder.cfg.max_len},   {"vocab_size", ckpt.encoder.cfg.vocab_size},
        {"dropout", ckpt.encoder.cfg.dropout},
    };
    header["head_kind"] =
        ckpt.head.has_value() ? nlohmann::ordered_json(head_kind_name(ckpt.head->kind))
                              : nlohmann::ordered_json(nullptr);
    header["step"] = ckpt.step;
    header["metric_name"] = ckpt.metric_name;
    header["metric_value"] = ckpt.metric_value;
    header["config_echo"] = ckpt.config_echo;
    const std::string htext = header.dump();
    write_pod<uint32_t>(out, static_cast<uint32_t>(htext.size()));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));

    uint32_t count = 0;
    ckpt.encoder.for_each([&](const std::string&, const Mat<float>&) { ++count; });
    if (ckpt.head.has_value())
        ckpt.head->for_each([&](const std::string&, const Mat<float>&) { ++count; });
    write_pod<uint32_t>(out, count);
    ckpt.encoder.for_each(
        [&](const std::string& n, const Mat<float>& m) { write_tensor(out, n, m); });
    if (ckpt.head.has_value())
        ckpt.head->for_each(
            [&](const std::string& n, const Mat<float>& m) { write_tensor(out, n, m); });
    if (!out) throw IoError("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path, const LabelOntology* ontology) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, kMagic, 5) != 0)
        throw ParseError("bad checkpoint magic in " + path);
    const uint32_t hlen = read_pod<uint32_t>(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw ParseError("truncated checkpoint header");
    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint header JSON: ") + e.what());
    }

    Checkpoint ckpt;
    const auto& ej = header.at("encoder");
    EncoderConfig cfg;
    cfg.n_layers = ej.at("n_layers").get<int>();
    cfg.n_heads = ej.at("n_heads").get<int>();
    cfg.d_model = ej.at("d_model").get<int>();
    cfg.d_ff = ej.at("d_ff").get<int>();
    cfg.max_len = ej.at("max_len").get<int>();
    cfg.vocab_size = ej.at("vocab_size").get<int>();
    cfg.dropout = ej.at("dropout").get<double>();
    ckpt.encoder = EncoderParams<float>::zeros(cfg);
    ckpt.step = header.at("step").get<long>();
    ckpt.metric_name = header.at("metric_name").get<std::string>();
    ckpt.metric_value = header.at("metric_value").get<double>();
    ckpt.config_echo = header.value("config_echo", nlohmann::ordered_json::object());

    if (!header.at("head_kind").is_null()) {
        if (ontology == nullptr)
            throw ValidationError("checkpoint has a head; an ontology is required to load it");
        HeadKind kind = head_kind_from_name(header.at("head_kind").get<std::string>());
        ckpt.head = HeadParams<float>::zeros(kind, static_cast<size_t>(cfg.d_model), *ontology);
    }

    std::map<std::string, Mat<float>*> slots;
    ckpt.encoder.for_each([&](const std::string& n, Mat<float>& m) { slots[n] = &m; });
    if (ckpt.head.has_value())
        ckpt.head->for_each([&](const std::string& n, Mat<float>& m) { slots[n] = &m; });

    const uint32_t count = read_pod<uint32_t>(in);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t nlen = read_pod<uint16_t>(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        const uint8_t rank = read_pod<uint8_t>(in);
        if (rank != 2) throw ParseError("unexpected tensor rank in checkpoint");
        const uint32_t rows = read_pod<uint32_t>(in);
        const uint32_t cols = read_pod<uint32_t>(in);
        auto it = slots.find(name);
        if (it == slots.end()) throw ParseError("unknown tensor in checkpoint: " + name);
        Mat<float>& m = *it->second;
        if (m.rows != rows || m.cols != cols)
            throw ParseError("tensor shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(m.a.data()),
                static_cast<std::streamsize>(m.a.size() * sizeof(float)));
        if (!in) throw ParseError("truncated tensor data for " + name);
    }
    return ckpt;
}

}  // namespace chmc
