#include "penguin/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "penguin/errors.hpp"

namespace penguin {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'P', 'N', 'G', 'N'};

void put_u32_le(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

std::uint32_t get_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32_le(std::ostream& out, float f) {
    put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

float get_f32_le(std::istream& in) { return std::bit_cast<float>(get_u32_le(in)); }

json norm_to_json(const DataNorm& n) {
    json j;
    j["enabled"] = n.enabled;
    j["mean"] = n.mean;
    j["stdev"] = n.stdev;
    return j;
}

DataNorm norm_from_json(const json& j) {
    DataNorm n;
    n.enabled = j.at("enabled").get<bool>();
    n.mean = j.at("mean").get<std::vector<double>>();
    n.stdev = j.at("stdev").get<std::vector<double>>();
    return n;
}

json config_to_json(const PenguinConfig& c) {
    json j;
    j["lookback"] = c.lookback;
    j["horizon"] = c.horizon;
    j["channels"] = c.channels;
    j["patch_len"] = c.patch_len;
    j["stride"] = c.stride;
    j["d_model"] = c.d_model;
    j["d_ff"] = c.d_ff;
    j["heads"] = c.heads;
    j["layers"] = c.layers;
    j["regime"] = regime_name(c.regime);
    j["periods"] = c.periods;
    j["causal"] = c.causal;
    j["eps"] = c.eps;
    j["precision"] = precision_name(c.precision);
    return j;
}

PenguinConfig config_from_json(const json& j, bool reject_unknown) {
    static const char* known[] = {"lookback", "horizon", "channels", "patch_len", "stride",
                                  "d_model",  "d_ff",    "heads",    "layers",    "regime",
                                  "periods",  "causal",  "eps",      "precision"};
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    if (reject_unknown) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool ok = false;
            for (const char* k : known) ok = ok || it.key() == k;
            if (!ok) throw ConfigError("unknown model config key '" + it.key() + "'");
        }
    }
    PenguinConfig c;
    try {
        if (j.contains("lookback")) c.lookback = j.at("lookback").get<long>();
        if (j.contains("horizon")) c.horizon = j.at("horizon").get<long>();
        if (j.contains("channels")) c.channels = j.at("channels").get<long>();
        if (j.contains("patch_len")) c.patch_len = j.at("patch_len").get<long>();
        if (j.contains("stride")) c.stride = j.at("stride").get<long>();
        if (j.contains("d_model")) c.d_model = j.at("d_model").get<long>();
        if (j.contains("d_ff")) c.d_ff = j.at("d_ff").get<long>();
        if (j.contains("heads")) c.heads = j.at("heads").get<long>();
        if (j.contains("layers")) c.layers = j.at("layers").get<long>();
        if (j.contains("regime")) c.regime = parse_regime(j.at("regime").get<std::string>());
        if (j.contains("periods")) c.periods = j.at("periods").get<std::vector<long>>();
        if (j.contains("causal")) c.causal = j.at("causal").get<bool>();
        if (j.contains("eps")) c.eps = j.at("eps").get<double>();
        if (j.contains("precision"))
            c.precision = parse_precision(j.at("precision").get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config value: ") + e.what());
    }
    return c;
}

}  // namespace

std::string config_to_json_string(const PenguinConfig& config) {
    return config_to_json(config).dump();
}

PenguinConfig config_from_json_string(const std::string& json_text, bool reject_unknown) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j, reject_unknown);
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json manifest = json::array();
    std::uint64_t offset = 0;
    for (const auto& p : ckpt.params) {
        json e;
        e["name"] = p.name;
        e["shape"] = p.shape;
        e["offset"] = offset;
        manifest.push_back(e);
        offset += p.data.size() * sizeof(float);
    }
    json header;
    header["config"] = config_to_json(ckpt.config);
    header["norm"] = norm_to_json(ckpt.norm);
    header["params"] = manifest;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    out.put(static_cast<char>(ckpt.version));
    put_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& p : ckpt.params)
        for (float f : p.data) put_f32_le(out, f);
    if (!out) throw DataError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("'" + path + "' is not a checkpoint (bad magic)");
    Checkpoint ckpt;
    ckpt.version = static_cast<std::uint8_t>(in.get());
    if (ckpt.version != 1)
        throw DataError("unsupported checkpoint version " + std::to_string(ckpt.version));
    const std::uint32_t hlen = get_u32_le(in);
    std::string header_text(hlen, '\0');
    in.read(header_text.data(), hlen);
    if (!in) throw DataError("'" + path + "' truncated in header");

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    ckpt.config = config_from_json(header.at("config"), false);
    ckpt.norm = norm_from_json(header.at("norm"));

    for (const auto& e : header.at("params")) {
        ParamBlob blob;
        blob.name = e.at("name").get<std::string>();
        blob.shape = e.at("shape").get<std::vector<long>>();
        long n = 1;
        for (long s : blob.shape) n *= s;
        blob.data.resize(static_cast<std::size_t>(n));
        for (auto& f : blob.data) f = get_f32_le(in);
        if (!in) throw DataError("'" + path + "' truncated in parameter '" + blob.name + "'");
        ckpt.params.push_back(std::move(blob));
    }
    return ckpt;
}

template <typename Real>
Checkpoint checkpoint_from_model(Forecaster<Real>& model, const DataNorm& norm) {
    Checkpoint ckpt;
    ckpt.config = model.config();
    ckpt.norm = norm;
    for (auto& [name, tensor] : model.named_parameters()) {
        ParamBlob blob;
        blob.name = name;
        blob.shape = tensor->shape();
        blob.data.reserve(tensor->values().size());
        for (Real v : tensor->values()) blob.data.push_back(static_cast<float>(v));
        ckpt.params.push_back(std::move(blob));
    }
    return ckpt;
}

template <typename Real>
void load_into_model(const Checkpoint& ckpt, Forecaster<Real>& model) {
    auto named = model.named_parameters();
    if (named.size() != ckpt.params.size())
        throw DataError("checkpoint has " + std::to_string(ckpt.params.size()) +
                        " parameters, model expects " + std::to_string(named.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
        const ParamBlob& blob = ckpt.params[i];
        auto& [name, tensor] = named[i];
        if (name != blob.name)
            throw DataError("checkpoint parameter '" + blob.name + "' does not match model '" +
                            name + "'");
        if (tensor->shape() != Shape(blob.shape.begin(), blob.shape.end()))
            throw DataError("checkpoint parameter '" + blob.name + "' has mismatched shape");
        auto& dst = tensor->values();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<Real>(blob.data[k]);
    }
}

template Checkpoint checkpoint_from_model<float>(Forecaster<float>&, const DataNorm&);
template Checkpoint checkpoint_from_model<double>(Forecaster<double>&, const DataNorm&);
template void load_into_model<float>(const Checkpoint&, Forecaster<float>&);
template void load_into_model<double>(const Checkpoint&, Forecaster<double>&);

}  // namespace penguin
