#include "gpfq/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gpfq {

namespace {

constexpr uint32_t kFormatVersion = 1;

using Json = nlohmann::json;

void append_u32(std::string& out, uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void append_u64(std::string& out, uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& path)
        : bytes_(bytes), path_(path) {}

    std::string take(size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw ArchiveException(ArchiveError::truncated,
                                   path_ + ": unexpected end of file");
        }
        std::string out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    uint32_t take_u32() {
        uint32_t v;
        const std::string raw = take(4);
        std::memcpy(&v, raw.data(), 4);
        return v;
    }

    uint64_t take_u64() {
        uint64_t v;
        const std::string raw = take(8);
        std::memcpy(&v, raw.data(), 8);
        return v;
    }

    std::string take_rest() { return take(remaining()); }

    size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::string& bytes_;
    std::string path_;
    size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ArchiveException(ArchiveError::truncated, "cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("short write to " + path);
    }
}

// row-major float32 tensor payloads
void append_tensor(std::string& blob, Json& slot, const Eigen::MatrixXd& t) {
    slot["offset"] = blob.size();
    slot["length"] = static_cast<uint64_t>(t.size()) * 4;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.cols(); ++j) {
            const float v = static_cast<float>(t(i, j));
            char buf[4];
            std::memcpy(buf, &v, 4);
            blob.append(buf, 4);
        }
    }
}

Eigen::MatrixXd read_tensor(const std::string& blob, const Json& slot,
                            Eigen::Index rows, Eigen::Index cols,
                            std::vector<std::pair<uint64_t, uint64_t>>& spans) {
    if (!slot.is_object() || !slot.contains("offset") || !slot.contains("length")) {
        throw ArchiveException(ArchiveError::bad_manifest, "tensor entry missing offset/length");
    }
    const uint64_t offset = slot["offset"].get<uint64_t>();
    const uint64_t length = slot["length"].get<uint64_t>();
    if (offset > blob.size() || length > blob.size() - offset) {
        throw ArchiveException(ArchiveError::offset_overflow,
                               "tensor span exceeds blob size");
    }
    if (length != static_cast<uint64_t>(rows) * cols * 4) {
        throw ArchiveException(ArchiveError::bad_manifest,
                               "tensor length does not match declared shape");
    }
    spans.emplace_back(offset, length);
    Eigen::MatrixXd t(rows, cols);
    size_t pos = offset;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            float v;
            std::memcpy(&v, blob.data() + pos, 4);
            t(i, j) = v;
            pos += 4;
        }
    }
    return t;
}

ActivationKind activation_from_name(const std::string& name) {
    if (name == "identity") return ActivationKind::identity;
    if (name == "relu") return ActivationKind::relu;
    if (name == "softmax") return ActivationKind::softmax;
    throw ArchiveException(ArchiveError::bad_manifest, "unknown activation " + name);
}

const char* activation_name(ActivationKind k) {
    switch (k) {
        case ActivationKind::identity: return "identity";
        case ActivationKind::relu: return "relu";
        case ActivationKind::softmax: return "softmax";
    }
    return "identity";
}

}  // namespace

void save_model(const NetworkModel& model, const std::string& path) {
    validate_model(model);
    Json manifest;
    manifest["format"] = "NNQM";
    manifest["version"] = kFormatVersion;
    manifest["name"] = model.name;
    manifest["input_shape"] = model.input_shape.dims;
    Json layers = Json::array();
    std::string blob;
    for (const LayerSpec& layer : model.layers) {
        Json entry;
        entry["kind"] = layer_kind_name(layer);
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            entry["in"] = d->weights.rows();
            entry["out"] = d->weights.cols();
            append_tensor(blob, entry["weights"], d->weights);
            append_tensor(blob, entry["bias"], d->bias.transpose());
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
            entry["kh"] = c->kh;
            entry["kw"] = c->kw;
            entry["in_channels"] = c->in_channels;
            entry["out_channels"] = c->out_channels;
            entry["stride"] = c->stride;
            entry["padding"] = c->padding == PaddingMode::same ? "same" : "valid";
            append_tensor(blob, entry["kernel"], c->kernel);
            append_tensor(blob, entry["bias"], c->bias.transpose());
        } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
            entry["channels"] = b->scale.size();
            append_tensor(blob, entry["scale"], b->scale.transpose());
            append_tensor(blob, entry["shift"], b->shift.transpose());
        } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
            entry["fn"] = activation_name(a->fn);
        } else {
            const auto& p = std::get<MaxPoolLayer>(layer);
            entry["ph"] = p.ph;
            entry["pw"] = p.pw;
            entry["stride"] = p.stride;
        }
        layers.push_back(entry);
    }
    manifest["layers"] = layers;

    const std::string manifest_text = manifest.dump();
    std::string out;
    out.append("NNQM", 4);
    append_u32(out, kFormatVersion);
    append_u64(out, manifest_text.size());
    out += manifest_text;
    append_u64(out, blob.size());
    out += blob;
    write_file(path, out);
}

NetworkModel load_model(const std::string& path) {
    const std::string bytes = read_file(path);
    Reader reader(bytes, path);
    if (reader.take(4) != "NNQM") {
        throw ArchiveException(ArchiveError::bad_magic, path + ": bad model magic");
    }
    const uint32_t version = reader.take_u32();
    if (version != kFormatVersion) {
        throw ArchiveException(ArchiveError::version_mismatch,
                               path + ": unsupported model format version " +
                                   std::to_string(version));
    }
    const uint64_t manifest_len = reader.take_u64();
    const std::string manifest_text = reader.take(manifest_len);
    const uint64_t blob_len = reader.take_u64();
    // a short read leaves manifest offsets dangling past the actual blob,
    // surfaced below as offset_overflow
    const std::string blob = reader.take_rest();
    if (blob.size() > blob_len) {
        throw ArchiveException(ArchiveError::bad_manifest, path + ": trailing bytes");
    }

    Json manifest;
    try {
        manifest = Json::parse(manifest_text);
    } catch (const Json::parse_error& e) {
        throw ArchiveException(ArchiveError::bad_manifest,
                               path + ": manifest parse error: " + e.what());
    }

    NetworkModel model;
    std::vector<std::pair<uint64_t, uint64_t>> spans;
    try {
        model.name = manifest.value("name", "");
        model.input_shape.dims = manifest.at("input_shape").get<std::vector<int>>();
        for (const Json& entry : manifest.at("layers")) {
            const std::string kind = entry.at("kind").get<std::string>();
            if (kind == "dense") {
                DenseLayer d;
                const Eigen::Index in = entry.at("in").get<Eigen::Index>();
                const Eigen::Index out = entry.at("out").get<Eigen::Index>();
                d.weights = read_tensor(blob, entry.at("weights"), in, out, spans);
                d.bias = read_tensor(blob, entry.at("bias"), 1, out, spans).transpose();
                model.layers.emplace_back(std::move(d));
            } else if (kind == "conv2d") {
                Conv2dLayer c;
                c.kh = entry.at("kh").get<int>();
                c.kw = entry.at("kw").get<int>();
                c.in_channels = entry.at("in_channels").get<int>();
                c.out_channels = entry.at("out_channels").get<int>();
                c.stride = entry.at("stride").get<int>();
                c.padding = entry.at("padding").get<std::string>() == "same"
                                ? PaddingMode::same
                                : PaddingMode::valid;
                c.kernel = read_tensor(blob, entry.at("kernel"),
                                       static_cast<Eigen::Index>(c.kh) * c.kw * c.in_channels,
                                       c.out_channels, spans);
                c.bias = read_tensor(blob, entry.at("bias"), 1, c.out_channels, spans)
                             .transpose();
                model.layers.emplace_back(std::move(c));
            } else if (kind == "batchnorm") {
                BatchNormLayer b;
                const Eigen::Index channels = entry.at("channels").get<Eigen::Index>();
                b.scale = read_tensor(blob, entry.at("scale"), 1, channels, spans).transpose();
                b.shift = read_tensor(blob, entry.at("shift"), 1, channels, spans).transpose();
                model.layers.emplace_back(std::move(b));
            } else if (kind == "activation") {
                model.layers.emplace_back(
                    ActivationLayer{activation_from_name(entry.at("fn").get<std::string>())});
            } else if (kind == "maxpool") {
                MaxPoolLayer p;
                p.ph = entry.at("ph").get<int>();
                p.pw = entry.at("pw").get<int>();
                p.stride = entry.at("stride").get<int>();
                model.layers.emplace_back(p);
            } else {
                throw ArchiveException(ArchiveError::bad_manifest,
                                       path + ": unknown layer kind " + kind);
            }
        }
    } catch (const Json::exception& e) {
        throw ArchiveException(ArchiveError::bad_manifest,
                               path + ": malformed manifest: " + e.what());
    }

    // tensors must tile the blob exactly, in order, with no gaps
    uint64_t cursor = 0;
    for (const auto& [offset, length] : spans) {
        if (offset != cursor) {
            throw ArchiveException(ArchiveError::bad_manifest,
                                   path + ": tensors do not tile the blob");
        }
        cursor += length;
    }
    if (cursor != blob.size()) {
        throw ArchiveException(ArchiveError::bad_manifest,
                               path + ": blob has unreferenced bytes");
    }

    try {
        validate_model(model);
    } catch (const std::invalid_argument& e) {
        throw ArchiveException(ArchiveError::shape_composition, path + ": " + e.what());
    }
    return model;
}

void save_data(const Eigen::MatrixXd& rows, const TensorShape& sample_shape,
               const std::string& path) {
    if (rows.cols() != sample_shape.size()) {
        throw std::invalid_argument("save_data: rows do not match sample shape");
    }
    std::string out;
    out.append("NNQD", 4);
    append_u32(out, kFormatVersion);
    append_u32(out, static_cast<uint32_t>(rows.rows()));
    append_u32(out, static_cast<uint32_t>(sample_shape.dims.size()));
    for (int d : sample_shape.dims) {
        append_u32(out, static_cast<uint32_t>(d));
    }
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < rows.cols(); ++j) {
            const float v = static_cast<float>(rows(i, j));
            char buf[4];
            std::memcpy(buf, &v, 4);
            out.append(buf, 4);
        }
    }
    write_file(path, out);
}

std::pair<Eigen::MatrixXd, TensorShape> load_data(const std::string& path) {
    const std::string bytes = read_file(path);
    Reader reader(bytes, path);
    if (reader.take(4) != "NNQD") {
        throw ArchiveException(ArchiveError::bad_magic, path + ": bad data magic");
    }
    const uint32_t version = reader.take_u32();
    if (version != kFormatVersion) {
        throw ArchiveException(ArchiveError::version_mismatch,
                               path + ": unsupported data format version " +
                                   std::to_string(version));
    }
    const uint32_t m = reader.take_u32();
    const uint32_t rank = reader.take_u32();
    if (m < 1 || rank < 1 || rank > 3) {
        throw ArchiveException(ArchiveError::bad_manifest, path + ": bad data header");
    }
    TensorShape shape;
    for (uint32_t i = 0; i < rank; ++i) {
        shape.dims.push_back(static_cast<int>(reader.take_u32()));
    }
    const uint64_t expect = static_cast<uint64_t>(m) * shape.size() * 4;
    if (reader.remaining() != expect) {
        throw ArchiveException(ArchiveError::truncated,
                               path + ": payload size does not match header");
    }
    Eigen::MatrixXd rows(m, shape.size());
    const std::string payload = reader.take(expect);
    size_t pos = 0;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < rows.cols(); ++j) {
            float v;
            std::memcpy(&v, payload.data() + pos, 4);
            rows(i, j) = v;
            pos += 4;
        }
    }
    return {rows, shape};
}

std::vector<int> load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open labels file " + path);
    }
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        labels.push_back(std::stoi(line));
    }
    return labels;
}

void save_labels(const std::vector<int>& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write labels file " + path);
    }
    for (int label : labels) {
        out << label << "\n";
    }
}

}  // namespace gpfq
