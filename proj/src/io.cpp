#include "metadet/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace metadet {

namespace {

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw numeric_error("tensor stream truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write("MDT1", 4);
    char prec = t.precision() == Precision::kSingle ? 0 : 1;
    os.write(&prec, 1);
    write_u64(os, static_cast<uint64_t>(t.rank()));
    for (int64_t d : t.shape()) write_u64(os, static_cast<uint64_t>(d));
    if (t.precision() == Precision::kSingle) {
        for (int64_t i = 0; i < t.numel(); ++i) {
            float f = static_cast<float>(t[i]);
            uint32_t u;
            std::memcpy(&u, &f, 4);
            unsigned char b[4];
            for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>(u >> (8 * k));
            os.write(reinterpret_cast<const char*>(b), 4);
        }
    } else {
        for (int64_t i = 0; i < t.numel(); ++i) {
            double d = t[i];
            uint64_t u;
            std::memcpy(&u, &d, 8);
            write_u64(os, u);
        }
    }
}

Tensor read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MDT1", 4) != 0)
        throw numeric_error("bad tensor magic, expected MDT1");
    char prec;
    is.read(&prec, 1);
    Precision p = prec == 0 ? Precision::kSingle : Precision::kDouble;
    uint64_t rank = read_u64(is);
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) d = static_cast<int64_t>(read_u64(is));
    Tensor t(shape, p);
    auto& data = t.mutable_data();
    if (p == Precision::kSingle) {
        for (auto& v : data) {
            unsigned char b[4];
            is.read(reinterpret_cast<char*>(b), 4);
            if (!is) throw numeric_error("tensor stream truncated");
            uint32_t u = 0;
            for (int k = 0; k < 4; ++k) u |= static_cast<uint32_t>(b[k]) << (8 * k);
            float f;
            std::memcpy(&f, &u, 4);
            v = f;
        }
    } else {
        for (auto& v : data) {
            uint64_t u = read_u64(is);
            std::memcpy(&v, &u, 8);
        }
    }
    t.finalize();
    return t;
}

void write_tensor_file(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw numeric_error("cannot open '" + path + "' for writing");
    write_tensor(os, t);
}

Tensor read_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw numeric_error("cannot open '" + path + "' for reading");
    return read_tensor(is);
}

std::string detector_config_to_text(const DetectorConfig& cfg) {
    std::ostringstream os;
    os << "head_style=" << (cfg.head_style == HeadStyle::kAnchorBased ? "anchor-based" : "anchor-free") << "\n";
    os << "input_size=" << cfg.input_size << "\n";
    os << "stride=" << cfg.stride << "\n";
    os << "anchor_size=" << cfg.anchor_size << "\n";
    os << "trunk_channels=";
    for (size_t i = 0; i < cfg.trunk_channels.size(); ++i)
        os << (i ? "," : "") << cfg.trunk_channels[i];
    os << "\n";
    os << "shared_trunk=" << (cfg.shared_trunk ? 1 : 0) << "\n";
    os << "frozen_prefix_layers=" << cfg.frozen_prefix_layers << "\n";
    os << "precision=" << (cfg.precision == Precision::kSingle ? "single" : "double") << "\n";
    return os.str();
}

DetectorConfig detector_config_from_text(const std::string& text) {
    DetectorConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw numeric_error("bad config line '" + line + "'");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "head_style")
            cfg.head_style = val == "anchor-based" ? HeadStyle::kAnchorBased : HeadStyle::kAnchorFree;
        else if (key == "input_size")
            cfg.input_size = std::stoll(val);
        else if (key == "stride")
            cfg.stride = std::stoll(val);
        else if (key == "anchor_size")
            cfg.anchor_size = std::stod(val);
        else if (key == "trunk_channels") {
            cfg.trunk_channels.clear();
            std::istringstream vs(val);
            std::string tok;
            while (std::getline(vs, tok, ',')) cfg.trunk_channels.push_back(std::stoll(tok));
        } else if (key == "shared_trunk")
            cfg.shared_trunk = val == "1" || val == "true";
        else if (key == "frozen_prefix_layers")
            cfg.frozen_prefix_layers = std::stoll(val);
        else if (key == "precision")
            cfg.precision = val == "single" ? Precision::kSingle : Precision::kDouble;
        else
            throw numeric_error("unknown detector config key '" + key + "'");
    }
    return cfg;
}

void save_checkpoint(const std::string& path, const DetectorConfig& cfg, const ParamSet& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw numeric_error("cannot open '" + path + "' for writing");
    os << detector_config_to_text(cfg) << "\n";
    for (const auto& name : params.names()) {
        const ParamEntry& e = params.at(name);
        write_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        char tr = e.trainable ? 1 : 0;
        os.write(&tr, 1);
        write_tensor(os, e.weight);
        if (e.trainable) write_tensor(os, e.lr);
    }
}

std::pair<DetectorConfig, ParamSet> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw numeric_error("cannot open '" + path + "' for reading");
    std::string text, line;
    while (std::getline(is, line) && !line.empty()) text += line + "\n";
    DetectorConfig cfg = detector_config_from_text(text);
    ParamSet params;
    while (is.peek() != EOF && is) {
        uint64_t len = read_u64(is);
        std::string name(len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(len));
        char tr;
        is.read(&tr, 1);
        if (!is) throw numeric_error("checkpoint truncated");
        Tensor w = read_tensor(is);
        params.add(name, std::move(w), tr != 0, 0.0);
        if (tr != 0) params.at(name).lr = read_tensor(is);
        is.peek();
    }
    return {cfg, params};
}

}  // namespace metadet
