#include "creff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "creff/errors.hpp"

namespace creff {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'F', 'F'};
constexpr std::uint16_t kVersion = 1;

enum Section : std::uint32_t {
    kConfigEcho = 1,
    kGlobalModel = 2,
    kRetrainedClassifier = 3,
    kFeatureBank = 4,
    kRandomState = 5,
    kRoundIndex = 6,
};

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_matrix(std::string& out, const Matrix& m) {
    put_u64(out, m.rows);
    put_u64(out, m.cols);
    for (double x : m.data) put_f64(out, x);
}

struct Cursor {
    const std::string& buf;
    std::size_t pos = 0;
    std::string where;

    void need(std::size_t n, const char* what) {
        if (pos + n > buf.size()) {
            throw TruncatedError(where + ": file ends inside " + what);
        }
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= std::uint16_t(std::uint8_t(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos++])) << (8 * i);
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    Matrix matrix(const char* what) {
        const std::uint64_t rows = u64(what);
        const std::uint64_t cols = u64(what);
        const std::uint64_t remaining = buf.size() - pos;
        if (cols != 0 && rows > remaining / 8 / cols) {
            throw TruncatedError(where + ": file ends inside " + what);
        }
        Matrix m(rows, cols);
        for (double& x : m.data) x = f64(what);
        return m;
    }
};

std::string encode_model(const ModelParams& model) {
    std::string out;
    put_u64(out, model.extractor.size());
    for (const ExtractorLayer& layer : model.extractor) {
        out.push_back(layer.act == Activation::relu ? char{1} : char{0});
        put_matrix(out, layer.weight);
    }
    put_matrix(out, model.classifier);
    return out;
}

ModelParams decode_model(Cursor& c) {
    ModelParams model;
    const std::uint64_t layers = c.u64("model layer count");
    for (std::uint64_t l = 0; l < layers; ++l) {
        c.need(1, "model activation tag");
        const char act = c.buf[c.pos++];
        model.extractor.push_back(
            {c.matrix("model layer weights"), act ? Activation::relu : Activation::identity});
    }
    model.classifier = c.matrix("model classifier");
    return model;
}

std::string encode_bank(const FeatureBank& bank) {
    std::string out;
    put_u64(out, bank.num_classes());
    put_u64(out, bank.features_per_class);
    put_u64(out, bank.feature_dim());
    for (const Matrix& block : bank.features) {
        for (double x : block.data) put_f64(out, x);
    }
    return out;
}

FeatureBank decode_bank(Cursor& c) {
    FeatureBank bank;
    const std::uint64_t classes = c.u64("bank class count");
    bank.features_per_class = c.u64("bank feature count");
    const std::uint64_t dim = c.u64("bank feature dim");
    const std::uint64_t remaining = c.buf.size() - c.pos;
    if (classes != 0 && dim != 0 &&
        bank.features_per_class > remaining / 8 / dim / classes) {
        throw TruncatedError(c.where + ": file ends inside bank features");
    }
    for (std::uint64_t k = 0; k < classes; ++k) {
        Matrix block(bank.features_per_class, dim);
        for (double& x : block.data) x = c.f64("bank features");
        bank.features.push_back(std::move(block));
    }
    return bank;
}

void put_section(std::string& out, std::uint32_t tag, const std::string& payload) {
    put_u32(out, tag);
    put_u64(out, payload.size());
    out += payload;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& state) {
    std::string out(kMagic, sizeof kMagic);
    put_u16(out, kVersion);

    std::string echo;
    for (const auto& [key, value] : state.config_echo) {
        echo += key;
        echo += " = ";
        echo += value;
        echo += '\n';
    }
    put_section(out, kConfigEcho, echo);
    put_section(out, kGlobalModel, encode_model(state.global));
    {
        std::string payload;
        put_matrix(payload, state.retrained_classifier);
        put_section(out, kRetrainedClassifier, payload);
    }
    put_section(out, kFeatureBank, encode_bank(state.bank));
    {
        std::string payload;
        put_u64(payload, state.master_seed);
        put_section(out, kRandomState, payload);
    }
    {
        std::string payload;
        put_u64(payload, state.next_round);
        put_section(out, kRoundIndex, payload);
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw ParseError("checkpoint: cannot open '" + path + "' for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw ParseError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ParseError("checkpoint: cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << file.rdbuf();
    const std::string buf = buffer.str();

    Cursor c{buf, 0, "checkpoint '" + path + "'"};
    c.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw BadMagicError(c.where + ": magic '" + buf.substr(0, 4) + "', expected 'CRFF'");
    }
    c.pos = 4;
    const std::uint16_t version = c.u16("format version");
    if (version != kVersion) {
        throw VersionError(c.where + ": format version " + std::to_string(version) +
                           ", this build reads version " + std::to_string(kVersion));
    }

    Checkpoint state;
    bool have_model = false, have_classifier = false, have_seed = false, have_round = false;
    while (c.pos < buf.size()) {
        const std::uint32_t tag = c.u32("section tag");
        const std::uint64_t len = c.u64("section length");
        c.need(len, "section payload");
        Cursor section{buf, c.pos, c.where + " section " + std::to_string(tag)};
        const std::size_t end = c.pos + len;
        switch (tag) {
            case kConfigEcho: {
                std::stringstream ss(buf.substr(section.pos, len));
                std::string line;
                while (std::getline(ss, line)) {
                    const auto eq = line.find(" = ");
                    if (eq == std::string::npos) continue;
                    state.config_echo.emplace_back(line.substr(0, eq), line.substr(eq + 3));
                }
                break;
            }
            case kGlobalModel:
                state.global = decode_model(section);
                have_model = true;
                break;
            case kRetrainedClassifier:
                state.retrained_classifier = section.matrix("re-trained classifier");
                have_classifier = true;
                break;
            case kFeatureBank:
                state.bank = decode_bank(section);
                break;
            case kRandomState:
                state.master_seed = section.u64("master seed");
                have_seed = true;
                break;
            case kRoundIndex:
                state.next_round = section.u64("round index");
                have_round = true;
                break;
            default:
                break;  // future sections: skip
        }
        c.pos = end;
    }
    if (!have_model || !have_classifier || !have_seed || !have_round) {
        throw TruncatedError(c.where + ": missing required sections");
    }
    return state;
}

}  // namespace creff
