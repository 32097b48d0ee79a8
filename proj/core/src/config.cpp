#include "creff/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "creff/errors.hpp"

namespace creff {

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

const char* method_name(Method m) {
    switch (m) {
        case Method::fedavg: return "fedavg";
        case Method::fedprox: return "fedprox";
        case Method::taunorm: return "taunorm";
        case Method::creff: return "creff";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    if (name == "fedavg") return Method::fedavg;
    if (name == "fedprox") return Method::fedprox;
    if (name == "taunorm") return Method::taunorm;
    if (name == "creff") return Method::creff;
    throw ConfigError("method", "expected fedavg|fedprox|taunorm|creff (got '" + name + "')");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

ExperimentConfig preset_values(const std::string& name) {
    if (name == "desk_scale") return ExperimentConfig{};  // the defaults
    if (name == "paper") {
        // Full-size protocol settings; the data world stays synthetic.
        ExperimentConfig cfg;
        cfg.preset = "paper";
        cfg.T = 200;
        cfg.n_max = 5000;
        cfg.m = 100;
        cfg.I = 100;
        cfg.J = 300;
        cfg.test_per_class = 500;
        return cfg;
    }
    throw ConfigError("preset", "expected desk_scale|paper (got '" + name + "')");
}

std::uint64_t parse_count(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) {
        throw ConfigError(key, "expected a non-negative integer (got '" + value + "')");
    }
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double out = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key, "expected a real number (got '" + value + "')");
    }
}

std::vector<std::size_t> parse_count_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    if (trim(value).empty()) return out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(static_cast<std::size_t>(parse_count(key, trim(item))));
    }
    return out;
}

GroupThresholds parse_thresholds(const std::string& value) {
    if (value == "imagenet-lt") return GroupThresholds::imagenet_lt();
    if (value == "cifar-lt-fig3") return GroupThresholds::cifar_lt_fig3();
    const auto comma = value.find(',');
    if (comma != std::string::npos) {
        GroupThresholds th;
        th.many_above =
            static_cast<std::size_t>(parse_count("group_thresholds", trim(value.substr(0, comma))));
        th.few_below = static_cast<std::size_t>(
            parse_count("group_thresholds", trim(value.substr(comma + 1))));
        return th;
    }
    throw ConfigError("group_thresholds",
                      "expected imagenet-lt|cifar-lt-fig3|\"hi,lo\" (got '" + value + "')");
}

void apply_pair(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "preset") return;  // handled up front
    if (key == "method") { cfg.method = parse_method(value); return; }
    if (key == "data_source") {
        if (value != "synthetic" && value != "idx") {
            throw ConfigError(key, "expected synthetic|idx (got '" + value + "')");
        }
        cfg.data_source = value;
        return;
    }
    if (key == "train_images") { cfg.train_images = value; return; }
    if (key == "train_labels") { cfg.train_labels = value; return; }
    if (key == "test_images") { cfg.test_images = value; return; }
    if (key == "test_labels") { cfg.test_labels = value; return; }
    if (key == "C") { cfg.C = parse_count(key, value); return; }
    if (key == "input_dim") { cfg.input_dim = parse_count(key, value); return; }
    if (key == "n_max") { cfg.n_max = parse_count(key, value); return; }
    if (key == "IF") { cfg.IF = parse_real(key, value); return; }
    if (key == "alpha") { cfg.alpha = parse_real(key, value); return; }
    if (key == "separation") { cfg.separation = parse_real(key, value); return; }
    if (key == "noise_sigma") { cfg.noise_sigma = parse_real(key, value); return; }
    if (key == "test_per_class") { cfg.test_per_class = parse_count(key, value); return; }
    if (key == "K") { cfg.K = parse_count(key, value); return; }
    if (key == "client_ratio") { cfg.client_ratio = parse_real(key, value); return; }
    if (key == "T") { cfg.T = parse_count(key, value); return; }
    if (key == "hidden") { cfg.hidden = parse_count_list(key, value); return; }
    if (key == "d") { cfg.d = parse_count(key, value); return; }
    if (key == "lr_local") { cfg.lr_local = parse_real(key, value); return; }
    if (key == "batch_size") { cfg.batch_size = parse_count(key, value); return; }
    if (key == "local_epochs") { cfg.local_epochs = parse_count(key, value); return; }
    if (key == "mu") { cfg.mu = parse_real(key, value); return; }
    if (key == "tau") { cfg.tau = parse_real(key, value); return; }
    if (key == "m") { cfg.m = parse_count(key, value); return; }
    if (key == "I") { cfg.I = parse_count(key, value); return; }
    if (key == "J") { cfg.J = parse_count(key, value); return; }
    if (key == "lr_feature") { cfg.lr_feature = parse_real(key, value); return; }
    if (key == "lr_retrain") { cfg.lr_retrain = parse_real(key, value); return; }
    if (key == "retrain_init") {
        if (value == "warm") cfg.retrain_init = RetrainInit::warm;
        else if (value == "random") cfg.retrain_init = RetrainInit::random;
        else throw ConfigError(key, "expected warm|random (got '" + value + "')");
        return;
    }
    if (key == "master_seed") { cfg.master_seed = parse_count(key, value); return; }
    if (key == "group_thresholds") { cfg.thresholds = parse_thresholds(value); return; }
    if (key == "out_dir") { cfg.out_dir = value; return; }
    if (key == "checkpoint_every") { cfg.checkpoint_every = parse_count(key, value); return; }
    if (key == "threads") { cfg.threads = parse_count(key, value); return; }
    if (key == "stop_after_round") { cfg.stop_after_round = parse_count(key, value); return; }
    throw ConfigError(key, "unknown key");
}

std::vector<std::pair<std::string, std::string>> split_pairs(const std::string& text,
                                                             const char* where) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(std::string(where) + " line " + std::to_string(lineno),
                              "expected 'key = value' (got '" + line + "')");
        }
        pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return pairs;
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
    auto require = [](bool ok, const char* key, const std::string& what) {
        if (!ok) throw ConfigError(key, what);
    };
    require(cfg.C >= 2, "C", "must be >= 2 (got " + std::to_string(cfg.C) + ")");
    require(cfg.input_dim >= 1, "input_dim", "must be >= 1");
    require(cfg.n_max >= 1, "n_max", "must be >= 1");
    require(cfg.IF >= 1.0, "IF", "must be >= 1 (got " + format_double(cfg.IF) + ")");
    require(static_cast<double>(cfg.n_max) >= cfg.IF, "n_max",
            "must be >= IF so the smallest class keeps a sample");
    require(cfg.alpha > 0.0, "alpha", "must be > 0");
    require(cfg.separation > 0.0, "separation", "must be > 0");
    require(cfg.noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
    require(cfg.test_per_class >= 1, "test_per_class", "must be >= 1");
    require(cfg.K >= 1, "K", "must be >= 1");
    require(cfg.client_ratio > 0.0 && cfg.client_ratio <= 1.0, "client_ratio",
            "must be in (0,1] (got " + format_double(cfg.client_ratio) + ")");
    require(cfg.d >= 1, "d", "must be >= 1");
    for (std::size_t h : cfg.hidden) require(h >= 1, "hidden", "layer sizes must be >= 1");
    require(cfg.lr_local > 0.0, "lr_local", "must be > 0");
    require(cfg.batch_size >= 1, "batch_size", "must be >= 1");
    require(cfg.mu >= 0.0, "mu", "must be >= 0");
    require(cfg.tau >= 0.0, "tau", "must be >= 0");
    require(cfg.lr_feature > 0.0, "lr_feature", "must be > 0");
    require(cfg.lr_retrain > 0.0, "lr_retrain", "must be > 0");
    require(cfg.thresholds.many_above > cfg.thresholds.few_below, "group_thresholds",
            "needs hi > lo");
    require(cfg.thresholds.few_below > 0, "group_thresholds", "needs lo > 0");
    require(cfg.threads >= 1, "threads", "must be >= 1");
    if (cfg.data_source == "idx") {
        require(!cfg.train_images.empty(), "train_images", "required when data_source = idx");
        require(!cfg.train_labels.empty(), "train_labels", "required when data_source = idx");
        require(!cfg.test_images.empty(), "test_images", "required when data_source = idx");
        require(!cfg.test_labels.empty(), "test_labels", "required when data_source = idx");
    }
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides) {
    auto pairs = split_pairs(text, "config");
    for (const std::string& item : overrides) {
        auto extra = split_pairs(item, "override");
        pairs.insert(pairs.end(), extra.begin(), extra.end());
    }

    // The last preset assignment decides the base everything else lands on.
    std::string preset = "desk_scale";
    for (const auto& [key, value] : pairs) {
        if (key == "preset") preset = value;
    }
    ExperimentConfig cfg = preset_values(preset);
    cfg.preset = preset;
    for (const auto& [key, value] : pairs) apply_pair(cfg, key, value);
    validate_config(cfg);
    return cfg;
}

ExperimentConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::string text;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config", "cannot open '" + path + "'");
        std::stringstream buffer;
        buffer << in.rdbuf();
        text = buffer.str();
    }
    return parse_config_text(text, overrides);
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> echo;
    auto put = [&](const char* key, const std::string& value) { echo.emplace_back(key, value); };
    auto put_n = [&](const char* key, std::size_t value) { put(key, std::to_string(value)); };
    auto put_r = [&](const char* key, double value) { put(key, format_double(value)); };

    put("method", method_name(cfg.method));
    put("data_source", cfg.data_source);
    if (cfg.data_source == "idx") {
        put("train_images", cfg.train_images);
        put("train_labels", cfg.train_labels);
        put("test_images", cfg.test_images);
        put("test_labels", cfg.test_labels);
    }
    put_n("C", cfg.C);
    put_n("input_dim", cfg.input_dim);
    put_n("n_max", cfg.n_max);
    put_r("IF", cfg.IF);
    put_r("alpha", cfg.alpha);
    put_r("separation", cfg.separation);
    put_r("noise_sigma", cfg.noise_sigma);
    put_n("test_per_class", cfg.test_per_class);
    put_n("K", cfg.K);
    put_r("client_ratio", cfg.client_ratio);
    put_n("T", cfg.T);
    std::string hidden;
    for (std::size_t h : cfg.hidden) {
        if (!hidden.empty()) hidden += ',';
        hidden += std::to_string(h);
    }
    put("hidden", hidden);
    put_n("d", cfg.d);
    put_r("lr_local", cfg.lr_local);
    put_n("batch_size", cfg.batch_size);
    put_n("local_epochs", cfg.local_epochs);
    put_r("mu", cfg.mu);
    put_r("tau", cfg.tau);
    put_n("m", cfg.m);
    put_n("I", cfg.I);
    put_n("J", cfg.J);
    put_r("lr_feature", cfg.lr_feature);
    put_r("lr_retrain", cfg.lr_retrain);
    put("retrain_init", cfg.retrain_init == RetrainInit::warm ? "warm" : "random");
    put_n("master_seed", cfg.master_seed);
    put("group_thresholds", std::to_string(cfg.thresholds.many_above) + "," +
                                std::to_string(cfg.thresholds.few_below));
    return echo;
}

}  // namespace creff
