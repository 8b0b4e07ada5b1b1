#include "hmatch/config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <variant>

#include "json.hpp"

#include "hmatch/errors.hpp"

namespace hmatch {
namespace {

using Value = std::variant<bool, std::int64_t, double, std::string>;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

Value parse_scalar(const std::string& raw, int line_no) {
    auto fail = [&](const char* why) {
        throw ConfigError("config line " + std::to_string(line_no) + ": " + why + ": " + raw);
    };
    if (raw.empty()) fail("empty value");
    if (raw == "true") return true;
    if (raw == "false") return false;
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"') fail("unterminated string");
        const std::string body = raw.substr(1, raw.size() - 2);
        if (body.find('"') != std::string::npos) fail("embedded quote in string");
        return body;
    }
    std::int64_t iv = 0;
    auto [ip, iec] = std::from_chars(raw.data(), raw.data() + raw.size(), iv);
    if (iec == std::errc() && ip == raw.data() + raw.size()) return iv;
    double dv = 0.0;
    auto [dp, dec] = std::from_chars(raw.data(), raw.data() + raw.size(), dv);
    if (dec == std::errc() && dp == raw.data() + raw.size()) return dv;
    fail("unrecognized value");
    return Value{};
}

// Minimal flat TOML subset: `key = value` lines, `#` comments, no sections,
// no arrays. Enough for the documented experiment schema, strict about the
// rest.
std::vector<std::pair<std::string, Value>> parse_toml(std::istream& in) {
    std::vector<std::pair<std::string, Value>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // strip comments, respecting quoted strings
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": sections are not supported; the schema is flat");
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        out.emplace_back(key, parse_scalar(trim(t.substr(eq + 1)), line_no));
    }
    return out;
}

std::vector<std::pair<std::string, Value>> parse_json(std::istream& in, const std::string& path) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config " + path + ": top level must be an object");
    std::vector<std::pair<std::string, Value>> out;
    for (const auto& [key, v] : j.items()) {
        if (v.is_boolean()) {
            out.emplace_back(key, v.get<bool>());
        } else if (v.is_number_integer() || v.is_number_unsigned()) {
            out.emplace_back(key, v.get<std::int64_t>());
        } else if (v.is_number_float()) {
            out.emplace_back(key, v.get<double>());
        } else if (v.is_string()) {
            out.emplace_back(key, v.get<std::string>());
        } else {
            throw ConfigError("config " + path + ": key " + key + " has an unsupported type");
        }
    }
    return out;
}

struct Applier {
    const std::string& key;
    const Value& value;

    [[noreturn]] void type_error(const char* want) const {
        throw ConfigError("config key " + key + ": expected " + want);
    }

    int as_int() const {
        if (const auto* p = std::get_if<std::int64_t>(&value)) {
            if (*p < INT32_MIN || *p > INT32_MAX) type_error("a 32-bit integer");
            return static_cast<int>(*p);
        }
        type_error("an integer");
    }
    std::uint64_t as_u64() const {
        if (const auto* p = std::get_if<std::int64_t>(&value)) {
            if (*p < 0) type_error("a nonnegative integer");
            return static_cast<std::uint64_t>(*p);
        }
        type_error("an integer");
    }
    double as_double() const {
        if (const auto* p = std::get_if<double>(&value)) return *p;
        if (const auto* p = std::get_if<std::int64_t>(&value)) return static_cast<double>(*p);
        type_error("a number");
    }
    bool as_bool() const {
        if (const auto* p = std::get_if<bool>(&value)) return *p;
        type_error("a boolean");
    }
    std::string as_string() const {
        if (const auto* p = std::get_if<std::string>(&value)) return *p;
        type_error("a string");
    }
};

void apply_key(ExperimentConfig& c, const std::string& key, const Value& value) {
    const Applier v{key, value};
    if (key == "scheme") {
        c.scheme = scheme_from_name(v.as_string());
        c.hybrid.scheme = c.scheme;
    } else if (key == "seed") {
        c.seed = v.as_u64();
    } else if (key == "data_seed") {
        c.data_seed = v.as_u64();
    } else if (key == "out_dir") {
        c.out_dir = v.as_string();
    } else if (key == "epochs") {
        c.epochs = v.as_int();
    } else if (key == "train_scenes") {
        c.train_scenes = v.as_int();
    } else if (key == "val_scenes") {
        c.val_scenes = v.as_int();
    } else if (key == "num_one2one") {
        c.hybrid.num_one2one = v.as_int();
    } else if (key == "num_one2many") {
        c.hybrid.num_one2many = v.as_int();
    } else if (key == "repeat_branch") {
        c.hybrid.repeat_branch = v.as_int();
    } else if (key == "one2many_weight") {
        c.hybrid.one2many_weight = v.as_double();
    } else if (key == "epoch_fraction") {
        c.hybrid.epoch_fraction = v.as_double();
    } else if (key == "repeat_epoch") {
        c.hybrid.repeat_epoch = v.as_int();
    } else if (key == "repeat_layer") {
        c.hybrid.repeat_layer = v.as_int();
    } else if (key == "layers") {
        c.hybrid.layers = v.as_int();
    } else if (key == "layers_one2many") {
        c.hybrid.layers_one2many = v.as_int();
    } else if (key == "layers_one2one") {
        c.hybrid.layers_one2one = v.as_int();
    } else if (key == "queries_single") {
        c.hybrid.queries_single = v.as_int();
    } else if (key == "dim") {
        c.decoder.dim = v.as_int();
        c.scene.dim = c.decoder.dim;
    } else if (key == "ffn_dim") {
        c.decoder.ffn_dim = v.as_int();
    } else if (key == "num_classes") {
        c.decoder.num_classes = v.as_int();
        c.scene.num_classes = c.decoder.num_classes;
    } else if (key == "share_decoder") {
        c.decoder.share_decoder = v.as_bool();
    } else if (key == "share_heads") {
        c.decoder.share_heads = v.as_bool();
    } else if (key == "m_min") {
        c.scene.m_min = v.as_int();
    } else if (key == "m_max") {
        c.scene.m_max = v.as_int();
    } else if (key == "distractor_count") {
        c.scene.distractor_count = v.as_int();
    } else if (key == "w_cls") {
        c.weights.w_cls = v.as_double();
    } else if (key == "w_l1") {
        c.weights.w_l1 = v.as_double();
    } else if (key == "w_giou") {
        c.weights.w_giou = v.as_double();
    } else if (key == "focal_alpha") {
        c.weights.focal_alpha = v.as_double();
    } else if (key == "focal_gamma") {
        c.weights.focal_gamma = v.as_double();
    } else if (key == "learning_rate") {
        c.opt.learning_rate = v.as_double();
    } else if (key == "momentum") {
        c.opt.momentum = v.as_double();
    } else if (key == "lr_decay") {
        c.opt.lr_decay = v.as_double();
    } else if (key == "nms_iou") {
        c.nms_iou = v.as_double();
    } else if (key == "score_cut") {
        c.score_cut = v.as_double();
    } else {
        throw ConfigError("config: unknown key: " + key);
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    hybrid.validate();
    decoder.validate();
    if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (train_scenes < 1) throw ConfigError("config: train_scenes must be >= 1");
    if (val_scenes < 0) throw ConfigError("config: val_scenes must be >= 0");
    if (!(nms_iou > 0.0 && nms_iou < 1.0)) throw ConfigError("config: nms_iou must lie in (0,1)");
    if (!(score_cut >= 0.0 && score_cut <= 1.0))
        throw ConfigError("config: score_cut must lie in [0,1]");
    if (!(opt.lr_decay > 0.0 && opt.lr_decay <= 1.0))
        throw ConfigError("config: lr_decay must lie in (0,1]");
    if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    c.hybrid.scheme = c.scheme;
    // Desk-scale defaults: two decoder layers, 30 + 150 queries.
    c.hybrid.num_one2one = 30;
    c.hybrid.num_one2many = 150;
    c.hybrid.layers = 2;
    c.scene.dim = c.decoder.dim;
    c.scene.num_classes = c.decoder.num_classes;
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);

    const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
    const auto entries = is_json ? parse_json(in, path) : parse_toml(in);

    ExperimentConfig c = default_experiment_config();
    bool have_scheme = false;
    std::vector<std::string> seen;
    for (const auto& [key, value] : entries) {
        for (const auto& s : seen) {
            if (s == key) throw ConfigError("config: duplicate key: " + key);
        }
        seen.push_back(key);
        apply_key(c, key, value);
        if (key == "scheme") have_scheme = true;
    }
    if (!have_scheme) throw ConfigError("config: missing required field: scheme");
    c.validate();
    return c;
}

}  // namespace hmatch
