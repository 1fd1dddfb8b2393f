#include "visage/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "visage/digest.hpp"
#include "visage/errors.hpp"

namespace visage {

using json = nlohmann::json;

struct Config::Impl {
    json root = json::object();
};

namespace {

std::vector<std::string> split_key(const std::string& key) {
    if (key.empty()) throw InvalidArgument("config: empty key");
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(key);
    while (std::getline(in, part, '.')) {
        if (part.empty()) throw InvalidArgument("config: malformed key '" + key + "'");
        parts.push_back(part);
    }
    return parts;
}

const json* find_node(const json& root, const std::string& key) {
    const json* cur = &root;
    for (const auto& part : split_key(key)) {
        if (!cur->is_object()) return nullptr;
        auto it = cur->find(part);
        if (it == cur->end()) return nullptr;
        cur = &*it;
    }
    return cur;
}

json& ensure_node(json& root, const std::string& key) {
    json* cur = &root;
    for (const auto& part : split_key(key)) {
        if (cur->is_null()) *cur = json::object();  // grow fresh intermediate nodes
        if (!cur->is_object())
            throw ConfigConflict("config: key '" + key + "' descends through a non-object value");
        cur = &(*cur)[part];
    }
    return *cur;
}

[[noreturn]] void type_error(const std::string& key, const char* want, const json& got) {
    throw InvalidArgument("config: key '" + key + "' is not " + want + " (found " +
                          std::string(got.type_name()) + ")");
}

const json& require(const Config::Impl& impl, const std::string& key) {
    const json* node = find_node(impl.root, key);
    if (!node) throw NotFound("config: missing key '" + key + "'");
    return *node;
}

void deep_merge(json& dst, const json& src) {
    if (!dst.is_object() || !src.is_object()) {
        dst = src;
        return;
    }
    for (auto it = src.begin(); it != src.end(); ++it) {
        if (dst.contains(it.key()) && dst[it.key()].is_object() && it.value().is_object())
            deep_merge(dst[it.key()], it.value());
        else
            dst[it.key()] = it.value();
    }
}

}  // namespace

Config::Config() : impl_(std::make_unique<Impl>()) {}
Config::Config(const Config& other) : impl_(std::make_unique<Impl>(*other.impl_)) {}
Config& Config::operator=(const Config& other) {
    if (this != &other) *impl_ = *other.impl_;
    return *this;
}
Config::Config(Config&& other) noexcept = default;
Config& Config::operator=(Config&& other) noexcept = default;
Config::~Config() = default;

Config Config::from_json_text(const std::string& text) {
    Config c;
    try {
        c.impl_->root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what(), 1);
    }
    if (!c.impl_->root.is_object()) throw InvalidArgument("config: top level must be an object");
    return c;
}

Config Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return from_json_text(buf.str());
    } catch (const ParseError& e) {
        throw ParseError("config: failed to parse " + path + ": " + e.what(), e.line);
    }
}

void Config::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("config: cannot write " + path);
    out << dump() << "\n";
    if (!out) throw IoError("config: write failed for " + path);
}

std::string Config::dump() const {
    // nlohmann's default json keeps object keys sorted, so this is canonical.
    return impl_->root.dump(2);
}

bool Config::has(const std::string& key) const { return find_node(impl_->root, key) != nullptr; }

int Config::get_int(const std::string& key) const {
    const json& n = require(*impl_, key);
    if (!n.is_number_integer()) type_error(key, "an integer", n);
    return n.get<int>();
}
int Config::get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double Config::get_double(const std::string& key) const {
    const json& n = require(*impl_, key);
    if (!n.is_number()) type_error(key, "a number", n);
    return n.get<double>();
}
double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
    const json& n = require(*impl_, key);
    if (!n.is_boolean()) type_error(key, "a boolean", n);
    return n.get<bool>();
}
bool Config::get_bool(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

std::string Config::get_string(const std::string& key) const {
    const json& n = require(*impl_, key);
    if (!n.is_string()) type_error(key, "a string", n);
    return n.get<std::string>();
}
std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    const json& n = require(*impl_, key);
    if (!n.is_array()) type_error(key, "an array", n);
    std::vector<int> out;
    for (const auto& v : n) {
        if (!v.is_number_integer()) type_error(key, "an integer array", n);
        out.push_back(v.get<int>());
    }
    return out;
}

std::vector<int> Config::get_int_list(const std::string& key,
                                      const std::vector<int>& fallback) const {
    if (!has(key)) return fallback;
    return get_int_list(key);
}

std::vector<double> Config::get_double_list(const std::string& key) const {
    const json& n = require(*impl_, key);
    if (!n.is_array()) type_error(key, "a number array", n);
    std::vector<double> out;
    for (const auto& v : n) {
        if (!v.is_number()) type_error(key, "a number array", n);
        out.push_back(v.get<double>());
    }
    return out;
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    return get_double_list(key);
}

void Config::set_int(const std::string& key, long long value) {
    ensure_node(impl_->root, key) = value;
}
void Config::set_double(const std::string& key, double value) {
    ensure_node(impl_->root, key) = value;
}
void Config::set_bool(const std::string& key, bool value) {
    ensure_node(impl_->root, key) = value;
}
void Config::set_string(const std::string& key, const std::string& value) {
    ensure_node(impl_->root, key) = value;
}
void Config::set_int_list(const std::string& key, const std::vector<int>& value) {
    ensure_node(impl_->root, key) = value;
}

void Config::set_from_text(const std::string& key, const std::string& text) {
    json parsed = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded() || parsed.is_object())
        ensure_node(impl_->root, key) = text;  // treat as plain string
    else
        ensure_node(impl_->root, key) = parsed;
}

void Config::merge_from(const Config& other) { deep_merge(impl_->root, other.impl_->root); }

std::string Config::digest() const { return digest_hex(fnv1a64(dump())); }

}  // namespace visage
