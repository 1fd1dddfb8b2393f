#pragma once

#include <memory>
#include <string>
#include <vector>

namespace visage {

// JSON-backed configuration tree addressed by dotted keys ("diffusion.T",
// "guidance.lambda_nq").  The JSON dependency stays behind this interface so
// installed headers do not drag it in.
class Config {
public:
    Config();
    Config(const Config& other);
    Config& operator=(const Config& other);
    Config(Config&& other) noexcept;
    Config& operator=(Config&& other) noexcept;
    ~Config();

    static Config from_json_text(const std::string& text);
    static Config load_file(const std::string& path);
    void save_file(const std::string& path) const;
    // Canonical rendering: keys sorted, fixed indentation.  Two configs with
    // equal dump() are equal configurations.
    std::string dump() const;

    bool has(const std::string& key) const;

    // Typed getters.  The one-argument forms throw NotFound for a missing key
    // and InvalidArgument for a type mismatch; the fallback forms return the
    // fallback only when the key is absent (a wrong type still throws).
    int get_int(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;

    void set_int(const std::string& key, long long value);
    void set_double(const std::string& key, double value);
    void set_bool(const std::string& key, bool value);
    void set_string(const std::string& key, const std::string& value);
    void set_int_list(const std::string& key, const std::vector<int>& value);
    // Parses `text` as JSON if possible (numbers, booleans, arrays), else
    // stores it as a string.  Backs `--set key=value` command-line overrides.
    void set_from_text(const std::string& key, const std::string& text);

    // Deep merge: scalars and arrays from `other` overwrite, objects recurse.
    void merge_from(const Config& other);

    // Stable 16-hex-char digest of the canonical dump.
    std::string digest() const;

    // Defined in config.cpp; public so file-local helpers there can take it by
    // reference, but never part of the installed interface.
    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace visage
