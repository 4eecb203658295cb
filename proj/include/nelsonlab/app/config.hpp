// Flat key/value run configuration with a fixed schema.
//
//   # comment
//   [model]
//   g = 0.05          -> key "model.g"
//
// Unknown keys, malformed values and duplicate keys are ConfigErrors.
#pragma once

#include "nelsonlab/fock.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace nelsonlab::app {

enum class KeyType { integer, real, boolean, text, real_list, choice };

struct KeySpec {
    std::string name;
    KeyType type;
    std::string fallback;
    std::string help;
    std::vector<std::string> choices = {}; // KeyType::choice only
};

const std::vector<KeySpec>& config_schema();

class RunConfig {
public:
    RunConfig(); // all defaults

    static RunConfig parse(std::string_view text, const std::string& origin = "<string>");
    static RunConfig load(const std::filesystem::path& path);

    // Validated assignment; value is normalized (e.g. "1e-1" -> "0.1").
    void set(const std::string& key, const std::string& value);

    long get_int(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    const std::string& get_text(const std::string& key) const;
    std::vector<double> get_list(const std::string& key) const;

    // "key = value" lines for every schema key, sorted by key.
    std::string canonical() const;
    // FNV-1a of canonical(), 16 hex digits.
    std::string hash() const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    const KeySpec& spec(const std::string& key) const;
    std::map<std::string, std::string> values_;
};

} // namespace nelsonlab::app
