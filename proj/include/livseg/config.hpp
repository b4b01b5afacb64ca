#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace livseg {

// Plain-text key=value settings shared by the preprocessing and scheduler
// front ends. '#' starts a comment, blank lines are skipped, keys and values
// are whitespace-trimmed. A repeated key is an error.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text);
    static KeyValueConfig load(const std::filesystem::path &path);

    void set(const std::string &key, const std::string &value) { values_[key] = value; }
    bool contains(const std::string &key) const { return values_.count(key) != 0; }

    std::optional<std::string> get_string(const std::string &key) const;
    std::optional<double> get_double(const std::string &key) const;
    std::optional<long long> get_int(const std::string &key) const;

    // Throws InvalidConfig naming the first key outside `known`.
    void require_known(const std::set<std::string> &known) const;

    const std::map<std::string, std::string> &values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace livseg
