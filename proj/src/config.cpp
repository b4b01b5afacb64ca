#include "livseg/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "livseg/error.hpp"

namespace livseg {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

} // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
    KeyValueConfig cfg;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) {
            throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(line_no) + ": empty key");
        }
        if (!cfg.values_.emplace(key, value).second) {
            throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::IoFailure, "cannot open config '" + path.string() + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::optional<std::string> KeyValueConfig::get_string(const std::string &key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::optional<double> KeyValueConfig::get_double(const std::string &key) const {
    const auto s = get_string(key);
    if (!s) return std::nullopt;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), value);
    if (ec != std::errc{} || ptr != s->data() + s->size()) {
        throw Error(ErrorKind::InvalidConfig, "'" + key + "' is not a number: '" + *s + "'");
    }
    return value;
}

std::optional<long long> KeyValueConfig::get_int(const std::string &key) const {
    const auto s = get_string(key);
    if (!s) return std::nullopt;
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), value);
    if (ec != std::errc{} || ptr != s->data() + s->size()) {
        throw Error(ErrorKind::InvalidConfig, "'" + key + "' is not an integer: '" + *s + "'");
    }
    return value;
}

void KeyValueConfig::require_known(const std::set<std::string> &known) const {
    for (const auto &[key, value] : values_) {
        if (known.count(key) == 0) {
            throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "'");
        }
    }
}

} // namespace livseg
