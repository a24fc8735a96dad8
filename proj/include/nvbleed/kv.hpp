#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nvbleed {

// Line-oriented `key = value` documents. `#` starts a comment; keys may repeat.
class KvDocument {
public:
    static KvDocument parse(std::string_view text);

    void add(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }

    std::optional<std::string> get(std::string_view key) const;
    std::vector<std::string> get_all(std::string_view key) const;
    std::string require(std::string_view key) const;
    double number(std::string_view key) const;
    double number_or(std::string_view key, double fallback) const;
    long long integer(std::string_view key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    std::string str() const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);
std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

}  // namespace nvbleed
