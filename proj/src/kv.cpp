#include "nvbleed/kv.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nvbleed/error.hpp"

namespace nvbleed {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view s, std::string_view what) {
    const std::string t = trim(s);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
        fail(ErrorCode::InvalidArgument, "expected a number for " + std::string(what) + ", got '" + t + "'");
    return v;
}

long long parse_int(std::string_view s, std::string_view what) {
    const std::string t = trim(s);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
        fail(ErrorCode::InvalidArgument, "expected an integer for " + std::string(what) + ", got '" + t + "'");
    return v;
}

KvDocument KvDocument::parse(std::string_view text) {
    KvDocument doc;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string t = trim(line);
        if (!t.empty()) {
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                fail(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": expected 'key = value'");
            std::string key = trim(std::string_view(t).substr(0, eq));
            if (key.empty()) fail(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": empty key");
            doc.add(std::move(key), trim(std::string_view(t).substr(eq + 1)));
        }
        start = end + 1;
    }
    return doc;
}

std::optional<std::string> KvDocument::get(std::string_view key) const {
    std::optional<std::string> found;
    for (const auto& [k, v] : entries_)
        if (k == key) found = v;  // last one wins
    return found;
}

std::vector<std::string> KvDocument::get_all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
        if (k == key) out.push_back(v);
    return out;
}

std::string KvDocument::require(std::string_view key) const {
    auto v = get(key);
    if (!v) fail(ErrorCode::InvalidArgument, "missing key '" + std::string(key) + "'");
    return *v;
}

double KvDocument::number(std::string_view key) const { return parse_double(require(key), key); }

double KvDocument::number_or(std::string_view key, double fallback) const {
    auto v = get(key);
    return v ? parse_double(*v, key) : fallback;
}

long long KvDocument::integer(std::string_view key) const { return parse_int(require(key), key); }

std::string KvDocument::str() const {
    std::ostringstream os;
    for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
    return os.str();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, std::string_view content) {
    const std::filesystem::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

}  // namespace nvbleed
