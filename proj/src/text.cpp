// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/text.hpp"

#include "dermtrace/error.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace dermtrace {

namespace {

bool is_word_byte(unsigned char c) noexcept
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

} // namespace

const char* to_string(TransportFailure f) noexcept
{
    switch (f) {
    case TransportFailure::connection: return "connection";
    case TransportFailure::timeout: return "timeout";
    case TransportFailure::status: return "status";
    case TransportFailure::malformed: return "malformed";
    }
    return "unknown";
}

std::string casefold(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
        return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
    });
    return out;
}

std::string trim(std::string_view s)
{
    auto is_space = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> tokenize(std::string_view s)
{
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : s) {
        auto c = static_cast<unsigned char>(ch);
        if (is_word_byte(c)) {
            cur.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty())
        tokens.push_back(std::move(cur));
    return tokens;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i)
            out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

bool contains_casefolded(std::string_view haystack, std::string_view needle)
{
    return casefold(haystack).find(casefold(needle)) != std::string::npos;
}

std::uint64_t fnv1a64(std::string_view s) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string sha256_hex(std::string_view data)
{
    std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest.data());
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(digest.size() * 2);
    for (unsigned char b : digest) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xf]);
    }
    return out;
}

std::string base64_encode(std::string_view bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(bytes.data()),
                            static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(std::string_view text)
{
    if (text.size() % 4 != 0)
        throw ParseError("base64 input length is not a multiple of 4", std::string(text));
    std::string out(3 * (text.size() / 4), '\0');
    int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(text.data()),
                            static_cast<int>(text.size()));
    if (n < 0)
        throw ParseError("invalid base64 input", std::string(text));
    // EVP_DecodeBlock does not account for padding.
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=')
        ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=')
        ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw Error("short write to " + path.string());
}

namespace {

// End index (exclusive) of the balanced block opening at `start`, honouring
// JSON string escapes; npos when unbalanced.
std::size_t match_block(std::string_view text, std::size_t start)
{
    std::vector<char> stack;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        switch (c) {
        case '"': in_string = true; break;
        case '[': stack.push_back(']'); break;
        case '{': stack.push_back('}'); break;
        case ']':
        case '}':
            if (stack.empty() || stack.back() != c)
                return std::string_view::npos;
            stack.pop_back();
            if (stack.empty())
                return i + 1;
            break;
        default: break;
        }
    }
    return std::string_view::npos;
}

} // namespace

std::optional<json> find_json_block(std::string_view text, const std::function<bool(const json&)>& accept)
{
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '[' && text[i] != '{')
            continue;
        auto end = match_block(text, i);
        if (end == std::string_view::npos)
            continue;
        auto parsed = json::parse(text.substr(i, end - i), nullptr, false);
        if (!parsed.is_discarded() && accept(parsed))
            return parsed;
    }
    return std::nullopt;
}

void for_each_jsonl_text(std::string_view text, const std::string& origin,
                         const std::function<void(std::size_t, const json&)>& fn)
{
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++line_no;
        if (!trim(line).empty()) {
            json record;
            try {
                record = json::parse(line);
            } catch (const json::parse_error& e) {
                throw ParseError(origin + ":" + std::to_string(line_no) + ": malformed record: " + e.what(),
                                 std::string(line));
            }
            fn(line_no, record);
        }
        if (nl == std::string_view::npos)
            break;
        pos = nl + 1;
    }
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn)
{
    auto text = read_file(path);
    for_each_jsonl_text(text, path.string(), fn);
}

} // namespace dermtrace
