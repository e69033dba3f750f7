#include "pubvec/textproc.hpp"

namespace pubvec::textproc {

namespace {

bool is_token_char(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

char lower(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c); }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    const std::size_t n = text.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_token_char(c)) {
            current.push_back(lower(c));
        } else if (c == '-' && !current.empty() && i + 1 < n &&
                   is_token_char(static_cast<unsigned char>(text[i + 1]))) {
            current.push_back('-');
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::size_t char_count(std::string_view token) {
    std::size_t count = 0;
    for (char ch : token) {
        // Count every byte that is not a UTF-8 continuation byte.
        if ((static_cast<unsigned char>(ch) & 0xC0) != 0x80) ++count;
    }
    return count;
}

std::size_t effective_char_length(std::span<const std::string> tokens, const StopwordList& stopwords) {
    std::size_t total = 0;
    for (const auto& token : tokens) {
        if (!stopwords.contains(token)) total += char_count(token);
    }
    return total;
}

}  // namespace pubvec::textproc
