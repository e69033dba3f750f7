#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace pubvec::textproc {

/// Splits text into lowercase tokens. A token is a maximal run of ASCII
/// letters, digits and non-ASCII bytes (kept verbatim so UTF-8 letters such
/// as Greek symbols stay inside words). A hyphen is kept only when both of
/// its neighbours are token characters ("il-6", but not "-6" or "a--b").
std::vector<std::string> tokenize(std::string_view text);

/// Porter (1980) stemmer, following Martin Porter's reference C
/// implementation, including its two published departures
/// ("bli" -> "ble" and "logi" -> "log" in step 2). Input must be lowercase.
std::string porter_stem(std::string_view word);

/// Set of lowercase stopwords.
class StopwordList {
public:
    StopwordList() = default;

    /// Throws ValidationError on an empty or non-lowercase entry.
    explicit StopwordList(std::vector<std::string> words);

    /// The vendored English list shipped with the library.
    static const StopwordList& english();

    /// One token per line; blank lines and lines starting with '#' ignored.
    static StopwordList load(const std::filesystem::path& path);

    bool contains(std::string_view token) const;
    std::size_t size() const { return words_.size(); }
    bool empty() const { return words_.empty(); }

    /// Sorted entries.
    std::vector<std::string> sorted() const;

    /// FNV-1a 64 over the sorted entries joined by '\n'. Pins the list used
    /// for a run.
    std::uint64_t fingerprint() const;

private:
    std::unordered_set<std::string> words_;
};

/// Number of UTF-8 code points in a token.
std::size_t char_count(std::string_view token);

/// Sum of character counts of the tokens that are not stopwords.
std::size_t effective_char_length(std::span<const std::string> tokens, const StopwordList& stopwords);

}  // namespace pubvec::textproc
