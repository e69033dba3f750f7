#include <algorithm>
#include <fstream>

#include "pubvec/common.hpp"
#include "pubvec/textproc.hpp"

namespace pubvec::textproc {

namespace {

// Mirrors data/stopwords_en.txt; a unit test keeps the two in sync.
constexpr const char* kEnglishStopwords[] = {
    "a", "about", "above", "after", "again", "against", "al", "all", "also", "although", "am", "among",
    "amongst", "an", "and", "another", "any", "are", "as", "at", "be", "because", "been", "before", "being",
    "below", "between", "both", "but", "by", "can", "cannot", "could", "did", "do", "does", "doing", "down",
    "during", "e", "each", "eg", "either", "else", "et", "ever", "every", "few", "for", "from", "further",
    "g", "had", "has", "have", "having", "he", "hence", "her", "here", "herein", "hers", "herself", "him",
    "himself", "his", "how", "however", "i", "ie", "if", "in", "into", "is", "it", "its", "itself", "just",
    "least", "less", "many", "may", "me", "might", "more", "most", "much", "must", "my", "myself", "neither",
    "no", "nor", "not", "now", "of", "off", "often", "on", "once", "only", "onto", "or", "other", "others",
    "our", "ours", "ourselves", "out", "over", "own", "per", "s", "same", "several", "she", "should",
    "since", "so", "some", "such", "t", "than", "that", "the", "their", "theirs", "them", "themselves",
    "then", "there", "thereby", "therefore", "these", "they", "this", "those", "through", "thus", "to",
    "too", "toward", "towards", "under", "until", "up", "upon", "us", "very", "via", "vs", "was", "we",
    "were", "what", "when", "where", "whereas", "whether", "which", "while", "who", "whom", "whose", "why",
    "will", "with", "within", "without", "would", "yet", "you", "your", "yours", "yourself", "yourselves",
};

bool is_lowercase(std::string_view w) {
    return std::none_of(w.begin(), w.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
}

}  // namespace

StopwordList::StopwordList(std::vector<std::string> words) {
    for (auto& w : words) {
        if (w.empty()) throw ValidationError("stopword list: empty entry");
        if (!is_lowercase(w)) throw ValidationError("stopword list: entry not lowercase: " + w);
        words_.insert(std::move(w));
    }
}

const StopwordList& StopwordList::english() {
    static const StopwordList list(std::vector<std::string>(std::begin(kEnglishStopwords), std::end(kEnglishStopwords)));
    return list;
}

StopwordList StopwordList::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open stopword file " + path.string());
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        words.push_back(line);
    }
    return StopwordList(std::move(words));
}

bool StopwordList::contains(std::string_view token) const {
    return words_.count(std::string(token)) != 0;
}

std::vector<std::string> StopwordList::sorted() const {
    std::vector<std::string> out(words_.begin(), words_.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::uint64_t StopwordList::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    bool first = true;
    for (const auto& w : sorted()) {
        if (!first) {
            h ^= static_cast<unsigned char>('\n');
            h *= 0x100000001b3ULL;
        }
        first = false;
        for (char c : w) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace pubvec::textproc
