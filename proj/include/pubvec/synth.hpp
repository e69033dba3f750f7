#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pubvec/corpus.hpp"

namespace pubvec::synth {

/// Parameters of a topic-structured pseudo-biomedical corpus. Each document
/// draws most content words from one primary topic (and sometimes a second
/// one), mixed with shared background words and English stopwords. MeSH
/// descriptors follow the topics, so annotation overlap tracks content.
struct SynthConfig {
    std::size_t documents = 1000;
    std::size_t topics = 20;
    std::size_t words_per_topic = 80;
    std::size_t background_words = 400;
    std::size_t min_abstract_tokens = 60;
    std::size_t max_abstract_tokens = 180;
    double topic_share = 0.45;       // content tokens from the document's topics
    double stopword_share = 0.30;    // tokens that are stopwords
    double secondary_topic_prob = 0.35;
    std::size_t descriptors_per_topic = 12;
    std::size_t shared_descriptors = 15;
    double ineligible_fraction = 0.0;  // no abstract or no MeSH
    double missing_pmid_fraction = 0.0;
    double duplicate_fraction = 0.0;   // repeated PMIDs with altered text
    double inflection_prob = 0.0;      // content words given an -s, -ing or -ed ending
    std::uint64_t first_pmid = 20000001;
    std::uint64_t seed = 1;
};

struct SynthCorpus {
    std::vector<Document> documents;          // pmid 0 marks a missing PMID
    std::vector<std::size_t> primary_topic;   // parallel to documents
    std::vector<std::size_t> secondary_topic;  // equals primary when absent
};

SynthCorpus generate_corpus(const SynthConfig& config);

/// The pseudo-word used for vocabulary slot `index`.
std::string pseudo_word(std::size_t index);

/// PubmedArticleSet XML for the documents. A zero PMID is omitted.
std::string to_medline_xml(std::span<const Document> docs);

/// Writes XML, gzip-compressed when `gzip` is set.
void write_medline_file(std::span<const Document> docs, const std::filesystem::path& path, bool gzip);

std::string gzip_bytes(const std::string& data);

}  // namespace pubvec::synth
