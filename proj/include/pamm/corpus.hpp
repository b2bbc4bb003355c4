#pragma once

#include <string>
#include <vector>

#include "pamm/hierarchy.hpp"

namespace pamm {

struct Sample {
    std::vector<std::string> words;
    LabelSet labels;
};

using Corpus = std::vector<Sample>;

// Line-delimited JSON records: {"text": "...", "labels": ["...", ...]}
Corpus read_corpus_jsonl(const std::string& path);
void write_corpus_jsonl(const Corpus& corpus, const std::string& path);

}  // namespace pamm
