#include "pamm/corpus.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "pamm/labelseq.hpp"

namespace pamm {

Corpus read_corpus_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    Corpus corpus;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        Sample s;
        s.words = split_whitespace_lower(j.at("text").get<std::string>());
        for (const auto& l : j.at("labels")) s.labels.insert(l.get<std::string>());
        corpus.push_back(std::move(s));
    }
    return corpus;
}

void write_corpus_jsonl(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    for (const auto& s : corpus) {
        nlohmann::json j;
        std::ostringstream text;
        for (size_t i = 0; i < s.words.size(); ++i) {
            if (i) text << ' ';
            text << s.words[i];
        }
        j["text"] = text.str();
        j["labels"] = std::vector<std::string>(s.labels.begin(), s.labels.end());
        out << j.dump() << "\n";
    }
}

}  // namespace pamm
