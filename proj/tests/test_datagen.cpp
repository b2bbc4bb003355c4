#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "pamm/datagen.hpp"
#include "pamm/labelseq.hpp"

using namespace pamm;

namespace {

SynthSpec tiny_spec() {
    SynthSpec spec;
    spec.levels = 2;
    spec.branching = {3, 2};
    spec.text_vocab = 40;
    spec.words_per_label = 2;
    spec.train_n = 60;
    spec.val_n = 10;
    spec.test_n = 10;
    spec.seed = 5;
    return spec;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("label count follows the branching product") {
    auto gen = generate(tiny_spec());
    CHECK(gen.hierarchy.label_count() == 3 + 6);
    CHECK(gen.stats.label_count == 9);
    CHECK(gen.stats.labels_per_level.at(1) == 3);
    CHECK(gen.stats.labels_per_level.at(2) == 6);

    SynthSpec deep;
    deep.levels = 3;
    deep.branching = {4, 3, 2};
    deep.text_vocab = 200;
    deep.train_n = 20;
    deep.val_n = 5;
    deep.test_n = 5;
    auto gen3 = generate(deep);
    CHECK(gen3.hierarchy.label_count() == 4 + 12 + 24);
}

TEST_CASE("every generated gold set is hierarchy consistent") {
    auto gen = generate(tiny_spec());
    for (const auto* corpus : {&gen.train, &gen.val, &gen.test}) {
        for (const auto& s : *corpus) {
            CHECK(gen.hierarchy.is_consistent(s.labels));
            CHECK(!s.labels.empty());
            CHECK(!s.words.empty());
        }
    }
}

TEST_CASE("single full path yields exactly the tree depth in labels") {
    SynthSpec spec;
    spec.levels = 3;
    spec.branching = {3, 2, 2};
    spec.text_vocab = 120;
    spec.paths_min = spec.paths_max = 1;
    spec.multi_path_rate = 0.0;
    spec.truncate_rate = 0.0;
    spec.train_n = 200;
    spec.val_n = 1;
    spec.test_n = 1;
    auto gen = generate(spec);
    for (const auto& s : gen.train) CHECK(s.labels.size() == 3);
    CHECK(gen.stats.avg_labels == doctest::Approx(3.0));
}

TEST_CASE("same seed produces byte-identical files") {
    auto spec = tiny_spec();
    const std::string dir_a = "gen_a", dir_b = "gen_b";
    generate_to_dir(spec, dir_a);
    generate_to_dir(spec, dir_b);
    for (const char* f : {"hierarchy.tsv", "train.jsonl", "val.jsonl", "test.jsonl"}) {
        CAPTURE(f);
        const std::string a = slurp(dir_a + "/" + std::string(f));
        CHECK(!a.empty());
        CHECK(a == slurp(dir_b + "/" + std::string(f)));
    }
    spec.seed += 1;
    generate_to_dir(spec, dir_b);
    CHECK(slurp(dir_a + "/train.jsonl") != slurp(dir_b + "/train.jsonl"));
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("vocabulary too small for disjoint signal sets is an error") {
    auto spec = tiny_spec();
    spec.text_vocab = spec.words_per_label * 9;  // no room for noise words
    CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("too small"), std::runtime_error);
}

TEST_CASE("label names avoid reserved symbols and text words") {
    auto gen = generate(tiny_spec());
    std::set<std::string> label_names(gen.hierarchy.labels().begin(),
                                      gen.hierarchy.labels().end());
    for (const auto& l : label_names) {
        CHECK(l.find('_') == std::string::npos);
        CHECK(l.find('/') == std::string::npos);
    }
    for (const auto& s : gen.train) {
        for (const auto& w : s.words) CHECK(label_names.count(w) == 0);
    }
}

TEST_CASE("multi-path rate shows up in the corpus") {
    SynthSpec spec;
    spec.levels = 3;
    spec.branching = {4, 3, 2};
    spec.text_vocab = 200;
    spec.multi_path_rate = 0.45;
    spec.train_n = 400;
    spec.val_n = 1;
    spec.test_n = 1;
    auto gen = generate(spec);
    int multi = 0;
    for (const auto& s : gen.train) {
        // A sample with two leaf labels or two distinct roots used >= 2 paths.
        int leaves = 0;
        std::set<std::string> roots;
        for (const auto& l : s.labels) {
            if (gen.hierarchy.depth(l) == 3) ++leaves;
            if (gen.hierarchy.depth(l) == 1) roots.insert(l);
        }
        if (leaves >= 2 || roots.size() >= 2) ++multi;
    }
    CHECK(multi >= static_cast<int>(0.3 * spec.train_n));
}

TEST_CASE("a bag-of-words linear classifier separates level-1 labels") {
    SynthSpec spec;
    spec.levels = 3;
    spec.branching = {4, 3, 2};
    spec.text_vocab = 200;
    spec.train_n = 400;
    spec.val_n = 1;
    spec.test_n = 100;
    spec.seed = 9;
    auto gen = generate(spec);
    const auto& h = gen.hierarchy;

    // Word index.
    std::map<std::string, int> word_id;
    for (const auto& corpus : {gen.train, gen.test}) {
        for (const auto& s : corpus) {
            for (const auto& w : s.words) word_id.emplace(w, word_id.size());
        }
    }
    const int V = static_cast<int>(word_id.size());

    std::vector<std::string> level1;
    for (const auto& l : h.labels()) {
        if (h.depth(l) == 1) level1.push_back(l);
    }

    // One-vs-rest perceptron per level-1 label on word counts.
    long correct = 0, total = 0;
    for (const auto& target : level1) {
        std::vector<double> w(V + 1, 0.0);
        for (int epoch = 0; epoch < 5; ++epoch) {
            for (const auto& s : gen.train) {
                double act = w[V];
                for (const auto& tok : s.words) act += w[word_id.at(tok)];
                const int y = s.labels.count(target) ? 1 : -1;
                if (y * act <= 0) {
                    for (const auto& tok : s.words) w[word_id.at(tok)] += y;
                    w[V] += y;
                }
            }
        }
        for (const auto& s : gen.test) {
            double act = w[V];
            for (const auto& tok : s.words) act += w.at(word_id.at(tok));
            const bool pred = act > 0;
            const bool truth = s.labels.count(target) > 0;
            if (pred == truth) ++correct;
            ++total;
        }
    }
    CHECK(static_cast<double>(correct) / total > 0.9);
}
