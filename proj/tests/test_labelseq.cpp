#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "pamm/labelseq.hpp"
#include "test_util.hpp"

using namespace pamm;

TEST_CASE("worked example flattens to the paper sequence") {
    auto h = testutil::worked_example();
    auto ml = bfs_flatten(h, testutil::worked_example_set());
    CHECK(ml.strings() ==
          std::vector<std::string>{"l1", "_", "l3", "/", "l2", "_", "l4", "/", "l5", "EOS"});
    CHECK(ml.tokens[0].level == 1);
    CHECK(ml.tokens[4].level == 2);
    CHECK(ml.tokens[8].level == 3);
    CHECK(ml.tokens[8].is_label);
    CHECK_FALSE(ml.tokens[9].is_label);
}

TEST_CASE("single root label") {
    auto h = testutil::worked_example();
    auto ml = bfs_flatten(h, {"l1"});
    CHECK(ml.strings() == std::vector<std::string>{"l1", "EOS"});
}

TEST_CASE("inconsistent set is rejected") {
    auto h = testutil::worked_example();
    CHECK_THROWS_AS(bfs_flatten(h, {"l5"}), std::runtime_error);
}

TEST_CASE("flatten structure matches the level-sort oracle on random sets") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        auto h = testutil::random_tree(rng, 18, 4);
        auto s = testutil::nonempty_consistent_set(rng, h);
        auto ml = bfs_flatten(h, s);

        // Separator bookkeeping: one EOS, levels-1 level separators,
        // |s|-levels intra separators, total 2|s|.
        std::set<int> levels;
        for (const auto& l : s) levels.insert(h.depth(l));
        int n_level_sep = 0, n_intra = 0, n_eos = 0, n_labels = 0;
        for (const auto& tok : ml.tokens) {
            if (tok.text == sym::kLevel) ++n_level_sep;
            else if (tok.text == sym::kIntra) ++n_intra;
            else if (tok.text == sym::kEos) ++n_eos;
            else ++n_labels;
        }
        CHECK(n_labels == static_cast<int>(s.size()));
        CHECK(n_level_sep == static_cast<int>(levels.size()) - 1);
        CHECK(n_intra == static_cast<int>(s.size() - levels.size()));
        CHECK(n_eos == 1);
        CHECK(ml.size() == 2 * s.size());

        // Level partition matches the depth map and never decreases.
        int prev_level = 1;
        std::map<std::string, size_t> pos;
        for (size_t i = 0; i < ml.size(); ++i) {
            const auto& tok = ml.tokens[i];
            CHECK(tok.level >= prev_level);
            if (tok.is_label) {
                CHECK(h.depth(tok.text) == tok.level);
                pos[tok.text] = i;
            }
            prev_level = tok.level;
        }
        // Ancestors appear strictly earlier.
        for (const auto& l : s) {
            for (const auto& a : h.ancestors(l)) CHECK(pos.at(a) < pos.at(l));
        }

        // Determinism: same inputs, byte-identical output.
        CHECK(bfs_flatten(h, s).strings() == ml.strings());
    }
}

TEST_CASE("parse round trip is clean for random consistent sets") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; ++t) {
        auto h = testutil::random_tree(rng, 16, 4);
        auto s = testutil::nonempty_consistent_set(rng, h);
        auto [parsed, diag] = parse_sequence(h, bfs_flatten(h, s).strings());
        CHECK(parsed == s);
        CHECK(diag.clean());
    }
}

TEST_CASE("parse flags level mismatch") {
    auto h = parse_hierarchy("ROOT\tA\nA\tB\nB\tC\n");
    auto [labels, diag] = parse_sequence(h, {"A", "/", "C", "EOS"});
    CHECK(labels == LabelSet{"A", "C"});
    CHECK(diag.level_mismatches == std::vector<std::string>{"C"});
    CHECK(diag.unknown_tokens.empty());
    CHECK_FALSE(diag.missing_eos);
}

TEST_CASE("parse flags unknowns, duplicates and missing EOS") {
    auto h = testutil::worked_example();
    auto [labels, diag] = parse_sequence(h, {"l1", "_", "zebra", "_", "l1"});
    CHECK(labels == LabelSet{"l1"});
    CHECK(diag.unknown_tokens == std::vector<std::string>{"zebra"});
    CHECK(diag.duplicate_labels == std::vector<std::string>{"l1"});
    CHECK(diag.missing_eos);
}

TEST_CASE("parse of empty sequence") {
    auto h = testutil::worked_example();
    auto [labels, diag] = parse_sequence(h, {});
    CHECK(labels.empty());
    CHECK(diag.missing_eos);
}

TEST_CASE("tokens after EOS are ignored") {
    auto h = testutil::worked_example();
    auto [labels, diag] = parse_sequence(h, {"l1", "EOS", "garbage"});
    CHECK(labels == LabelSet{"l1"});
    CHECK(diag.clean());
}

TEST_CASE("vocabulary ids are stable and reserved") {
    auto h = testutil::worked_example();
    Vocabulary v(h, {"alpha", "beta"});
    CHECK(v.id(sym::kPad) == Vocabulary::kPadId);
    CHECK(v.id(sym::kBos) == Vocabulary::kBosId);
    CHECK(v.id(sym::kEos) == Vocabulary::kEosId);
    CHECK(v.id(sym::kIntra) == Vocabulary::kIntraId);
    CHECK(v.id(sym::kLevel) == Vocabulary::kLevelId);
    CHECK(v.size() == 6 + 5 + 2);

    const std::string path = "vocab_roundtrip.tsv";
    v.save(path);
    auto v2 = Vocabulary::load(path);
    CHECK(v2.size() == v.size());
    for (int i = 0; i < v.size(); ++i) CHECK(v2.token(i) == v.token(i));
    std::remove(path.c_str());
}

TEST_CASE("encode/decode text") {
    auto h = testutil::worked_example();
    Vocabulary v(h, {"alpha", "beta", "gamma"});
    auto ids = v.encode_text({"alpha", "gamma"}, 300);
    CHECK(v.decode(ids) == std::vector<std::string>{"alpha", "gamma"});
    CHECK(v.encode_text({"unseen"}, 300) == std::vector<int>{Vocabulary::kUnkId});

    std::vector<std::string> long_text(400, "alpha");
    CHECK(v.encode_text(long_text, 300).size() == 300);
}

TEST_CASE("whitespace tokenizer lowercases") {
    CHECK(split_whitespace_lower("The  Quick\tFox\n") ==
          std::vector<std::string>{"the", "quick", "fox"});
    CHECK(split_whitespace_lower("").empty());
}
