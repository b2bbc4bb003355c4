#include "pamm/datagen.hpp"

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pamm {

namespace {

// Signal strength by level: deeper labels say less about themselves, so the
// model has to lean on the already-generated upper levels.
int signal_draws(int level) { return level <= 1 ? 3 : 2; }
double signal_drop_rate(int level) {
    if (level <= 2) return 0.0;
    return 0.35;
}

std::string make_word(std::mt19937_64& rng, std::set<std::string>& used) {
    static const char* consonants = "bcdfghjklmnprstvz";
    static const char* vowels = "aeiou";
    std::uniform_int_distribution<int> nsyl(2, 3);
    std::uniform_int_distribution<int> ci(0, 16);
    std::uniform_int_distribution<int> vi(0, 4);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::string w;
        const int syls = nsyl(rng);
        for (int s = 0; s < syls; ++s) {
            w.push_back(consonants[ci(rng)]);
            w.push_back(vowels[vi(rng)]);
        }
        if (used.insert(w).second) return w;
    }
    throw std::runtime_error("word generator exhausted");
}

}  // namespace

Generated generate(const SynthSpec& spec) {
    if (spec.levels < 2) throw std::runtime_error("levels must be >= 2");
    if (static_cast<int>(spec.branching.size()) != spec.levels) {
        throw std::runtime_error("branching must list one factor per level");
    }
    for (int b : spec.branching) {
        if (b < 1) throw std::runtime_error("branching factors must be >= 1");
    }
    if (spec.paths_min < 1 || spec.paths_max < spec.paths_min) {
        throw std::runtime_error("invalid paths range");
    }
    if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0) {
        throw std::runtime_error("noise_rate must be in [0, 1)");
    }

    std::mt19937_64 rng(spec.seed);
    std::set<std::string> used_words;

    // Tree: branching[0] roots, each level-l node gets branching[l] children.
    std::vector<std::pair<std::string, std::string>> edges;
    std::vector<std::vector<std::string>> by_level(spec.levels + 1);
    for (int r = 0; r < spec.branching[0]; ++r) {
        std::string name = make_word(rng, used_words);
        edges.emplace_back("ROOT", name);
        by_level[1].push_back(name);
    }
    for (int level = 2; level <= spec.levels; ++level) {
        for (const auto& parent : by_level[level - 1]) {
            for (int c = 0; c < spec.branching[level - 1]; ++c) {
                std::string name = make_word(rng, used_words);
                edges.emplace_back(parent, name);
                by_level[level].push_back(name);
            }
        }
    }
    LabelHierarchy h = LabelHierarchy::from_edges(edges);
    const int label_count = static_cast<int>(h.label_count());

    const int signal_total = label_count * spec.words_per_label;
    if (spec.text_vocab <= signal_total) {
        throw std::runtime_error("text vocabulary too small for disjoint signal word sets (need > " +
                                 std::to_string(signal_total) + ")");
    }
    std::map<std::string, std::vector<std::string>> signal_words;
    for (const auto& l : h.labels()) {
        for (int k = 0; k < spec.words_per_label; ++k) {
            signal_words[l].push_back(make_word(rng, used_words));
        }
    }
    std::vector<std::string> noise_pool;
    for (int k = signal_total; k < spec.text_vocab; ++k) {
        noise_pool.push_back(make_word(rng, used_words));
    }

    const auto& leaves = by_level[spec.levels];
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    // Zipf-like weights over leaves: a handful of frequent paths and a long
    // tail of rare ones, the regime Macro-F1 is sensitive to.
    std::vector<double> leaf_weight(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) leaf_weight[i] = 1.0 / (1.0 + i);
    std::discrete_distribution<int> pick(leaf_weight.begin(), leaf_weight.end());

    auto sample_one = [&]() {
        Sample s;
        int paths = spec.paths_min;
        if (spec.paths_max > spec.paths_min && coin(rng) < spec.multi_path_rate) {
            // Two paths twice as likely as three.
            paths = coin(rng) < 2.0 / 3.0 ? 2 : 3;
            paths = std::min(paths, spec.paths_max);
            paths = std::max(paths, spec.paths_min);
        }
        std::set<int> leaf_ids;
        while (static_cast<int>(leaf_ids.size()) < paths) leaf_ids.insert(pick(rng));
        for (int li : leaf_ids) {
            std::vector<std::string> path = h.ancestors(leaves[li]);
            path.push_back(leaves[li]);
            int stop = static_cast<int>(path.size());
            if (spec.truncate_rate > 0.0 && coin(rng) < spec.truncate_rate) {
                std::uniform_int_distribution<int> cut(1, std::max(1, stop - 1));
                stop = cut(rng);
            }
            for (int d = 0; d < stop; ++d) s.labels.insert(path[d]);
        }
        std::vector<std::string> tokens;
        for (const auto& l : s.labels) {
            const int level = h.depth(l);
            if (coin(rng) < signal_drop_rate(level)) continue;
            const auto& words = signal_words.at(l);
            std::uniform_int_distribution<int> wi(0, static_cast<int>(words.size()) - 1);
            for (int k = 0; k < signal_draws(level); ++k) tokens.push_back(words[wi(rng)]);
        }
        const int noise_n = static_cast<int>(
            std::lround(tokens.size() * spec.noise_rate / (1.0 - spec.noise_rate)));
        std::uniform_int_distribution<int> ni(0, static_cast<int>(noise_pool.size()) - 1);
        for (int k = 0; k < noise_n; ++k) tokens.push_back(noise_pool[ni(rng)]);
        if (tokens.empty()) tokens.push_back(noise_pool[ni(rng)]);
        std::shuffle(tokens.begin(), tokens.end(), rng);
        s.words = std::move(tokens);
        return s;
    };

    Generated gen{h, {}, {}, {}, {}};
    for (int i = 0; i < spec.train_n; ++i) gen.train.push_back(sample_one());
    for (int i = 0; i < spec.val_n; ++i) gen.val.push_back(sample_one());
    for (int i = 0; i < spec.test_n; ++i) gen.test.push_back(sample_one());

    GenStats& st = gen.stats;
    st.label_count = label_count;
    st.depth = h.max_depth();
    for (const auto& l : h.labels()) st.labels_per_level[h.depth(l)] += 1;
    std::map<int, long> occurrences;
    long total_labels = 0;
    for (const auto& s : gen.train) {
        total_labels += static_cast<long>(s.labels.size());
        st.max_labels = std::max(st.max_labels, static_cast<int>(s.labels.size()));
        for (const auto& l : s.labels) occurrences[h.depth(l)] += 1;
    }
    st.avg_labels = gen.train.empty() ? 0.0 : static_cast<double>(total_labels) / gen.train.size();
    for (const auto& [level, count] : st.labels_per_level) {
        st.avg_label_occurrences_per_level[level] =
            static_cast<double>(occurrences[level]) / count;
    }
    return gen;
}

GenStats generate_to_dir(const SynthSpec& spec, const std::string& out_dir) {
    Generated gen = generate(spec);
    std::filesystem::create_directories(out_dir);
    save_hierarchy(gen.hierarchy, out_dir + "/hierarchy.tsv");
    write_corpus_jsonl(gen.train, out_dir + "/train.jsonl");
    write_corpus_jsonl(gen.val, out_dir + "/val.jsonl");
    write_corpus_jsonl(gen.test, out_dir + "/test.jsonl");
    return gen.stats;
}

std::string format_stats(const GenStats& stats, const SynthSpec& spec) {
    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", stats.avg_labels);
    out << "labels " << stats.label_count << "  depth " << stats.depth << "  avg|L_i| " << buf
        << "  max|L_i| " << stats.max_labels << "  train " << spec.train_n << "  val "
        << spec.val_n << "  test " << spec.test_n << "\n";
    out << "level  labels  avg_occurrences\n";
    for (const auto& [level, count] : stats.labels_per_level) {
        std::snprintf(buf, sizeof(buf), "%.1f",
                      stats.avg_label_occurrences_per_level.at(level));
        out << level << "      " << count << "      " << buf << "\n";
    }
    return out.str();
}

}  // namespace pamm
