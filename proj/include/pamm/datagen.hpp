#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pamm/corpus.hpp"
#include "pamm/hierarchy.hpp"

namespace pamm {

// Synthetic task: every label owns a disjoint set of signal words; a sample is
// the union of 1-3 (possibly truncated) root-to-leaf paths whose labels emit
// their signal words into the text, mixed with noise words. Deeper labels are
// signalled more weakly, so upper-level context carries real information.
struct SynthSpec {
    int levels = 3;
    std::vector<int> branching = {4, 3, 2};  // roots, then children per node
    int text_vocab = 180;                    // total distinct text words
    int words_per_label = 3;                 // size of each label's signal set
    int paths_min = 1;
    int paths_max = 3;
    double multi_path_rate = 0.45;  // chance a sample has >= 2 paths
    double truncate_rate = 0.25;    // chance a path stops above the leaf level
    double noise_rate = 0.25;       // fraction of text tokens that are noise
    int train_n = 2000;
    int val_n = 200;
    int test_n = 400;
    uint64_t seed = 1;
};

struct GenStats {
    int label_count = 0;
    int depth = 0;
    double avg_labels = 0.0;
    int max_labels = 0;
    std::map<int, int> labels_per_level;
    std::map<int, double> avg_label_occurrences_per_level;  // over train samples
};

struct Generated {
    LabelHierarchy hierarchy;
    Corpus train, val, test;
    GenStats stats;
};

Generated generate(const SynthSpec& spec);

// Writes hierarchy.tsv, train.jsonl, val.jsonl, test.jsonl into out_dir.
GenStats generate_to_dir(const SynthSpec& spec, const std::string& out_dir);

std::string format_stats(const GenStats& stats, const SynthSpec& spec);

}  // namespace pamm
