#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hydrarec {

struct Interaction {
    int64_t item = 0;  // dense id in [1, n_items]
    int rating = 0;    // 1..5
    int64_t timestamp = 0;
};

struct InteractionSequence {
    int64_t user = 0;  // dense id in [1, n_users]
    std::vector<Interaction> events;  // chronological, stable on timestamp ties
};

enum class DatasetFormat { MovieLens100k, MovieLens1M, AmazonCsv };

DatasetFormat dataset_format_from_string(const std::string& s);

struct Dataset {
    std::vector<InteractionSequence> users;
    int64_t n_items = 0;  // dense item ids run 1..n_items; 0 is padding
    // dense id -> raw token; index 0 is the padding slot
    std::vector<std::string> item_tokens;
    std::vector<std::string> user_tokens;

    int64_t review_count() const;
    // Table-style counts: vocabulary sizes including the padding slot.
    int64_t user_slots() const { return static_cast<int64_t>(users.size()) + 1; }
    int64_t item_slots() const { return n_items + 1; }
};

// Parses one of the three supported formats, drops items with fewer than
// min_item_count interactions (then users left with no events), densifies
// ids in first-appearance order, and sorts each user chronologically with a
// stable tie-break on input order. Malformed lines raise with their number.
Dataset load_dataset(const std::string& path, DatasetFormat fmt, int min_item_count = 5);

struct SplitUser {
    int64_t user = 0;
    std::vector<int64_t> train_items;  // all but the last two, chronological
    int64_t valid_target = 0;          // second-to-last item
    int64_t test_target = 0;           // last item
};

struct Split {
    std::vector<SplitUser> users;
    int64_t n_items = 0;
    int64_t dropped_users = 0;  // shorter than min_length
};

Split leave_one_out_split(const Dataset& data, int min_length);

}  // namespace hydrarec
