#include "hydrarec/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace hydrarec {

namespace {

struct RawEvent {
    std::string user, item;
    int rating;
    int64_t timestamp;
    int64_t order;  // input line order, the stable tie-break
};

[[noreturn]] void malformed(const std::string& path, int64_t line_no, const std::string& why) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed line (" +
                             why + ")");
}

bool parse_int(const std::string& s, int64_t& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

// Ratings appear as "4" in MovieLens and sometimes "4.0"/"4.5" in Amazon
// exports; keep the floor so the 1..5 invariant holds.
bool parse_rating(const std::string& s, int& out) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) return false;
        out = static_cast<int>(v);
        return out >= 1 && out <= 5;
    } catch (const std::exception&) {
        return false;
    }
}

std::vector<std::string> split_on(const std::string& line, const std::string& sep) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        const size_t next = line.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
}

}  // namespace

DatasetFormat dataset_format_from_string(const std::string& s) {
    if (s == "movielens-100k") return DatasetFormat::MovieLens100k;
    if (s == "movielens-1m") return DatasetFormat::MovieLens1M;
    if (s == "amazon-csv") return DatasetFormat::AmazonCsv;
    throw std::invalid_argument("unknown dataset format: " + s);
}

int64_t Dataset::review_count() const {
    int64_t n = 0;
    for (const auto& u : users) n += static_cast<int64_t>(u.events.size());
    return n;
}

Dataset load_dataset(const std::string& path, DatasetFormat fmt, int min_item_count) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);

    const std::string sep = fmt == DatasetFormat::MovieLens1M
                                ? "::"
                                : (fmt == DatasetFormat::AmazonCsv ? "," : "\t");
    std::vector<RawEvent> events;
    std::string line;
    int64_t line_no = 0;
    bool header_skipped = fmt != DatasetFormat::AmazonCsv;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_skipped) {  // Amazon CSV carries a header row
            header_skipped = true;
            continue;
        }
        auto fields = split_on(line, sep);
        if (fields.size() != 4) malformed(path, line_no, "expected 4 fields");
        RawEvent ev;
        ev.user = fields[0];
        ev.item = fields[1];
        if (ev.user.empty() || ev.item.empty()) malformed(path, line_no, "empty id");
        if (!parse_rating(fields[2], ev.rating)) malformed(path, line_no, "bad rating");
        if (!parse_int(fields[3], ev.timestamp)) malformed(path, line_no, "bad timestamp");
        ev.order = line_no;
        events.push_back(std::move(ev));
    }
    if (events.empty()) throw std::runtime_error("empty dataset: " + path);

    // Minimum-interaction item filter, counted on the raw stream.
    std::unordered_map<std::string, int64_t> item_freq;
    for (const auto& ev : events) ++item_freq[ev.item];
    std::erase_if(events, [&](const RawEvent& ev) {
        return item_freq[ev.item] < static_cast<int64_t>(min_item_count);
    });
    if (events.empty()) throw std::runtime_error("empty dataset after item filter: " + path);

    // Dense ids in first-appearance order; 0 stays reserved for padding.
    Dataset out;
    out.item_tokens.push_back("");
    out.user_tokens.push_back("");
    std::unordered_map<std::string, int64_t> item_id, user_id;
    for (const auto& ev : events) {
        if (item_id.emplace(ev.item, static_cast<int64_t>(out.item_tokens.size())).second)
            out.item_tokens.push_back(ev.item);
        if (user_id.emplace(ev.user, static_cast<int64_t>(out.user_tokens.size())).second)
            out.user_tokens.push_back(ev.user);
    }
    out.n_items = static_cast<int64_t>(out.item_tokens.size()) - 1;
    out.users.resize(user_id.size());
    for (size_t u = 0; u < out.users.size(); ++u)
        out.users[u].user = static_cast<int64_t>(u) + 1;

    std::stable_sort(events.begin(), events.end(),
                     [](const RawEvent& a, const RawEvent& b) { return a.order < b.order; });
    for (const auto& ev : events) {
        auto& seq = out.users[static_cast<size_t>(user_id[ev.user] - 1)];
        seq.events.push_back({item_id[ev.item], ev.rating, ev.timestamp});
    }
    for (auto& u : out.users)
        std::stable_sort(u.events.begin(), u.events.end(),
                         [](const Interaction& a, const Interaction& b) {
                             return a.timestamp < b.timestamp;
                         });
    return out;
}

Split leave_one_out_split(const Dataset& data, int min_length) {
    if (min_length < 3) throw std::invalid_argument("leave_one_out_split: min_length must be >= 3");
    Split out;
    out.n_items = data.n_items;
    for (const auto& u : data.users) {
        if (static_cast<int>(u.events.size()) < min_length) {
            ++out.dropped_users;
            continue;
        }
        SplitUser su;
        su.user = u.user;
        const size_t n = u.events.size();
        su.train_items.reserve(n - 2);
        for (size_t i = 0; i + 2 < n; ++i) su.train_items.push_back(u.events[i].item);
        su.valid_target = u.events[n - 2].item;
        su.test_target = u.events[n - 1].item;
        out.users.push_back(std::move(su));
    }
    return out;
}

}  // namespace hydrarec
