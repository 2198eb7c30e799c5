#pragma once

// CoNLL-U reading, gold dependency trees and tree path-length matrices.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <deque>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace structprobe {

class ParseError : public std::runtime_error {
public:
    ParseError(std::string sent_id, std::size_t line, const std::string& what)
        : std::runtime_error(format(sent_id, line, what)), sent_id_(std::move(sent_id)), line_(line) {}

    const std::string& sent_id() const noexcept { return sent_id_; }
    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& sent_id, std::size_t line, const std::string& what) {
        std::ostringstream os;
        os << "CoNLL-U parse error in sentence '" << (sent_id.empty() ? "<unnamed>" : sent_id) << "' at line "
           << line << ": " << what;
        return os.str();
    }

    std::string sent_id_;
    std::size_t line_;
};

struct Token {
    std::size_t index = 0;  // 1-based
    std::string form;
    std::string upos;
    std::size_t head = 0;  // 0 = root
    std::string deprel;
};

struct Sentence {
    std::string sent_id;
    std::vector<Token> tokens;

    std::size_t size() const noexcept { return tokens.size(); }
    const Token& token(std::size_t index) const { return tokens.at(index - 1); }

    std::size_t root() const {
        for (const auto& t : tokens)
            if (t.head == 0) return t.index;
        return 0;
    }
};

/// Unordered token pair stored as (smaller, larger), 1-based.
struct Edge {
    std::size_t first = 0;
    std::size_t second = 0;

    Edge() = default;
    Edge(std::size_t a, std::size_t b) : first(std::min(a, b)), second(std::max(a, b)) {}

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

using EdgeSet = std::set<Edge>;

/// All-pairs path lengths in a tree. Indices into at() are 0-based.
class TreeDistances {
public:
    TreeDistances() = default;
    explicit TreeDistances(std::size_t n) : n_(n), d_(n * n, 0) {}

    std::size_t size() const noexcept { return n_; }
    int at(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    int& at(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }

    friend bool operator==(const TreeDistances&, const TreeDistances&) = default;

private:
    std::size_t n_ = 0;
    std::vector<int> d_;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            cols.push_back(line.substr(start));
            break;
        }
        cols.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cols;
}

inline bool parse_size(std::string_view s, std::size_t& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

// Head structure must be a single-rooted tree over all tokens.
inline void check_tree(const Sentence& s, std::size_t first_line) {
    const std::size_t n = s.size();
    std::size_t roots = 0;
    for (const auto& t : s.tokens) {
        if (t.head == 0) ++roots;
        if (t.head > n) throw ParseError(s.sent_id, first_line, "head " + std::to_string(t.head) + " out of range");
    }
    if (roots != 1)
        throw ParseError(s.sent_id, first_line, "expected exactly one root, found " + std::to_string(roots));

    // Walk each token towards the root; revisiting a token on the same walk means a cycle.
    std::vector<int> state(n + 1, 0);  // 0 unvisited, 1 on current walk, 2 reaches root
    for (std::size_t start = 1; start <= n; ++start) {
        std::vector<std::size_t> walk;
        std::size_t cur = start;
        while (cur != 0 && state[cur] == 0) {
            state[cur] = 1;
            walk.push_back(cur);
            cur = s.tokens[cur - 1].head;
        }
        if (cur != 0 && state[cur] == 1)
            throw ParseError(s.sent_id, first_line, "cycle in head structure through token " + std::to_string(cur));
        for (auto w : walk) state[w] = 2;
    }
}

}  // namespace detail

/// Parses CoNLL-U text. Range (3-4) and empty-node (3.1) lines are skipped.
/// Sentences without a sent_id comment get "<source>-<ordinal>".
inline std::vector<Sentence> parse_conllu(std::istream& in, std::string_view source = "sent") {
    std::vector<Sentence> out;
    Sentence cur;
    std::size_t line_no = 0;
    std::size_t sent_first_line = 0;
    bool have_tokens = false;

    auto finish = [&]() {
        if (!have_tokens) {
            cur = Sentence{};
            return;
        }
        if (cur.sent_id.empty()) cur.sent_id = std::string(source) + "-" + std::to_string(out.size() + 1);
        for (std::size_t i = 0; i < cur.tokens.size(); ++i)
            if (cur.tokens[i].index != i + 1)
                throw ParseError(cur.sent_id, sent_first_line,
                                 "token ids are not consecutive from 1 (found " + std::to_string(cur.tokens[i].index) +
                                     " at position " + std::to_string(i + 1) + ")");
        detail::check_tree(cur, sent_first_line);
        out.push_back(std::move(cur));
        cur = Sentence{};
        have_tokens = false;
    };

    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (line.empty()) {
            finish();
            continue;
        }
        if (line.front() == '#') {
            constexpr std::string_view key = "# sent_id";
            if (line.starts_with(key)) {
                auto rest = line.substr(key.size());
                auto eq = rest.find('=');
                if (eq != std::string_view::npos) rest = rest.substr(eq + 1);
                while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
                while (!rest.empty() && rest.back() == ' ') rest.remove_suffix(1);
                cur.sent_id = std::string(rest);
            }
            continue;
        }

        if (!have_tokens) sent_first_line = line_no;
        auto cols = detail::split_tabs(line);
        if (cols.size() != 10)
            throw ParseError(cur.sent_id, line_no, "expected 10 tab-separated columns, found " + std::to_string(cols.size()));

        if (cols[0].find('-') != std::string_view::npos || cols[0].find('.') != std::string_view::npos) continue;

        Token tok;
        if (!detail::parse_size(cols[0], tok.index) || tok.index == 0)
            throw ParseError(cur.sent_id, line_no, "bad token id '" + std::string(cols[0]) + "'");
        if (!detail::parse_size(cols[6], tok.head))
            throw ParseError(cur.sent_id, line_no, "non-integer head '" + std::string(cols[6]) + "'");
        if (tok.head == tok.index)
            throw ParseError(cur.sent_id, line_no, "token " + std::to_string(tok.index) + " is its own head");
        tok.form = std::string(cols[1]);
        tok.upos = std::string(cols[3]);
        tok.deprel = std::string(cols[7]);
        cur.tokens.push_back(std::move(tok));
        have_tokens = true;
    }
    finish();
    return out;
}

inline std::vector<Sentence> parse_conllu(std::string_view text, std::string_view source = "sent") {
    std::istringstream in{std::string(text)};
    return parse_conllu(in, source);
}

inline std::vector<Sentence> read_conllu_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open treebank file '" + path + "'");
    auto stem = path.substr(path.find_last_of('/') + 1);
    return parse_conllu(in, stem);
}

/// Writes the retained columns; the rest are "_".
inline std::string to_conllu(const std::vector<Sentence>& sentences) {
    std::ostringstream os;
    for (const auto& s : sentences) {
        os << "# sent_id = " << s.sent_id << '\n';
        for (const auto& t : s.tokens)
            os << t.index << '\t' << t.form << "\t_\t" << t.upos << "\t_\t_\t" << t.head << '\t'
               << (t.deprel.empty() ? "_" : t.deprel) << "\t_\t_\n";
        os << '\n';
    }
    return os.str();
}

/// Path lengths via one BFS per source over the undirected head graph.
inline TreeDistances tree_distances(const Sentence& s) {
    const std::size_t n = s.size();
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& t : s.tokens) {
        if (t.head == 0) continue;
        adj[t.index - 1].push_back(t.head - 1);
        adj[t.head - 1].push_back(t.index - 1);
    }
    TreeDistances d(n);
    std::vector<int> dist(n);
    std::deque<std::size_t> queue;
    for (std::size_t src = 0; src < n; ++src) {
        std::fill(dist.begin(), dist.end(), -1);
        dist[src] = 0;
        queue.assign(1, src);
        while (!queue.empty()) {
            auto u = queue.front();
            queue.pop_front();
            for (auto v : adj[u]) {
                if (dist[v] >= 0) continue;
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
        for (std::size_t j = 0; j < n; ++j) d.at(src, j) = dist[j];
    }
    return d;
}

inline bool is_punct(const Sentence& s, std::size_t index) { return s.token(index).upos == "PUNCT"; }

/// Drops edges touching a PUNCT token.
inline EdgeSet filter_punct(const Sentence& s, const EdgeSet& edges) {
    EdgeSet out;
    for (const auto& e : edges)
        if (!is_punct(s, e.first) && !is_punct(s, e.second)) out.insert(e);
    return out;
}

inline EdgeSet gold_edges(const Sentence& s, bool exclude_punct) {
    EdgeSet edges;
    for (const auto& t : s.tokens)
        if (t.head != 0) edges.emplace(t.index, t.head);
    return exclude_punct ? filter_punct(s, edges) : edges;
}

}  // namespace structprobe
