#include "sgmt/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

#include "json.hpp"

#include "sgmt/data.hpp"
#include "sgmt/error.hpp"

namespace sgmt {

namespace {

using NGram = std::vector<std::string>;
using NGramCounts = std::map<NGram, double>;

NGramCounts count_ngrams(const TokenList& tokens, int n) {
    NGramCounts counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        counts[NGram(tokens.begin() + static_cast<long>(i), tokens.begin() + static_cast<long>(i) + n)] += 1.0;
    }
    return counts;
}

double lookup(const NGramCounts& counts, const NGram& key) {
    const auto it = counts.find(key);
    return it == counts.end() ? 0.0 : it->second;
}

std::size_t closest_reference_length(const EvalItem& item) {
    const std::size_t c = item.candidate.size();
    std::size_t best = item.references.front().size();
    for (const auto& ref : item.references) {
        const std::size_t r = ref.size();
        const auto gap = [c](std::size_t len) { return len > c ? len - c : c - len; };
        if (gap(r) < gap(best) || (gap(r) == gap(best) && r < best)) best = r;
    }
    return best;
}

// Depth-first alignment search. State: candidate position, used reference
// positions, reference position aligned to the previous candidate token.
class ChunkSearch {
public:
    ChunkSearch(const TokenList& cand, const TokenList& ref) : cand_(cand), ref_(ref) {
        std::map<std::string, int> ref_counts;
        for (const auto& w : ref_) ++ref_counts[w];
        std::map<std::string, int> cand_counts;
        for (const auto& w : cand_) ++cand_counts[w];
        for (const auto& [w, cc] : cand_counts) {
            const auto it = ref_counts.find(w);
            const int cr = it == ref_counts.end() ? 0 : it->second;
            skip_budget_[w] = std::max(0, cc - cr);
            matches_ += std::min(cc, cr);
        }
    }

    int matches() const { return matches_; }

    int min_chunks() {
        if (matches_ == 0) return 0;
        return search(0, 0, -1);
    }

private:
    static constexpr int kInf = std::numeric_limits<int>::max() / 2;

    struct Key {
        std::size_t i;
        std::uint64_t mask;
        int prev;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::size_t h = std::hash<std::uint64_t>{}(k.mask);
            h ^= (k.i * 0x9e3779b97f4a7c15ULL) + static_cast<std::size_t>(k.prev + 1) * 0xbf58476d1ce4e5b9ULL;
            return h;
        }
    };

    int skipped_so_far(std::size_t i, std::uint64_t mask, const std::string& w) const {
        int seen = 0;
        for (std::size_t t = 0; t < i; ++t) seen += cand_[t] == w;
        int used = 0;
        for (std::size_t j = 0; j < ref_.size(); ++j) used += ((mask >> j) & 1u) && ref_[j] == w;
        return seen - used;
    }

    int search(std::size_t i, std::uint64_t mask, int prev) {
        if (i == cand_.size()) return 0;
        const Key key{i, mask, prev};
        if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
        const std::string& w = cand_[i];
        int best = kInf;
        if (skipped_so_far(i, mask, w) < skip_budget_.at(w)) best = search(i + 1, mask, -1);
        for (std::size_t j = 0; j < ref_.size(); ++j) {
            if (((mask >> j) & 1u) || ref_[j] != w) continue;
            const int step = (prev >= 0 && static_cast<int>(j) == prev + 1) ? 0 : 1;
            const int rest = search(i + 1, mask | (std::uint64_t{1} << j), static_cast<int>(j));
            best = std::min(best, step + rest);
        }
        memo_.emplace(key, best);
        return best;
    }

    const TokenList& cand_;
    const TokenList& ref_;
    std::map<std::string, int> skip_budget_;
    int matches_ = 0;
    std::unordered_map<Key, int, KeyHash> memo_;
};

// References longer than 64 tokens do not fit the bitmask; align greedily,
// preferring the position that extends the current chunk.
Alignment greedy_align(const TokenList& cand, const TokenList& ref) {
    std::vector<bool> used(ref.size(), false);
    Alignment out;
    int prev = -1;
    for (const auto& w : cand) {
        int pick = -1;
        if (prev >= 0 && prev + 1 < static_cast<int>(ref.size()) && !used[prev + 1] && ref[prev + 1] == w) {
            pick = prev + 1;
        } else {
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (!used[j] && ref[j] == w) {
                    pick = static_cast<int>(j);
                    break;
                }
            }
        }
        if (pick < 0) {
            prev = -1;
            continue;
        }
        used[pick] = true;
        ++out.matches;
        if (prev < 0 || pick != prev + 1) ++out.chunks;
        prev = pick;
    }
    return out;
}

struct CiderVector {
    std::array<NGramCounts, 4> weights;
    std::array<double, 4> norms{};
    double length = 0.0;
};

} // namespace

void EvalCorpus::validate() const {
    if (items.empty()) throw data_error("metrics: corpus has no items");
    for (const auto& item : items) {
        if (item.references.empty()) throw data_error("metrics: item '" + item.id + "' has no reference");
    }
}

double bleu4(const EvalCorpus& corpus, bool smoothing) {
    corpus.validate();
    std::array<double, 4> clipped{};
    std::array<double, 4> total{};
    double cand_len = 0.0;
    double ref_len = 0.0;
    for (const auto& item : corpus.items) {
        cand_len += static_cast<double>(item.candidate.size());
        ref_len += static_cast<double>(closest_reference_length(item));
        for (int n = 1; n <= 4; ++n) {
            const NGramCounts cand = count_ngrams(item.candidate, n);
            std::vector<NGramCounts> refs;
            for (const auto& ref : item.references) refs.push_back(count_ngrams(ref, n));
            for (const auto& [gram, count] : cand) {
                double ceiling = 0.0;
                for (const auto& r : refs) ceiling = std::max(ceiling, lookup(r, gram));
                clipped[n - 1] += std::min(count, ceiling);
                total[n - 1] += count;
            }
        }
    }
    if (cand_len == 0.0) return 0.0;
    double log_sum = 0.0;
    for (int n = 0; n < 4; ++n) {
        double num = clipped[n];
        double den = total[n];
        if (smoothing && n > 0) {
            num += 1.0;
            den += 1.0;
        }
        if (num == 0.0 || den == 0.0) return 0.0;
        log_sum += std::log(num / den);
    }
    const double bp = std::exp(std::min(0.0, 1.0 - ref_len / cand_len));
    return bp * std::exp(log_sum / 4.0);
}

int lcs_length(const TokenList& a, const TokenList& b) {
    std::vector<int> row(b.size() + 1, 0);
    for (const auto& x : a) {
        int diag = 0;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const int up = row[j];
            row[j] = x == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
            diag = up;
        }
    }
    return row[b.size()];
}

double rouge_l_pair(const TokenList& candidate, const TokenList& reference) {
    const int lcs = lcs_length(candidate, reference);
    if (lcs == 0) return 0.0;
    const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
    return 2.0 * p * r / (p + r);
}

double rouge_l(const EvalCorpus& corpus) {
    corpus.validate();
    double sum = 0.0;
    for (const auto& item : corpus.items) {
        double best = 0.0;
        for (const auto& ref : item.references) best = std::max(best, rouge_l_pair(item.candidate, ref));
        sum += best;
    }
    return sum / static_cast<double>(corpus.items.size());
}

Alignment meteor_align(const TokenList& candidate, const TokenList& reference) {
    if (reference.size() > 64) return greedy_align(candidate, reference);
    ChunkSearch search(candidate, reference);
    return {search.matches(), search.min_chunks()};
}

double meteor_pair(const TokenList& candidate, const TokenList& reference) {
    const Alignment a = meteor_align(candidate, reference);
    if (a.matches == 0) return 0.0;
    const double m = a.matches;
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(reference.size());
    const double f_mean = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(a.chunks) / m;
    return f_mean * (1.0 - 0.5 * frag * frag * frag);
}

double meteor_lite(const EvalCorpus& corpus) {
    corpus.validate();
    double sum = 0.0;
    for (const auto& item : corpus.items) {
        double best = 0.0;
        for (const auto& ref : item.references) best = std::max(best, meteor_pair(item.candidate, ref));
        sum += best;
    }
    return sum / static_cast<double>(corpus.items.size());
}

CiderResult cider_d(const EvalCorpus& corpus, double sigma) {
    corpus.validate();
    std::array<std::map<NGram, double>, 4> doc_freq;
    for (const auto& item : corpus.items) {
        for (int n = 1; n <= 4; ++n) {
            std::map<NGram, bool> present;
            for (const auto& ref : item.references) {
                for (const auto& entry : count_ngrams(ref, n)) present[entry.first] = true;
            }
            for (const auto& entry : present) doc_freq[n - 1][entry.first] += 1.0;
        }
    }
    const double log_docs = std::log(static_cast<double>(corpus.items.size()));

    const auto vectorize = [&](const TokenList& tokens) {
        CiderVector v;
        v.length = static_cast<double>(tokens.size());
        for (int n = 1; n <= 4; ++n) {
            for (const auto& [gram, tf] : count_ngrams(tokens, n)) {
                const double df = lookup(doc_freq[n - 1], gram);
                const double w = tf * (log_docs - std::log(std::max(1.0, df)));
                v.weights[n - 1][gram] = w;
                v.norms[n - 1] += w * w;
            }
            v.norms[n - 1] = std::sqrt(v.norms[n - 1]);
        }
        return v;
    };

    double total = 0.0;
    for (const auto& item : corpus.items) {
        const CiderVector hyp = vectorize(item.candidate);
        double item_sum = 0.0;
        for (const auto& ref_tokens : item.references) {
            const CiderVector ref = vectorize(ref_tokens);
            const double delta = hyp.length - ref.length;
            const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
            double per_n = 0.0;
            for (int n = 0; n < 4; ++n) {
                double val = 0.0;
                for (const auto& [gram, wh] : hyp.weights[n]) {
                    const double wr = lookup(ref.weights[n], gram);
                    val += std::min(wh, wr) * wr;
                }
                if (hyp.norms[n] != 0.0 && ref.norms[n] != 0.0) val /= hyp.norms[n] * ref.norms[n];
                per_n += val * penalty;
            }
            item_sum += per_n / 4.0;
        }
        total += 10.0 * item_sum / static_cast<double>(item.references.size());
    }
    return {total / static_cast<double>(corpus.items.size()), corpus.items.size() < 2};
}

double cider(const EvalCorpus& corpus) { return cider_d(corpus).score; }

MetricReport evaluate(const EvalCorpus& corpus, const MetricOptions& options) {
    MetricReport report;
    report.bleu4 = bleu4(corpus, options.bleu_smoothing);
    const CiderResult c = cider_d(corpus, options.cider_sigma);
    report.cider = c.score;
    report.cider_degenerate = c.degenerate;
    report.rougeL = rouge_l(corpus);
    report.meteor = meteor_lite(corpus);
    for (const double v : {report.bleu4, report.cider, report.rougeL, report.meteor}) {
        if (!std::isfinite(v)) throw numeric_error("metrics: non-finite score");
    }
    return report;
}

std::string format_decimal4(double value) {
    const double scaled = std::nearbyint(value * 10000.0);
    const bool negative = scaled < 0.0;
    const auto units = static_cast<long long>(std::fabs(scaled));
    std::string frac = std::to_string(units % 10000);
    frac.insert(0, 4 - frac.size(), '0');
    return (negative ? "-" : "") + std::to_string(units / 10000) + "." + frac;
}

std::string format_report(const MetricReport& report) {
    std::string out = "{\"bleu4\": " + format_decimal4(report.bleu4);
    out += ", \"cider\": " + format_decimal4(report.cider);
    out += ", \"rougeL\": " + format_decimal4(report.rougeL);
    out += ", \"meteor\": " + format_decimal4(report.meteor);
    if (report.cider_degenerate) out += ", \"cider_degenerate\": true";
    out += "}";
    return out;
}

namespace {

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot read " + path.string());
    std::vector<nlohmann::json> rows;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(nlohmann::json::parse(line));
            if (!rows.back().contains("id")) throw data_error("");
        } catch (const std::exception&) {
            throw data_error(path.string() + ":" + std::to_string(number) + ": expected a JSON object with an id");
        }
    }
    return rows;
}

} // namespace

EvalCorpus load_corpus(const std::filesystem::path& candidates, const std::filesystem::path& references) {
    std::map<std::string, TokenList> cands;
    for (const auto& row : read_jsonl(candidates)) {
        const auto id = row.at("id").get<std::string>();
        if (!row.contains("caption")) throw data_error("candidate '" + id + "' has no caption");
        if (!cands.emplace(id, tokenize(row.at("caption").get<std::string>())).second)
            throw data_error("duplicate candidate id '" + id + "'");
    }
    EvalCorpus corpus;
    std::map<std::string, bool> seen;
    for (const auto& row : read_jsonl(references)) {
        EvalItem item;
        item.id = row.at("id").get<std::string>();
        if (seen[item.id]) throw data_error("duplicate reference id '" + item.id + "'");
        seen[item.id] = true;
        if (row.contains("references")) {
            for (const auto& r : row.at("references")) item.references.push_back(tokenize(r.get<std::string>()));
        } else if (row.contains("caption")) {
            item.references.push_back(tokenize(row.at("caption").get<std::string>()));
        }
        const auto it = cands.find(item.id);
        if (it == cands.end()) throw data_error("no candidate for id '" + item.id + "'");
        item.candidate = it->second;
        cands.erase(it);
        corpus.items.push_back(std::move(item));
    }
    if (!cands.empty()) throw data_error("candidate id '" + cands.begin()->first + "' has no reference");
    corpus.validate();
    return corpus;
}

} // namespace sgmt
