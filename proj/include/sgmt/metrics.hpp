#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sgmt {

using TokenList = std::vector<std::string>;

struct EvalItem {
    std::string id;
    TokenList candidate;
    std::vector<TokenList> references;
};

struct EvalCorpus {
    std::vector<EvalItem> items;

    /// At least one item, each with at least one reference.
    void validate() const;
};

struct MetricReport {
    double bleu4 = 0.0;
    double cider = 0.0;
    double rougeL = 0.0;
    double meteor = 0.0;
    bool cider_degenerate = false;
};

struct MetricOptions {
    /// Add-one smoothing on the 2- to 4-gram precisions.
    bool bleu_smoothing = false;
    double cider_sigma = 6.0;
};

double bleu4(const EvalCorpus& corpus, bool smoothing = false);

/// Longest common subsequence length.
int lcs_length(const TokenList& a, const TokenList& b);
/// Plain F1 of LCS precision and recall; 0 when nothing matches.
double rouge_l_pair(const TokenList& candidate, const TokenList& reference);
double rouge_l(const EvalCorpus& corpus);

struct Alignment {
    int matches = 0;
    int chunks = 0;
};

/// Exact-match unigram alignment with the most matches, then the fewest chunks.
Alignment meteor_align(const TokenList& candidate, const TokenList& reference);
double meteor_pair(const TokenList& candidate, const TokenList& reference);
double meteor_lite(const EvalCorpus& corpus);

struct CiderResult {
    double score = 0.0;
    /// Fewer than two items: every IDF weight is zero.
    bool degenerate = false;
};

CiderResult cider_d(const EvalCorpus& corpus, double sigma = 6.0);
double cider(const EvalCorpus& corpus);

MetricReport evaluate(const EvalCorpus& corpus, const MetricOptions& options = {});

/// Fixed four decimals with ties rounded to even.
std::string format_decimal4(double value);
/// {"bleu4": ..., "cider": ..., "rougeL": ..., "meteor": ...}
std::string format_report(const MetricReport& report);

/// Candidate lines carry {"id", "caption"}; reference lines carry {"id"} plus
/// "caption" or "references". The join is by id, in reference-file order.
EvalCorpus load_corpus(const std::filesystem::path& candidates, const std::filesystem::path& references);

} // namespace sgmt
